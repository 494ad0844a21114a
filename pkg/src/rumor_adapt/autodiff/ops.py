"""可微运算

每个运算计算前向值，并登记一条反向规则（输入上游梯度，返回各输入的梯度）。
广播只支持本项目用到的情形：标量、行向量、列向量。
"""

from collections.abc import Sequence
from typing import Any

import numpy as np

from rumor_adapt.autodiff.tensor import (
    NumericError,
    ShapeError,
    Tensor,
    as_tensor,
    make_result,
)

COSINE_EPS = 1e-12


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None
    if shape not in (a.shape, b.shape):
        raise ShapeError(
            f"{op}: broadcasting {a.shape} with {b.shape} would create a new shape {shape}"
        )
    return shape


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """把广播后的梯度求和回原始形状"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return np.asarray(grad)


# ===== 逐元素运算 =====


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        return _unbroadcast(grad, saved["a"]), _unbroadcast(grad, saved["b"])

    return make_result(a.data + b.data, "add", (a, b), rule, {"a": a.shape, "b": b.shape})


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        return _unbroadcast(grad, saved["a"]), -_unbroadcast(grad, saved["b"])

    return make_result(a.data - b.data, "sub", (a, b), rule, {"a": a.shape, "b": b.shape})


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        return (
            _unbroadcast(grad * saved["b"], saved["a"].shape),
            _unbroadcast(grad * saved["a"], saved["b"].shape),
        )

    return make_result(a.data * b.data, "mul", (a, b), rule, {"a": a.data, "b": b.data})


def scale(x: Any, factor: float) -> Tensor:
    x = as_tensor(x)

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        return (grad * saved["factor"],)

    return make_result(x.data * factor, "scale", (x,), rule, {"factor": factor})


def relu(x: Any) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        return (grad * saved["mask"],)

    return make_result(np.where(mask, x.data, 0.0), "relu", (x,), rule, {"mask": mask})


def exp(x: Any) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        return (grad * saved["out"],)

    return make_result(out, "exp", (x,), rule, {"out": out})


def log(x: Any, floor: float | None = None) -> Tensor:
    """自然对数；给定 floor 时先截断到 floor（截断区域梯度为 0）"""
    x = as_tensor(x)
    if floor is None:
        clipped = x.data
        active = np.ones_like(x.data, dtype=bool)
    else:
        clipped = np.maximum(x.data, floor)
        active = x.data >= floor
    if np.any(clipped <= 0):
        raise NumericError("log: non-positive input without a floor")

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        return (np.where(saved["active"], grad / saved["clipped"], 0.0),)

    return make_result(
        np.log(clipped), "log", (x,), rule, {"clipped": clipped, "active": active}
    )


# ===== 形状运算 =====


def transpose(x: Any) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {x.shape}")

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        return (grad.T,)

    return make_result(x.data.T.copy(), "transpose", (x,), rule)


def reshape(x: Any, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from None

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        return (grad.reshape(saved["shape"]),)

    return make_result(out, "reshape", (x,), rule, {"shape": x.shape})


def concat_cols(parts: Sequence[Any]) -> Tensor:
    """按列拼接若干行数相同的矩阵"""
    tensors = [as_tensor(p) for p in parts]
    if not tensors:
        raise ShapeError("concat_cols: nothing to concatenate")
    rows = {t.shape[0] for t in tensors if t.ndim == 2}
    if len(rows) != 1 or any(t.ndim != 2 for t in tensors):
        raise ShapeError(
            f"concat_cols: row counts differ: {[t.shape for t in tensors]}"
        )
    widths = [t.shape[1] for t in tensors]
    bounds = np.cumsum([0, *widths])

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        b = saved["bounds"]
        return tuple(grad[:, b[i] : b[i + 1]] for i in range(len(b) - 1))

    return make_result(
        np.concatenate([t.data for t in tensors], axis=1),
        "concat_cols",
        tensors,
        rule,
        {"bounds": bounds},
    )


def stack_rows(rows: Sequence[Any]) -> Tensor:
    """把若干等长向量堆叠成矩阵"""
    tensors = [as_tensor(r) for r in rows]
    if not tensors:
        raise ShapeError("stack_rows: nothing to stack")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1 or tensors[0].ndim != 1:
        raise ShapeError(f"stack_rows: expected equal-length vectors, got {sorted(shapes)}")

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        return tuple(grad[i] for i in range(grad.shape[0]))

    return make_result(np.stack([t.data for t in tensors]), "stack_rows", tensors, rule)


def take_rows(x: Any, indices: Sequence[int] | np.ndarray) -> Tensor:
    """按下标取出若干行（下标可重复）"""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)
    if x.ndim != 2:
        raise ShapeError(f"take_rows: expected a matrix, got shape {x.shape}")

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        out = np.zeros(saved["shape"])
        np.add.at(out, saved["idx"], grad)
        return (out,)

    return make_result(x.data[idx], "take_rows", (x,), rule, {"idx": idx, "shape": x.shape})


# ===== 归约 =====


def sum_all(x: Any) -> Tensor:
    x = as_tensor(x)

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        return (np.full(saved["shape"], float(grad)),)

    return make_result(np.asarray(x.data.sum()), "sum", (x,), rule, {"shape": x.shape})


def mean_rows(x: Any) -> Tensor:
    """对矩阵按行取平均，得到长度为列数的向量"""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"mean_rows: expected a non-empty matrix, got shape {x.shape}")

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        m, n = saved["shape"]
        return (np.broadcast_to(grad / m, (m, n)).copy(),)

    return make_result(x.data.mean(axis=0), "mean_rows", (x,), rule, {"shape": x.shape})


def max_pool_rows(x: Any) -> Tensor:
    """逐列取最大值；梯度只流向最大值所在行（并列时取最小行号）"""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"max_pool_rows: expected a non-empty matrix, got shape {x.shape}")
    arg = np.argmax(x.data, axis=0)
    cols = np.arange(x.shape[1])

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        out = np.zeros(saved["shape"])
        out[saved["arg"], saved["cols"]] = grad
        return (out,)

    return make_result(
        x.data[arg, cols], "max_pool_rows", (x,), rule,
        {"arg": arg, "cols": cols, "shape": x.shape},
    )


# ===== 矩阵运算 =====


def matmul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        return grad @ saved["b"].T, saved["a"].T @ grad

    return make_result(a.data @ b.data, "matmul", (a, b), rule, {"a": a.data, "b": b.data})


def softmax_rows(x: Any) -> Tensor:
    """按行 softmax，先减去行最大值保证数值稳定"""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows: expected a matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax_rows: input contains non-finite values")
    shifted = np.exp(x.data - x.data.max(axis=1, keepdims=True))
    out = shifted / shifted.sum(axis=1, keepdims=True)

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        y = saved["out"]
        return (y * (grad - (grad * y).sum(axis=1, keepdims=True)),)

    return make_result(out, "softmax_rows", (x,), rule, {"out": out})


def log_softmax_rows(x: Any, mask: np.ndarray | None = None) -> Tensor:
    """按行 log-softmax

    给定 mask 时，每行只在 mask 为 True 的位置上归一化；mask 外的输出为 0，
    也不回传梯度。
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"log_softmax_rows: expected a matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("log_softmax_rows: input contains non-finite values")
    m = np.ones(x.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != x.shape:
        raise ShapeError(f"log_softmax_rows: mask shape {m.shape} != input shape {x.shape}")

    row_max = np.where(m, x.data, -np.inf).max(axis=1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    weights = np.exp(np.where(m, x.data - row_max, -np.inf))
    totals = weights.sum(axis=1, keepdims=True)
    safe_totals = np.where(totals > 0, totals, 1.0)
    out = np.where(m, x.data - row_max - np.log(safe_totals), 0.0)
    soft = weights / safe_totals

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        mk = saved["mask"]
        row_grad = np.where(mk, grad, 0.0).sum(axis=1, keepdims=True)
        return (np.where(mk, grad - saved["soft"] * row_grad, 0.0),)

    return make_result(out, "log_softmax_rows", (x,), rule, {"mask": m, "soft": soft})


def normalize_rows(x: Any, eps: float = COSINE_EPS) -> Tensor:
    """每行除以 (L2 范数 + eps)"""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"normalize_rows: expected a matrix, got shape {x.shape}")
    norms = np.sqrt((x.data**2).sum(axis=1, keepdims=True))
    denom = norms + eps
    out = x.data / denom

    def rule(grad: np.ndarray, saved: dict) -> tuple:
        r, d, xv = saved["norms"], saved["denom"], saved["x"]
        safe_r = np.where(r > 0, r, 1.0)
        dot = (grad * xv).sum(axis=1, keepdims=True)
        correction = np.where(r > 0, xv * dot / (d**2 * safe_r), 0.0)
        return (grad / d - correction,)

    return make_result(
        out, "normalize_rows", (x,), rule, {"norms": norms, "denom": denom, "x": x.data}
    )


def cosine_matrix(a: Any, b: Any) -> Tensor:
    """两组向量两两之间的余弦相似度矩阵"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"cosine_matrix: cannot compare {a.shape} with {b.shape}")
    return matmul(normalize_rows(a), transpose(normalize_rows(b)))


def cosine_similarity(u: Any, v: Any) -> Tensor:
    """两个向量的余弦相似度（标量）"""
    u, v = as_tensor(u), as_tensor(v)
    if u.ndim != 1 or u.shape != v.shape:
        raise ShapeError(f"cosine_similarity: expected equal vectors, got {u.shape} and {v.shape}")
    matrix = cosine_matrix(reshape(u, (1, u.shape[0])), reshape(v, (1, v.shape[0])))
    return reshape(matrix, ())
