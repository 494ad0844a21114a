"""有限差分梯度检查

用中心差分近似梯度，并与自动微分结果比较。默认使用五点中心差分模板，
截断误差为 O(h^4)，在 h = 1e-5 时只剩舍入误差。
"""

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from rumor_adapt.autodiff.tensor import Tensor, no_grad

DEFAULT_STEP = 1e-5
DEFAULT_FLOOR = 1e-8


def numerical_gradient(
    fn: Callable[[], float],
    tensor: Tensor,
    step: float = DEFAULT_STEP,
    stencil: str = "five-point",
) -> np.ndarray:
    """对 tensor 的每个元素做中心差分

    Args:
        fn: 无参函数，读取 tensor 的当前值并返回标量损失
        tensor: 被扰动的张量（原地修改后恢复）
        step: 差分步长
        stencil: "three-point" 或 "five-point"

    Returns:
        与 tensor 同形状的数值梯度
    """
    if not tensor.data.flags.c_contiguous:
        tensor.data = np.ascontiguousarray(tensor.data)
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    grad_flat = grad.reshape(-1)

    for i in range(flat.size):
        original = flat[i]
        if stencil == "three-point":
            flat[i] = original + step
            f_plus = fn()
            flat[i] = original - step
            f_minus = fn()
            grad_flat[i] = (f_plus - f_minus) / (2 * step)
        elif stencil == "five-point":
            values = []
            for offset in (2.0, 1.0, -1.0, -2.0):
                flat[i] = original + offset * step
                values.append(fn())
            f2, f1, fm1, fm2 = values
            grad_flat[i] = (-f2 + 8 * f1 - 8 * fm1 + fm2) / (12 * step)
        else:
            raise ValueError(f"Unknown stencil: {stencil}")
        flat[i] = original

    return grad


def max_relative_error(
    analytic: np.ndarray, numeric: np.ndarray, floor: float = DEFAULT_FLOOR
) -> float:
    """最大相对误差 |a-b| / max(|a|,|b|)，两者都小于 floor 的元素不计"""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    b = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = np.maximum(np.abs(a), np.abs(b))
    keep = scale >= floor
    if not np.any(keep):
        return 0.0
    return float(np.max(np.abs(a[keep] - b[keep]) / scale[keep]))


@dataclass
class GradCheckReport:
    """梯度检查报告"""

    errors: dict[str, float] = field(default_factory=dict)  # 参数组 -> 最大相对误差
    threshold: float = 1e-4

    @property
    def passed(self) -> bool:
        return all(err < self.threshold for err in self.errors.values())

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "passed": self.passed,
            "worst": self.worst,
            "groups": dict(self.errors),
        }


def parameter_group(name: str) -> str:
    """参数名到参数组：多头参数 encoder.W_Q.0 归入 encoder.W_Q"""
    head, _, tail = name.rpartition(".")
    return head if tail.isdigit() else name


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    threshold: float = 1e-4,
    step: float = DEFAULT_STEP,
    floor: float = DEFAULT_FLOOR,
    stencil: str = "five-point",
) -> GradCheckReport:
    """比较自动微分梯度与有限差分梯度

    Args:
        loss_fn: 每次调用都重新构建计算图并返回标量损失
        params: 参数名到叶子张量
        threshold: 每组允许的最大相对误差

    Returns:
        GradCheckReport: 每个参数组的最大相对误差
    """
    for tensor in params.values():
        tensor.zero_grad()
    loss = loss_fn()
    # 与参数无关的常量损失（例如没有配对时的一致性损失）梯度全为 0
    if loss.requires_grad:
        loss.backward()

    report = GradCheckReport(threshold=threshold)

    def value() -> float:
        with no_grad():
            return loss_fn().item()

    for name, tensor in params.items():
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        numeric = numerical_gradient(value, tensor, step=step, stencil=stencil)
        error = max_relative_error(analytic, numeric, floor=floor)
        group = parameter_group(name)
        report.errors[group] = max(report.errors.get(group, 0.0), error)
        logger.debug(f"gradcheck {name}: max relative error {error:.3e}")

    for tensor in params.values():
        tensor.zero_grad()

    return report
