"""张量与反向模式自动微分

所有实数量都存放在 Tensor 中（float64）。参与运算的张量只要有一个需要梯度，
结果就会记录一个 GraphNode；backward() 按逆拓扑序遍历计算图，把梯度累加到
叶子参数的 grad 上，然后释放计算图。
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any

import numpy as np

BackwardRule = Callable[[np.ndarray, dict[str, Any]], Sequence[np.ndarray | None]]


class ShapeError(ValueError):
    """张量形状不匹配"""

    pass


class NumericError(ArithmeticError):
    """数值错误（出现非有限值）"""

    pass


class ContractError(RuntimeError):
    """调用约定被违反"""

    pass


_grad_state = threading.local()


def is_grad_enabled() -> bool:
    """当前线程是否记录计算图"""
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """在上下文内不记录计算图（评估、伪标签刷新时使用）"""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


@dataclass
class GraphNode:
    """计算图节点

    op: 运算名称
    inputs: 父张量
    rule: 反向规则，输入上游梯度与 saved，返回每个父张量的梯度
    saved: 反向规则需要的前向值
    """

    op: str
    inputs: tuple[Tensor, ...]
    rule: BackwardRule
    saved: dict[str, Any] = field(default_factory=dict)


class Tensor:
    """带梯度记录的稠密张量"""

    __array_priority__ = 100.0

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
        node: GraphNode | None = None,
    ) -> None:
        self.data: np.ndarray = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad or node is not None
        self.grad: np.ndarray | None = None
        self.node = node
        self.name = name

    # ===== 基本属性 =====

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def T(self) -> Tensor:  # noqa: N802
        from rumor_adapt.autodiff import ops

        return ops.transpose(self)

    def item(self) -> float:
        """取出标量值"""
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        """返回共享数据、不带计算图的张量"""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # ===== 反向传播 =====

    def backward(self, retain_graph: bool = False) -> None:
        """从标量损失开始反向传播

        梯度累加到每个可达的叶子张量（requires_grad=True 且没有 node）的 grad 上；
        不清零时多次调用会相加。默认在结束后释放计算图。
        """
        if self.ndim != 0:
            raise ContractError(
                f"backward() must start from a scalar tensor, got shape {self.shape}"
            )
        if not self.requires_grad:
            raise ContractError("backward() called on a tensor that does not require grad")

        order = _topological_order(self)
        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}

        for tensor in reversed(order):
            grad = pending.pop(id(tensor), None)
            if grad is None:
                continue
            node = tensor.node
            if node is None:
                tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
                continue

            parent_grads = node.rule(grad, node.saved)
            for parent, parent_grad in zip(node.inputs, parent_grads, strict=True):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad

        if not retain_graph:
            for tensor in order:
                tensor.node = None

    # ===== 运算符 =====

    def __add__(self, other: Any) -> Tensor:
        from rumor_adapt.autodiff import ops

        return ops.add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        from rumor_adapt.autodiff import ops

        return ops.add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        from rumor_adapt.autodiff import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        from rumor_adapt.autodiff import ops

        return ops.sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        from rumor_adapt.autodiff import ops

        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return self.__mul__(other)

    def __truediv__(self, other: float) -> Tensor:
        from rumor_adapt.autodiff import ops

        return ops.scale(self, 1.0 / float(other))

    def __neg__(self) -> Tensor:
        from rumor_adapt.autodiff import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        from rumor_adapt.autodiff import ops

        return ops.matmul(self, other)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


def _topological_order(root: Tensor) -> list[Tensor]:
    """后序遍历，父节点先于子节点出现（迭代实现，避免递归深度限制）"""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]

    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

    return order


def as_tensor(value: Any) -> Tensor:
    """把数组或标量包装成常量张量"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def make_result(
    data: np.ndarray,
    op: str,
    inputs: Sequence[Tensor],
    rule: BackwardRule,
    saved: dict[str, Any] | None = None,
) -> Tensor:
    """构造运算结果；只有输入需要梯度且开启记录时才挂计算图节点"""
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        return Tensor(data, node=GraphNode(op, tuple(inputs), rule, saved or {}))
    return Tensor(data)
