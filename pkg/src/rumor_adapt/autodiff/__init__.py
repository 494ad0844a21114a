"""稠密张量与反向模式自动微分"""

from rumor_adapt.autodiff import ops
from rumor_adapt.autodiff.tensor import (
    ContractError,
    GraphNode,
    NumericError,
    ShapeError,
    Tensor,
    is_grad_enabled,
    no_grad,
)

__all__ = [
    "ContractError",
    "GraphNode",
    "NumericError",
    "ShapeError",
    "Tensor",
    "is_grad_enabled",
    "no_grad",
    "ops",
]
