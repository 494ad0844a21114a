"""优化器

Adam（耦合 L2 权重衰减）与 SGD，直接原地更新叶子张量的 data。
没有梯度的参数（本步未参与损失）跳过更新。
"""

from collections.abc import Mapping

import numpy as np

from rumor_adapt.autodiff import Tensor
from rumor_adapt.models.config import TrainConfig


class Optimizer:
    """优化器基类"""

    kind = "base"

    def __init__(self, params: Mapping[str, Tensor], lr: float, weight_decay: float = 0.0) -> None:
        self.params = dict(params)
        self.lr = lr
        self.weight_decay = weight_decay

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def _gradient(self, tensor: Tensor) -> np.ndarray | None:
        if tensor.grad is None:
            return None
        if self.weight_decay:
            return tensor.grad + self.weight_decay * tensor.data
        return tensor.grad

    def step(self) -> None:
        raise NotImplementedError

    def state_dict(self) -> dict:
        return {"kind": self.kind}

    def load_state_dict(self, state: Mapping) -> None:
        if state.get("kind") != self.kind:
            raise ValueError(f"optimizer state is for {state.get('kind')!r}, not {self.kind!r}")


class SGD(Optimizer):
    """p ← p − lr·(g + λ·p)"""

    kind = "sgd"

    def step(self) -> None:
        for tensor in self.params.values():
            grad = self._gradient(tensor)
            if grad is not None:
                tensor.data = tensor.data - self.lr * grad


class Adam(Optimizer):
    """带偏差校正的 Adam"""

    kind = "adam"

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ) -> None:
        super().__init__(params, lr, weight_decay)
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in self.params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in self.params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.betas
        correction1 = 1.0 - b1**self.t
        correction2 = 1.0 - b2**self.t
        for name, tensor in self.params.items():
            grad = self._gradient(tensor)
            if grad is None:
                continue
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * grad
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * grad * grad
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            tensor.data = tensor.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> dict:
        return {
            "kind": self.kind,
            "t": self.t,
            "m": {name: value.copy() for name, value in self.m.items()},
            "v": {name: value.copy() for name, value in self.v.items()},
        }

    def load_state_dict(self, state: Mapping) -> None:
        super().load_state_dict(state)
        for key in ("m", "v"):
            moments = state[key]
            if set(moments) != set(self.params):
                raise ValueError(f"optimizer {key} moments do not match the parameter names")
            for name, value in moments.items():
                array = np.asarray(value, dtype=np.float64)
                if array.shape != self.params[name].shape:
                    raise ValueError(f"optimizer {key}[{name}] has shape {array.shape}")
                getattr(self, key)[name] = array.copy()
        self.t = int(state["t"])


def build_optimizer(params: Mapping[str, Tensor], config: TrainConfig) -> Optimizer:
    if config.optimizer == "sgd":
        return SGD(params, lr=config.learning_rate, weight_decay=config.weight_decay)
    return Adam(
        params,
        lr=config.learning_rate,
        betas=config.adam_betas,
        eps=config.adam_eps,
        weight_decay=config.weight_decay,
    )
