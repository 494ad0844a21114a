"""模型参数

参数全部是叶子张量（requires_grad=True），按固定名字登记：
    encoder.W_Q.{j} / encoder.W_K.{j} / encoder.W_V.{j}  每个注意力头的投影
    encoder.W_O, encoder.W1, encoder.b1, encoder.W2, encoder.b2
    cam.*           交叉注意力不共享权重时的独立副本
    classifier.W, classifier.b
"""

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from rumor_adapt.autodiff import ShapeError, Tensor
from rumor_adapt.models.config import ModelConfig


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """均匀分布 U(-sqrt(6/(fan_in+fan_out)), +sqrt(...))"""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _param(data: np.ndarray, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


@dataclass
class EncoderParams:
    """多头自注意力 + 前馈层的参数"""

    W_Q: list[Tensor]  # noqa: N815
    W_K: list[Tensor]  # noqa: N815
    W_V: list[Tensor]  # noqa: N815
    W_O: Tensor  # noqa: N815
    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor
    residual: bool = False

    @property
    def heads(self) -> int:
        return len(self.W_Q)

    @property
    def dim(self) -> int:
        return self.W_O.shape[1]

    @property
    def head_dim(self) -> int:
        return self.W_Q[0].shape[1]

    @classmethod
    def initialize(
        cls, config: ModelConfig, rng: np.random.Generator, prefix: str = "encoder"
    ) -> "EncoderParams":
        d, h, d_ff = config.dim, config.heads, config.ffn_dim
        d_k = d // h
        projections: dict[str, list[Tensor]] = {"W_Q": [], "W_K": [], "W_V": []}
        for j in range(h):
            for key in ("W_Q", "W_K", "W_V"):
                projections[key].append(
                    _param(glorot_uniform(rng, d, d_k), f"{prefix}.{key}.{j}")
                )
        return cls(
            W_Q=projections["W_Q"],
            W_K=projections["W_K"],
            W_V=projections["W_V"],
            W_O=_param(glorot_uniform(rng, h * d_k, d), f"{prefix}.W_O"),
            W1=_param(glorot_uniform(rng, d, d_ff), f"{prefix}.W1"),
            b1=_param(np.zeros(d_ff), f"{prefix}.b1"),
            W2=_param(glorot_uniform(rng, d_ff, d), f"{prefix}.W2"),
            b2=_param(np.zeros(d), f"{prefix}.b2"),
            residual=config.residual,
        )

    def named_tensors(self, prefix: str = "encoder") -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        for key in ("W_Q", "W_K", "W_V"):
            for j, tensor in enumerate(getattr(self, key)):
                named[f"{prefix}.{key}.{j}"] = tensor
        for key in ("W_O", "W1", "b1", "W2", "b2"):
            named[f"{prefix}.{key}"] = getattr(self, key)
        return named


@dataclass
class ClassifierParams:
    """线性分类器：logits = o·W + b"""

    W: Tensor  # noqa: N815
    b: Tensor

    @property
    def num_classes(self) -> int:
        return self.W.shape[1]

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> "ClassifierParams":
        return cls(
            W=_param(glorot_uniform(rng, config.dim, config.num_classes), "classifier.W"),
            b=_param(np.zeros(config.num_classes), "classifier.b"),
        )

    def named_tensors(self) -> dict[str, Tensor]:
        return {"classifier.W": self.W, "classifier.b": self.b}


@dataclass
class ModelParams:
    """全部可训练参数"""

    config: ModelConfig
    encoder: EncoderParams
    classifier: ClassifierParams
    cam: EncoderParams | None = None

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int) -> "ModelParams":
        """按固定顺序用同一个随机数生成器初始化（偏置为 0）"""
        rng = np.random.default_rng(seed)
        encoder = EncoderParams.initialize(config, rng, "encoder")
        cam = None if config.share_cam_weights else EncoderParams.initialize(config, rng, "cam")
        classifier = ClassifierParams.initialize(config, rng)
        return cls(config=config, encoder=encoder, classifier=classifier, cam=cam)

    @property
    def cam_encoder(self) -> EncoderParams:
        """交叉注意力使用的参数（默认与自注意力共享）"""
        return self.encoder if self.cam is None else self.cam

    def named_tensors(self) -> dict[str, Tensor]:
        named = self.encoder.named_tensors("encoder")
        if self.cam is not None:
            named.update(self.cam.named_tensors("cam"))
        named.update(self.classifier.named_tensors())
        return named

    def zero_grad(self) -> None:
        for tensor in self.named_tensors().values():
            tensor.zero_grad()

    def arrays(self) -> dict[str, np.ndarray]:
        """参数值的拷贝"""
        return {name: t.data.copy() for name, t in self.named_tensors().items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        """按名字写入参数值

        Raises:
            KeyError: 缺少或多出参数
            ShapeError: 形状不符
        """
        named = self.named_tensors()
        missing = sorted(set(named) - set(arrays))
        extra = sorted(set(arrays) - set(named))
        if missing or extra:
            raise KeyError(f"parameter names differ: missing {missing}, unexpected {extra}")
        for name, tensor in named.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise ShapeError(f"{name}: expected shape {tensor.shape}, got {value.shape}")
            tensor.data = value.copy()
            tensor.zero_grad()
