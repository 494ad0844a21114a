"""实验配置模型

RunConfig 由四个小节组成：network、train、synth、data。
配置文件是扁平的 "section.key = value" 文本（见 utils.kv_config），
未知键会被拒绝，α/β/γ 的和为 1 的约束在加载时检查。
"""

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

SUM_TOLERANCE = 1e-6


class ConfigError(ValueError):
    """配置错误"""

    pass


def _check_sum_to_one(key: str, values: tuple[float, ...]) -> None:
    total = sum(values)
    if abs(total - 1.0) > SUM_TOLERANCE:
        example = ",".join(f"{v / total:.4g}" for v in values) if total > 0 else "..."
        raise ValueError(
            f"{key} must sum to 1 (got {total:.6g} from {list(values)}); "
            f"for example set {key} = {example}"
        )
    if any(v < 0 for v in values):
        raise ValueError(f"{key} entries must be non-negative (got {list(values)})")


class ContrastiveConfig(BaseModel):
    """对比学习模块的配置"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    temperature: float = Field(default=0.1, gt=0, description="温度 τ")
    alpha: tuple[float, float] = Field(default=(0.9, 0.1), description="域内损失权重 α1, α2")
    beta: tuple[float, float] = Field(default=(0.7, 0.3), description="ICL/CCL 权重 β1, β2")
    include_self: bool = Field(default=False, description="域内损失是否包含自身配对")
    use_scl_source: bool = True
    use_scl_target: bool = True
    use_ccl_ts: bool = True
    use_ccl_st: bool = True
    use_prototype: bool = True

    @model_validator(mode="after")
    def _sums(self) -> "ContrastiveConfig":
        _check_sum_to_one("alpha", self.alpha)
        _check_sum_to_one("beta", self.beta)
        return self


class LossWeights(BaseModel):
    """总损失权重 γ1 (CE)、γ2 (CL)、γ3 (CA)"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    gamma: tuple[float, float, float] = (0.8, 0.1, 0.1)

    @model_validator(mode="after")
    def _sums(self) -> "LossWeights":
        _check_sum_to_one("gamma", self.gamma)
        return self

    @property
    def ce(self) -> float:
        return self.gamma[0]

    @property
    def cl(self) -> float:
        return self.gamma[1]

    @property
    def ca(self) -> float:
        return self.gamma[2]


class ModelConfig(BaseModel):
    """网络结构配置"""

    model_config = ConfigDict(extra="forbid")

    dim: int = Field(default=300, gt=0, description="路径嵌入与谣言表示维度 d")
    heads: int = Field(default=4, gt=0, description="注意力头数 h")
    ffn_dim: int = Field(default=600, gt=0, description="前馈层隐藏维度 d_ff")
    num_classes: int = Field(default=2, ge=2, description="类别数 N_c")
    residual: bool = Field(default=False, description="是否加残差连接")
    share_cam_weights: bool = Field(default=True, description="交叉注意力是否与自注意力共享权重")
    max_paths: int = Field(default=64, gt=0, description="每棵传播树保留的最多路径数")

    @model_validator(mode="after")
    def _heads_divide_dim(self) -> "ModelConfig":
        if self.dim % self.heads != 0:
            raise ValueError(f"heads ({self.heads}) must divide dim ({self.dim})")
        return self


class TrainConfig(BaseModel):
    """训练配置"""

    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=300, ge=0)
    source_batch_size: int = Field(default=32, gt=0)
    target_batch_size: int = Field(default=32, gt=0)
    optimizer: Literal["adam", "sgd"] = "adam"
    learning_rate: float = Field(default=1e-3, gt=0)
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(default=1e-8, gt=0)
    weight_decay: float = Field(default=0.0, ge=0)
    seed: int = 0

    # 对比学习
    temperature: float = Field(default=0.1, gt=0)
    alpha: tuple[float, float] = (0.9, 0.1)
    beta: tuple[float, float] = (0.7, 0.3)
    gamma: tuple[float, float, float] = (0.8, 0.1, 0.1)
    include_self: bool = False
    use_scl_source: bool = True
    use_scl_target: bool = True
    use_ccl_ts: bool = True
    use_ccl_st: bool = True
    use_prototype: bool = True

    # 伪标签
    pseudo_refresh: Literal["step", "epoch"] = "step"
    kmeans_metric: Literal["euclidean", "cosine"] = "euclidean"
    kmeans_max_iter: int = Field(default=100, ge=0)
    kmeans_tol: float = Field(default=1e-4, gt=0)

    # 交叉注意力一致性
    stop_grad_kl: bool = False

    # 运行控制
    checkpoint_every: int = Field(default=10, ge=0, description="每隔多少个 epoch 保存检查点，0 表示只在结束时保存")
    eval_every: int = Field(default=0, ge=0, description="每隔多少个 epoch 在目标域上评估，0 表示不评估")
    patience: int | None = Field(default=None, ge=1, description="早停耐心值（epoch），None 表示不早停")

    @model_validator(mode="after")
    def _sums(self) -> "TrainConfig":
        _check_sum_to_one("train.alpha", self.alpha)
        _check_sum_to_one("train.beta", self.beta)
        _check_sum_to_one("train.gamma", self.gamma)
        return self

    @property
    def contrastive(self) -> ContrastiveConfig:
        return ContrastiveConfig(
            temperature=self.temperature,
            alpha=self.alpha,
            beta=self.beta,
            include_self=self.include_self,
            use_scl_source=self.use_scl_source,
            use_scl_target=self.use_scl_target,
            use_ccl_ts=self.use_ccl_ts,
            use_ccl_st=self.use_ccl_st,
            use_prototype=self.use_prototype,
        )

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(gamma=self.gamma)


class SynthConfig(BaseModel):
    """合成数据生成器配置"""

    model_config = ConfigDict(extra="forbid")

    samples_per_domain: int = Field(default=400, ge=0)
    num_classes: int = Field(default=2, ge=2)
    class_priors: tuple[float, ...] | None = Field(default=None, description="None 表示均匀先验")
    stance_vocab_per_class: int = Field(default=20, gt=0)
    shared_topic_vocab: int = Field(default=60, gt=0)
    domain_topic_vocab: int = Field(default=60, gt=0)
    shift_strength: float = Field(default=0.8, ge=0.0, le=1.0)
    stance_rate: float = Field(default=0.3, ge=0.0, le=1.0, description="每个词为立场词的概率")
    stance_purity: float = Field(default=0.8, ge=0.0, le=1.0, description="立场词来自本类别的概率")
    topic_label_correlation: float = Field(default=0.8, ge=0.0, le=1.0)
    tokens_per_post: int = Field(default=6, gt=0)
    max_children: int = Field(default=3, ge=0)
    max_depth: int = Field(default=4, ge=0)
    max_nodes: int = Field(default=16, gt=0)
    seed: int = 7

    @model_validator(mode="after")
    def _priors(self) -> "SynthConfig":
        if self.class_priors is not None:
            if len(self.class_priors) != self.num_classes:
                raise ValueError(
                    f"class_priors has {len(self.class_priors)} entries for {self.num_classes} classes"
                )
            _check_sum_to_one("synth.class_priors", self.class_priors)
        for size in (self.shared_topic_vocab, self.domain_topic_vocab):
            if size < self.num_classes:
                raise ValueError("topic vocabularies need at least one word per class")
        return self

    @property
    def priors(self) -> tuple[float, ...]:
        if self.class_priors is None:
            return tuple(1.0 / self.num_classes for _ in range(self.num_classes))
        return self.class_priors


class DataConfig(BaseModel):
    """数据与词向量配置"""

    model_config = ConfigDict(extra="forbid")

    source_path: Path | None = None
    target_path: Path | None = None
    embeddings_path: Path | None = Field(default=None, description="GloVe 格式词向量文件，None 表示随机词向量")
    embedding_seed: int = 13


class RunConfig(BaseModel):
    """一次运行的完整配置"""

    model_config = ConfigDict(extra="forbid")

    network: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    data: DataConfig = Field(default_factory=DataConfig)

    @model_validator(mode="after")
    def _classes_agree(self) -> "RunConfig":
        if self.synth.num_classes != self.network.num_classes:
            raise ValueError(
                f"synth.num_classes ({self.synth.num_classes}) must equal "
                f"network.num_classes ({self.network.num_classes})"
            )
        return self


def build_run_config(values: dict) -> RunConfig:
    """校验嵌套字典并构造 RunConfig

    Raises:
        ConfigError: 校验失败，消息中列出每个出错的键
    """
    try:
        return RunConfig.model_validate(values)
    except ValidationError as e:
        lines = []
        for err in e.errors():
            key = ".".join(str(part) for part in err["loc"]) or "<root>"
            lines.append(f"{key}: {err['msg']}")
        raise ConfigError("Invalid configuration:\n  " + "\n  ".join(lines)) from None
