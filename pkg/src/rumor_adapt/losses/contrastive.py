"""对比学习损失

相似度一律是余弦相似度除以温度 τ。所有损失都按批次大小归一化（不是按正样本对数），
没有正样本的锚点贡献 0。

- supcon_in_domain：域内有监督对比损失
- in_domain_loss：α1·源域 + α2·目标域（伪标签）
- cross_domain_instance：跨域实例对比损失，锚点与对比样本来自不同领域
- prototype_loss：目标样本对源域原型的对比损失
- clm_loss：β1·L_ICL + β2·(L_t→s + L_s→t + L_Pro)
"""

from collections.abc import Callable, Sequence

import numpy as np
from loguru import logger

from rumor_adapt.autodiff import ContractError, Tensor, ops
from rumor_adapt.models.config import ContrastiveConfig
from rumor_adapt.services.pseudo_label import PrototypeSet


def _labels(labels: Sequence[int] | np.ndarray, size: int, what: str) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (size,):
        raise ContractError(f"{what}: expected {size} labels, got shape {y.shape}")
    return y


def _masked_nll(
    similarity: Tensor, positives: np.ndarray, denominator: np.ndarray | None, anchors: int
) -> Tensor:
    """-(1/anchors)·Σ_ij pos_ij·log softmax_j(sim_i)，softmax 只在 denominator 上归一化"""
    log_probs = ops.log_softmax_rows(similarity, mask=denominator)
    picked = ops.mul(log_probs, Tensor(positives.astype(np.float64)))
    return ops.scale(ops.sum_all(picked), -1.0 / anchors)


def supcon_in_domain(
    features: Tensor, labels: Sequence[int] | np.ndarray, cfg: ContrastiveConfig
) -> Tensor:
    """域内有监督对比损失

    include_self=False（默认）时锚点自身既不是正样本也不进分母；
    include_self=True 时按原式对整批求和（包含自身配对）。

    Raises:
        ContractError: 批次小于 2
    """
    batch = features.shape[0]
    if features.ndim != 2 or batch < 2:
        raise ContractError(f"supcon_in_domain needs at least 2 samples, got {features.shape}")
    y = _labels(labels, batch, "supcon_in_domain")

    similarity = ops.scale(ops.cosine_matrix(features, features), 1.0 / cfg.temperature)
    same = y[:, None] == y[None, :]
    if cfg.include_self:
        return _masked_nll(similarity, same, None, batch)
    off_diagonal = ~np.eye(batch, dtype=bool)
    return _masked_nll(similarity, same & off_diagonal, off_diagonal, batch)


def in_domain_loss(
    source_features: Tensor,
    source_labels: Sequence[int] | np.ndarray,
    target_features: Tensor,
    target_pseudo: Sequence[int] | np.ndarray,
    cfg: ContrastiveConfig,
) -> Tensor:
    """L_ICL = α1·L_SCL(源域) + α2·L_SCL(目标域伪标签)；关闭的分量贡献 0"""
    total = Tensor(0.0)
    if cfg.use_scl_source and cfg.alpha[0] != 0.0:
        scl = supcon_in_domain(source_features, source_labels, cfg)
        total = ops.add(total, ops.scale(scl, cfg.alpha[0]))
    if cfg.use_scl_target and cfg.alpha[1] != 0.0:
        scl = supcon_in_domain(target_features, target_pseudo, cfg)
        total = ops.add(total, ops.scale(scl, cfg.alpha[1]))
    return total


def cross_domain_instance(
    anchor_features: Tensor,
    anchor_labels: Sequence[int] | np.ndarray,
    contrast_features: Tensor,
    contrast_labels: Sequence[int] | np.ndarray,
    cfg: ContrastiveConfig,
) -> Tensor:
    """跨域实例对比损失，分母遍历全部对比样本

    Raises:
        ContractError: 任一批次为空
    """
    if anchor_features.shape[0] == 0 or contrast_features.shape[0] == 0:
        raise ContractError("cross_domain_instance needs non-empty anchor and contrast batches")
    ya = _labels(anchor_labels, anchor_features.shape[0], "cross_domain_instance anchors")
    yc = _labels(contrast_labels, contrast_features.shape[0], "cross_domain_instance contrasts")

    positives = ya[:, None] == yc[None, :]
    if not positives.any():
        logger.warning(
            "Cross-domain contrastive loss has no positive pairs "
            f"(anchor classes {sorted(set(ya.tolist()))}, contrast classes {sorted(set(yc.tolist()))})"
        )
    similarity = ops.scale(
        ops.cosine_matrix(anchor_features, contrast_features), 1.0 / cfg.temperature
    )
    return _masked_nll(similarity, positives, None, anchor_features.shape[0])


def prototype_loss(
    target_features: Tensor,
    target_pseudo: Sequence[int] | np.ndarray,
    prototypes: PrototypeSet,
    cfg: ContrastiveConfig,
) -> Tensor:
    """目标样本对源域原型的对比损失

    伪标签对应无效原型的样本跳过，并从除数中扣除；分母只含有效原型。

    Raises:
        ContractError: 没有有效原型
    """
    valid = prototypes.valid
    if not valid.any():
        raise ContractError("prototype_loss needs at least one valid prototype")
    y = _labels(target_pseudo, target_features.shape[0], "prototype_loss")

    keep = np.flatnonzero(valid[y]) if y.size else np.zeros(0, dtype=np.int64)
    if keep.size == 0:
        return Tensor(0.0)

    valid_classes = np.flatnonzero(valid)
    column = {int(c): i for i, c in enumerate(valid_classes)}
    positives = np.zeros((keep.size, valid_classes.size), dtype=bool)
    for row, sample in enumerate(keep):
        positives[row, column[int(y[sample])]] = True

    similarity = ops.scale(
        ops.cosine_matrix(
            ops.take_rows(target_features, keep),
            ops.take_rows(prototypes.centers, valid_classes),
        ),
        1.0 / cfg.temperature,
    )
    return _masked_nll(similarity, positives, None, keep.size)


def clm_loss(
    source_features: Tensor,
    source_labels: Sequence[int] | np.ndarray,
    target_features: Tensor,
    target_pseudo: Sequence[int] | np.ndarray,
    prototypes: PrototypeSet,
    cfg: ContrastiveConfig,
) -> tuple[Tensor, dict[str, float]]:
    """对比学习模块总损失

    Returns:
        (L_CL, 各分量数值)：scl_source、scl_target、icl、ccl_ts、ccl_st、prototype、ccl、cl
    """
    components: dict[str, float] = {}
    zero = Tensor(0.0)

    def term(enabled: bool, build: Callable[[], Tensor]) -> Tensor:
        return build() if enabled else zero

    # 不足两个样本的批次没有域内配对
    scl_source = term(
        cfg.use_scl_source and source_features.shape[0] >= 2,
        lambda: supcon_in_domain(source_features, source_labels, cfg),
    )
    scl_target = term(
        cfg.use_scl_target and target_features.shape[0] >= 2,
        lambda: supcon_in_domain(target_features, target_pseudo, cfg),
    )
    icl = ops.add(ops.scale(scl_source, cfg.alpha[0]), ops.scale(scl_target, cfg.alpha[1]))

    ccl_ts = term(
        cfg.use_ccl_ts,
        lambda: cross_domain_instance(target_features, target_pseudo, source_features, source_labels, cfg),
    )
    ccl_st = term(
        cfg.use_ccl_st,
        lambda: cross_domain_instance(source_features, source_labels, target_features, target_pseudo, cfg),
    )
    proto = term(
        cfg.use_prototype,
        lambda: prototype_loss(target_features, target_pseudo, prototypes, cfg),
    )
    ccl = ops.add(ops.add(ccl_ts, ccl_st), proto)

    loss = ops.add(ops.scale(icl, cfg.beta[0]), ops.scale(ccl, cfg.beta[1]))
    for name, value in (
        ("scl_source", scl_source),
        ("scl_target", scl_target),
        ("icl", icl),
        ("ccl_ts", ccl_ts),
        ("ccl_st", ccl_st),
        ("prototype", proto),
        ("ccl", ccl),
        ("cl", loss),
    ):
        components[name] = value.item()
    return loss, components
