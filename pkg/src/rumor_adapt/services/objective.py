"""联合训练目标

一次前向计算：编码两个批次 → 源域原型 → k-means 伪标签 → 对比损失 →
配对与一致性损失 → 源域交叉熵 → 加权总损失。训练步和梯度检查共用这一段。
"""

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from rumor_adapt.autodiff import Tensor
from rumor_adapt.data.dataset import PathSet
from rumor_adapt.losses.consistency import CrossPair, kl_consistency, make_pairs
from rumor_adapt.losses.contrastive import clm_loss
from rumor_adapt.models.config import TrainConfig
from rumor_adapt.nn.encoder import encode_batch
from rumor_adapt.nn.params import ModelParams
from rumor_adapt.nn.predictor import cross_entropy, predict_rows, total_loss
from rumor_adapt.services.pseudo_label import (
    PrototypeSet,
    PseudoLabeledBatch,
    kmeans_assign,
    pseudo_label_accuracy,
    source_prototypes,
)


@dataclass
class FrozenAssignments:
    """固定的伪标签和配对（梯度检查时使用，避免离散选择随扰动跳变）"""

    pseudo_labels: np.ndarray
    pairs: list[tuple[int, int]]


@dataclass
class ObjectiveCounters:
    """子系统调用计数"""

    target_encodes: int = 0
    kmeans_calls: int = 0
    pairing_calls: int = 0


@dataclass
class ObjectiveResult:
    """一次前向的结果"""

    total: Tensor
    terms: dict[str, Tensor]
    components: dict[str, float]
    pseudo_labels: np.ndarray | None = None
    pseudo: PseudoLabeledBatch | None = None
    prototypes: PrototypeSet | None = None
    pairs: list[CrossPair] = field(default_factory=list)

    def frozen(self) -> FrozenAssignments:
        labels = self.pseudo_labels if self.pseudo_labels is not None else np.zeros(0, dtype=np.int64)
        return FrozenAssignments(
            pseudo_labels=labels.copy(),
            pairs=[(p.source_index, p.target_index) for p in self.pairs],
        )


def _labels(batch: Sequence[PathSet]) -> np.ndarray:
    missing = [p.rumor_id for p in batch if p.label is None]
    if missing:
        raise ValueError(f"source samples without labels: {missing[:5]}")
    return np.array([p.label for p in batch], dtype=np.int64)


def compute_objective(
    params: ModelParams,
    source: Sequence[PathSet],
    target: Sequence[PathSet],
    config: TrainConfig,
    pairing_seed: int | Sequence[int],
    frozen: FrozenAssignments | None = None,
    target_pseudo: np.ndarray | None = None,
    counters: ObjectiveCounters | None = None,
) -> ObjectiveResult:
    """计算 γ1·L_CE + γ2·L_CL + γ3·L_CA

    Args:
        params: 模型参数
        source: 源域批次（有标签）
        target: 目标域批次（标签不参与计算）
        config: 训练配置
        pairing_seed: 交叉注意力配对的随机种子
        frozen: 固定的伪标签和配对，给定时不运行 k-means 和随机配对
        target_pseudo: 按 epoch 刷新得到的伪标签，给定时不运行 k-means
        counters: 子系统调用计数（可选）

    Returns:
        ObjectiveResult: 总损失张量、各分量张量与数值
    """
    weights = config.loss_weights
    num_classes = params.classifier.num_classes
    source_labels = _labels(source)

    source_features = encode_batch(source, params.encoder)
    source_probs = predict_rows(source_features, params.classifier)
    terms: dict[str, Tensor] = {"ce": cross_entropy(source_probs, source_labels)}
    components: dict[str, float] = {}
    result = ObjectiveResult(total=Tensor(0.0), terms=terms, components=components)

    # γ2 = γ3 = 0 时不需要目标域，也不做伪标签和配对
    if weights.cl > 0.0 or weights.ca > 0.0:
        target_features = encode_batch(target, params.encoder)
        prototypes = source_prototypes(source_features, source_labels, num_classes)
        if counters is not None:
            counters.target_encodes += 1

        if frozen is not None:
            pseudo_labels = frozen.pseudo_labels
        elif target_pseudo is not None:
            pseudo_labels = np.asarray(target_pseudo, dtype=np.int64)
        else:
            result.pseudo = kmeans_assign(
                target_features,
                prototypes,
                max_iter=config.kmeans_max_iter,
                tol=config.kmeans_tol,
                metric=config.kmeans_metric,
            )
            pseudo_labels = result.pseudo.labels
            if counters is not None:
                counters.kmeans_calls += 1
        result.pseudo_labels = pseudo_labels
        result.prototypes = prototypes

        if weights.cl > 0.0:
            terms["cl"], clm_components = clm_loss(
                source_features,
                source_labels,
                target_features,
                pseudo_labels,
                prototypes,
                config.contrastive,
            )
            components.update(clm_components)

        if weights.ca > 0.0:
            if frozen is not None:
                result.pairs = [
                    CrossPair(source[i], target[j], int(source_labels[i]), i, j)
                    for i, j in frozen.pairs
                ]
            else:
                result.pairs = make_pairs(source, target, pseudo_labels, pairing_seed)
                if counters is not None:
                    counters.pairing_calls += 1
            terms["ca"] = kl_consistency(
                result.pairs, params, source_features, stop_grad=config.stop_grad_kl
            )
            components["pairs"] = float(len(result.pairs))

        truth = [p.label for p in target]
        if any(label is not None for label in truth):
            accuracy = pseudo_label_accuracy(pseudo_labels, truth)
            if accuracy is not None:
                components["pseudo_accuracy"] = accuracy

    result.total = total_loss(terms, weights)
    for key in ("ce", "cl", "ca"):
        components[key] = terms[key].item() if key in terms else 0.0
    components["total"] = result.total.item()
    return result
