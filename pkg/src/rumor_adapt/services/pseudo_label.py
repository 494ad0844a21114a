"""目标域伪标签

源域批次按类别取平均得到原型，再以原型为初始中心对目标域特征做 k-means。
没有样本的类别原型标记为无效，不参与分配。
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from loguru import logger

from rumor_adapt.autodiff import ContractError, Tensor, no_grad, ops
from rumor_adapt.data.dataset import PathSet
from rumor_adapt.nn.encoder import encode_batch
from rumor_adapt.nn.params import ModelParams

NORM_EPS = 1e-12


@dataclass
class PrototypeSet:
    """各类别的源域原型

    centers 参与梯度（由 take_rows / mean_rows 构建），无效类别对应零行。
    """

    centers: Tensor
    counts: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return self.counts > 0

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])


@dataclass
class PseudoLabeledBatch:
    """带伪标签的目标域批次"""

    features: Tensor
    labels: np.ndarray
    distances: np.ndarray
    centers: np.ndarray
    iterations: int = 0
    objective_history: list[float] = field(default_factory=list)

    def accuracy(self, truth: Sequence[int | None]) -> float | None:
        return pseudo_label_accuracy(self.labels, truth)


def pseudo_label_accuracy(
    labels: Sequence[int] | np.ndarray, truth: Sequence[int | None]
) -> float | None:
    """伪标签与保留标签比较的准确率（0~1），没有可比标签时返回 None"""
    pairs = [(int(p), t) for p, t in zip(labels, truth, strict=True) if t is not None]
    if not pairs:
        return None
    return sum(p == t for p, t in pairs) / len(pairs)


def source_prototypes(
    features: Tensor, labels: Sequence[int] | np.ndarray, num_classes: int
) -> PrototypeSet:
    """每个类别的源域特征均值

    Raises:
        ContractError: 批次为空或标签越界
    """
    y = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ContractError("source_prototypes needs a non-empty feature batch")
    if y.shape != (features.shape[0],):
        raise ContractError(f"expected {features.shape[0]} labels, got shape {y.shape}")
    if y.min() < 0 or y.max() >= num_classes:
        raise ContractError(f"source labels must lie in [0, {num_classes})")

    counts = np.bincount(y, minlength=num_classes)
    rows = []
    for c in range(num_classes):
        if counts[c] > 0:
            rows.append(ops.mean_rows(ops.take_rows(features, np.flatnonzero(y == c))))
        else:
            rows.append(Tensor(np.zeros(features.shape[1])))
    return PrototypeSet(centers=ops.stack_rows(rows), counts=counts)


def _normalize(x: np.ndarray) -> np.ndarray:
    return x / (np.sqrt((x**2).sum(axis=1, keepdims=True)) + NORM_EPS)


def _assign(
    x: np.ndarray, centers: np.ndarray, valid: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """最近中心分配，返回 (标签, 平方距离)；并列取较小类别下标"""
    squared = np.full((x.shape[0], centers.shape[0]), np.inf)
    for c in np.flatnonzero(valid):
        squared[:, c] = ((x - centers[c]) ** 2).sum(axis=1)
    labels = np.argmin(squared, axis=1)
    return labels, squared[np.arange(x.shape[0]), labels]


def kmeans_assign(
    target_features: Tensor | np.ndarray,
    init: PrototypeSet,
    max_iter: int = 100,
    tol: float = 1e-4,
    metric: Literal["euclidean", "cosine"] = "euclidean",
) -> PseudoLabeledBatch:
    """以源域原型为初始中心的 Lloyd 迭代

    每轮先用当前标签更新中心（被清空的簇保留原中心），中心最大位移小于 tol 时停止，
    标签是对最终中心的最近分配。tol=inf 时等价于直接按原型做最近分配。

    Args:
        target_features: 目标域特征（只读取数值，不记录计算图）
        init: 源域原型
        max_iter: 最多迭代次数
        tol: 中心位移阈值
        metric: "euclidean"，或 "cosine"（特征和中心先做 L2 归一化）

    Raises:
        ContractError: 没有任何有效原型
    """
    features = target_features if isinstance(target_features, Tensor) else Tensor(target_features)
    valid = init.valid
    if not np.any(valid):
        raise ContractError("kmeans_assign needs at least one valid prototype")

    x = np.array(features.data, dtype=np.float64)
    centers = np.array(init.centers.data, dtype=np.float64)
    if metric == "cosine":
        x = _normalize(x)
        centers[valid] = _normalize(centers[valid])

    if x.shape[0] == 0:
        empty = np.zeros(0, dtype=np.int64)
        return PseudoLabeledBatch(features, empty, np.zeros(0), centers)

    labels, squared = _assign(x, centers, valid)
    history = [float(squared.sum())]
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        updated = centers.copy()
        for c in np.flatnonzero(valid):
            members = x[labels == c]
            if members.shape[0] > 0:
                updated[c] = members.mean(axis=0)
        if metric == "cosine":
            updated[valid] = _normalize(updated[valid])
        shift = float(np.sqrt(((updated - centers) ** 2).sum(axis=1)).max())
        if shift < tol:
            break
        centers = updated
        labels, squared = _assign(x, centers, valid)
        history.append(float(squared.sum()))

    logger.debug(
        f"k-means finished after {iterations} iterations (objective {history[-1]:.6g})"
    )
    return PseudoLabeledBatch(
        features=features,
        labels=labels.astype(np.int64),
        distances=np.sqrt(squared),
        centers=centers,
        iterations=iterations,
        objective_history=history,
    )


def label_target_set(
    params: ModelParams,
    source: Sequence[PathSet],
    target: Sequence[PathSet],
    max_iter: int = 100,
    tol: float = 1e-4,
    metric: Literal["euclidean", "cosine"] = "euclidean",
) -> PseudoLabeledBatch:
    """用整个源域的原型给整个目标域打伪标签（不记录计算图）

    按 epoch 刷新伪标签和 inspect-pseudo 命令使用。
    """
    labels = [p.label for p in source]
    if not source or any(label is None for label in labels):
        raise ContractError("label_target_set needs a non-empty, fully labeled source set")
    with no_grad():
        source_features = encode_batch(source, params.encoder)
        prototypes = source_prototypes(
            source_features, labels, params.classifier.num_classes
        )
        if not target:
            features = Tensor(np.zeros((0, source_features.shape[1])))
        else:
            features = encode_batch(target, params.encoder)
        return kmeans_assign(features, prototypes, max_iter=max_iter, tol=tol, metric=metric)
