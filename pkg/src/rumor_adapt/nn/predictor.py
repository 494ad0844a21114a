"""谣言预测模块

p = softmax(o·W + b)；源域交叉熵；总损失 γ1·CE + γ2·CL + γ3·CA；推断取最大概率类别。
"""

from collections.abc import Mapping, Sequence

import numpy as np

from rumor_adapt.autodiff import ContractError, Tensor, ops
from rumor_adapt.models.config import LossWeights
from rumor_adapt.nn.encoder import RumorEmbedding
from rumor_adapt.nn.params import ClassifierParams

PROB_FLOOR = 1e-12


def _as_vector(emb: RumorEmbedding | Tensor) -> Tensor:
    return emb.vector if isinstance(emb, RumorEmbedding) else emb


def logits_rows(features: Tensor, params: ClassifierParams) -> Tensor:
    return ops.add(ops.matmul(features, params.W), params.b)


def predict_rows(features: Tensor, params: ClassifierParams) -> Tensor:
    """B × d 特征 -> B × N_c 概率"""
    return ops.softmax_rows(logits_rows(features, params))


def predict(emb: RumorEmbedding | Tensor, params: ClassifierParams) -> Tensor:
    """单条谣言的类别概率向量"""
    vector = _as_vector(emb)
    row = ops.reshape(vector, (1, vector.shape[0]))
    probs = predict_rows(row, params)
    return ops.reshape(probs, (params.num_classes,))


def _check_labels(labels: np.ndarray, num_classes: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ContractError(
            f"labels must lie in [0, {num_classes}), got {sorted(set(labels.tolist()))}"
        )


def cross_entropy(probs: Tensor, labels: Sequence[int] | np.ndarray) -> Tensor:
    """-(1/B)·Σ log p_i[y_i]，概率在取对数前截断到 1e-12"""
    y = np.asarray(labels, dtype=np.int64)
    batch, num_classes = probs.shape
    if y.shape != (batch,):
        raise ContractError(f"expected {batch} labels, got shape {y.shape}")
    if batch == 0:
        raise ContractError("cross_entropy needs a non-empty batch")
    _check_labels(y, num_classes)
    one_hot = np.zeros((batch, num_classes))
    one_hot[np.arange(batch), y] = 1.0
    picked = ops.mul(ops.log(probs, floor=PROB_FLOOR), Tensor(one_hot))
    return ops.scale(ops.sum_all(picked), -1.0 / batch)


def cross_entropy_source(
    features: Tensor, labels: Sequence[int] | np.ndarray, params: ClassifierParams
) -> Tensor:
    """源域交叉熵 L_CE"""
    return cross_entropy(predict_rows(features, params), labels)


def total_loss(components: Mapping[str, Tensor | float], weights: LossWeights) -> Tensor:
    """γ1·ce + γ2·cl + γ3·ca；缺少的分量按 0 计"""
    total = Tensor(0.0)
    for key, weight in (("ce", weights.ce), ("cl", weights.cl), ("ca", weights.ca)):
        value = components.get(key)
        if value is None or weight == 0.0:
            continue
        total = ops.add(total, ops.scale(value, weight))
    return total


def infer_label(emb: RumorEmbedding | Tensor, params: ClassifierParams) -> int:
    """最大概率类别，并列时取较小下标"""
    return int(np.argmax(predict(emb, params).data))


def infer_labels(features: Tensor, params: ClassifierParams) -> np.ndarray:
    return np.argmax(predict_rows(features, params).data, axis=1)
