"""交叉注意力一致性

每个源域样本随机配一个伪标签相同的目标域样本，用源域路径做查询、目标域路径做键和值
得到 Ô_cross，要求 RPM(Ô_cross) 与自注意力预测 RPM(Ô) 的 KL 散度小：

    L_CA = Σ_pairs Σ_c p_cross[c]·(log p_cross[c] − log p[c])
"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from loguru import logger

from rumor_adapt.autodiff import Tensor, ops
from rumor_adapt.data.dataset import PathSet
from rumor_adapt.nn.encoder import RumorEmbedding, encode_cross_matrix, encode_matrix
from rumor_adapt.nn.params import ModelParams
from rumor_adapt.nn.predictor import PROB_FLOOR, predict_rows


@dataclass(frozen=True)
class CrossPair:
    """标签相同的一对跨域样本（源域真实标签 = 目标域伪标签）"""

    source: PathSet
    target: PathSet
    label: int
    source_index: int = -1
    target_index: int = -1


def make_pairs(
    source: Sequence[PathSet],
    target: Sequence[PathSet],
    target_pseudo: Sequence[int] | np.ndarray,
    seed: int | Sequence[int],
) -> list[CrossPair]:
    """为每个源域样本均匀抽取一个伪标签相同的目标域样本；没有候选的源域样本跳过"""
    pseudo = np.asarray(target_pseudo, dtype=np.int64)
    if pseudo.shape != (len(target),):
        raise ValueError(f"expected {len(target)} pseudo labels, got shape {pseudo.shape}")
    rng = np.random.default_rng(seed)
    candidates = {int(c): np.flatnonzero(pseudo == c) for c in np.unique(pseudo)}

    pairs = []
    for i, item in enumerate(source):
        if item.label is None:
            raise ValueError(f"source sample {item.rumor_id!r} has no label")
        pool = candidates.get(item.label)
        if pool is None:
            continue
        j = int(pool[rng.integers(0, pool.size)])
        pairs.append(CrossPair(item, target[j], item.label, source_index=i, target_index=j))
    if len(pairs) < len(source):
        logger.debug(f"Paired {len(pairs)} of {len(source)} source samples")
    return pairs


def cross_attention(pair: CrossPair, params: ModelParams) -> RumorEmbedding:
    """Ô_cross：源域路径查询目标域路径"""
    vector = encode_cross_matrix(pair.source.paths, pair.target.paths, params.cam_encoder)
    return RumorEmbedding(vector=vector, rumor_id=pair.source.rumor_id, domain=pair.source.domain)


def kl_rows(p_cross: Tensor, p: Tensor) -> Tensor:
    """Σ_rows Σ_c p_cross·(log p_cross − log p)，两侧取对数前截断到 1e-12"""
    log_ratio = ops.sub(ops.log(p_cross, floor=PROB_FLOOR), ops.log(p, floor=PROB_FLOOR))
    return ops.sum_all(ops.mul(p_cross, log_ratio))


def kl_consistency(
    pairs: Sequence[CrossPair],
    params: ModelParams,
    source_features: Tensor | None = None,
    stop_grad: bool = False,
) -> Tensor:
    """交叉注意力一致性损失 L_CA（对配对求和，不取平均）

    Args:
        pairs: make_pairs 的结果，可以为空
        params: 模型参数
        source_features: 已编码的源域批次特征（按 source_index 取行），None 时重新编码
        stop_grad: 自注意力一侧的预测不回传梯度
    """
    if not pairs:
        return Tensor(0.0)
    cross = ops.stack_rows([cross_attention(pair, params).vector for pair in pairs])
    if source_features is not None:
        own = ops.take_rows(source_features, [pair.source_index for pair in pairs])
    else:
        own = ops.stack_rows([encode_matrix(pair.source.paths, params.encoder) for pair in pairs])

    p_cross = predict_rows(cross, params.classifier)
    p_self = predict_rows(own, params.classifier)
    if stop_grad:
        p_self = p_self.detach()
    return kl_rows(p_cross, p_self)
