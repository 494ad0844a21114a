"""谣言表示模块

路径嵌入矩阵 X (n×d) 经过一层多头自注意力和逐行前馈层，
再逐列最大池化得到谣言向量 (d)：

    head_j = softmax((X·W_Q[j])(X·W_K[j])ᵀ / √d_k)(X·W_V[j])
    O      = concat(head_1..head_h)·W_O
    Ô      = max_pool_rows(relu(O·W1 + b1)·W2 + b2)

交叉注意力用同一套公式，只是查询来自源域路径、键和值来自目标域路径。
"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from rumor_adapt.autodiff import Tensor, ops
from rumor_adapt.data.dataset import PathSet
from rumor_adapt.data.tree import Domain
from rumor_adapt.nn.params import EncoderParams


@dataclass
class RumorEmbedding:
    """一条谣言的表示向量"""

    vector: Tensor
    rumor_id: str
    domain: Domain


# ===== 注意力 =====


def attention_weights(
    queries: Tensor, keys: Tensor, params: EncoderParams, head: int
) -> Tensor:
    """第 head 个头的注意力权重矩阵 (n_q × n_k)，每行和为 1"""
    q = ops.matmul(queries, params.W_Q[head])
    k = ops.matmul(keys, params.W_K[head])
    logits = ops.scale(ops.matmul(q, ops.transpose(k)), 1.0 / np.sqrt(params.head_dim))
    return ops.softmax_rows(logits)


def attention_head(
    queries: Tensor, keys: Tensor, params: EncoderParams, head: int
) -> Tensor:
    weights = attention_weights(queries, keys, params, head)
    return ops.matmul(weights, ops.matmul(keys, params.W_V[head]))


def self_attention_head(x: Tensor, params: EncoderParams, head: int) -> Tensor:
    """单个自注意力头，输出 n × d_v"""
    return attention_head(x, x, params, head)


def multi_head(queries: Tensor, keys: Tensor, params: EncoderParams) -> Tensor:
    heads = [attention_head(queries, keys, params, j) for j in range(params.heads)]
    return ops.matmul(ops.concat_cols(heads), params.W_O)


def mha(x: Tensor, params: EncoderParams) -> Tensor:
    """多头自注意力，输出 n × d"""
    return multi_head(x, x, params)


def cross_mha(source: Tensor, target: Tensor, params: EncoderParams) -> Tensor:
    """多头交叉注意力：源域路径做查询，目标域路径做键和值，输出 n_s × d"""
    return multi_head(source, target, params)


# ===== 前馈与池化 =====


def feed_forward(h: Tensor, params: EncoderParams) -> Tensor:
    hidden = ops.relu(ops.add(ops.matmul(h, params.W1), params.b1))
    return ops.add(ops.matmul(hidden, params.W2), params.b2)


def _pool(queries: Tensor, attended: Tensor, params: EncoderParams) -> Tensor:
    if params.residual:
        attended = ops.add(queries, attended)
        return ops.max_pool_rows(ops.add(attended, feed_forward(attended, params)))
    return ops.max_pool_rows(feed_forward(attended, params))


def encode_matrix(x: Tensor, params: EncoderParams) -> Tensor:
    """路径嵌入矩阵 -> 谣言向量"""
    return _pool(x, mha(x, params), params)


def encode_cross_matrix(source: Tensor, target: Tensor, params: EncoderParams) -> Tensor:
    """交叉注意力下的源域谣言向量"""
    return _pool(source, cross_mha(source, target, params), params)


def encode(pathset: PathSet, params: EncoderParams) -> RumorEmbedding:
    return RumorEmbedding(
        vector=encode_matrix(pathset.paths, params),
        rumor_id=pathset.rumor_id,
        domain=pathset.domain,
    )


def encode_batch(pathsets: Sequence[PathSet], params: EncoderParams) -> Tensor:
    """把一批谣言编码成 B × d 矩阵，行顺序与输入一致"""
    return ops.stack_rows([encode_matrix(p.paths, params) for p in pathsets])
