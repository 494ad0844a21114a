"""网络：参数、编码器、预测器与优化器"""

from rumor_adapt.nn.encoder import (
    RumorEmbedding,
    attention_weights,
    cross_mha,
    encode,
    encode_batch,
    encode_cross_matrix,
    encode_matrix,
    mha,
    self_attention_head,
)
from rumor_adapt.nn.optim import SGD, Adam, Optimizer, build_optimizer
from rumor_adapt.nn.params import ClassifierParams, EncoderParams, ModelParams
from rumor_adapt.nn.predictor import (
    cross_entropy,
    cross_entropy_source,
    infer_label,
    infer_labels,
    predict,
    predict_rows,
    total_loss,
)

__all__ = [
    "SGD",
    "Adam",
    "ClassifierParams",
    "EncoderParams",
    "ModelParams",
    "Optimizer",
    "RumorEmbedding",
    "attention_weights",
    "build_optimizer",
    "cross_entropy",
    "cross_entropy_source",
    "cross_mha",
    "encode",
    "encode_batch",
    "encode_cross_matrix",
    "encode_matrix",
    "infer_label",
    "infer_labels",
    "mha",
    "predict",
    "predict_rows",
    "self_attention_head",
    "total_loss",
]
