"""推断与评估

推断流程：路径集 → 编码器 → 分类器 → 取最大概率类别。
评估指标与结果表一致：准确率和每个类别的 F1（百分数）。
"""

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import orjson
from loguru import logger

from rumor_adapt.autodiff import no_grad
from rumor_adapt.data.dataset import PathSet
from rumor_adapt.models.config import TrainConfig
from rumor_adapt.nn.encoder import encode_batch
from rumor_adapt.nn.params import ModelParams
from rumor_adapt.nn.predictor import predict_rows
from rumor_adapt.services.pseudo_label import PseudoLabeledBatch, label_target_set
from rumor_adapt.utils.metrics import write_jsonl

PREDICT_CHUNK = 64
PREDICTIONS_FILE = "predictions.jsonl"
EVALUATION_FILE = "evaluation.json"
PSEUDO_LABELS_FILE = "pseudo_labels.jsonl"


class MissingLabelsError(ValueError):
    """评估需要的保留标签缺失"""

    pass


def has_held_out_labels(pathsets: Sequence[PathSet]) -> bool:
    """非空且每条样本都有保留标签"""
    return bool(pathsets) and all(p.label is not None for p in pathsets)


def class_names(num_classes: int) -> list[str]:
    """二分类时为 N（非谣言）和 R（谣言）"""
    if num_classes == 2:
        return ["N", "R"]
    return [f"C{c}" for c in range(num_classes)]


@dataclass
class Prediction:
    """单条样本的预测结果"""

    rumor_id: str
    predicted: int
    probabilities: list[float]
    label: int | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.rumor_id,
            "predicted": self.predicted,
            "probabilities": self.probabilities,
        }


@dataclass
class EvalReport:
    """评估结果（百分数）"""

    accuracy: float
    f1: list[float]
    confusion: list[list[int]]
    count: int

    @property
    def names(self) -> list[str]:
        return class_names(len(self.f1))

    def to_dict(self) -> dict:
        report = {"accuracy": self.accuracy, "count": self.count, "confusion": self.confusion}
        for name, value in zip(self.names, self.f1, strict=True):
            report[f"{name}-F1"] = value
        return report

    def summary(self) -> str:
        parts = [f"Acc {self.accuracy:.2f}"]
        parts += [f"{name}-F1 {value:.2f}" for name, value in zip(self.names, self.f1, strict=True)]
        return " | ".join(parts) + f" (n={self.count})"


def predict_samples(pathsets: Sequence[PathSet], params: ModelParams) -> list[Prediction]:
    """对一组样本做推断（不记录计算图）"""
    predictions: list[Prediction] = []
    with no_grad():
        for start in range(0, len(pathsets), PREDICT_CHUNK):
            chunk = pathsets[start : start + PREDICT_CHUNK]
            probs = predict_rows(encode_batch(chunk, params.encoder), params.classifier).data
            for item, row in zip(chunk, probs, strict=True):
                predictions.append(
                    Prediction(
                        rumor_id=item.rumor_id,
                        predicted=int(np.argmax(row)),
                        probabilities=row.tolist(),
                        label=item.label,
                    )
                )
    return predictions


def classification_report(
    predicted: Sequence[int], truth: Sequence[int], num_classes: int
) -> EvalReport:
    """由混淆矩阵计算准确率与每类 F1；没有预测也没有真实样本的类别 F1 记为 0"""
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for p, t in zip(predicted, truth, strict=True):
        confusion[t, p] += 1
    count = int(confusion.sum())
    accuracy = 100.0 * np.trace(confusion) / count if count else 0.0

    f1 = []
    for c in range(num_classes):
        tp = confusion[c, c]
        fp = confusion[:, c].sum() - tp
        fn = confusion[c, :].sum() - tp
        denominator = 2 * tp + fp + fn
        f1.append(float(100.0 * 2 * tp / denominator) if denominator else 0.0)
    return EvalReport(
        accuracy=float(accuracy), f1=f1, confusion=confusion.tolist(), count=count
    )


def evaluate(pathsets: Sequence[PathSet], params: ModelParams) -> EvalReport:
    """在带保留标签的目标域上评估

    Raises:
        MissingLabelsError: 有样本没有标签
    """
    missing = [p.rumor_id for p in pathsets if p.label is None]
    if missing:
        raise MissingLabelsError(
            f"evaluation needs held-out labels; {len(missing)} samples have none (e.g. {missing[0]!r})"
        )
    predictions = predict_samples(pathsets, params)
    report = classification_report(
        [p.predicted for p in predictions],
        [int(p.label) for p in predictions if p.label is not None],
        params.classifier.num_classes,
    )
    logger.info(f"Evaluation: {report.summary()}")
    return report


class EvaluationService:
    """目标域推断与评估服务

    包装一组训练好的参数，提供：
    - 逐条预测 (predict)
    - 带保留标签的评估 (evaluate)
    - 写出预测与评估文件 (write_report)
    - 用源域原型给目标域打伪标签 (label_targets)
    """

    def __init__(self, params: ModelParams):
        self.params = params

    @property
    def num_classes(self) -> int:
        return self.params.classifier.num_classes

    def predict(self, pathsets: Sequence[PathSet]) -> list[Prediction]:
        return predict_samples(pathsets, self.params)

    def evaluate(self, pathsets: Sequence[PathSet]) -> EvalReport:
        """
        Raises:
            MissingLabelsError: 有样本没有标签
        """
        return evaluate(pathsets, self.params)

    def write_report(
        self, pathsets: Sequence[PathSet], out_dir: Path
    ) -> tuple[list[Prediction], EvalReport | None]:
        """
        写出 predictions.jsonl；所有样本都有保留标签时再写 evaluation.json

        Returns:
            (逐条预测, 评估结果)；没有保留标签时评估结果为 None
        """
        out_dir.mkdir(parents=True, exist_ok=True)
        predictions = self.predict(pathsets)
        write_jsonl(out_dir / PREDICTIONS_FILE, [p.to_dict() for p in predictions])
        if not has_held_out_labels(pathsets):
            logger.info(
                f"Wrote {len(predictions)} predictions to {out_dir} (no held-out labels, skipping metrics)"
            )
            return predictions, None

        report = classification_report(
            [p.predicted for p in predictions],
            [int(p.label) for p in predictions if p.label is not None],
            self.num_classes,
        )
        (out_dir / EVALUATION_FILE).write_bytes(
            orjson.dumps(report.to_dict(), option=orjson.OPT_INDENT_2)
        )
        logger.info(f"Evaluation: {report.summary()}")
        return predictions, report

    def label_targets(
        self,
        source: Sequence[PathSet],
        target: Sequence[PathSet],
        train_config: TrainConfig,
        out_dir: Path | None = None,
    ) -> PseudoLabeledBatch:
        """
        按训练配置的 k-means 设置给整个目标域打伪标签

        给出 out_dir 时写出 pseudo_labels.jsonl（id、伪标签、到中心的距离、保留标签）。
        """
        batch = label_target_set(
            self.params,
            source,
            target,
            max_iter=train_config.kmeans_max_iter,
            tol=train_config.kmeans_tol,
            metric=train_config.kmeans_metric,
        )
        if out_dir is not None:
            rows = [
                {
                    "id": item.rumor_id,
                    "pseudo_label": int(label),
                    "distance": float(distance),
                    "label": item.label,
                }
                for item, label, distance in zip(target, batch.labels, batch.distances, strict=True)
            ]
            write_jsonl(out_dir / PSEUDO_LABELS_FILE, rows)
        return batch
