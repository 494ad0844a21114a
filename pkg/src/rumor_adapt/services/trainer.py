"""联合训练

每个 epoch 分别打乱源域和目标域（种子 (seed, epoch)），较短的一方循环使用，
每步取一对批次计算联合目标、反向传播、更新参数。配对的随机种子是 (seed, step)，
所以从 epoch 边界的检查点恢复后与不中断的运行逐步一致。
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger

from rumor_adapt.autodiff import ContractError, NumericError
from rumor_adapt.data.dataset import PathSet, PathSetBuilder, collect_vocabulary, load_dataset
from rumor_adapt.data.embeddings import EmbeddingTable, load_embeddings, random_embeddings
from rumor_adapt.data.tree import Domain, PropagationTree
from rumor_adapt.models.config import ConfigError, RunConfig
from rumor_adapt.nn.optim import Optimizer, build_optimizer
from rumor_adapt.nn.params import ModelParams
from rumor_adapt.services.evaluation import EvalReport, evaluate
from rumor_adapt.services.objective import ObjectiveCounters, compute_objective
from rumor_adapt.services.pseudo_label import label_target_set
from rumor_adapt.utils.checkpoint import Checkpoint, save_checkpoint
from rumor_adapt.utils.metrics import MetricsLog

CHECKPOINT_DIR = "checkpoints"
FINAL_CHECKPOINT = "checkpoint.json"


# ===== 数据准备 =====


def build_embedding_table(
    run_config: RunConfig, trees: Sequence[PropagationTree]
) -> EmbeddingTable:
    """有词向量文件时读取文件，否则按语料词表生成随机词向量"""
    data, dim = run_config.data, run_config.network.dim
    if data.embeddings_path is not None:
        if not data.embeddings_path.exists():
            raise FileNotFoundError(f"Embeddings file not found: {data.embeddings_path}")
        return load_embeddings(data.embeddings_path, expected_dim=dim)
    return random_embeddings(collect_vocabulary(trees), seed=data.embedding_seed, dim=dim)


def load_pathsets(
    run_config: RunConfig,
    source_path: Path | None,
    target_path: Path | None,
) -> tuple[list[PathSet], list[PathSet]]:
    """读取两个数据集文件并构建路径集（任一路径为 None 时对应结果为空）"""
    num_classes = run_config.network.num_classes
    trees: dict[Domain, list[PropagationTree]] = {Domain.SOURCE: [], Domain.TARGET: []}
    for domain, path in ((Domain.SOURCE, source_path), (Domain.TARGET, target_path)):
        if path is None:
            continue
        if not path.exists():
            raise FileNotFoundError(f"Dataset not found: {path}")
        trees[domain] = load_dataset(path, domain, num_classes=num_classes)
    return build_pathsets(run_config, trees[Domain.SOURCE], trees[Domain.TARGET])


def build_pathsets(
    run_config: RunConfig,
    source: Sequence[PropagationTree],
    target: Sequence[PropagationTree],
) -> tuple[list[PathSet], list[PathSet]]:
    table = build_embedding_table(run_config, [*source, *target])
    builder = PathSetBuilder(table, max_paths=run_config.network.max_paths)
    return builder.build_many(source), builder.build_many(target)


# ===== 训练状态 =====


@dataclass
class TrainState:
    """训练状态：参数、优化器、计数器与指标历史"""

    params: ModelParams
    optimizer: Optimizer
    step: int = 0
    epoch: int = 0
    history: list[dict] = field(default_factory=list)
    best_accuracy: float | None = None
    stale_epochs: int = 0
    stopped_early: bool = False

    @classmethod
    def initialize(cls, run_config: RunConfig) -> "TrainState":
        params = ModelParams.initialize(run_config.network, seed=run_config.train.seed)
        return cls(params=params, optimizer=build_optimizer(params.named_tensors(), run_config.train))

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, run_config: RunConfig) -> "TrainState":
        """从检查点恢复；网络结构必须与当前配置一致

        Raises:
            ConfigError: 网络结构或优化器类型与检查点不一致
        """
        if checkpoint.config.network != run_config.network:
            raise ConfigError(
                "checkpoint network settings differ from the current config: "
                f"{checkpoint.config.network.model_dump()} vs {run_config.network.model_dump()}"
            )
        state = cls.initialize(run_config)
        state.params.load_arrays(checkpoint.tensors)
        try:
            state.optimizer.load_state_dict(checkpoint.optimizer)
        except (KeyError, ValueError) as e:
            raise ConfigError(f"cannot restore optimizer state: {e}") from e
        state.step = checkpoint.step
        state.epoch = checkpoint.epoch
        state.history = list(checkpoint.history)
        state.best_accuracy = checkpoint.trainer.get("best_accuracy")
        state.stale_epochs = int(checkpoint.trainer.get("stale_epochs", 0))
        state.stopped_early = bool(checkpoint.trainer.get("stopped_early", False))
        return state

    def save(self, path: Path, run_config: RunConfig) -> Path:
        return save_checkpoint(
            path,
            config=run_config,
            tensors=self.params.arrays(),
            step=self.step,
            epoch=self.epoch,
            optimizer=self.optimizer.state_dict(),
            history=self.history,
            trainer={
                "best_accuracy": self.best_accuracy,
                "stale_epochs": self.stale_epochs,
                "stopped_early": self.stopped_early,
            },
        )


def _batches(items: Sequence[PathSet], size: int, seed: list[int]) -> list[list[PathSet]]:
    order = np.random.default_rng(seed).permutation(len(items))
    return [[items[i] for i in order[k : k + size]] for k in range(0, len(items), size)]


# ===== 训练器 =====


class Trainer:
    """联合训练循环

    Args:
        run_config: 运行配置
        output_dir: 输出目录（检查点、metrics.jsonl），None 表示不写文件
        evaluation_set: 带保留标签的目标域样本，eval_every > 0 时按 epoch 评估
    """

    def __init__(
        self,
        run_config: RunConfig,
        output_dir: Path | None = None,
        evaluation_set: Sequence[PathSet] | None = None,
        resume: bool = False,
    ) -> None:
        self.run_config = run_config
        self.config = run_config.train
        self.output_dir = output_dir
        self.evaluation_set = list(evaluation_set or [])
        self.counters = ObjectiveCounters()
        self.metrics = (
            MetricsLog(output_dir / "metrics.jsonl", append=resume) if output_dir else None
        )

    @property
    def needs_target(self) -> bool:
        weights = self.config.loss_weights
        return weights.cl > 0.0 or weights.ca > 0.0

    def _record(self, record: dict[str, Any]) -> None:
        if self.metrics is not None:
            self.metrics.write(record)

    def train_step(
        self,
        source_batch: Sequence[PathSet],
        target_batch: Sequence[PathSet],
        state: TrainState,
        target_pseudo: np.ndarray | None = None,
    ) -> dict[str, float]:
        """一步训练，返回各损失分量

        Raises:
            ContractError: 源域批次为空
            NumericError: 损失或梯度出现非有限值
        """
        if not source_batch:
            raise ContractError("train_step needs a non-empty source batch")
        state.params.zero_grad()
        result = compute_objective(
            state.params,
            source_batch,
            target_batch,
            self.config,
            pairing_seed=[self.config.seed, state.step],
            target_pseudo=target_pseudo,
            counters=self.counters,
        )
        components = result.components
        if not all(np.isfinite(value) for value in components.values()):
            logger.error(f"Non-finite loss at step {state.step}: {components}")
            raise NumericError(f"non-finite loss at step {state.step}: {components}")

        result.total.backward()
        squared = sum(
            float(np.sum(t.grad**2))
            for t in state.params.named_tensors().values()
            if t.grad is not None
        )
        grad_norm = float(np.sqrt(squared))
        if not np.isfinite(grad_norm):
            logger.error(f"Non-finite gradient at step {state.step}: {components}")
            raise NumericError(f"non-finite gradient norm at step {state.step}")

        state.optimizer.step()
        state.step += 1
        record = {"event": "step", "step": state.step, "epoch": state.epoch, **components}
        record["grad_norm"] = grad_norm
        state.history.append(record)
        self._record(record)
        return components

    def _epoch_pseudo_labels(
        self, source: Sequence[PathSet], target: Sequence[PathSet], state: TrainState
    ) -> dict[str, int]:
        batch = label_target_set(
            state.params,
            source,
            target,
            max_iter=self.config.kmeans_max_iter,
            tol=self.config.kmeans_tol,
            metric=self.config.kmeans_metric,
        )
        self.counters.kmeans_calls += 1
        return {item.rumor_id: int(label) for item, label in zip(target, batch.labels, strict=True)}

    def train(
        self,
        source: Sequence[PathSet],
        target: Sequence[PathSet],
        state: TrainState | None = None,
    ) -> TrainState:
        """训练到配置的 epoch 数（或早停）

        Raises:
            ContractError: 源域为空，或需要目标域时目标域为空
        """
        cfg = self.config
        if not source:
            raise ContractError("training needs a non-empty source set")
        if self.needs_target and not target:
            raise ContractError("contrastive and consistency losses need a non-empty target set")
        if state is None:
            state = TrainState.initialize(self.run_config)
        elif self.metrics is not None:
            self.metrics.truncate_after(state.step)
        logger.info(
            f"Training {cfg.epochs} epochs from epoch {state.epoch} "
            f"({len(source)} source / {len(target)} target samples, gamma={cfg.gamma})"
        )

        for epoch in range(state.epoch, cfg.epochs):
            if state.stopped_early:
                break
            source_batches = _batches(source, cfg.source_batch_size, [cfg.seed, epoch, 0])
            target_batches = _batches(target, cfg.target_batch_size, [cfg.seed, epoch, 1])
            steps = max(len(source_batches), len(target_batches))

            pseudo_table = None
            if self.needs_target and cfg.pseudo_refresh == "epoch":
                pseudo_table = self._epoch_pseudo_labels(source, target, state)

            for k in range(steps):
                source_batch = source_batches[k % len(source_batches)]
                target_batch = target_batches[k % len(target_batches)] if target_batches else []
                pseudo = None
                if pseudo_table is not None:
                    pseudo = np.array([pseudo_table[p.rumor_id] for p in target_batch], dtype=np.int64)
                self.train_step(source_batch, target_batch, state, target_pseudo=pseudo)

            state.epoch = epoch + 1
            self._end_of_epoch(state)

        if self.output_dir is not None:
            state.save(self.output_dir / FINAL_CHECKPOINT, self.run_config)
        last = state.history[-1]["total"] if state.history else float("nan")
        logger.info(f"Training finished at epoch {state.epoch}, step {state.step} (last loss {last:.6g})")
        return state

    def _end_of_epoch(self, state: TrainState) -> None:
        cfg = self.config
        if cfg.eval_every and self.evaluation_set and state.epoch % cfg.eval_every == 0:
            report = evaluate(self.evaluation_set, state.params)
            self._record({"event": "eval", "epoch": state.epoch, "step": state.step, **report.to_dict()})
            if state.best_accuracy is None or report.accuracy > state.best_accuracy:
                state.best_accuracy = report.accuracy
                state.stale_epochs = 0
            else:
                state.stale_epochs += cfg.eval_every
            if cfg.patience is not None and state.stale_epochs >= cfg.patience:
                logger.info(f"Early stopping at epoch {state.epoch} (best accuracy {state.best_accuracy:.2f})")
                state.stopped_early = True

        if (
            self.output_dir is not None
            and cfg.checkpoint_every
            and state.epoch % cfg.checkpoint_every == 0
        ):
            path = self.output_dir / CHECKPOINT_DIR / f"epoch-{state.epoch:04d}.json"
            state.save(path, self.run_config)

    def evaluate(self, target: Sequence[PathSet], state: TrainState) -> EvalReport:
        return evaluate(target, state.params)
