"""逐项叠加损失的消融实验

顺序：CE → +L_SCL(源域) → +L_SCL(目标域) → +L_CCL(t→s) → +L_CCL(s→t) → +L_Pro → +L_CA。
每个阶段按基础配置的 γ 比例重新归一化，关闭的分量权重为 0。
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import ValidationError

from rumor_adapt.data.dataset import PathSet
from rumor_adapt.data.synth import generate
from rumor_adapt.models.config import ConfigError, RunConfig, TrainConfig
from rumor_adapt.services.evaluation import EvaluationService
from rumor_adapt.services.trainer import Trainer, build_pathsets, load_pathsets
from rumor_adapt.utils.metrics import write_jsonl

CONTRASTIVE_FLAGS = (
    "use_scl_source",
    "use_scl_target",
    "use_ccl_ts",
    "use_ccl_st",
    "use_prototype",
)
STAGE_NAMES = ("ce", "+scl_source", "+scl_target", "+ccl_ts", "+ccl_st", "+prototype", "+ca")


@dataclass
class AblationStage:
    name: str
    config: TrainConfig


@dataclass
class AblationRow:
    """一个阶段在多个种子上的结果"""

    stage: str
    accuracies: list[float] = field(default_factory=list)
    f1: list[list[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        acc = np.asarray(self.accuracies, dtype=np.float64)
        f1 = np.asarray(self.f1, dtype=np.float64)
        return {
            "stage": self.stage,
            "seeds": len(self.accuracies),
            "accuracy_mean": float(acc.mean()) if acc.size else None,
            "accuracy_std": float(acc.std()) if acc.size else None,
            "f1_mean": f1.mean(axis=0).tolist() if f1.size else [],
            "accuracies": self.accuracies,
        }


def ablation_stages(base: TrainConfig) -> list[AblationStage]:
    """七个叠加阶段的训练配置

    Raises:
        ConfigError: γ1 为 0（CE 阶段无法归一化）
    """
    g_ce, g_cl, g_ca = base.gamma
    if g_ce <= 0.0:
        raise ConfigError("ablation needs train.gamma[0] > 0 for the CE-only stage")

    stages = []
    for k, name in enumerate(STAGE_NAMES):
        flags = {flag: i < k for i, flag in enumerate(CONTRASTIVE_FLAGS)}
        use_cl = any(flags.values())
        use_ca = k == len(STAGE_NAMES) - 1
        raw = (g_ce, g_cl if use_cl else 0.0, g_ca if use_ca else 0.0)
        total = sum(raw)
        gamma = tuple(v / total for v in raw)
        try:
            config = TrainConfig.model_validate({**base.model_dump(), **flags, "gamma": gamma})
        except ValidationError as e:
            raise ConfigError(f"ablation stage {name}: {e.errors()[0]['msg']}") from None
        stages.append(AblationStage(name=name, config=config))
    return stages


def _seed_data(
    run_config: RunConfig,
    seed: int,
    source_path: Path | None,
    target_path: Path | None,
) -> tuple[list[PathSet], list[PathSet]]:
    if source_path is not None and target_path is not None:
        return load_pathsets(run_config, source_path, target_path)
    synth = run_config.synth.model_copy(update={"seed": seed})
    source, target = generate(synth)
    return build_pathsets(run_config, source, target)


def run_ablation(
    run_config: RunConfig,
    seeds: Sequence[int],
    stages: Sequence[str] | None = None,
    source_path: Path | None = None,
    target_path: Path | None = None,
    output_dir: Path | None = None,
) -> list[AblationRow]:
    """按种子训练每个阶段并在目标域上评估

    没有给数据集路径时，每个种子用合成数据生成器重新生成数据（synth.seed = 种子）。
    """
    selected = ablation_stages(run_config.train)
    if stages:
        unknown = sorted(set(stages) - set(STAGE_NAMES))
        if unknown:
            raise ConfigError(f"unknown ablation stages {unknown}; expected {list(STAGE_NAMES)}")
        selected = [s for s in selected if s.name in stages]

    rows = {stage.name: AblationRow(stage=stage.name) for stage in selected}
    for seed in seeds:
        source, target = _seed_data(run_config, seed, source_path, target_path)
        for stage in selected:
            train = stage.config.model_copy(update={"seed": seed})
            state = Trainer(run_config.model_copy(update={"train": train})).train(source, target)
            report = EvaluationService(state.params).evaluate(target)
            rows[stage.name].accuracies.append(report.accuracy)
            rows[stage.name].f1.append(report.f1)
            logger.info(f"Ablation seed {seed} stage {stage.name}: {report.summary()}")

    result = list(rows.values())
    if output_dir is not None:
        write_jsonl(output_dir / "ablation.jsonl", [row.to_dict() for row in result])
    return result
