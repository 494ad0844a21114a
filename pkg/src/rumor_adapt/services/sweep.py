"""超参数扫描

网格语法：
    alpha=0.9/0.1,0.7/0.3;beta=0.5/0.5;gamma=0.8/0.1/0.1,0.6/0.2/0.2

每组（alpha、beta、gamma）单独变化，其余保持基础配置，每个取值一个单元。
每个单元重新校验和为 1 的约束，然后用同一份数据从头训练并在目标域上评估。
"""

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from loguru import logger
from pydantic import ValidationError

from rumor_adapt.data.dataset import PathSet
from rumor_adapt.models.config import ConfigError, RunConfig, TrainConfig
from rumor_adapt.services.evaluation import EvaluationService
from rumor_adapt.services.trainer import Trainer
from rumor_adapt.utils.metrics import write_jsonl

GROUP_SIZES = {"alpha": 2, "beta": 2, "gamma": 3}


@dataclass
class SweepCell:
    """扫描中的一个单元"""

    index: int
    group: str
    value: tuple[float, ...]
    config: TrainConfig


def parse_grid(spec: str) -> dict[str, list[tuple[float, ...]]]:
    """解析网格字符串

    Raises:
        ConfigError: 语法错误、未知参数组或取值个数不对
    """
    grid: dict[str, list[tuple[float, ...]]] = {}
    for chunk in spec.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise ConfigError(f"grid entry {chunk!r} must look like group=v1/v2,...")
        group, values = (part.strip() for part in chunk.split("=", 1))
        if group not in GROUP_SIZES:
            raise ConfigError(f"unknown grid group {group!r}; expected one of {sorted(GROUP_SIZES)}")
        cells = []
        for raw in values.split(","):
            try:
                value = tuple(float(v) for v in raw.strip().split("/"))
            except ValueError:
                raise ConfigError(f"grid value {raw.strip()!r} for {group} is not numeric") from None
            if len(value) != GROUP_SIZES[group]:
                raise ConfigError(
                    f"grid value {raw.strip()!r} for {group} needs {GROUP_SIZES[group]} entries"
                )
            cells.append(value)
        grid.setdefault(group, []).extend(cells)
    if not grid:
        raise ConfigError("grid is empty")
    return grid


def expand_grid(base: TrainConfig, grid: dict[str, list[tuple[float, ...]]]) -> list[SweepCell]:
    """把网格展开成单元，每个单元只改一个参数组"""
    cells = []
    for group, values in grid.items():
        for value in values:
            try:
                config = TrainConfig.model_validate({**base.model_dump(), group: value})
            except ValidationError as e:
                messages = "; ".join(err["msg"] for err in e.errors())
                raise ConfigError(f"grid cell {group}={value}: {messages}") from None
            cells.append(SweepCell(index=len(cells), group=group, value=value, config=config))
    return cells


def run_sweep(
    run_config: RunConfig,
    source: Sequence[PathSet],
    target: Sequence[PathSet],
    grid: dict[str, list[tuple[float, ...]]],
    output_dir: Path | None = None,
) -> list[dict]:
    """训练并评估每个单元，返回每个单元一行结果"""
    rows = []
    for cell in expand_grid(run_config.train, grid):
        cell_config = run_config.model_copy(update={"train": cell.config})
        logger.info(f"Sweep cell {cell.index}: {cell.group}={list(cell.value)}")
        state = Trainer(cell_config).train(source, target)
        report = EvaluationService(state.params).evaluate(target)
        rows.append(
            {
                "cell": cell.index,
                "group": cell.group,
                "value": list(cell.value),
                "final_loss": state.history[-1]["total"] if state.history else None,
                **report.to_dict(),
            }
        )
    if output_dir is not None:
        write_jsonl(output_dir / "sweep.jsonl", rows)
    return rows
