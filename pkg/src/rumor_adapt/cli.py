"""命令行入口

    rumor-adapt synth          生成合成数据
    rumor-adapt train          联合训练，写检查点、指标日志和评估结果
    rumor-adapt eval           用检查点在目标域上推断并评估
    rumor-adapt gradcheck      微型模型上的梯度检查
    rumor-adapt sweep          α/β/γ 超参数扫描
    rumor-adapt inspect-pseudo 查看目标域伪标签
    rumor-adapt ablate         逐项叠加损失的消融实验

退出码：0 成功，1 用法/配置/输入错误，2 运行时或数值错误。
"""

import sys
from collections.abc import Sequence
from pathlib import Path

import click
from loguru import logger

from rumor_adapt import __version__
from rumor_adapt.autodiff import ContractError, NumericError, ShapeError
from rumor_adapt.config import settings
from rumor_adapt.data.dataset import DatasetFormatError, PathSet
from rumor_adapt.data.embeddings import EmbeddingFormatError
from rumor_adapt.data.synth import generate, write_synthetic
from rumor_adapt.data.tree import TreeValidationError
from rumor_adapt.models.config import ConfigError, RunConfig
from rumor_adapt.nn.params import ModelParams
from rumor_adapt.services.diagnostics import run_gradcheck
from rumor_adapt.services.evaluation import (
    EvaluationService,
    MissingLabelsError,
    has_held_out_labels,
)
from rumor_adapt.services.experiments import run_ablation
from rumor_adapt.services.sweep import parse_grid, run_sweep
from rumor_adapt.services.trainer import (
    FINAL_CHECKPOINT,
    TrainState,
    Trainer,
    build_pathsets,
    load_pathsets,
)
from rumor_adapt.utils.checkpoint import CheckpointError, load_checkpoint
from rumor_adapt.utils.kv_config import dump_run_config, load_run_config
from rumor_adapt.utils.logger import setup_logging
from rumor_adapt.utils.metrics import write_jsonl

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

# 输入或配置问题 -> 1，其余运行时错误 -> 2
_USAGE_ERRORS = (
    ConfigError,
    DatasetFormatError,
    TreeValidationError,
    EmbeddingFormatError,
    CheckpointError,
    FileNotFoundError,
    MissingLabelsError,
)
_RUNTIME_ERRORS = (NumericError, ContractError, ShapeError)


class GradcheckFailed(RuntimeError):
    """梯度检查未通过"""

    pass


# ===== 公共选项 =====


def _config_option(func):
    return click.option(
        "--config",
        "config_path",
        type=click.Path(path_type=Path),
        default=None,
        help="键值配置文件（section.key = value）",
    )(func)


def _set_option(func):
    return click.option(
        "--set",
        "overrides",
        multiple=True,
        metavar="SECTION.KEY=VALUE",
        help="覆盖配置项，可重复",
    )(func)


def _out_option(func):
    return click.option(
        "--out",
        "out_dir",
        type=click.Path(file_okay=False, path_type=Path),
        default=None,
        help="输出目录（默认取 DEFAULT_OUTPUT_DIR）",
    )(func)


def _output_dir(out_dir: Path | None, name: str) -> Path:
    directory = out_dir or settings.default_output_dir / name
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _parse_ints(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise click.BadParameter("expected at least one integer")
    return values


def _dataset_paths(
    run_config: RunConfig, source: Path | None, target: Path | None
) -> tuple[Path | None, Path | None]:
    return source or run_config.data.source_path, target or run_config.data.target_path


def _write_predictions(pathsets: Sequence[PathSet], params: ModelParams, out_dir: Path) -> None:
    predictions, report = EvaluationService(params).write_report(pathsets, out_dir)
    if report is None:
        click.echo(f"Wrote {len(predictions)} predictions (no held-out labels, skipping metrics)")
    else:
        click.echo(report.summary())


# ===== 命令组 =====


@click.group()
@click.version_option(__version__, prog_name="rumor-adapt")
@click.option("--log-level", default=None, help="日志级别（默认取 LOG_LEVEL）")
def cli(log_level: str | None) -> None:
    """跨领域谣言检测的无监督领域自适应"""
    setup_logging(level=log_level.upper() if log_level else None)


@cli.command()
@_config_option
@_set_option
@_out_option
def synth(config_path: Path | None, overrides: tuple[str, ...], out_dir: Path | None) -> None:
    """生成合成的源域和目标域数据"""
    run_config = load_run_config(config_path, overrides)
    directory = _output_dir(out_dir, "synth")
    manifest = write_synthetic(run_config.synth, directory)
    counts = {name: entry["samples"] for name, entry in manifest["files"].items()}
    click.echo(f"Wrote {counts} samples to {directory}")


@cli.command()
@_config_option
@_set_option
@click.option("--source", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--target", type=click.Path(dir_okay=False, path_type=Path), default=None)
@_out_option
@click.option(
    "--resume",
    "resume_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="从 epoch 边界的检查点继续训练",
)
def train(
    config_path: Path | None,
    overrides: tuple[str, ...],
    source: Path | None,
    target: Path | None,
    out_dir: Path | None,
    resume_path: Path | None,
) -> None:
    """联合训练；没有给数据集时使用合成数据"""
    run_config = load_run_config(config_path, overrides)
    directory = _output_dir(out_dir, "train")
    source_path, target_path = _dataset_paths(run_config, source, target)
    if source_path is None and target_path is None:
        logger.info("No dataset paths given, generating synthetic data")
        source_sets, target_sets = build_pathsets(run_config, *generate(run_config.synth))
    else:
        if source_path is None:
            raise click.UsageError("--source is required when --target is given")
        source_sets, target_sets = load_pathsets(run_config, source_path, target_path)

    (directory / "config.txt").write_text(dump_run_config(run_config), encoding="utf-8")
    state = None
    if resume_path is not None:
        state = TrainState.from_checkpoint(load_checkpoint(resume_path), run_config)
        logger.info(f"Resuming from {resume_path} at epoch {state.epoch}, step {state.step}")

    evaluation_set = target_sets if has_held_out_labels(target_sets) else None
    trainer = Trainer(
        run_config,
        output_dir=directory,
        evaluation_set=evaluation_set,
        resume=resume_path is not None,
    )
    state = trainer.train(source_sets, target_sets, state=state)
    click.echo(f"Trained {state.epoch} epochs ({state.step} steps); checkpoint {directory / FINAL_CHECKPOINT}")
    if target_sets:
        _write_predictions(target_sets, state.params, directory)


@cli.command(name="eval")
@click.option(
    "--checkpoint", "checkpoint_path", type=click.Path(dir_okay=False, path_type=Path), required=True
)
@click.option("--target", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_out_option
def eval_command(checkpoint_path: Path, target: Path, out_dir: Path | None) -> None:
    """在目标域上推断；有保留标签时输出 Acc、N-F1、R-F1"""
    checkpoint = load_checkpoint(checkpoint_path)
    run_config = checkpoint.config
    state = TrainState.from_checkpoint(checkpoint, run_config)
    _, target_sets = load_pathsets(run_config, None, target)
    directory = _output_dir(out_dir, "eval")
    _write_predictions(target_sets, state.params, directory)


@cli.command()
@_config_option
@_set_option
@_out_option
def gradcheck(config_path: Path | None, overrides: tuple[str, ...], out_dir: Path | None) -> None:
    """微型模型上的有限差分梯度检查，全部通过时退出码为 0"""
    run_config = load_run_config(config_path, overrides)
    result = run_gradcheck(run_config)
    for name, report in result.reports.items():
        click.echo(f"[{name}] threshold {report.threshold:g}")
        for group, error in sorted(report.errors.items()):
            mark = "ok" if error < report.threshold else "FAIL"
            click.echo(f"  {group:<24} {error:.3e}  {mark}")
    if out_dir is not None:
        write_jsonl(_output_dir(out_dir, "gradcheck") / "gradcheck.jsonl", [result.to_dict()])
    if not result.passed:
        failed = [name for name, report in result.reports.items() if not report.passed]
        raise GradcheckFailed(f"gradient check failed for {failed}")
    click.echo("All gradient checks passed")


@cli.command()
@_config_option
@_set_option
@click.option("--grid", "grid_spec", required=True, help="例如 alpha=0.9/0.1,0.7/0.3;gamma=0.8/0.1/0.1")
@click.option("--source", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--target", type=click.Path(dir_okay=False, path_type=Path), default=None)
@_out_option
def sweep(
    config_path: Path | None,
    overrides: tuple[str, ...],
    grid_spec: str,
    source: Path | None,
    target: Path | None,
    out_dir: Path | None,
) -> None:
    """α/β/γ 网格扫描，每个单元输出一行指标"""
    run_config = load_run_config(config_path, overrides)
    grid = parse_grid(grid_spec)
    source_path, target_path = _dataset_paths(run_config, source, target)
    if source_path is not None and target_path is not None:
        source_sets, target_sets = load_pathsets(run_config, source_path, target_path)
    else:
        source_sets, target_sets = build_pathsets(run_config, *generate(run_config.synth))
    rows = run_sweep(run_config, source_sets, target_sets, grid, output_dir=_output_dir(out_dir, "sweep"))
    for row in rows:
        click.echo(f"cell {row['cell']} {row['group']}={row['value']}: Acc {row['accuracy']:.2f}")


@cli.command(name="inspect-pseudo")
@click.option(
    "--checkpoint", "checkpoint_path", type=click.Path(dir_okay=False, path_type=Path), required=True
)
@click.option("--source", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--target", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_out_option
def inspect_pseudo(checkpoint_path: Path, source: Path, target: Path, out_dir: Path | None) -> None:
    """用整个源域的原型给目标域打伪标签，输出标签、距离和伪标签准确率"""
    checkpoint = load_checkpoint(checkpoint_path)
    run_config = checkpoint.config
    state = TrainState.from_checkpoint(checkpoint, run_config)
    source_sets, target_sets = load_pathsets(run_config, source, target)
    batch = EvaluationService(state.params).label_targets(
        source_sets, target_sets, run_config.train, out_dir=_output_dir(out_dir, "inspect")
    )
    accuracy = batch.accuracy([p.label for p in target_sets])
    summary = f"{len(target_sets)} target samples, k-means iterations {batch.iterations}"
    if accuracy is not None:
        summary += f", pseudo-label accuracy {100.0 * accuracy:.2f}"
    click.echo(summary)


@cli.command()
@_config_option
@_set_option
@click.option("--seeds", default="0,1,2,3,4", show_default=True, help="逗号分隔的随机种子")
@click.option("--stages", default=None, help="逗号分隔的阶段名，默认全部")
@click.option("--source", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--target", type=click.Path(dir_okay=False, path_type=Path), default=None)
@_out_option
def ablate(
    config_path: Path | None,
    overrides: tuple[str, ...],
    seeds: str,
    stages: str | None,
    source: Path | None,
    target: Path | None,
    out_dir: Path | None,
) -> None:
    """逐项叠加损失的消融实验，输出每个阶段的平均目标域准确率"""
    run_config = load_run_config(config_path, overrides)
    source_path, target_path = _dataset_paths(run_config, source, target)
    rows = run_ablation(
        run_config,
        seeds=_parse_ints(seeds),
        stages=[s.strip() for s in stages.split(",") if s.strip()] if stages else None,
        source_path=source_path,
        target_path=target_path,
        output_dir=_output_dir(out_dir, "ablation"),
    )
    for row in rows:
        summary = row.to_dict()
        click.echo(
            f"{row.stage:<12} Acc {summary['accuracy_mean']:.2f} ± {summary['accuracy_std']:.2f}"
        )


# ===== 入口 =====


def main(argv: Sequence[str] | None = None) -> int:
    """运行命令并把异常转换成退出码"""
    try:
        returned = cli.main(args=list(argv) if argv is not None else None, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted", err=True)
        code = EXIT_USAGE
    except click.ClickException as e:
        e.show()
        code = EXIT_USAGE
    except _USAGE_ERRORS as e:
        click.echo(f"Error: {e}", err=True)
        code = EXIT_USAGE
    except (*_RUNTIME_ERRORS, GradcheckFailed) as e:
        click.echo(f"Error: {e}", err=True)
        code = EXIT_RUNTIME
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        click.echo(f"Error: {e}", err=True)
        code = EXIT_RUNTIME
    else:
        # --help / --version 在非独立模式下返回退出码
        code = returned if isinstance(returned, int) else EXIT_OK
    if argv is None:
        sys.exit(code)
    return code
