"""梯度检查

在微型模型（d=12, h=2, d_ff=24）和 4+4 个随机样本上，比较联合目标及各单独损失的
自动微分梯度与五点中心差分。伪标签和交叉注意力配对先算一次再固定。

模型级的损失是 O(1) 的量，差分步长取 1e-4（更小的步长会被舍入误差主导），
两侧梯度都小于 1e-5 的元素不计入相对误差。
"""

from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from rumor_adapt.autodiff import ContractError, Tensor
from rumor_adapt.autodiff.gradcheck import GradCheckReport, check_gradients
from rumor_adapt.data.dataset import PathSet
from rumor_adapt.data.tree import Domain
from rumor_adapt.models.config import ModelConfig, RunConfig, TrainConfig
from rumor_adapt.nn.params import ModelParams
from rumor_adapt.services.objective import FrozenAssignments, compute_objective

MICRO_DIM = 12
MICRO_HEADS = 2
MICRO_FFN = 24
MICRO_SAMPLES = 4
FULL_THRESHOLD = 1e-3
ISOLATED_THRESHOLD = 1e-4
MODEL_STEP = 1e-4
MODEL_FLOOR = 1e-5
KINK_MARGIN = 1e-3
MAX_ATTEMPTS = 50

# 单独检查的损失 -> 只保留该损失的 γ
_ISOLATED = {"ce": (1.0, 0.0, 0.0), "cl": (0.0, 1.0, 0.0), "ca": (0.0, 0.0, 1.0)}
# 取一次伪标签和配对时打开所有子系统
_PROBE_GAMMA = (0.4, 0.3, 0.3)


@dataclass
class GradcheckResult:
    """各目标的梯度检查报告"""

    reports: dict[str, GradCheckReport] = field(default_factory=dict)
    attempts: int = 1

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports.values())

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "attempts": self.attempts,
            "reports": {name: report.to_dict() for name, report in self.reports.items()},
        }


def micro_batch(
    domain: Domain,
    num_classes: int,
    seed: int | list[int],
    count: int = MICRO_SAMPLES,
    dim: int = MICRO_DIM,
) -> list[PathSet]:
    """随机路径集：每条样本 1~3 条路径，标签按类别轮流"""
    stream = [*np.atleast_1d(seed).tolist(), 0 if domain is Domain.SOURCE else 1]
    rng = np.random.default_rng(stream)
    return [
        PathSet(
            rumor_id=f"{domain.value}-{i}",
            paths=Tensor(rng.normal(size=(int(rng.integers(1, 4)), dim))),
            domain=domain,
            label=i % num_classes,
        )
        for i in range(count)
    ]


def kink_margin(loss: Tensor) -> float:
    """计算图中离不可导点最近的距离

    遍历 loss 的计算图：ReLU 取输入绝对值的最小值，逐列最大池化取最大值与次大值之差的最小值。
    """
    margin = np.inf
    stack, seen = [loss], set()
    while stack:
        tensor = stack.pop()
        if id(tensor) in seen or tensor.node is None:
            continue
        seen.add(id(tensor))
        node = tensor.node
        if node.op == "relu":
            margin = min(margin, float(np.abs(node.inputs[0].data).min(initial=np.inf)))
        elif node.op == "max_pool_rows" and node.inputs[0].shape[0] > 1:
            top_two = np.sort(node.inputs[0].data, axis=0)[-2:]
            margin = min(margin, float((top_two[1] - top_two[0]).min()))
        stack.extend(node.inputs)
    return margin


def run_gradcheck(
    run_config: RunConfig | None = None,
    threshold: float = FULL_THRESHOLD,
    isolated_threshold: float = ISOLATED_THRESHOLD,
    stencil: str = "five-point",
) -> GradcheckResult:
    """对联合目标（阈值 1e-3）和 CE、L_CL、L_CA 单独（阈值 1e-4）做梯度检查

    网络结构取微型尺寸，其余开关（残差、是否共享交叉注意力权重、损失权重与开关）取自配置。
    随机样本按 (seed, attempt) 重抽，直到所有 ReLU 输入和最大池化的前两名间隔都离不可导点
    至少 KINK_MARGIN，差分不会跨过折点。

    Raises:
        ContractError: MAX_ATTEMPTS 次都没有抽到离折点足够远的样本
    """
    run_config = run_config or RunConfig()
    network = ModelConfig(
        dim=MICRO_DIM,
        heads=MICRO_HEADS,
        ffn_dim=MICRO_FFN,
        num_classes=run_config.network.num_classes,
        residual=run_config.network.residual,
        share_cam_weights=run_config.network.share_cam_weights,
        max_paths=run_config.network.max_paths,
    )
    train = run_config.train
    seed = train.seed
    params = ModelParams.initialize(network, seed=seed)
    named = params.named_tensors()
    probe = TrainConfig.model_validate({**train.model_dump(), "gamma": _PROBE_GAMMA})

    for attempt in range(MAX_ATTEMPTS):
        source = micro_batch(Domain.SOURCE, network.num_classes, [seed, attempt])
        target = micro_batch(Domain.TARGET, network.num_classes, [seed, attempt])
        first = compute_objective(params, source, target, probe, pairing_seed=[seed, 0])
        margin = kink_margin(first.total)
        if margin >= KINK_MARGIN:
            break
        logger.debug(f"gradcheck attempt {attempt}: kink margin {margin:.2e}, redrawing")
    else:
        raise ContractError(f"no micro batch clear of kinks after {MAX_ATTEMPTS} attempts")

    frozen: FrozenAssignments = first.frozen()
    logger.debug(
        f"gradcheck frozen pseudo labels {frozen.pseudo_labels.tolist()}, pairs {frozen.pairs}"
    )

    def objective(config: TrainConfig) -> Tensor:
        return compute_objective(
            params, source, target, config, pairing_seed=[seed, 0], frozen=frozen
        ).total

    def check(config: TrainConfig, limit: float) -> GradCheckReport:
        return check_gradients(
            lambda: objective(config),
            named,
            threshold=limit,
            step=MODEL_STEP,
            floor=MODEL_FLOOR,
            stencil=stencil,
        )

    result = GradcheckResult(attempts=attempt + 1)
    result.reports["total"] = check(train, threshold)
    for name, gamma in _ISOLATED.items():
        config = TrainConfig.model_validate({**train.model_dump(), "gamma": gamma})
        result.reports[name] = check(config, isolated_threshold)

    for name, report in result.reports.items():
        status = "passed" if report.passed else "FAILED"
        logger.info(f"gradcheck {name}: {status} (worst relative error {report.worst:.3e})")
    return result
