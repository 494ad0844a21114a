"""
共享测试fixtures和utilities
"""

import numpy as np
import pytest
from loguru import logger

from rumor_adapt.autodiff import Tensor
from rumor_adapt.data.dataset import PathSet
from rumor_adapt.data.synth import generate
from rumor_adapt.data.tree import Domain, PostNode, PropagationTree
from rumor_adapt.models.config import ModelConfig, RunConfig, TrainConfig
from rumor_adapt.nn.params import ModelParams
from rumor_adapt.services.trainer import build_pathsets


def make_tree(
    tree_id: str,
    parents: list[int | None],
    label: int | None = 0,
    domain: Domain = Domain.SOURCE,
    texts: list[str] | None = None,
) -> PropagationTree:
    """按父节点列表构造传播树，第 i 个帖子的默认文本为 "w{i}" """
    texts = texts or [f"w{i}" for i in range(len(parents))]
    nodes = [
        PostNode(tokens=tuple(text.split()), parent=parent, rank=i)
        for i, (parent, text) in enumerate(zip(parents, texts, strict=True))
    ]
    return PropagationTree(id=tree_id, domain=domain, nodes=nodes, label=label)


def make_pathsets(
    rng: np.random.Generator,
    labels: list[int | None],
    dim: int,
    domain: Domain = Domain.SOURCE,
    max_paths: int = 3,
) -> list[PathSet]:
    """随机路径集，每条样本 1~max_paths 条路径"""
    return [
        PathSet(
            rumor_id=f"{domain.value}-{i}",
            paths=Tensor(rng.normal(size=(int(rng.integers(1, max_paths + 1)), dim))),
            domain=domain,
            label=label,
        )
        for i, label in enumerate(labels)
    ]


@pytest.fixture
def rng():
    """固定种子的随机数生成器"""
    return np.random.default_rng(1234)


@pytest.fixture
def micro_config():
    """微型网络配置（d=12, h=2）"""
    return ModelConfig(dim=12, heads=2, ffn_dim=24, num_classes=2)


@pytest.fixture
def micro_params(micro_config):
    return ModelParams.initialize(micro_config, seed=0)


@pytest.fixture
def source_sets(rng):
    return make_pathsets(rng, [0, 1, 0, 1], dim=12, domain=Domain.SOURCE)


@pytest.fixture
def target_sets(rng):
    return make_pathsets(rng, [1, 0, 1, 0], dim=12, domain=Domain.TARGET)


@pytest.fixture
def tiny_run_config():
    """几秒内能训练完的完整运行配置"""
    return RunConfig.model_validate(
        {
            "network": {"dim": 8, "heads": 2, "ffn_dim": 16, "max_paths": 8},
            "train": {
                "epochs": 2,
                "source_batch_size": 8,
                "target_batch_size": 8,
                "learning_rate": 0.01,
                "checkpoint_every": 1,
                "seed": 3,
            },
            "synth": {
                "samples_per_domain": 16,
                "max_nodes": 6,
                "max_depth": 2,
                "tokens_per_post": 4,
            },
        }
    )


@pytest.fixture
def train_config():
    return TrainConfig(epochs=1, source_batch_size=4, target_batch_size=4)


@pytest.fixture
def captured_logs():
    """收集 loguru 日志消息"""
    messages: list[str] = []
    handler_id = logger.add(lambda m: messages.append(m.record["message"]), level="DEBUG")
    yield messages
    logger.remove(handler_id)


@pytest.fixture
def tiny_data(tiny_run_config):
    """tiny_run_config 的合成数据对应的 (源域, 目标域) 路径集"""
    return build_pathsets(tiny_run_config, *generate(tiny_run_config.synth))
