"""测试消融实验"""

import pytest

from rumor_adapt.models.config import ConfigError, TrainConfig
from rumor_adapt.services.experiments import (
    STAGE_NAMES,
    AblationRow,
    ablation_stages,
    run_ablation,
)
from rumor_adapt.utils.metrics import read_jsonl


class TestAblationStages:
    """测试阶段配置"""

    def test_stages_add_one_term_each(self):
        """测试每个阶段多打开一个分量，γ 按比例重新归一化"""
        stages = ablation_stages(TrainConfig(gamma=(0.8, 0.1, 0.1)))
        assert [s.name for s in stages] == list(STAGE_NAMES)

        ce = stages[0].config
        assert ce.gamma == (1.0, 0.0, 0.0)
        assert not any([ce.use_scl_source, ce.use_scl_target, ce.use_ccl_ts, ce.use_ccl_st, ce.use_prototype])

        scl = stages[1].config
        assert scl.use_scl_source and not scl.use_scl_target
        assert scl.gamma == pytest.approx((0.8 / 0.9, 0.1 / 0.9, 0.0))

        proto = stages[5].config
        assert proto.use_prototype
        assert proto.gamma[2] == 0.0

        full = stages[6].config
        assert full.gamma == pytest.approx((0.8, 0.1, 0.1))
        assert full.use_ccl_st and full.use_prototype

    def test_needs_ce_weight(self):
        """测试 γ1 为 0 时无法构造 CE 阶段"""
        with pytest.raises(ConfigError, match="gamma"):
            ablation_stages(TrainConfig(gamma=(0.0, 0.5, 0.5)))

    def test_row_summary(self):
        """测试多个种子的均值与标准差"""
        row = AblationRow(stage="ce", accuracies=[60.0, 80.0], f1=[[50.0, 70.0], [70.0, 90.0]])
        data = row.to_dict()
        assert data["accuracy_mean"] == 70.0
        assert data["accuracy_std"] == 10.0
        assert data["f1_mean"] == [60.0, 80.0]
        assert data["seeds"] == 2


class TestRunAblation:
    """测试消融运行"""

    def test_selected_stages(self, tiny_run_config, tmp_path):
        """测试只跑选中的阶段，每个阶段一行"""
        train = tiny_run_config.train.model_copy(update={"epochs": 1})
        config = tiny_run_config.model_copy(update={"train": train})
        rows = run_ablation(config, seeds=[0], stages=["ce", "+ca"], output_dir=tmp_path)
        assert [r.stage for r in rows] == ["ce", "+ca"]
        assert all(len(r.accuracies) == 1 for r in rows)
        assert [r["stage"] for r in read_jsonl(tmp_path / "ablation.jsonl")] == ["ce", "+ca"]

    def test_unknown_stage(self, tiny_run_config):
        with pytest.raises(ConfigError, match="unknown ablation stages"):
            run_ablation(tiny_run_config, seeds=[0], stages=["+magic"])
