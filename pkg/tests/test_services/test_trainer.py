"""测试联合训练"""

import numpy as np
import pytest

from rumor_adapt.autodiff import ContractError, NumericError
from rumor_adapt.models.config import ConfigError
from rumor_adapt.services import trainer as trainer_module
from rumor_adapt.services.evaluation import EvalReport
from rumor_adapt.services.trainer import (
    CHECKPOINT_DIR,
    FINAL_CHECKPOINT,
    TrainState,
    Trainer,
)
from rumor_adapt.utils.checkpoint import load_checkpoint
from rumor_adapt.utils.metrics import read_jsonl


def _with_train(run_config, **updates):
    train = run_config.train.model_copy(update=updates)
    return run_config.model_copy(update={"train": train})


class TestTrain:
    """测试训练循环"""

    def test_runs_and_writes_outputs(self, tiny_run_config, tiny_data, tmp_path):
        """测试训练写出检查点与逐步指标"""
        state = Trainer(tiny_run_config, output_dir=tmp_path).train(*tiny_data)
        assert state.epoch == 2
        assert state.step == 4
        assert (tmp_path / FINAL_CHECKPOINT).exists()
        assert (tmp_path / CHECKPOINT_DIR / "epoch-0001.json").exists()
        assert (tmp_path / CHECKPOINT_DIR / "epoch-0002.json").exists()

        records = list(read_jsonl(tmp_path / "metrics.jsonl"))
        assert [r["step"] for r in records] == [1, 2, 3, 4]
        for record in records:
            assert {"ce", "cl", "ca", "total", "grad_norm"} <= set(record)
            assert np.isfinite(record["total"])

    def test_same_seed_same_run(self, tiny_run_config, tiny_data, tmp_path):
        """测试相同种子的两次运行得到相同的指标文件和参数"""
        first = Trainer(tiny_run_config, output_dir=tmp_path / "a").train(*tiny_data)
        second = Trainer(tiny_run_config, output_dir=tmp_path / "b").train(*tiny_data)
        assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()
        for name, value in first.params.arrays().items():
            np.testing.assert_array_equal(value, second.params.arrays()[name])

    def test_resume_matches_uninterrupted(self, tiny_run_config, tiny_data, tmp_path):
        """测试从 epoch 边界的检查点恢复后与不中断的运行逐位一致"""
        full = Trainer(tiny_run_config, output_dir=tmp_path).train(*tiny_data)
        expected_metrics = (tmp_path / "metrics.jsonl").read_bytes()

        checkpoint = load_checkpoint(tmp_path / CHECKPOINT_DIR / "epoch-0001.json")
        state = TrainState.from_checkpoint(checkpoint, tiny_run_config)
        assert (state.epoch, state.step) == (1, 2)
        resumed = Trainer(tiny_run_config, output_dir=tmp_path, resume=True).train(*tiny_data, state=state)

        assert (tmp_path / "metrics.jsonl").read_bytes() == expected_metrics
        for name, value in full.params.arrays().items():
            np.testing.assert_array_equal(value, resumed.params.arrays()[name])

    def test_resume_rejects_other_network(self, tiny_run_config, tiny_data, tmp_path):
        """测试网络结构不同的检查点不能恢复"""
        Trainer(_with_train(tiny_run_config, epochs=1), output_dir=tmp_path).train(*tiny_data)
        checkpoint = load_checkpoint(tmp_path / FINAL_CHECKPOINT)
        network = tiny_run_config.network.model_copy(update={"ffn_dim": 32})
        with pytest.raises(ConfigError, match="network"):
            TrainState.from_checkpoint(checkpoint, tiny_run_config.model_copy(update={"network": network}))

    def test_epoch_pseudo_refresh(self, tiny_run_config, tiny_data):
        """测试按 epoch 刷新伪标签时每个 epoch 只做一次 k-means"""
        trainer = Trainer(_with_train(tiny_run_config, pseudo_refresh="epoch"))
        trainer.train(*tiny_data)
        assert trainer.counters.kmeans_calls == 2
        assert trainer.counters.pairing_calls == 4

    def test_ce_only_without_target(self, tiny_run_config, tiny_data):
        """测试只有 CE 时不需要目标域"""
        trainer = Trainer(_with_train(tiny_run_config, gamma=(1.0, 0.0, 0.0)))
        state = trainer.train(tiny_data[0], [])
        assert state.step == 4
        assert trainer.counters.target_encodes == 0

    def test_empty_source(self, tiny_run_config, tiny_data):
        """测试源域为空"""
        with pytest.raises(ContractError, match="source"):
            Trainer(tiny_run_config).train([], tiny_data[1])

    def test_target_required(self, tiny_run_config, tiny_data):
        """测试需要目标域时目标域为空"""
        with pytest.raises(ContractError, match="target"):
            Trainer(tiny_run_config).train(tiny_data[0], [])

    def test_non_finite_loss(self, tiny_run_config, tiny_data, monkeypatch):
        """测试损失出现非有限值时报 NumericError"""
        original = trainer_module.compute_objective

        def poisoned(*args, **kwargs):
            result = original(*args, **kwargs)
            result.components["ce"] = float("nan")
            return result

        monkeypatch.setattr(trainer_module, "compute_objective", poisoned)
        with pytest.raises(NumericError, match="step 0"):
            Trainer(tiny_run_config).train(*tiny_data)

    def test_early_stopping(self, tiny_run_config, tiny_data, monkeypatch):
        """测试目标域准确率连续 patience 个 epoch 没有提升时早停"""
        report = EvalReport(accuracy=50.0, f1=[50.0, 50.0], confusion=[[1, 1], [1, 1]], count=4)
        monkeypatch.setattr(trainer_module, "evaluate", lambda *_: report)
        config = _with_train(tiny_run_config, epochs=5, eval_every=1, patience=1)
        state = Trainer(config, evaluation_set=tiny_data[1]).train(*tiny_data)
        assert state.stopped_early
        assert state.epoch == 2
        assert state.best_accuracy == 50.0

    def test_eval_records(self, tiny_run_config, tiny_data, tmp_path):
        """测试按 epoch 评估并写入指标文件"""
        config = _with_train(tiny_run_config, eval_every=1)
        Trainer(config, output_dir=tmp_path, evaluation_set=tiny_data[1]).train(*tiny_data)
        evals = [r for r in read_jsonl(tmp_path / "metrics.jsonl") if r["event"] == "eval"]
        assert [r["epoch"] for r in evals] == [1, 2]
        assert all(0.0 <= r["accuracy"] <= 100.0 for r in evals)
