"""测试检查点读写"""

import numpy as np
import orjson
import pytest

from rumor_adapt.models.config import RunConfig
from rumor_adapt.nn.optim import Adam
from rumor_adapt.nn.params import ModelParams
from rumor_adapt.utils.checkpoint import (
    CHECKPOINT_FORMAT,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)


@pytest.fixture
def run_config():
    return RunConfig.model_validate({"network": {"dim": 8, "heads": 2, "ffn_dim": 16}})


class TestCheckpoint:
    """测试保存与读取"""

    def test_values_restore_bit_for_bit(self, run_config, rng, tmp_path):
        """测试参数与优化器状态读回后逐位相同"""
        params = ModelParams.initialize(run_config.network, seed=2)
        optimizer = Adam(params.named_tensors())
        for tensor in params.named_tensors().values():
            tensor.grad = rng.normal(size=tensor.shape)
        optimizer.step()

        path = save_checkpoint(
            tmp_path / "ckpt" / "c.json",
            config=run_config,
            tensors=params.arrays(),
            step=3,
            epoch=1,
            optimizer=optimizer.state_dict(),
            history=[{"step": 3, "total": 0.1}],
            trainer={"best_accuracy": None},
        )
        checkpoint = load_checkpoint(path)
        assert checkpoint.config == run_config
        assert (checkpoint.step, checkpoint.epoch) == (3, 1)
        assert checkpoint.history == [{"step": 3, "total": 0.1}]
        assert checkpoint.trainer == {"best_accuracy": None}
        for name, value in params.arrays().items():
            np.testing.assert_array_equal(checkpoint.tensors[name], value)
        for name, value in optimizer.m.items():
            np.testing.assert_array_equal(checkpoint.optimizer["m"][name], value)
        assert checkpoint.optimizer["t"] == 1

    def test_no_staging_file_left(self, run_config, tmp_path):
        """测试写完后不留临时文件"""
        save_checkpoint(tmp_path / "c.json", run_config, {"w": np.ones(2)})
        assert [p.name for p in tmp_path.iterdir()] == ["c.json"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "nope.json")

    @pytest.mark.parametrize(
        "payload,message",
        [
            (b"not json", "not a JSON checkpoint"),
            (orjson.dumps({"format": "other"}), "header"),
            (orjson.dumps({"format": CHECKPOINT_FORMAT, "version": 99}), "version"),
            (orjson.dumps({"format": CHECKPOINT_FORMAT, "version": 1, "tensors": {}}), "no tensors"),
            (
                orjson.dumps(
                    {"format": CHECKPOINT_FORMAT, "version": 1, "tensors": {"w": {"shape": [3], "data": [1.0]}}}
                ),
                "declares shape",
            ),
        ],
    )
    def test_malformed(self, tmp_path, payload, message):
        """测试格式错误的检查点"""
        path = tmp_path / "bad.json"
        path.write_bytes(payload)
        with pytest.raises(CheckpointError, match=message):
            load_checkpoint(path)
