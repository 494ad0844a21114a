"""命令行端到端测试

每个测试通过 main([...]) 运行命令并检查退出码与输出文件。
"""

import orjson
import pytest
from loguru import logger

from rumor_adapt import __version__, cli
from rumor_adapt.autodiff.gradcheck import GradCheckReport
from rumor_adapt.services.diagnostics import GradcheckResult
from rumor_adapt.utils.metrics import read_jsonl

pytestmark = pytest.mark.integration

TINY = [
    "--set", "network.dim=8",
    "--set", "network.heads=2",
    "--set", "network.ffn_dim=16",
    "--set", "network.max_paths=8",
    "--set", "train.epochs=2",
    "--set", "train.source_batch_size=8",
    "--set", "train.target_batch_size=8",
    "--set", "train.learning_rate=0.01",
    "--set", "train.checkpoint_every=1",
    "--set", "synth.samples_per_domain=12",
    "--set", "synth.max_nodes=6",
    "--set", "synth.max_depth=2",
]


@pytest.fixture(autouse=True)
def _reset_logging():
    """命令会重新配置 loguru，测试结束后移除它添加的处理器"""
    yield
    logger.remove()


@pytest.fixture
def data_dir(tmp_path):
    """用 synth 命令生成的小数据集"""
    directory = tmp_path / "data"
    assert cli.main(["synth", *TINY, "--out", str(directory)]) == cli.EXIT_OK
    return directory


class TestBasics:
    """测试基本命令"""

    def test_version(self, capsys):
        assert cli.main(["--version"]) == cli.EXIT_OK
        assert __version__ in capsys.readouterr().out

    def test_help(self, capsys):
        assert cli.main(["--help"]) == cli.EXIT_OK
        out = capsys.readouterr().out
        for command in ("synth", "train", "eval", "gradcheck", "sweep", "inspect-pseudo", "ablate"):
            assert command in out

    def test_synth(self, data_dir):
        """测试生成的数据文件与 manifest"""
        manifest = orjson.loads((data_dir / "manifest.json").read_bytes())
        assert manifest["files"]["source"]["samples"] == 12
        assert (data_dir / "source.jsonl").exists()
        assert (data_dir / "target.jsonl").exists()

    def test_unknown_command(self):
        assert cli.main(["nope"]) == cli.EXIT_USAGE


class TestTrainAndEval:
    """测试训练、评估与伪标签查看"""

    def test_train_eval_inspect(self, data_dir, tmp_path, capsys):
        """测试训练后用检查点评估并查看伪标签"""
        run_dir = tmp_path / "run"
        code = cli.main([
            "train", *TINY,
            "--source", str(data_dir / "source.jsonl"),
            "--target", str(data_dir / "target.jsonl"),
            "--out", str(run_dir),
        ])
        assert code == cli.EXIT_OK
        for name in ("config.txt", "checkpoint.json", "metrics.jsonl", "predictions.jsonl", "evaluation.json"):
            assert (run_dir / name).exists(), name
        assert "N-F1" in capsys.readouterr().out

        evaluation = orjson.loads((run_dir / "evaluation.json").read_bytes())
        assert set(evaluation) >= {"accuracy", "N-F1", "R-F1", "count"}
        predictions = list(read_jsonl(run_dir / "predictions.jsonl"))
        assert len(predictions) == 12

        eval_dir = tmp_path / "eval"
        code = cli.main([
            "eval",
            "--checkpoint", str(run_dir / "checkpoint.json"),
            "--target", str(data_dir / "target.jsonl"),
            "--out", str(eval_dir),
        ])
        assert code == cli.EXIT_OK
        assert orjson.loads((eval_dir / "evaluation.json").read_bytes()) == evaluation

        inspect_dir = tmp_path / "inspect"
        code = cli.main([
            "inspect-pseudo",
            "--checkpoint", str(run_dir / "checkpoint.json"),
            "--source", str(data_dir / "source.jsonl"),
            "--target", str(data_dir / "target.jsonl"),
            "--out", str(inspect_dir),
        ])
        assert code == cli.EXIT_OK
        rows = list(read_jsonl(inspect_dir / "pseudo_labels.jsonl"))
        assert len(rows) == 12
        assert {"id", "pseudo_label", "distance", "label"} == set(rows[0])
        assert "pseudo-label accuracy" in capsys.readouterr().out

    def test_train_on_synthetic_data(self, tmp_path):
        """测试不给数据集时使用合成数据"""
        run_dir = tmp_path / "run"
        assert cli.main(["train", *TINY, "--out", str(run_dir)]) == cli.EXIT_OK
        assert (run_dir / "evaluation.json").exists()

    def test_resume(self, tmp_path):
        """测试从检查点恢复后指标文件与不中断的运行相同"""
        run_dir = tmp_path / "run"
        assert cli.main(["train", *TINY, "--out", str(run_dir)]) == cli.EXIT_OK
        expected = (run_dir / "metrics.jsonl").read_bytes()
        code = cli.main([
            "train", *TINY, "--out", str(run_dir),
            "--resume", str(run_dir / "checkpoints" / "epoch-0001.json"),
        ])
        assert code == cli.EXIT_OK
        assert (run_dir / "metrics.jsonl").read_bytes() == expected

    def test_unlabeled_target(self, data_dir, tmp_path, capsys):
        """测试目标域没有保留标签时只写预测"""
        unlabeled = tmp_path / "unlabeled.jsonl"
        lines = []
        for record in read_jsonl(data_dir / "target.jsonl"):
            record["label"] = None
            lines.append(orjson.dumps(record))
        unlabeled.write_bytes(b"\n".join(lines) + b"\n")

        run_dir = tmp_path / "run"
        code = cli.main([
            "train", *TINY,
            "--source", str(data_dir / "source.jsonl"),
            "--target", str(unlabeled),
            "--out", str(run_dir),
        ])
        assert code == cli.EXIT_OK
        assert (run_dir / "predictions.jsonl").exists()
        assert not (run_dir / "evaluation.json").exists()
        assert "no held-out labels" in capsys.readouterr().out


class TestExitCodes:
    """测试错误退出码"""

    def test_unknown_config_key(self, tmp_path, capsys):
        code = cli.main(["train", "--set", "train.nope=1", "--out", str(tmp_path)])
        assert code == cli.EXIT_USAGE
        assert "train.nope" in capsys.readouterr().err

    def test_missing_dataset(self, tmp_path):
        code = cli.main(["train", *TINY, "--source", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path)])
        assert code == cli.EXIT_USAGE

    def test_target_without_source(self, data_dir, tmp_path):
        code = cli.main(["train", *TINY, "--target", str(data_dir / "target.jsonl"), "--out", str(tmp_path)])
        assert code == cli.EXIT_USAGE

    def test_malformed_dataset(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{oops\n", encoding="utf-8")
        code = cli.main(["train", *TINY, "--source", str(bad), "--out", str(tmp_path / "run")])
        assert code == cli.EXIT_USAGE
        assert "bad.jsonl:1" in capsys.readouterr().err

    def test_empty_target_is_runtime_error(self, data_dir, tmp_path):
        """测试需要目标域但目标域为空时退出码为 2"""
        empty = tmp_path / "empty.jsonl"
        empty.write_bytes(b"")
        code = cli.main([
            "train", *TINY,
            "--source", str(data_dir / "source.jsonl"),
            "--target", str(empty),
            "--out", str(tmp_path / "run"),
        ])
        assert code == cli.EXIT_RUNTIME

    def test_bad_seeds(self, tmp_path):
        assert cli.main(["ablate", "--seeds", "a,b", "--out", str(tmp_path)]) == cli.EXIT_USAGE

    def test_bad_grid(self, tmp_path):
        assert cli.main(["sweep", "--grid", "delta=1/0", "--out", str(tmp_path)]) == cli.EXIT_USAGE


class TestGradcheckCommand:
    """测试 gradcheck 命令（梯度检查本身见服务层测试）"""

    @staticmethod
    def _result(worst):
        report = GradCheckReport(errors={"encoder.W1": worst}, threshold=1e-3)
        return GradcheckResult(reports={"total": report})

    def test_pass(self, tmp_path, mocker, capsys):
        mocker.patch.object(cli, "run_gradcheck", return_value=self._result(1e-7))
        assert cli.main(["gradcheck", "--out", str(tmp_path)]) == cli.EXIT_OK
        assert "All gradient checks passed" in capsys.readouterr().out
        assert list(read_jsonl(tmp_path / "gradcheck.jsonl"))[0]["passed"] is True

    def test_fail(self, mocker, capsys):
        mocker.patch.object(cli, "run_gradcheck", return_value=self._result(0.5))
        assert cli.main(["gradcheck"]) == cli.EXIT_RUNTIME
        captured = capsys.readouterr()
        assert "FAIL" in captured.out
        assert "gradient check failed" in captured.err


class TestExperimentsCommands:
    """测试扫描与消融命令"""

    def test_sweep(self, tmp_path, capsys):
        code = cli.main([
            "sweep", *TINY, "--set", "train.epochs=1",
            "--grid", "gamma=1/0/0,0.8/0.1/0.1", "--out", str(tmp_path),
        ])
        assert code == cli.EXIT_OK
        assert len(list(read_jsonl(tmp_path / "sweep.jsonl"))) == 2
        assert "cell 1 gamma" in capsys.readouterr().out

    def test_ablate(self, tmp_path, capsys):
        code = cli.main([
            "ablate", *TINY, "--set", "train.epochs=1",
            "--seeds", "0", "--stages", "ce,+ca", "--out", str(tmp_path),
        ])
        assert code == cli.EXIT_OK
        assert [r["stage"] for r in read_jsonl(tmp_path / "ablation.jsonl")] == ["ce", "+ca"]
