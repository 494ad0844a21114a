"""测试日志配置"""

from loguru import logger

from rumor_adapt.utils.logger import setup_logging


class TestSetupLogging:
    """测试 setup_logging"""

    def teardown_method(self):
        logger.remove()

    def test_console_only(self, tmp_path):
        """测试只输出到控制台时不创建日志目录"""
        setup_logging(level="WARNING", log_dir=tmp_path / "logs", to_file=False)
        assert not (tmp_path / "logs").exists()

    def test_file_logging(self, tmp_path):
        """测试写日志文件，错误日志单独一个文件"""
        log_dir = tmp_path / "logs"
        setup_logging(level="INFO", log_dir=log_dir, to_file=True)
        logger.error("something broke")
        logger.complete()

        names = sorted(p.name for p in log_dir.iterdir())
        assert any(n.startswith("rumor_adapt_") for n in names)
        error_logs = [p for p in log_dir.iterdir() if p.name.startswith("error_")]
        assert len(error_logs) == 1
        assert "something broke" in error_logs[0].read_text(encoding="utf-8")
