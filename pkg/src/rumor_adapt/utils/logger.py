"""日志配置"""

import sys
from pathlib import Path

from loguru import logger

from rumor_adapt.config import settings

_CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
_FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} | {message}"


def setup_logging(
    level: str | None = None,
    log_dir: Path | None = None,
    to_file: bool | None = None,
) -> None:
    """配置日志系统

    Args:
        level: 控制台日志级别，默认取 settings.log_level
        log_dir: 日志文件目录，默认取 settings.log_file_path
        to_file: 是否写日志文件，默认取 settings.log_to_file
    """
    # 移除默认处理器
    logger.remove()

    # 控制台输出
    logger.add(
        sys.stderr,
        level=level or settings.log_level,
        format=_CONSOLE_FORMAT,
    )

    write_files = settings.log_to_file if to_file is None else to_file
    if not write_files:
        logger.debug("Logging system initialized (console only)")
        return

    directory = log_dir or settings.log_file_path
    directory.mkdir(parents=True, exist_ok=True)

    # 文件输出 - 所有日志
    logger.add(
        directory / "rumor_adapt_{time}.log",
        rotation=f"{settings.log_file_size} MB",
        retention=f"{settings.log_retention_days} days",
        level="DEBUG",
        format=_FILE_FORMAT,
        encoding="utf-8",
    )

    # 错误日志单独文件
    logger.add(
        directory / "error_{time}.log",
        rotation=f"{settings.log_file_size} MB",
        retention=f"{settings.log_retention_days} days",
        level="ERROR",
        format=_FILE_FORMAT,
        encoding="utf-8",
    )

    logger.info("Logging system initialized")
