"""应用配置管理

进程级配置（日志、输出目录、缓存）。实验超参数不在这里，
见 rumor_adapt.models.config。
"""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """应用配置

    所有配置项都可以通过环境变量或 .env 文件设置。
    环境变量名称为配置项名称的大写形式，例如：
    - log_level -> LOG_LEVEL
    - pathset_cache_size -> PATHSET_CACHE_SIZE
    """

    # ==========================================
    # 输出配置
    # ==========================================
    default_output_dir: Path = Field(
        default=Path("runs"),
        description="命令行未指定 --out 时使用的输出目录",
    )

    # ==========================================
    # 性能配置
    # ==========================================
    pathset_cache_size: int = Field(
        default=4096,
        description="路径集缓存大小（条目数）",
    )

    # ==========================================
    # 日志配置
    # ==========================================
    log_level: str = Field(
        default="INFO",
        description="日志级别 (DEBUG, INFO, WARNING, ERROR, CRITICAL)",
    )
    log_to_file: bool = Field(
        default=False,
        description="是否同时写入日志文件",
    )
    log_file_path: Path = Field(
        default=Path.home() / ".rumor_adapt" / "logs",
        description="日志文件路径",
    )
    log_file_size: int = Field(
        default=100,
        description="日志文件大小限制（MB）",
    )
    log_retention_days: int = Field(
        default=10,
        description="日志文件保留天数",
    )

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
    )


# 全局配置实例
settings = Settings()
