"""扁平键值配置文件

格式：
    # 注释
    train.epochs = 50
    train.alpha = 0.9, 0.1
    data.embeddings_path = none

值保持为字符串（逗号分隔的值拆成列表、none/null 变成 None），
类型转换交给 pydantic。
"""

from collections.abc import Iterable
from pathlib import Path
from typing import Any

from loguru import logger

from rumor_adapt.models.config import ConfigError, RunConfig, build_run_config

_NULLS = {"none", "null", "~"}


def _parse_value(raw: str) -> Any:
    value = raw.strip()
    if value.lower() in _NULLS:
        return None
    if "," in value:
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


def _assign(tree: dict, dotted_key: str, value: Any, origin: str) -> None:
    parts = [p.strip() for p in dotted_key.split(".")]
    if not all(parts):
        raise ConfigError(f"{origin}: malformed key {dotted_key!r}")
    node = tree
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{origin}: key {dotted_key!r} conflicts with a scalar value")
        node = child
    node[parts[-1]] = value


def parse_kv_text(text: str, origin: str = "<config>") -> dict:
    """把键值文本解析为嵌套字典"""
    tree: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = stripped.split("=", 1)
        _assign(tree, key.strip(), _parse_value(raw), f"{origin}:{lineno}")
    return tree


def apply_overrides(tree: dict, overrides: Iterable[str]) -> dict:
    """应用命令行覆盖项（"section.key=value"）"""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, raw = item.split("=", 1)
        _assign(tree, key.strip(), _parse_value(raw), "override")
    return tree


def load_run_config(path: Path | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    """读取配置文件并应用覆盖项

    Args:
        path: 配置文件路径，None 表示全部使用默认值
        overrides: "section.key=value" 形式的覆盖项

    Returns:
        RunConfig: 校验后的配置

    Raises:
        ConfigError: 文件缺失、格式错误或校验失败
    """
    tree: dict = {}
    if path is not None:
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        tree = parse_kv_text(path.read_text(encoding="utf-8"), origin=str(path))
        logger.debug(f"Loaded config file {path}")
    apply_overrides(tree, overrides)
    return build_run_config(tree)


def dump_run_config(config: RunConfig) -> str:
    """把配置写回键值文本（load_run_config 可以读回）"""
    lines = []
    for section, values in config.model_dump(mode="json").items():
        for key, value in values.items():
            if value is None:
                text = "none"
            elif isinstance(value, list):
                text = ", ".join(str(v) for v in value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = str(value)
            lines.append(f"{section}.{key} = {text}")
    return "\n".join(lines) + "\n"
