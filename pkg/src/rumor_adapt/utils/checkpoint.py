"""检查点读写

文件是一个 JSON 对象（orjson）：
    {"format": "rumor-adapt-checkpoint", "version": 1,
     "config": {...}, "step": int, "epoch": int,
     "tensors": {name: {"shape": [...], "data": [...]}},
     "optimizer": {"kind": "adam", "t": int, "m": {...}, "v": {...}},
     "history": [...], "trainer": {...}}

浮点数按最短往返表示写出，读回后数组逐位相同。
"""

from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import orjson
from loguru import logger

from rumor_adapt.models.config import RunConfig, build_run_config

CHECKPOINT_FORMAT = "rumor-adapt-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """检查点文件格式错误"""

    pass


@dataclass
class Checkpoint:
    """读回的检查点内容"""

    config: RunConfig
    tensors: dict[str, np.ndarray]
    step: int = 0
    epoch: int = 0
    optimizer: dict[str, Any] = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)
    trainer: dict[str, Any] = field(default_factory=dict)


def _encode(array: np.ndarray) -> dict:
    return {"shape": list(array.shape), "data": np.asarray(array).reshape(-1).tolist()}


def _decode(name: str, entry: Any) -> np.ndarray:
    if not isinstance(entry, dict) or "shape" not in entry or "data" not in entry:
        raise CheckpointError(f"tensor {name!r} must have 'shape' and 'data'")
    shape = tuple(int(s) for s in entry["shape"])
    data = np.asarray(entry["data"], dtype=np.float64)
    if data.size != int(np.prod(shape, dtype=np.int64)):
        raise CheckpointError(
            f"tensor {name!r} declares shape {list(shape)} but holds {data.size} values"
        )
    return data.reshape(shape)


def _encode_optimizer(state: Mapping[str, Any]) -> dict:
    encoded: dict[str, Any] = {}
    for key, value in state.items():
        if isinstance(value, Mapping):
            encoded[key] = {name: _encode(array) for name, array in value.items()}
        else:
            encoded[key] = value
    return encoded


def _decode_optimizer(state: Mapping[str, Any]) -> dict:
    decoded: dict[str, Any] = {}
    for key, value in state.items():
        if isinstance(value, Mapping):
            decoded[key] = {name: _decode(f"{key}.{name}", entry) for name, entry in value.items()}
        else:
            decoded[key] = value
    return decoded


def save_checkpoint(
    path: Path,
    config: RunConfig,
    tensors: Mapping[str, np.ndarray],
    step: int = 0,
    epoch: int = 0,
    optimizer: Mapping[str, Any] | None = None,
    history: list[dict] | None = None,
    trainer: Mapping[str, Any] | None = None,
) -> Path:
    """写出检查点（先写临时文件再替换）"""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config.model_dump(mode="json"),
        "step": step,
        "epoch": epoch,
        "tensors": {name: _encode(array) for name, array in tensors.items()},
        "optimizer": _encode_optimizer(optimizer or {}),
        "history": history or [],
        "trainer": dict(trainer or {}),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    staging = path.with_suffix(path.suffix + ".tmp")
    staging.write_bytes(orjson.dumps(payload))
    staging.replace(path)
    logger.debug(f"Saved checkpoint {path} (epoch {epoch}, step {step})")
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    """读取检查点

    Raises:
        FileNotFoundError: 文件不存在
        CheckpointError: 头部、版本或张量不合法
    """
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    try:
        payload = orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as e:
        raise CheckpointError(f"{path}: not a JSON checkpoint ({e})") from None
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: missing '{CHECKPOINT_FORMAT}' header")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {payload.get('version')!r} "
            f"(expected {CHECKPOINT_VERSION})"
        )

    tensors = payload.get("tensors")
    if not isinstance(tensors, dict) or not tensors:
        raise CheckpointError(f"{path}: no tensors stored")
    return Checkpoint(
        config=build_run_config(payload.get("config") or {}),
        tensors={name: _decode(name, entry) for name, entry in tensors.items()},
        step=int(payload.get("step", 0)),
        epoch=int(payload.get("epoch", 0)),
        optimizer=_decode_optimizer(payload.get("optimizer") or {}),
        history=list(payload.get("history") or []),
        trainer=dict(payload.get("trainer") or {}),
    )
