"""指标日志

每个训练步一行 JSON（orjson），不含时间戳，相同种子的两次运行得到相同文件。
"""

from collections.abc import Iterator, Mapping
from pathlib import Path
from typing import Any

import orjson


class MetricsLog:
    """追加写入的 JSON Lines 文件"""

    def __init__(self, path: Path, append: bool = False) -> None:
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        if not append:
            path.write_bytes(b"")

    def write(self, record: Mapping[str, Any]) -> None:
        with self.path.open("ab") as handle:
            handle.write(orjson.dumps(dict(record), option=orjson.OPT_SERIALIZE_NUMPY))
            handle.write(b"\n")

    def truncate_after(self, step: int) -> int:
        """删除 step 之后的记录（从检查点恢复时，丢弃中断前多写的部分）

        文件不存在时视为空日志（恢复到一个新的输出目录）。

        Returns:
            int: 保留的记录数
        """
        if not self.path.exists():
            return 0
        kept = [r for r in read_jsonl(self.path) if int(r.get("step", 0)) <= step]
        write_jsonl(self.path, kept)
        return len(kept)


def write_jsonl(path: Path, records: list[Mapping[str, Any]]) -> None:
    """一次性写出一组记录（预测结果、扫参结果等）"""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        for record in records:
            handle.write(orjson.dumps(dict(record), option=orjson.OPT_SERIALIZE_NUMPY))
            handle.write(b"\n")


def read_jsonl(path: Path) -> Iterator[dict]:
    with path.open("rb") as handle:
        for line in handle:
            if line.strip():
                yield orjson.loads(line)
