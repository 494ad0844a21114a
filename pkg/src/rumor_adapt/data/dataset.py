"""数据集读写与路径集构建

数据集文件每行一个 JSON 对象：
    {"id": "...", "label": 0 | 1 | null, "nodes": [{"text": "...", "parent": null | int, "rank": int?}]}
0 号节点必须是根。
"""

from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import orjson
from cachetools import LRUCache
from loguru import logger

from rumor_adapt.autodiff import Tensor
from rumor_adapt.config import settings
from rumor_adapt.data.embeddings import EmbeddingTable
from rumor_adapt.data.tree import (
    Domain,
    PostNode,
    PropagationTree,
    TreeValidationError,
    extract_paths,
    tokenize,
    truncate_paths,
)

DEFAULT_MAX_PATHS = 64


class DatasetFormatError(ValueError):
    """数据集文件格式错误"""

    def __init__(self, path: Path | str, lineno: int, message: str) -> None:
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


@dataclass(frozen=True)
class PathSet:
    """一条谣言的路径嵌入序列（每行一条路径）"""

    rumor_id: str
    paths: Tensor
    domain: Domain
    label: int | None = None

    @property
    def num_paths(self) -> int:
        return self.paths.shape[0]


# ===== 文件读写 =====


def _is_index(value: object) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _parse_record(raw: bytes, path: Path, lineno: int, domain: Domain) -> PropagationTree:
    try:
        record = orjson.loads(raw)
    except orjson.JSONDecodeError as e:
        raise DatasetFormatError(path, lineno, f"invalid JSON: {e}") from None
    if not isinstance(record, dict):
        raise DatasetFormatError(path, lineno, "record must be a JSON object")

    tree_id = record.get("id")
    if not isinstance(tree_id, str) or not tree_id:
        raise DatasetFormatError(path, lineno, "missing string field 'id'")
    label = record.get("label")
    if label is not None and not _is_index(label):
        raise DatasetFormatError(path, lineno, f"label of {tree_id!r} must be an integer or null")
    raw_nodes = record.get("nodes")
    if not isinstance(raw_nodes, list):
        raise DatasetFormatError(path, lineno, f"tree {tree_id!r} has no 'nodes' list")

    nodes = []
    for index, item in enumerate(raw_nodes):
        if not isinstance(item, dict) or not isinstance(item.get("text", ""), str):
            raise DatasetFormatError(path, lineno, f"tree {tree_id!r} node {index} is malformed")
        parent = item.get("parent")
        rank = item.get("rank", index)
        # bool 是 int 的子类，JSON 的 true/false 不能当作下标
        if (parent is not None and not _is_index(parent)) or not _is_index(rank):
            raise DatasetFormatError(
                path, lineno, f"tree {tree_id!r} node {index}: parent and rank must be integers"
            )
        nodes.append(PostNode(tokens=tuple(tokenize(item.get("text", ""))), parent=parent, rank=rank))

    return PropagationTree(id=tree_id, domain=domain, nodes=nodes, label=label)


def load_dataset(
    path: Path,
    domain: Domain,
    num_classes: int | None = None,
) -> list[PropagationTree]:
    """读取并校验数据集文件

    Args:
        path: 数据集文件
        domain: 文件所属领域；源域样本必须带标签
        num_classes: 给定时检查标签范围

    Returns:
        list[PropagationTree]: 按文件顺序排列的传播树

    Raises:
        DatasetFormatError: JSON 解析或字段错误（带行号）
        TreeValidationError: 树结构或标签不合法（带树 id）
    """
    trees: list[PropagationTree] = []
    seen: set[str] = set()
    with path.open("rb") as handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            tree = _parse_record(raw, path, lineno, domain)
            if tree.id in seen:
                raise DatasetFormatError(path, lineno, f"duplicate tree id {tree.id!r}")
            if domain is Domain.SOURCE and tree.label is None:
                raise TreeValidationError(tree.id, "source-domain trees need a label")
            if num_classes is not None and tree.label is not None and tree.label >= num_classes:
                raise TreeValidationError(
                    tree.id, f"label {tree.label} outside [0, {num_classes})"
                )
            seen.add(tree.id)
            trees.append(tree)

    counts = Counter("unlabeled" if t.label is None else t.label for t in trees)
    summary = ", ".join(f"{k}: {v}" for k, v in sorted(counts.items(), key=str))
    logger.info(f"Loaded {len(trees)} {domain.value} trees from {path} ({summary or 'empty'})")
    return trees


def save_dataset(path: Path, trees: Iterable[PropagationTree]) -> int:
    """按数据集格式写出传播树，返回写出的条数"""
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("wb") as handle:
        for tree in trees:
            nodes = []
            for index, node in enumerate(tree.nodes):
                entry: dict = {"text": " ".join(node.tokens), "parent": node.parent}
                if node.rank != index:
                    entry["rank"] = node.rank
                nodes.append(entry)
            handle.write(orjson.dumps({"id": tree.id, "label": tree.label, "nodes": nodes}))
            handle.write(b"\n")
            count += 1
    logger.debug(f"Wrote {count} trees to {path}")
    return count


def collect_vocabulary(trees: Iterable[PropagationTree]) -> set[str]:
    """收集所有帖子中出现的词"""
    return {token for tree in trees for node in tree.nodes for token in node.tokens}


# ===== 路径嵌入 =====


def embed_path(path: Sequence[int], tree: PropagationTree, table: EmbeddingTable) -> Tensor:
    """路径上所有节点所有词的词向量逐元素取最大值"""
    if not path:
        raise ValueError("embed_path needs a non-empty path")
    words = [token for index in path for token in tree.nodes[index].tokens]
    return Tensor(table.lookup_many(words).max(axis=0))


def build_pathset(
    tree: PropagationTree, table: EmbeddingTable, max_paths: int = DEFAULT_MAX_PATHS
) -> PathSet:
    """把传播树变成路径嵌入矩阵，行顺序与 extract_paths 一致"""
    paths = truncate_paths(extract_paths(tree), max_paths)
    rows = np.stack([embed_path(p, tree, table).data for p in paths])
    return PathSet(rumor_id=tree.id, paths=Tensor(rows), domain=tree.domain, label=tree.label)


class PathSetBuilder:
    """带 LRU 缓存的路径集构建器

    同一棵树在每个 epoch 都会被编码，缓存按 (领域, 树 id) 保存构建结果。
    """

    def __init__(
        self,
        table: EmbeddingTable,
        max_paths: int = DEFAULT_MAX_PATHS,
        cache_size: int | None = None,
    ) -> None:
        self.table = table
        self.max_paths = max_paths
        self.cache: LRUCache = LRUCache(maxsize=cache_size or settings.pathset_cache_size)
        self.hits = 0
        self.misses = 0

    def build(self, tree: PropagationTree) -> PathSet:
        key = (tree.domain.value, tree.id)
        cached = self.cache.get(key)
        if cached is not None:
            self.hits += 1
            return cached
        self.misses += 1
        pathset = build_pathset(tree, self.table, self.max_paths)
        self.cache[key] = pathset
        return pathset

    def build_many(self, trees: Iterable[PropagationTree]) -> list[PathSet]:
        return [self.build(tree) for tree in trees]
