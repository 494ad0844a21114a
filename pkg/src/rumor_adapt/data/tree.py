"""传播树

一条谣言是一棵以源帖为根、回复为子节点的树。路径是从根到某个叶子的节点序列。
"""

import re
from dataclasses import dataclass, field
from enum import Enum

URL_TOKEN = "<url>"
USER_TOKEN = "<user>"
EMPTY_TOKEN = "<unk>"

_URL_RE = re.compile(r"(https?://\S+|www\.\S+)")
_MENTION_RE = re.compile(r"@\w+")


class TreeValidationError(ValueError):
    """传播树结构不合法"""

    def __init__(self, tree_id: str, message: str, node: int | None = None) -> None:
        self.tree_id = tree_id
        self.node = node
        where = f"tree {tree_id!r}" + (f", node {node}" if node is not None else "")
        super().__init__(f"{where}: {message}")


class Domain(str, Enum):
    """数据所属领域"""

    SOURCE = "source"
    TARGET = "target"


def tokenize(text: str) -> list[str]:
    """小写化，URL 和 @用户 替换为占位词，然后按空白切分；空帖子得到一个 <unk>"""
    text = _URL_RE.sub(f" {URL_TOKEN} ", text.lower())
    text = _MENTION_RE.sub(f" {USER_TOKEN} ", text)
    tokens = text.split()
    return tokens or [EMPTY_TOKEN]


@dataclass(frozen=True)
class PostNode:
    """树中的一个帖子"""

    tokens: tuple[str, ...]
    parent: int | None
    rank: int  # 时间顺序提示，叶子排序用


@dataclass
class PropagationTree:
    """传播树"""

    id: str
    domain: Domain
    nodes: list[PostNode]
    label: int | None = None
    root: int = 0
    _children: list[list[int]] = field(default_factory=list, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.validate()
        self._children = [[] for _ in self.nodes]
        for index, node in enumerate(self.nodes):
            if node.parent is not None:
                self._children[node.parent].append(index)

    def validate(self) -> None:
        """检查：恰好一个根且为 0 号节点，父节点下标合法，无环"""
        if not self.nodes:
            raise TreeValidationError(self.id, "tree has no nodes")
        roots = [i for i, node in enumerate(self.nodes) if node.parent is None]
        if roots != [0]:
            raise TreeValidationError(
                self.id, f"expected node 0 to be the only root, found roots {roots}",
                node=roots[0] if roots and roots[0] != 0 else None,
            )
        count = len(self.nodes)
        for index, node in enumerate(self.nodes):
            if node.parent is not None and not 0 <= node.parent < count:
                raise TreeValidationError(
                    self.id, f"parent index {node.parent} out of range", node=index
                )
            if node.parent == index:
                raise TreeValidationError(self.id, "node is its own parent", node=index)

        # 沿父链走到根；走了 count 步还没到说明有环
        reaches_root = [False] * count
        reaches_root[0] = True
        for start in range(count):
            chain = []
            current: int | None = start
            while current is not None and not reaches_root[current]:
                chain.append(current)
                if len(chain) > count:
                    raise TreeValidationError(self.id, "parent links form a cycle", node=start)
                current = self.nodes[current].parent
            for visited in chain:
                reaches_root[visited] = True

        if self.label is not None and self.label < 0:
            raise TreeValidationError(self.id, f"label {self.label} must be non-negative")

    def children(self, index: int) -> list[int]:
        return self._children[index]

    @property
    def leaves(self) -> list[int]:
        return [i for i in range(len(self.nodes)) if not self._children[i]]


def extract_paths(tree: PropagationTree) -> list[list[int]]:
    """每个叶子一条从根到叶子的路径，按叶子的 rank 再按节点下标排序"""
    leaves = sorted(tree.leaves, key=lambda i: (tree.nodes[i].rank, i))
    paths = []
    for leaf in leaves:
        path = []
        current: int | None = leaf
        while current is not None:
            path.append(current)
            current = tree.nodes[current].parent
        paths.append(path[::-1])
    return paths


def truncate_paths(paths: list[list[int]], limit: int) -> list[list[int]]:
    """保留最长的 limit 条路径（长度相同按原顺序），输出保持原顺序"""
    if len(paths) <= limit:
        return paths
    ranked = sorted(range(len(paths)), key=lambda i: (-len(paths[i]), i))
    keep = sorted(ranked[:limit])
    return [paths[i] for i in keep]
