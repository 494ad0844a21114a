"""合成跨领域谣言数据

每个帖子的词分两类：
- 立场词 stance{c}_{k}：两个领域共享，按类别条件分布抽取，是可迁移的信号
- 话题词：以 shift_strength 的概率来自领域专有词表（srctopic_k / tgttopic_k），
  否则来自共享词表 topic_k；话题词与标签的相关程度由 topic_label_correlation 控制

目标域文件保留标签，仅用于评估。
"""

import hashlib
from collections import Counter
from pathlib import Path

import numpy as np
import orjson
from loguru import logger

from rumor_adapt.data.dataset import save_dataset
from rumor_adapt.data.tree import Domain, PostNode, PropagationTree
from rumor_adapt.models.config import SynthConfig

MANIFEST_FORMAT = "rumor-adapt-synth"
MANIFEST_VERSION = 1
SOURCE_FILE = "source.jsonl"
TARGET_FILE = "target.jsonl"
MANIFEST_FILE = "manifest.json"

_DOMAIN_STREAM = {Domain.SOURCE: 0, Domain.TARGET: 1}
_TOPIC_PREFIX = {Domain.SOURCE: "srctopic", Domain.TARGET: "tgttopic"}


def stance_word(label: int, k: int) -> str:
    return f"stance{label}_{k}"


def is_stance_word(token: str) -> bool:
    return token.startswith("stance")


class _DomainSampler:
    """单个领域的样本生成器"""

    def __init__(self, cfg: SynthConfig, domain: Domain) -> None:
        self.cfg = cfg
        self.domain = domain
        self.rng = np.random.default_rng([cfg.seed, _DOMAIN_STREAM[domain]])
        self.priors = np.asarray(cfg.priors, dtype=np.float64)

    def _topic_word(self, label: int) -> str:
        cfg = self.cfg
        if self.rng.random() < cfg.shift_strength:
            prefix, size = _TOPIC_PREFIX[self.domain], cfg.domain_topic_vocab
        else:
            prefix, size = "topic", cfg.shared_topic_vocab
        if self.rng.random() < cfg.topic_label_correlation:
            # 词表按 k % num_classes 划分给各类别
            partition = np.arange(label, size, cfg.num_classes)
            k = int(partition[self.rng.integers(0, partition.size)])
        else:
            k = int(self.rng.integers(0, size))
        return f"{prefix}_{k}"

    def _stance_word(self, label: int) -> str:
        cfg = self.cfg
        owner = label
        if cfg.num_classes > 1 and self.rng.random() >= cfg.stance_purity:
            others = [c for c in range(cfg.num_classes) if c != label]
            owner = others[int(self.rng.integers(0, len(others)))]
        return stance_word(owner, int(self.rng.integers(0, cfg.stance_vocab_per_class)))

    def _post(self, label: int) -> tuple[str, ...]:
        tokens = []
        for _ in range(self.cfg.tokens_per_post):
            if self.rng.random() < self.cfg.stance_rate:
                tokens.append(self._stance_word(label))
            else:
                tokens.append(self._topic_word(label))
        return tuple(tokens)

    def _shape(self) -> list[int | None]:
        """按广度优先采样父节点列表；根至少有一个回复（max_nodes 允许时）"""
        cfg = self.cfg
        parents: list[int | None] = [None]
        depths = [0]
        frontier = 0
        while frontier < len(parents):
            if depths[frontier] < cfg.max_depth:
                low = 1 if frontier == 0 and cfg.max_children > 0 else 0
                count = int(self.rng.integers(low, cfg.max_children + 1))
                for _ in range(min(count, cfg.max_nodes - len(parents))):
                    parents.append(frontier)
                    depths.append(depths[frontier] + 1)
            frontier += 1
        return parents

    def sample(self, index: int) -> PropagationTree:
        label = int(self.rng.choice(self.cfg.num_classes, p=self.priors))
        nodes = [
            PostNode(tokens=self._post(label), parent=parent, rank=i)
            for i, parent in enumerate(self._shape())
        ]
        return PropagationTree(
            id=f"{self.domain.value}-{index:05d}", domain=self.domain, nodes=nodes, label=label
        )


def generate(cfg: SynthConfig) -> tuple[list[PropagationTree], list[PropagationTree]]:
    """生成 (源域, 目标域) 两组传播树，目标域标签只用于评估"""
    result = []
    for domain in (Domain.SOURCE, Domain.TARGET):
        sampler = _DomainSampler(cfg, domain)
        result.append([sampler.sample(i) for i in range(cfg.samples_per_domain)])
    logger.info(
        f"Generated {cfg.samples_per_domain} samples per domain "
        f"(shift_strength={cfg.shift_strength}, seed={cfg.seed})"
    )
    return result[0], result[1]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_synthetic(cfg: SynthConfig, out_dir: Path) -> dict:
    """生成数据并写出 source.jsonl、target.jsonl 和 manifest.json

    Returns:
        dict: manifest 内容（不含时间戳，相同配置得到相同内容）
    """
    source, target = generate(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)

    files = {}
    for name, trees, filename in (("source", source, SOURCE_FILE), ("target", target, TARGET_FILE)):
        path = out_dir / filename
        save_dataset(path, trees)
        counts = Counter(t.label for t in trees)
        files[name] = {
            "path": filename,
            "samples": len(trees),
            "label_counts": {str(k): counts[k] for k in sorted(counts)},
            "sha256": _sha256(path),
        }

    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "config": cfg.model_dump(mode="json"),
        "files": files,
    }
    (out_dir / MANIFEST_FILE).write_bytes(
        orjson.dumps(manifest, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)
    )
    logger.info(f"Wrote synthetic datasets to {out_dir}")
    return manifest


# ===== 生成器自检 =====


def _bags(trees: list[PropagationTree], vocab: dict[str, int], stance_only: bool) -> np.ndarray:
    bags = np.zeros((len(trees), len(vocab)))
    for row, tree in enumerate(trees):
        for node in tree.nodes:
            for token in node.tokens:
                if stance_only and not is_stance_word(token):
                    continue
                column = vocab.get(token)
                if column is not None:
                    bags[row, column] += 1.0
        total = bags[row].sum()
        if total > 0:
            bags[row] /= total
    return bags


def _nearest_centroid_accuracy(
    train: np.ndarray, train_labels: np.ndarray, test: np.ndarray, test_labels: np.ndarray, num_classes: int
) -> float:
    if test.shape[0] == 0:
        return 0.0
    distances = np.full((test.shape[0], num_classes), np.inf)
    for c in range(num_classes):
        members = train[train_labels == c]
        if members.shape[0] == 0:
            continue
        centroid = members.mean(axis=0)
        distances[:, c] = ((test - centroid) ** 2).sum(axis=1)
    predicted = np.argmin(distances, axis=1)
    return float(np.mean(predicted == test_labels))


def signal_diagnostics(
    source: list[PropagationTree], target: list[PropagationTree], num_classes: int
) -> dict[str, float]:
    """最近质心分类器的准确率（0~1）

    - stance_source / stance_target：立场词词袋，在源域上拟合
    - full_source / full_target：全部词的词袋，在源域上拟合

    Raises:
        ValueError: 任一样本没有标签
    """
    if any(t.label is None for t in [*source, *target]):
        raise ValueError("signal_diagnostics needs labels on both domains")
    words = sorted({tok for t in [*source, *target] for n in t.nodes for tok in n.tokens})
    vocab = {w: i for i, w in enumerate(words)}
    src_y = np.array([t.label for t in source], dtype=np.int64)
    tgt_y = np.array([t.label for t in target], dtype=np.int64)

    report = {}
    for prefix, stance_only in (("stance", True), ("full", False)):
        src_x = _bags(source, vocab, stance_only)
        tgt_x = _bags(target, vocab, stance_only)
        report[f"{prefix}_source"] = _nearest_centroid_accuracy(src_x, src_y, src_x, src_y, num_classes)
        report[f"{prefix}_target"] = _nearest_centroid_accuracy(src_x, src_y, tgt_x, tgt_y, num_classes)
    logger.debug(f"Synthetic signal diagnostics: {report}")
    return report
