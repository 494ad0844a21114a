"""词向量表

两种来源：
- GloVe 文本格式文件（"word v1 ... vd"），未登录词向量为零向量
- 随机词向量：每个词的向量只由 (seed, crc32(word)) 决定，与词表顺序无关
"""

import zlib
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from loguru import logger

from rumor_adapt.autodiff import Tensor

DEFAULT_DIM = 300
OOV_KEY = "<oov>"


class EmbeddingFormatError(ValueError):
    """词向量文件格式错误"""

    pass


@dataclass
class EmbeddingTable:
    """词表与词向量矩阵，最后一行是未登录词向量"""

    vocab: dict[str, int]
    vectors: Tensor

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def oov_index(self) -> int:
        return self.vectors.shape[0] - 1

    def __len__(self) -> int:
        return len(self.vocab)

    def index(self, word: str) -> int:
        return self.vocab.get(word, self.oov_index)

    def lookup(self, word: str) -> np.ndarray:
        """查词向量，未登录词返回 OOV 行"""
        return self.vectors.data[self.index(word)]

    def lookup_many(self, words: Iterable[str]) -> np.ndarray:
        rows = [self.index(w) for w in words]
        return self.vectors.data[rows]


def load_embeddings(path: Path, expected_dim: int = DEFAULT_DIM) -> EmbeddingTable:
    """读取 GloVe 文本格式词向量

    每行按任意空白切分，行尾的空格和 \\r\\n 都被忽略。

    Raises:
        EmbeddingFormatError: 某一行维度不符、数值非法或不是 UTF-8，消息包含行号
    """
    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = []
    with path.open("rb") as handle:
        for lineno, raw in enumerate(handle, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: not valid UTF-8 ({e.reason} at byte {e.start})"
                ) from None
            parts = line.split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != expected_dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected {expected_dim} values for {word!r}, got {len(values)}"
                )
            try:
                vector = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise EmbeddingFormatError(f"{path}:{lineno}: non-numeric value for {word!r}") from None
            if word in vocab:
                continue
            vocab[word] = len(rows)
            rows.append(vector)

    rows.append(np.zeros(expected_dim))
    logger.info(f"Loaded {len(vocab)} word vectors (dim={expected_dim}) from {path}")
    return EmbeddingTable(vocab=vocab, vectors=Tensor(np.stack(rows)))


def _word_vector(word: str, seed: int, dim: int) -> np.ndarray:
    rng = np.random.default_rng([seed, zlib.crc32(word.encode("utf-8"))])
    return rng.uniform(-0.1, 0.1, size=dim)


def random_embeddings(
    vocab: Iterable[str], seed: int, dim: int = DEFAULT_DIM
) -> EmbeddingTable:
    """为词表生成随机词向量（均匀分布 [-0.1, 0.1)）"""
    words = sorted(set(vocab))
    index = {word: i for i, word in enumerate(words)}
    rows = [_word_vector(word, seed, dim) for word in words]
    rows.append(_word_vector(OOV_KEY, seed, dim))
    logger.debug(f"Built random embeddings for {len(words)} words (dim={dim}, seed={seed})")
    return EmbeddingTable(vocab=index, vectors=Tensor(np.stack(rows)))
