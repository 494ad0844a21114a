"""数据层：传播树、词向量、路径集与合成数据"""

from rumor_adapt.data.dataset import (
    DatasetFormatError,
    PathSet,
    PathSetBuilder,
    build_pathset,
    collect_vocabulary,
    embed_path,
    load_dataset,
    save_dataset,
)
from rumor_adapt.data.embeddings import (
    EmbeddingFormatError,
    EmbeddingTable,
    load_embeddings,
    random_embeddings,
)
from rumor_adapt.data.tree import (
    Domain,
    PostNode,
    PropagationTree,
    TreeValidationError,
    extract_paths,
    tokenize,
    truncate_paths,
)

__all__ = [
    "DatasetFormatError",
    "Domain",
    "EmbeddingFormatError",
    "EmbeddingTable",
    "PathSet",
    "PathSetBuilder",
    "PostNode",
    "PropagationTree",
    "TreeValidationError",
    "build_pathset",
    "collect_vocabulary",
    "embed_path",
    "extract_paths",
    "load_dataset",
    "load_embeddings",
    "random_embeddings",
    "save_dataset",
    "tokenize",
    "truncate_paths",
]
