"""Rumor Adapt - 跨领域谣言检测的无监督领域自适应"""

__version__ = "0.1.0"
__author__ = "Rumor Adapt Team"
__description__ = (
    "Unsupervised cross-domain rumor detection with contrastive alignment "
    "and cross-attention consistency"
)

from rumor_adapt.config import settings

__all__ = ["settings", "__version__"]
