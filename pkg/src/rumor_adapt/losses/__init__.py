"""对比学习损失与交叉注意力一致性损失"""

from rumor_adapt.losses.consistency import (
    CrossPair,
    cross_attention,
    kl_consistency,
    kl_rows,
    make_pairs,
)
from rumor_adapt.losses.contrastive import (
    clm_loss,
    cross_domain_instance,
    in_domain_loss,
    prototype_loss,
    supcon_in_domain,
)

__all__ = [
    "CrossPair",
    "clm_loss",
    "cross_attention",
    "cross_domain_instance",
    "in_domain_loss",
    "kl_consistency",
    "kl_rows",
    "make_pairs",
    "prototype_loss",
    "supcon_in_domain",
]
