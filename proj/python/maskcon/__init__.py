"""Contrastive representation learning from coarse labels.

Thin Python surface over the C++ core: relation-row construction, the
contrastive losses, the FIFO memory bank, retrieval evaluation and full
training runs driven by config files.
"""

from ._maskcon import (
    MemoryBank,
    ce_loss,
    con_loss,
    cosine_lr,
    cosine_similarity_matrix,
    dz,
    eval_checkpoint,
    gen_hierarchical_gaussian,
    load_vds,
    recall_at_k,
    relations_mask,
    relations_self,
    relations_sup,
    softmax_rows,
    train,
)

__all__ = [
    "MemoryBank",
    "ce_loss",
    "con_loss",
    "cosine_lr",
    "cosine_similarity_matrix",
    "dz",
    "eval_checkpoint",
    "gen_hierarchical_gaussian",
    "load_vds",
    "recall_at_k",
    "relations_mask",
    "relations_self",
    "relations_sup",
    "softmax_rows",
    "train",
]
