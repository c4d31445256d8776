"""Python bindings for the cagnet group-affect fusion engine and curation tools."""

import json

from ._cagnet import (
    CagnetError,
    cohens_kappa,
    fuse_block_probabilities,
    kappa_from_counts,
    make_synthetic,
    masked_softmax,
    predict,
    read_embedding,
    remap_emotion,
    resolve_votes,
    run,
    segment_plan,
    write_embedding,
)
from ._cagnet import compute_metrics as _compute_metrics

__all__ = [
    "CagnetError",
    "cohens_kappa",
    "compute_metrics",
    "fuse_block_probabilities",
    "kappa_from_counts",
    "make_synthetic",
    "masked_softmax",
    "predict",
    "read_embedding",
    "remap_emotion",
    "resolve_votes",
    "run",
    "segment_plan",
    "write_embedding",
]


def compute_metrics(y_true, y_pred, num_classes):
    """Accuracy, per-class precision/recall/F1, macro and weighted F1, confusion matrix."""
    return json.loads(_compute_metrics(list(y_true), list(y_pred), num_classes))
