"""ROC-AUC and stratified fold assignment."""
from __future__ import annotations

import numpy as np


def roc_auc(scores, labels, sample_weight=None) -> float:
    """Probability that a positive outranks a negative, ties counted half.

    With ``sample_weight`` every (positive, negative) pair counts with the
    product of the two weights.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-d and of equal length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("AUC needs both classes present")
    w = np.ones(s.size) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    uniq, group = np.unique(s, return_inverse=True)
    pos = np.bincount(group, weights=w * (y == 1), minlength=uniq.size)
    neg = np.bincount(group, weights=w * (y == 0), minlength=uniq.size)
    neg_below = np.concatenate([[0.0], np.cumsum(neg)[:-1]])
    # doubled sums keep the unweighted numerator an exact integer
    num = float(np.sum(pos * (2.0 * neg_below + neg)))
    return num / (2.0 * pos.sum() * neg.sum())


def stratified_folds(labels, k: int, seed: int) -> np.ndarray:
    """Fold id per example; each class is shuffled then dealt round-robin.

    Depends only on (labels, k, seed). Raises if a class has fewer than k
    members, since some fold would then lack that class.
    """
    y = np.asarray(labels)
    if k < 2:
        raise ValueError("need at least 2 folds")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D]))
    folds = np.empty(y.size, dtype=np.int64)
    offset = 0
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        if members.size < k:
            raise ValueError(f"class {cls} has {members.size} examples, fewer than {k} folds")
        members = rng.permutation(members)
        folds[members] = (np.arange(members.size) + offset) % k
        offset = (offset + members.size) % k
    return folds
