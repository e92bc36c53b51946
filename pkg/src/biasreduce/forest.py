"""Sample-weighted random forest with randomized hyperparameter search.

Trees grow best-first: the frontier leaf with the largest weighted impurity
decrease is split next, so the leaf budget ``max_leaves`` is spent where it
helps most. Each node considers ceil(sqrt(d)) randomly drawn features and
every midpoint between consecutive distinct values. ``min_samples_leaf`` and
``min_samples_split`` count examples (bootstrap multiplicities), not weight.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import _tree_kernels as K
from .metrics import roc_auc, stratified_folds

N_ESTIMATORS = 20
CRITERIA = ("gini", "entropy")


def weighted_impurity(class_weight_sums, criterion: str = "gini") -> float:
    w0, w1 = map(float, class_weight_sums)
    if w0 < 0 or w1 < 0 or w0 + w1 <= 0:
        raise ValueError("class weight sums must be nonnegative with a positive total")
    return float(K.impurity(w0, w1, _criterion_id(criterion)))


def _criterion_id(criterion: str) -> int:
    try:
        return {"gini": K.GINI, "entropy": K.ENTROPY}[criterion]
    except KeyError:
        raise ValueError(f"criterion must be one of {CRITERIA}") from None


@dataclass(frozen=True)
class SearchSpace:
    """Half-open integer ranges [lo, hi) sampled uniformly."""

    max_leaves: tuple[int, int] = (2, 1000)
    max_depth: tuple[int, int] = (1, 50)
    criterion: tuple[str, ...] = CRITERIA
    min_samples_leaf: tuple[int, int] = (1, 1000)
    min_samples_split: tuple[int, int] = (2, 50)
    n_estimators: int = N_ESTIMATORS

    def sample(self, rng: np.random.Generator) -> "ForestParams":
        return ForestParams(
            max_leaves=int(rng.integers(*self.max_leaves)),
            max_depth=int(rng.integers(*self.max_depth)),
            criterion=self.criterion[int(rng.integers(len(self.criterion)))],
            min_samples_leaf=int(rng.integers(*self.min_samples_leaf)),
            min_samples_split=int(rng.integers(*self.min_samples_split)),
            n_estimators=self.n_estimators,
        )


DEFAULT_SEARCH_SPACE = SearchSpace()


@dataclass(frozen=True)
class ForestParams:
    max_leaves: int = 64
    max_depth: int = 10
    criterion: str = "gini"
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    n_estimators: int = N_ESTIMATORS

    def __post_init__(self):
        s = DEFAULT_SEARCH_SPACE
        for name in ("max_leaves", "max_depth", "min_samples_leaf", "min_samples_split"):
            lo, hi = getattr(s, name)
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and lo <= v < hi):
                raise ValueError(f"{name}={v!r} outside [{lo}, {hi})")
        _criterion_id(self.criterion)
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    proba: np.ndarray  # (nodes, 2): class-0 / class-1 probability, meaningful at leaves
    depth: np.ndarray
    node_weight: np.ndarray
    node_count: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def max_depth(self) -> int:
        return int(self.depth[self.feature < 0].max())

    def predict_proba(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return K.predict_tree(X, self.feature, self.threshold, self.left, self.right, self.proba[:, 1])

    def same_structure(self, other: "Tree") -> bool:
        return (
            np.array_equal(self.feature, other.feature)
            and np.array_equal(self.threshold, other.threshold)
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
        )

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"proba": self.proba[node].tolist()}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }


def _check_fit_inputs(X, y, w):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = X.shape[0]
    w = np.ones(n) if w is None else np.asarray(w, dtype=np.float64)
    if X.ndim != 2 or y.shape != (n,) or w.shape != (n,):
        raise ValueError("X, y and w must agree in length")
    if n == 0:
        raise ValueError("cannot fit on zero examples")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("sample weights must be positive and finite")
    return X, y.astype(np.int64), w


def _max_features(d: int) -> int:
    return max(1, math.ceil(math.sqrt(d)))


def _grow(Xt, y, w, cnt, rows, params: ForestParams, seed: int) -> Tree:
    out = K.grow_tree(
        Xt, y, w, cnt, rows,
        params.max_leaves, params.max_depth, params.min_samples_split, params.min_samples_leaf,
        _criterion_id(params.criterion), _max_features(Xt.shape[0]), np.uint64(seed),
    )
    feature, threshold, left, right, p0, p1, depth, node_w, node_n = out
    return Tree(feature, threshold, left, right, np.column_stack([p0, p1]), depth, node_w, node_n)


def fit_tree(X, y, w=None, params: ForestParams = ForestParams(), rng=0) -> Tree:
    """Fit one tree on all rows. ``rng`` is an int seed or a numpy Generator."""
    X, y, w = _check_fit_inputs(X, y, w)
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(2**63))
    else:
        seed = int(rng)
    Xt = np.ascontiguousarray(X.T)
    n = X.shape[0]
    return _grow(Xt, y, w, np.ones(n, dtype=np.int64), np.arange(n, dtype=np.int64), params, seed)


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[Tree, ...]
    params: ForestParams
    feature_count: int

    def predict_proba(self, X) -> np.ndarray:
        """Mean positive-class leaf probability over trees."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.shape[1] != self.feature_count:
            raise ValueError(f"expected {self.feature_count} features, got {X.shape[1]}")
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict_proba(X)
        return total / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "feature_count": self.feature_count,
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def fit_forest(
    X, y, w=None, params: ForestParams = ForestParams(), seed: int = 0,
    weighted_bootstrap: bool = True,
) -> ForestModel:
    """Bagged trees with per-tree RNG streams keyed by (seed, tree index).

    With ``weighted_bootstrap`` the resample is drawn with probability
    proportional to ``w`` and the trees see only multiplicities; otherwise the
    resample is uniform and the trees see multiplicity times ``w``.
    """
    X, y, w = _check_fit_inputs(X, y, w)
    n = X.shape[0]
    Xt = np.ascontiguousarray(X.T)
    p = w / w.sum()
    trees = []
    for t in range(params.n_estimators):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        if weighted_bootstrap:
            draws = rng.choice(n, size=n, p=p)
        else:
            draws = rng.integers(n, size=n)
        counts = np.bincount(draws, minlength=n)
        rows = np.flatnonzero(counts)
        tree_w = counts.astype(np.float64) if weighted_bootstrap else counts * w
        tree_w[counts == 0] = 1.0  # rows outside the resample are never visited
        trees.append(_grow(Xt, y, tree_w, counts.astype(np.int64), rows, params, int(rng.integers(2**63))))
    return ForestModel(tuple(trees), params, X.shape[1])


@dataclass(frozen=True)
class SearchResult:
    best_params: ForestParams
    best_model_id: int
    fold_aucs: np.ndarray
    all_params: tuple[ForestParams, ...]
    all_fold_aucs: np.ndarray = field(repr=False)
    # AUC on validation folds weighted by ``eval_weights``; None when not requested
    weighted_fold_aucs: np.ndarray | None = field(default=None, repr=False)

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.fold_aucs))

    def write_csv(self, path: str | Path) -> None:
        names = list(ForestParams.__dataclass_fields__)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model_id", *names, "fold", "auc"])
            for m, params in enumerate(self.all_params):
                for f, auc in enumerate(self.all_fold_aucs[m]):
                    w.writerow([m, *(getattr(params, k) for k in names), f, repr(float(auc))])


def sample_search_params(n_models: int, seed: int, space: SearchSpace = DEFAULT_SEARCH_SPACE) -> list[ForestParams]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EA2C4]))
    return [space.sample(rng) for _ in range(n_models)]


def _task_seed(*keys: int) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1, np.uint64)[0] >> np.uint64(1))


def random_search(
    X, y, w=None, space: SearchSpace = DEFAULT_SEARCH_SPACE, n_models: int = 100, folds: int = 10,
    seed: int = 0, threads: int = 1, weighted_bootstrap: bool = True,
    eval_weights=None, fold_ids: np.ndarray | None = None,
) -> SearchResult:
    """Sample ``n_models`` parameter sets and rank them by mean k-fold AUC.

    Folds are stratified and depend only on (seed, y). Each (model, fold)
    fit has its own seed, so results do not depend on ``threads``. With
    ``eval_weights`` a weighted validation AUC is recorded alongside; model
    choice always uses the unweighted AUC.
    """
    X, y, w = _check_fit_inputs(X, y, w)
    if fold_ids is None:
        fold_ids = stratified_folds(y, folds, seed)
    params = sample_search_params(n_models, seed, space)
    n_jobs = threads if threads > 0 else -1

    def run(m, f):
        test = fold_ids == f
        train = ~test
        model = fit_forest(X[train], y[train], w[train], params[m], _task_seed(seed, m, f), weighted_bootstrap)
        scores = model.predict_proba(X[test])
        plain = roc_auc(scores, y[test])
        weighted = None if eval_weights is None else roc_auc(scores, y[test], eval_weights[test])
        return plain, weighted

    out = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(run)(m, f) for m in range(n_models) for f in range(folds)
    )
    table = np.array([o[0] for o in out]).reshape(n_models, folds)
    best = int(np.argmax(table.mean(axis=1)))  # first maximum: lowest model id wins ties
    weighted = None
    if eval_weights is not None:
        weighted = np.array([o[1] for o in out]).reshape(n_models, folds)[best].copy()
    return SearchResult(params[best], best, table[best].copy(), tuple(params), table, weighted)


def check_structure(tree: Tree, params: ForestParams) -> list[str]:
    """Return violated structural bounds (empty when the tree is valid)."""
    problems = []
    if tree.n_leaves > params.max_leaves:
        problems.append(f"{tree.n_leaves} leaves > max_leaves {params.max_leaves}")
    if tree.max_depth > params.max_depth:
        problems.append(f"depth {tree.max_depth} > max_depth {params.max_depth}")
    leaves = tree.feature < 0
    if tree.node_count[leaves].min() < params.min_samples_leaf and tree.n_leaves > 1:
        problems.append("a leaf holds fewer than min_samples_leaf examples")
    if np.any(tree.node_count[~leaves] < params.min_samples_split):
        problems.append("a split node holds fewer than min_samples_split examples")
    if not np.allclose(tree.proba[leaves].sum(axis=1), 1.0, rtol=0, atol=1e-12):
        problems.append("leaf probabilities do not sum to 1")
    return problems

