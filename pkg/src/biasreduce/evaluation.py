"""Cross-validated AUC along a ladder of increasingly many corrected biases."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import LabeledDataset
from .forest import DEFAULT_SEARCH_SPACE, SearchSpace, random_search
from .metrics import roc_auc, stratified_folds
from .weights import (
    CLASS_IMBALANCE,
    CUSTOMER_CLASS,
    SPATIAL,
    WeightConfig,
    bias_column,
    check_bias_list,
    weight_set_from_columns,
)

__all__ = [
    "DEFAULT_LADDER", "EvaluationReport", "LadderStep", "roc_auc",
    "run_bias_ladder", "stratified_folds",
]

DEFAULT_LADDER: tuple[tuple[str, ...], ...] = (
    (),
    (CLASS_IMBALANCE,),
    (CLASS_IMBALANCE, SPATIAL),
    (CLASS_IMBALANCE, SPATIAL, CUSTOMER_CLASS),
)


@dataclass(frozen=True)
class LadderStep:
    biases: tuple[str, ...]
    fold_aucs: tuple[float, ...]
    best_params: dict = field(default_factory=dict)
    # weighted validation AUC with reference-based weights; empty when disabled
    est_unbiased_fold_aucs: tuple[float, ...] = ()

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.fold_aucs))

    @property
    def label(self) -> str:
        return " + ".join(self.biases) if self.biases else "None"

    @property
    def est_unbiased_mean_auc(self) -> float | None:
        return float(np.mean(self.est_unbiased_fold_aucs)) if self.est_unbiased_fold_aucs else None


@dataclass(frozen=True)
class EvaluationReport:
    configurations: tuple[LadderStep, ...]
    seed: int
    dataset_digest: str
    config_digest: str = ""

    @property
    def mean_aucs(self) -> list[float]:
        return [s.mean_auc for s in self.configurations]

    def to_dict(self) -> dict:
        steps = []
        for s in self.configurations:
            entry = {
                "biases": list(s.biases),
                "fold_aucs": list(s.fold_aucs),
                "mean_auc": s.mean_auc,
                "best_params": s.best_params,
            }
            if s.est_unbiased_fold_aucs:
                entry["est_unbiased_fold_aucs"] = list(s.est_unbiased_fold_aucs)
                entry["est_unbiased_mean_auc"] = s.est_unbiased_mean_auc
            steps.append(entry)
        return {
            "config_digest": self.config_digest,
            "dataset_digest": self.dataset_digest,
            "seed": self.seed,
            "configurations": steps,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        steps = tuple(
            LadderStep(
                tuple(c["biases"]),
                tuple(c["fold_aucs"]),
                c.get("best_params", {}),
                tuple(c.get("est_unbiased_fold_aucs", ())),
            )
            for c in d["configurations"]
        )
        return cls(steps, d["seed"], d["dataset_digest"], d.get("config_digest", ""))

    @classmethod
    def read(cls, path: str | Path) -> "EvaluationReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def render_table(self) -> str:
        est = any(s.est_unbiased_fold_aucs for s in self.configurations)
        rows = [("Biases reduced", "mean AUC") + (("est. unbiased AUC",) if est else ())]
        for s in self.configurations:
            row = (s.label, f"{s.mean_auc:.5f}")
            if est:
                row += (f"{s.est_unbiased_mean_auc:.5f}" if s.est_unbiased_fold_aucs else "-",)
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * wd for wd in widths))
        return "\n".join(lines)


def run_bias_ladder(
    dataset: LabeledDataset,
    reference: LabeledDataset | None,
    ladder: Sequence[Sequence[str]] = DEFAULT_LADDER,
    seed: int = 0,
    n_models: int = 100,
    folds: int = 10,
    space: SearchSpace = DEFAULT_SEARCH_SPACE,
    weight_config: WeightConfig = WeightConfig(),
    threads: int = 1,
    weighted_bootstrap: bool = True,
    estimate_unbiased: bool = False,
    config_digest: str = "",
) -> EvaluationReport:
    """Run the random search once per ladder step on shared, paired folds.

    An empty bias set means uniform weights. Per-bias columns are computed once
    and reused across steps. With ``estimate_unbiased`` the validation AUC is
    additionally weighted by the combined weights of every bias in the ladder.
    """
    if not ladder:
        raise ValueError("ladder must not be empty")
    dataset.require_both_classes()
    ladder = [tuple(step) for step in ladder]
    for step in ladder:
        if step:
            check_bias_list(step)
    fold_ids = stratified_folds(dataset.y, folds, seed)

    cache: dict[str, np.ndarray] = {}

    def column(b):
        if b not in cache:
            cache[b] = bias_column(dataset, reference, b, weight_config)
        return cache[b]

    def weights_for(biases):
        if not biases:
            return np.ones(len(dataset))
        return weight_set_from_columns([column(b) for b in biases], biases, weight_config.clip).normalized

    eval_weights = None
    if estimate_unbiased:
        every = tuple(dict.fromkeys(b for step in ladder for b in step))
        eval_weights = weights_for(every)

    steps = []
    for biases in ladder:
        result = random_search(
            dataset.X, dataset.y, weights_for(biases), space=space, n_models=n_models,
            folds=folds, seed=seed, threads=threads, weighted_bootstrap=weighted_bootstrap,
            eval_weights=eval_weights, fold_ids=fold_ids,
        )
        steps.append(LadderStep(
            biases,
            tuple(float(a) for a in result.fold_aucs),
            {"model_id": result.best_model_id, **result.best_params.__dict__},
            () if result.weighted_fold_aucs is None else tuple(float(a) for a in result.weighted_fold_aucs),
        ))
    return EvaluationReport(tuple(steps), seed, dataset.digest(), config_digest)
