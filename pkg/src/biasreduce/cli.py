"""Command-line entry point: ``python -m biasreduce.cli <command> --config run.cfg``.

The config file is flat ``key = value`` lines (``#`` comments allowed); the
flags ``--seed``, ``--threads`` and ``--out`` override the matching keys.
Every command writes ``manifest.json`` to the output directory with the
config digest, seed, library versions and sha256 of every artifact.

Exit codes: 0 success, 2 config error, 3 data error, 4 internal error. On
failure a JSON object ``{"error", "message", "exit_code"}`` goes to stderr.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import platform
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numba
import numpy as np

from . import __version__
from .core import DataError, SchemaError, validate_dataset, write_rejects
from .density import KdeSearchSpec
from .evaluation import EvaluationReport, run_bias_ladder
from .features import FAMILIES, FeatureConfig, write_feature_matrix
from .forest import DEFAULT_SEARCH_SPACE, fit_forest, random_search
from .pipeline import prepare_files
from .stats_tests import write_selection_report
from .synthgen import PRESETS, generate_population, sample_biased_training, write_synth
from .weights import CLASS_IMBALANCE, BiasConfigError, WeightConfig, build_weight_set, check_bias_list

COMMANDS = ("synth", "features", "weights", "train", "ladder", "report")
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int | None = None
    threads: int = 1
    out: str = "out"
    # data
    train: str = ""
    reference: str = ""
    # synth
    preset: str = "ntl-default"
    population: int = 0  # 0 keeps the preset's size
    labelled_reference: bool = False
    # features
    features: str = ",".join(FAMILIES)
    alpha: float = 0.05
    select: bool = True
    # weights
    biases: str = "class_imbalance,spatial,customer_class"
    clip_lo: float = 0.05
    clip_hi: float = 20.0
    target_positive_prior: float = 0.0  # 0 = reference priors if labelled, else 50/50
    kde_candidates: int = 100
    kde_folds: int = 5
    # forest search
    n_models: int = 100
    folds: int = 10
    weighted_bootstrap: bool = True
    estimate_unbiased: bool = False
    ladder: str = "none; class_imbalance; class_imbalance,spatial; class_imbalance,spatial,customer_class"
    # report
    report: str = ""

    def validate(self) -> None:
        if self.seed is None:
            raise ConfigError("seed is mandatory (config key or --seed)")
        if self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if self.threads < 0:
            raise ConfigError("threads must be >= 0")
        if not 0 < self.clip_lo <= self.clip_hi:
            raise ConfigError("clip range must satisfy 0 < clip_lo <= clip_hi")
        if self.n_models < 1 or self.folds < 2:
            raise ConfigError("need n_models >= 1 and folds >= 2")
        try:
            self.feature_config()
            self.weight_config()
            self.bias_list
            self.ladder_steps
            if not 0 < self.alpha < 1:
                raise ValueError("alpha must lie in (0, 1)")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def digest(self) -> str:
        """sha256 of every key that can change results (not out / threads)."""
        d = {k: v for k, v in dataclasses.asdict(self).items() if k not in ("out", "threads")}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @property
    def bias_list(self) -> tuple[str, ...]:
        """Parsed ``biases``; the word ``none`` means uniform weights."""
        return () if self.biases.strip().lower() == "none" else _bias_tuple(self.biases)

    @property
    def ladder_steps(self) -> list[tuple[str, ...]]:
        steps = [s.strip() for s in self.ladder.split(";") if s.strip()]
        if not steps:
            raise ConfigError("ladder needs at least one step")
        return [() if s.lower() == "none" else _bias_tuple(s) for s in steps]

    def feature_config(self) -> FeatureConfig:
        chosen = {f.strip() for f in self.features.split(",") if f.strip()}
        unknown = chosen - set(FAMILIES)
        if unknown:
            raise ConfigError(f"unknown feature families {sorted(unknown)}")
        return FeatureConfig(**{f: f in chosen for f in FAMILIES})

    def weight_config(self) -> WeightConfig:
        target = None
        if self.target_positive_prior:
            p = self.target_positive_prior
            if not 0 < p < 1:
                raise ConfigError("target_positive_prior must lie in (0, 1)")
            target = {0: 1 - p, 1: p}
        kde = KdeSearchSpec(n_candidates=self.kde_candidates, folds=self.kde_folds, seed=self.seed)
        return WeightConfig(clip=(self.clip_lo, self.clip_hi), target_priors=target, kde=kde)


def _bias_tuple(text: str) -> tuple[str, ...]:
    return check_bias_list(b.strip() for b in text.split(",") if b.strip())


def _convert(name: str, kind: str, raw: str):
    # field types are strings here (postponed annotations)
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind.startswith("int"):
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def load_config(path: str | Path | None, overrides: dict) -> RunConfig:
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        try:
            parser.read_string("[run]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        values = dict(parser["run"])
    known = {f.name: f.type for f in fields(RunConfig)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    typed = {k: _convert(k, known[k], v) for k, v in values.items()}
    typed.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(**typed)
    cfg.validate()
    return cfg


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _existing(path: str, key: str) -> Path:
    if not path:
        raise ConfigError(f"config key {key!r} is required for this command")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{key} file not found: {path}")
    return p


def _needs_reference(biases) -> bool:
    return any(b != CLASS_IMBALANCE for b in biases)


def _prepare(cfg: RunConfig, biases=()):
    train = _existing(cfg.train, "train")
    ref = None
    if cfg.reference:
        ref = _existing(cfg.reference, "reference")
    elif _needs_reference(biases):
        raise ConfigError("covariate-shift biases need a reference CSV (config key 'reference')")
    return prepare_files(train, ref, cfg.feature_config(), cfg.alpha if cfg.select else None)


def cmd_synth(cfg: RunConfig, out: Path) -> list[str]:
    if cfg.preset not in PRESETS:
        raise ConfigError(f"unknown preset {cfg.preset!r}; known: {sorted(PRESETS)}")
    synth = dataclasses.replace(PRESETS[cfg.preset], seed=cfg.seed)
    if cfg.population:
        synth = dataclasses.replace(synth, population=cfg.population)
    population, truth = generate_population(synth)
    sample = sample_biased_training(population, truth, synth)
    paths = write_synth(out, population, sample, cfg.labelled_reference)
    return [p.name for p in paths.values()]


def cmd_features(cfg: RunConfig, out: Path) -> list[str]:
    prep = _prepare(cfg)
    write_feature_matrix(out / "features.csv", prep.train)
    written = ["features.csv"]
    if prep.selection is not None:
        write_selection_report(out / "selection.csv", prep.all_feature_names, prep.selection)
        written.append("selection.csv")
    write_rejects(out / "rejects.csv", prep.rejects)
    report = validate_dataset(prep.train)
    _write_json(out / "validation.json", {"config_digest": cfg.digest(), **dataclasses.asdict(report)})
    return written + ["rejects.csv", "validation.json"]


def cmd_weights(cfg: RunConfig, out: Path) -> list[str]:
    biases = cfg.bias_list
    prep = _prepare(cfg, biases)
    ws = build_weight_set(prep.train, prep.reference, biases, cfg.weight_config())
    ws.write_csv(out / "weights.csv", prep.train.ids)
    return ["weights.csv"]


def cmd_train(cfg: RunConfig, out: Path) -> list[str]:
    biases = cfg.bias_list
    prep = _prepare(cfg, biases)
    w = None
    if biases:
        w = build_weight_set(prep.train, prep.reference, biases, cfg.weight_config()).normalized
    res = random_search(prep.train.X, prep.train.y, w, DEFAULT_SEARCH_SPACE, cfg.n_models, cfg.folds, cfg.seed,
                        cfg.threads, cfg.weighted_bootstrap)
    res.write_csv(out / "search.csv")
    model = fit_forest(prep.train.X, prep.train.y, w, res.best_params, cfg.seed, cfg.weighted_bootstrap)
    _write_json(out / "model.json", {
        "config_digest": cfg.digest(),
        "feature_names": list(prep.train.feature_names),
        "best_model_id": res.best_model_id,
        "fold_aucs": res.fold_aucs.tolist(),
        "mean_auc": res.mean_auc,
        "model_digest": model.digest(),
        "model": model.to_dict(),
    })
    print(f"best model {res.best_model_id}: mean AUC {res.mean_auc:.5f}")
    return ["search.csv", "model.json"]


def cmd_ladder(cfg: RunConfig, out: Path) -> list[str]:
    steps = cfg.ladder_steps
    prep = _prepare(cfg, [b for s in steps for b in s])
    rep = run_bias_ladder(
        prep.train, prep.reference, steps, seed=cfg.seed, n_models=cfg.n_models, folds=cfg.folds,
        weight_config=cfg.weight_config(), threads=cfg.threads, weighted_bootstrap=cfg.weighted_bootstrap,
        estimate_unbiased=cfg.estimate_unbiased, config_digest=cfg.digest(),
    )
    rep.write(out / "report.json")
    print(rep.render_table())
    return ["report.json"]


def cmd_report(cfg: RunConfig, out: Path) -> list[str]:
    path = Path(cfg.report) if cfg.report else out / "report.json"
    if not path.is_file():
        raise ConfigError(f"report file not found: {path}")
    try:
        rep = EvaluationReport.read(path)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed report {path}: {exc}") from None
    table = rep.render_table()
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return ["report.txt"]


HANDLERS = {
    "synth": cmd_synth, "features": cmd_features, "weights": cmd_weights,
    "train": cmd_train, "ladder": cmd_ladder, "report": cmd_report,
}


def write_manifest(cfg: RunConfig, command: str, out: Path, artifacts: list[str]) -> None:
    _write_json(out / "manifest.json", {
        "command": command,
        "config": {k: v for k, v in dataclasses.asdict(cfg).items() if k not in ("out", "threads")},
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "versions": {
            "biasreduce": __version__,
            "numpy": np.__version__,
            "numba": numba.__version__,
            "python": platform.python_version(),
        },
        "artifacts": {name: _sha256(out / name) for name in sorted(artifacts)},
    })


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="biasreduce", description="Bias-corrected NTL classifier pipeline.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads, 0 = all cores")
    p.add_argument("--out", help="output directory")
    return p


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"seed": args.seed, "threads": args.threads, "out": args.out})
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        artifacts = HANDLERS[args.command](cfg, out)
        write_manifest(cfg, args.command, out, artifacts)
    except (ConfigError, BiasConfigError) as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except (DataError, SchemaError) as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except Exception as exc:  # noqa: BLE001 - every failure must map to an exit code
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
