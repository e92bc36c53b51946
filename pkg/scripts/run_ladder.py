"""Run the bias-reduction ladder on synthetic ntl-default data over several seeds.

    python3 scripts/run_ladder.py --seeds 0 1 2 --n-models 20 --folds 10
"""
import argparse
from dataclasses import replace

import numpy as np

from biasreduce.evaluation import DEFAULT_LADDER, run_bias_ladder
from biasreduce.pipeline import prepare_synthetic
from biasreduce.synthgen import PRESETS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="ntl-default", choices=sorted(PRESETS))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--n-models", type=int, default=20)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--threads", type=int, default=0)
    ap.add_argument("--estimate-unbiased", action="store_true")
    args = ap.parse_args()

    means = []
    for seed in args.seeds:
        prepared, _ = prepare_synthetic(replace(PRESETS[args.preset], seed=seed))
        report = run_bias_ladder(
            prepared.train, prepared.reference, DEFAULT_LADDER, seed=seed, n_models=args.n_models,
            folds=args.folds, threads=args.threads, estimate_unbiased=args.estimate_unbiased,
        )
        print(f"seed {seed}\n{report.render_table()}\n")
        means.append(report.mean_aucs)
    med = np.median(np.array(means), axis=0)
    print("median mean AUC per step:", " ".join(f"{m:.4f}" for m in med))
    print(f"final - first: {med[-1] - med[0]:+.4f}")


if __name__ == "__main__":
    main()
