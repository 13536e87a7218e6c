"""Accuracy vs. surviving transitions on the planted-bigram task.

Runs fit/prune/finetune for a grid of multiples of the balanced lambda over
several seeds and writes the tradeoff CSV.

    python3 scripts/tradeoff_experiment.py --seeds 0 1 2 --out tradeoff.csv
"""

import argparse
import logging

import numpy as np

from sparse_rrnn.data import SynthConfig, encode, synth_generate
from sparse_rrnn.model import RationalModel, accuracy
from sparse_rrnn.pruning import count_transitions
from sparse_rrnn.training import TrainConfig, init_lambda_balance, three_stage_pipeline
from sparse_rrnn.visualize import emit_tradeoff_csv


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--factors", type=float, nargs="+", default=[0.0, 0.0625, 0.25, 1.0, 4.0])
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--out", default="tradeoff.csv")
    args = p.parse_args()
    logging.basicConfig(level=logging.WARNING)

    results = {f: [] for f in args.factors}
    for seed in args.seeds:
        data = synth_generate(SynthConfig(seed=seed))
        tr, dv, te = (encode(x, data.table) for x in (data.train, data.dev, data.test))
        m0 = RationalModel.init([4] * 8, 10, np.random.default_rng(seed))
        lam = init_lambda_balance(m0, tr)
        cfg = TrainConfig(learning_rate=args.learning_rate, rng_seed=seed)
        for f in args.factors:
            res = three_stage_pipeline(m0, tr, dv, cfg, lam * f)
            acc = accuracy(res.model, te.x, te.y)
            n = count_transitions(res.structure)
            results[f].append((n, acc))
            print(f"seed {seed} lambda {f:g}*{lam:.3g}: {n} transitions, test acc {acc:.3f}", flush=True)

    rows = []
    for f, vals in results.items():
        t = np.array([v[0] for v in vals], dtype=float)
        a = np.array([v[1] for v in vals])
        rows.append((t.mean(), a.mean(), a.std(), t.std(), f"group_lasso_x{f:g}" if f else "baseline"))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(emit_tradeoff_csv(rows))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
