"""Train a sparse model on the planted-bigram task and print its phrase table.

    python3 scripts/planted_patterns.py --seed 0 --top-n 5
"""

import argparse

import numpy as np

from sparse_rrnn.data import SynthConfig, encode, synth_generate
from sparse_rrnn.model import RationalModel, accuracy
from sparse_rrnn.training import TrainConfig, init_lambda_balance, three_stage_pipeline
from sparse_rrnn.visualize import render_pattern_table, top_bottom_phrases


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-n", type=int, default=5)
    p.add_argument("--lambda-factor", type=float, default=1.0, help="multiple of the balanced lambda")
    args = p.parse_args()

    data = synth_generate(SynthConfig(seed=args.seed))
    tr, dv, te = (encode(x, data.table) for x in (data.train, data.dev, data.test))
    m0 = RationalModel.init([4] * 8, 10, np.random.default_rng(args.seed))
    lam = init_lambda_balance(m0, tr) * args.lambda_factor
    res = three_stage_pipeline(m0, tr, dv, TrainConfig(rng_seed=args.seed), lam)
    print(f"planted pattern: {' '.join(data.pattern)}")
    print(f"lambda {lam:.4g}: surviving states {res.structure.surviving_states}, "
          f"test accuracy {accuracy(res.model, te.x, te.y):.3f}\n")
    phrases = top_bottom_phrases(res.model, tr.x, tr.tokens, args.top_n)
    print(render_pattern_table(phrases, res.model.ks, res.model.classifier_weight))


if __name__ == "__main__":
    main()
