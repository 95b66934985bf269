#!/usr/bin/env python3
"""Planted-signal calibration of the synthetic generator.

For each strength, prints the exact Bayes accuracy of an observer who sees the
filing's signal-sentence counts (brute-force enumeration over outlook, counts
and movement, reweighted to balanced classes) next to the Monte-Carlo test
accuracy of boosted trees on lexicon features.

    python scripts/calibrate_generator.py --strengths 0 0.5 1 --seeds 3
"""

import argparse
import itertools
import tempfile
from pathlib import Path

import numpy as np

from creditcast.dataset import build_bundle
from creditcast.encoders import make_encoder
from creditcast.features import build_features
from creditcast.ingestion import ingest
from creditcast.model_boost import BoostParams, predict_boost, train_boost
from creditcast.synth import BASE_RATES, generate_synthetic_corpus

LABELS = ("down", "same", "up")
# mirrors synth._signal_counts: every (n_pos, n_neg) pair an outlook can emit, uniformly
COUNTS = {
    "up": [(p, 0) for p in range(2, 5)],
    "down": [(0, n) for n in range(2, 5)],
    "same": list(itertools.product(range(2), range(2))),
}


def bayes_rate(strength: float) -> float:
    joint = {}
    for z, obs in COUNTS.items():
        for o in obs:
            for m in LABELS:
                pm = strength * (m == z) + (1 - strength) * BASE_RATES[m]
                joint[o, m] = joint.get((o, m), 0.0) + BASE_RATES[z] / len(obs) * pm
    marg = {m: sum(v for (_, mm), v in joint.items() if mm == m) for m in LABELS}
    # undersampling to equal class counts divides by the class marginal
    bal = {k: v / marg[k[1]] / 3 for k, v in joint.items()}
    obs = {o for o, _ in bal}
    return sum(max(bal.get((o, m), 0.0) for m in LABELS) for o in obs)


def lexicon_accuracy(corpus: Path, seed: int) -> float:
    sources, _ = ingest(*(corpus / f"{k}.csv" for k in ("ratings", "filings", "fundamentals", "macro")))
    bundle = build_bundle(sources, 1, seed=seed)
    enc = make_encoder("lm").fit(sorted({s.text_window[0] for s in bundle.train}), "train")
    tables = {s: build_features(bundle.split(s), "text_only", enc) for s in ("train", "val", "test")}
    model = train_boost(tables["train"], tables["val"], BoostParams(n_trees=100, max_depth=3, seed=seed))
    test = tables["test"]
    return float(np.mean([p.label == l for p, l in zip(predict_boost(model, test), test.labels)]))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--strengths", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75, 1.0])
    ap.add_argument("--seeds", type=int, default=3, help="generator seeds per strength")
    ap.add_argument("--companies", type=int, default=60)
    ap.add_argument("--quarters", type=int, default=40)
    args = ap.parse_args()

    print(f"{'strength':>8}  {'bayes':>6}  {'boost+lm':>8}  {'sd':>5}")
    with tempfile.TemporaryDirectory() as tmp:
        for s in args.strengths:
            accs = []
            for seed in range(args.seeds):
                d = Path(tmp) / f"{s}_{seed}"
                generate_synthetic_corpus(d, seed=seed, n_companies=args.companies, n_quarters=args.quarters,
                                          strength=s)
                accs.append(lexicon_accuracy(d, seed))
            print(f"{s:8.2f}  {bayes_rate(s):6.3f}  {np.mean(accs):8.3f}  {np.std(accs):5.3f}")


if __name__ == "__main__":
    main()
