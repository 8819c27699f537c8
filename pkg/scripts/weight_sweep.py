"""Sweep (beta1, beta2) over the loss-weight grid on one corpus profile and report test R@1.

    python3 scripts/weight_sweep.py --profile standard --seeds 0
"""

import argparse
import json
from pathlib import Path

import numpy as np

from sgmn.config import TrainConfig, from_flat
from sgmn.experiments import ensure_corpus, profile_spec, train_and_evaluate, weight_sweep_configs


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--profile", default="standard")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0])
    parser.add_argument("--work-dir", type=Path, default=Path("runs/weight_sweep"))
    args = parser.parse_args()

    corpus = ensure_corpus(profile_spec(args.profile), args.work_dir / "corpora")
    print("beta1 | beta2 | R@1")
    for cfg in weight_sweep_configs(TrainConfig()):
        r1 = np.mean([train_and_evaluate(from_flat({"seed": s}, cfg), corpus)["R@1"] for s in args.seeds])
        print(json.dumps({"beta1": cfg.weights.beta1, "beta2": cfg.weights.beta2, "R@1": float(r1)}))


if __name__ == "__main__":
    main()
