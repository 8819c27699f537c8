"""Train the full model on the standard corpus for several seeds and report test recall.

    python3 scripts/retrieval.py --seeds 0 1 2 --work-dir runs/retrieval
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from sgmn.config import TrainConfig, from_flat
from sgmn.experiments import ensure_corpus, profile_spec, train_and_evaluate


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--profile", default="standard")
    parser.add_argument("--work-dir", type=Path, default=Path("runs/retrieval"))
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = parser.parse_args()

    overrides = dict(item.split("=", 1) for item in args.set)
    start = time.perf_counter()
    rows = []
    for seed in args.seeds:
        corpus = ensure_corpus(profile_spec(args.profile, seed=seed), args.work_dir / "corpora")
        cfg = from_flat({**overrides, "seed": seed}, TrainConfig())
        row = {"seed": seed, **train_and_evaluate(cfg, corpus, out_dir=args.work_dir / f"seed{seed}")}
        rows.append(row)
        print(json.dumps(row))
    summary = {k: float(np.mean([r[k] for r in rows])) for k in ("R@1", "R@5", "R@10", "R@mean")}
    summary["wall_seconds"] = time.perf_counter() - start
    print(json.dumps({"mean": summary}))
    (args.work_dir / "summary.json").write_text(json.dumps({"runs": rows, "mean": summary}, indent=1))


if __name__ == "__main__":
    main()
