"""Component ablation on one corpus profile, one row per variant (means over seeds).

    python3 scripts/ablation.py --profile distractor_heavy --variants=full,-TE
    python3 scripts/ablation.py --profile hard_negative --variants=full,-SMF
    python3 scripts/ablation.py --grid cumulative
"""

import argparse
import json
from pathlib import Path

from sgmn.config import TrainConfig, from_flat
from sgmn.experiments import GRIDS, PROFILES, ensure_corpus, format_table, profile_spec, run_grid


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--profile", choices=sorted(PROFILES), default="standard")
    parser.add_argument("--grid", choices=sorted(GRIDS), default="leave-one-out")
    parser.add_argument("--variants", default="", help="comma-separated subset of grid labels, e.g. --variants=full,-TE")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--corpus-seed", type=int, default=0)
    parser.add_argument("--work-dir", type=Path, default=Path("runs/ablation"))
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = parser.parse_args()

    grid = [row for row in GRIDS[args.grid] if not args.variants or row[0] in args.variants.split(",")]
    corpus = ensure_corpus(profile_spec(args.profile, seed=args.corpus_seed), args.work_dir / "corpora")
    base = from_flat(dict(item.split("=", 1) for item in args.set), TrainConfig())
    _, means = run_grid(base, corpus, args.seeds, grid, log=lambda r: print(json.dumps(r)))
    print(format_table(means))
    out = args.work_dir / f"{args.profile}_{args.grid}.jsonl"
    out.write_text("".join(json.dumps(r) + "\n" for r in means))


if __name__ == "__main__":
    main()
