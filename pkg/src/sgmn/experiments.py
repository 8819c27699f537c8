"""Named corpus profiles, train-then-evaluate runs and the component ablation grid."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from pathlib import Path

import numpy as np

from .config import TrainConfig, from_flat
from .data import Corpus, CorpusSpec, generate_corpus, load_corpus
from .evaluate import evaluate_split
from .train import train

# Corpus profiles. ``standard`` is the default retrieval setting; the other two
# stress one difficulty each: crowded scenes with large background products,
# and four near-duplicate variants per class whose ASR often omits the variant.
PROFILES: dict[str, dict] = {
    "standard": {},
    "distractor_heavy": dict(distractors_min=3, distractors_max=5, distractor_scale_min=0.4,
                             distractor_scale_max=0.6, occlusion_prob=0.5),
    "hard_negative": dict(variants_per_class=4, variant_mention_prob=0.5),
}

# (label, TE, TMC, GCI, SMF); leave-one-out around the full model
LEAVE_ONE_OUT = [("full", 1, 1, 1, 1), ("-TE", 0, 1, 1, 1), ("-TMC", 1, 0, 1, 1),
                 ("-GCI", 1, 1, 0, 1), ("-SMF", 1, 1, 1, 0)]
# cumulative rows A..E: components switched on one at a time
CUMULATIVE = [("A", 0, 0, 0, 0), ("B", 1, 0, 0, 0), ("C", 1, 1, 0, 0), ("D", 1, 1, 1, 0), ("E", 1, 1, 1, 1)]
GRIDS = {"leave-one-out": LEAVE_ONE_OUT, "cumulative": CUMULATIVE}
# (beta1, beta2) pairs of the loss-weight sweep
LOSS_WEIGHT_GRID = [(0.0, 1.0), (0.2, 0.8), (0.3, 0.7), (0.5, 0.5), (0.7, 0.3), (0.8, 0.2), (1.0, 0.0)]
TABLE_COLUMNS = ("variant", "TE", "TMC", "GCI", "SMF", "R@1", "R@5", "R@10", "R@mean")


def profile_spec(name: str, seed: int = 0, **overrides) -> CorpusSpec:
    if name not in PROFILES:
        raise KeyError(f"unknown corpus profile {name!r}; have {sorted(PROFILES)}")
    return CorpusSpec(**{**PROFILES[name], **overrides, "seed": seed})


def ensure_corpus(spec: CorpusSpec, root: str | Path) -> Corpus:
    """Load the corpus under ``root/<profile hash>`` or generate it there first."""
    key = json.dumps(dataclasses.asdict(spec), sort_keys=True)
    digest = hashlib.sha256(key.encode()).hexdigest()[:16]
    path = Path(root) / f"corpus-{digest}"
    if not (path / "manifest.jsonl").is_file():
        generate_corpus(spec, path)
    return load_corpus(path)


def variant_config(base: TrainConfig, te: int, tmc: int, gci: int, smf: int) -> TrainConfig:
    return from_flat({"use_text": bool(te), "use_tmc": bool(tmc), "use_gci": bool(gci),
                      "use_smf": bool(smf)}, base)


def weight_sweep_configs(base: TrainConfig) -> list[TrainConfig]:
    return [from_flat({"beta1": b1, "beta2": b2}, base) for b1, b2 in LOSS_WEIGHT_GRID]


def train_and_evaluate(cfg: TrainConfig, corpus: Corpus, split: str = "test",
                       out_dir: str | Path | None = None) -> dict:
    """Train from scratch, score ``split`` with the alignment encoders, return recall and timing."""
    start = time.perf_counter()
    result = train(cfg, corpus, out_dir)
    trained = time.perf_counter()
    recall, _, _ = evaluate_split(result.model.gra, corpus, split, cfg.weights.lam, cfg.use_text)
    return {**recall, "train_seconds": trained - start, "eval_seconds": time.perf_counter() - trained}


def run_grid(base: TrainConfig, corpus: Corpus, seeds, grid=LEAVE_ONE_OUT, out_dir=None,
             split: str = "test", log=None) -> tuple[list[dict], list[dict]]:
    """Train every grid variant for every seed; return (per-run rows, per-variant mean rows)."""
    runs, means = [], []
    for label, te, tmc, gci, smf in grid:
        rows = []
        for seed in seeds:
            cfg = from_flat({"seed": seed}, variant_config(base, te, tmc, gci, smf))
            run_dir = None if out_dir is None else Path(out_dir) / f"{label}_seed{seed}"
            metrics = train_and_evaluate(cfg, corpus, split, run_dir)
            row = {"variant": label, "TE": te, "TMC": tmc, "GCI": gci, "SMF": smf, "seed": seed, **metrics}
            rows.append(row)
            if log is not None:
                log(row)
        runs += rows
        mean = {"variant": label, "TE": te, "TMC": tmc, "GCI": gci, "SMF": smf, "seeds": list(seeds)}
        for key in ("R@1", "R@5", "R@10", "R@mean"):
            mean[key] = float(np.mean([r[key] for r in rows]))
        means.append(mean)
    return runs, means


def format_table(rows: list[dict]) -> str:
    def cell(row, col):
        v = row[col]
        if col in ("TE", "TMC", "GCI", "SMF"):
            return "x" if v else ""
        return f"{100 * v:.1f}" if isinstance(v, float) else str(v)

    lines = [" | ".join(TABLE_COLUMNS)]
    lines += [" | ".join(cell(r, c) for c in TABLE_COLUMNS) for r in rows]
    return "\n".join(lines)
