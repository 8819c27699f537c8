"""Command line entry point: ``python -m sgmn <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .arrayio import FormatError, write_array
from .checkpoint import load_alignment
from .config import ConfigError, TrainConfig, from_flat, load_config, parse_config_text, save_config
from .data import CorpusSpec, corpus_checksum, generate_corpus, load_corpus
from .evaluate import embed_images, evaluate_recall, evaluate_split
from .experiments import GRIDS, PROFILES, format_table, profile_spec, run_grid
from .train import TrainingDiverged, train

log = logging.getLogger("sgmn")


def _parse_overrides(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _train_config(args) -> TrainConfig:
    overrides = _parse_overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config:
        return load_config(args.config, overrides)
    return from_flat(overrides)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def cmd_generate_data(args) -> int:
    values: dict = dict(PROFILES[args.profile])
    if args.config:
        values.update(parse_config_text(Path(args.config).read_text()))
    types = {f.name: f.type for f in dataclasses.fields(CorpusSpec)}
    for name in types:
        flag = getattr(args, f"spec_{name}", None)
        if flag is not None:
            values[name] = flag
    if args.seed is not None:
        values["seed"] = args.seed
    unknown = set(values) - set(types)
    if unknown:
        raise ConfigError(f"unknown corpus keys {sorted(unknown)}")
    defaults = CorpusSpec()
    spec = CorpusSpec(**{k: type(getattr(defaults, k))(v) for k, v in values.items()})
    out = generate_corpus(spec, args.out_dir)
    checksum = corpus_checksum(out)
    print(f"wrote corpus to {out} ({spec.num_products} products, checksum {checksum[:16]})")
    return 0


def cmd_train(args) -> int:
    cfg = _train_config(args)
    corpus = load_corpus(args.corpus)
    result = train(cfg, corpus, args.out_dir)
    last = result.metrics[-1] if result.metrics else {}
    print(f"trained {result.step} steps; final total loss {last.get('loss_total', float('nan')):.4f}; "
          f"checkpoint at {Path(args.out_dir) / 'checkpoint.bin'}")
    return 0


def _recall_curve(ranks: np.ndarray, gallery_size: int, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ks = np.arange(1, gallery_size + 1)
    curve = [(ranks < k).mean() for k in ks]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ks, curve, marker=".")
    ax.set_xlabel("K")
    ax.set_ylabel("R@K")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_eval(args) -> int:
    torch.manual_seed(args.seed or 0)
    gra, cfg = load_alignment(args.checkpoint)
    overrides = _parse_overrides(args.set)
    if args.config:
        overrides = {**parse_config_text(Path(args.config).read_text()), **overrides}
    cfg = from_flat(overrides, cfg)
    corpus = load_corpus(args.corpus)
    recall, _, ranks = evaluate_split(gra, corpus, args.split, cfg.weights.lam, cfg.use_text)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.txt")
    history_path = Path(args.checkpoint).with_name("metrics.jsonl")
    history = [json.loads(line) for line in history_path.read_text().splitlines()] if history_path.is_file() else []
    report = {"checkpoint": str(args.checkpoint), "corpus": str(args.corpus), "split": args.split,
              "lam": cfg.weights.lam, "use_text": cfg.use_text, "recall": recall,
              "ranks": ranks.tolist(), "loss_history": history}
    _write_json(out / "report.json", report)
    _recall_curve(ranks, len(corpus.gallery_images), out / "recall_curve.png")
    print(" ".join(f"{k}={v:.3f}" for k, v in recall.items()))
    return 0


def cmd_embed(args) -> int:
    gra, cfg = load_alignment(args.checkpoint)
    corpus = load_corpus(args.corpus)
    emb = embed_images(gra, corpus.gallery_images, corpus.gallery_titles if cfg.use_text else None)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.txt")
    write_array(out / "gallery_visual.f32", emb.visual.astype(np.float32))
    files = {"visual": "gallery_visual.f32"}
    if emb.text is not None:
        write_array(out / "gallery_text.f32", emb.text.astype(np.float32))
        files["text"] = "gallery_text.f32"
    _write_json(out / "embeddings.json", {"product_ids": [g["product_id"] for g in corpus.gallery],
                                          "files": files, "dim": int(emb.visual.shape[1])})
    print(f"wrote {len(emb.visual)} gallery embeddings to {out}")
    return 0


def cmd_ablate(args) -> int:
    base = _train_config(args)
    corpus = load_corpus(args.corpus)
    seeds = [base.seed + i for i in range(args.num_seeds)]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(base, out / "config.txt")
    with (out / "ablation_runs.jsonl").open("w") as fh:
        def record(row):
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            fh.flush()
            log.info("%s seed %d: R@1 %.3f", row["variant"], row["seed"], row["R@1"])

        _, means = run_grid(base, corpus, seeds, GRIDS[args.grid], out / "runs", args.split, record)
    with (out / "ablation.jsonl").open("w") as fh:
        for row in means:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(format_table(means))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgmn", description=__doc__, allow_abbrev=False)
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", type=Path, default=None, help="flat key = value file")
        p.add_argument("--out-dir", type=Path, required=out_required)

    p = sub.add_parser("generate-data", help="write a synthetic corpus", allow_abbrev=False)
    common(p)
    p.add_argument("--profile", choices=sorted(PROFILES), default="standard")
    defaults = CorpusSpec()
    for f in dataclasses.fields(CorpusSpec):
        if f.name == "seed":
            continue
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"spec_{f.name}",
                       type=type(getattr(defaults, f.name)), default=None)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train on a corpus", allow_abbrev=False)
    common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a split and write report.json + recall_curve.png",
                       allow_abbrev=False)
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override, e.g. lam=0")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed", help="export gallery embeddings", allow_abbrev=False)
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("ablate", help="train and evaluate the component grid", allow_abbrev=False)
    common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--grid", choices=sorted(GRIDS), default="leave-one-out")
    p.add_argument("--num-seeds", type=int, default=3)
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormatError, FileNotFoundError, KeyError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
