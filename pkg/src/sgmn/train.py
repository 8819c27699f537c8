"""Training loop: product-unique batches, frame masking, Adam with cosine decay."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .arrayio import write_array
from .checkpoint import build_optimizer, save_checkpoint
from .config import ConfigError, TrainConfig, save_config
from .data import Corpus, augment_mask_frames
from .model import LOSS_KEYS, SGMN, Batch

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: SGMN
    optimizer: torch.optim.Optimizer
    step: int
    metrics: list[dict] = field(default_factory=list)


def cosine_lr(base: float, step: int, total: int) -> float:
    """Cosine decay without warmup, reaching 0 at ``step == total``."""
    if total <= 0:
        return base
    return 0.5 * base * (1.0 + math.cos(math.pi * min(step, total) / total))


def batch_plan(product_ids: np.ndarray, batch_size: int, steps: int, rng: np.random.Generator):
    """Yield record-index batches in which every product appears at most once."""
    products = np.unique(product_ids)
    if batch_size > len(products):
        raise ConfigError(f"batch_size {batch_size} exceeds the {len(products)} distinct training products")
    by_product = {int(p): np.flatnonzero(product_ids == p) for p in products}
    for _ in range(steps):
        chosen = rng.choice(products, size=batch_size, replace=False)
        yield np.array([rng.choice(by_product[int(p)]) for p in chosen])


def make_batch(corpus: Corpus, idx: np.ndarray, cfg: TrainConfig, rng: np.random.Generator,
               dtype=torch.float32) -> Batch:
    split = corpus.split("train")
    clips = split.clips[idx]
    if cfg.mask_prob > 0:
        clips = augment_mask_frames(clips, cfg.mask_prob, (0.0, cfg.mask_ratio_max), rng)
    pids = split.product_ids[idx]
    return Batch(clips=torch.as_tensor(clips, dtype=dtype),
                 images=torch.as_tensor(corpus.gallery_images[pids], dtype=dtype),
                 asr=torch.as_tensor(split.asr[idx]),
                 titles=torch.as_tensor(corpus.gallery_titles[pids]))


def _dump_batch(out_dir: Path, batch: Batch, losses: dict, step: int) -> Path:
    dump = out_dir / f"nan_dump_step{step}"
    dump.mkdir(parents=True, exist_ok=True)
    for name in ("clips", "images", "asr", "titles"):
        write_array(dump / f"{name}.f32", getattr(batch, name).numpy().astype(np.float32))
    (dump / "losses.json").write_text(json.dumps({k: float(v.detach()) for k, v in losses.items()}, indent=1))
    return dump


def check_encoder_matches(cfg: TrainConfig, corpus: Corpus) -> None:
    spec, enc = corpus.spec, cfg.encoder
    if spec.image_size != enc.image_size or spec.frame_count != enc.frame_count:
        raise ConfigError(f"corpus is {spec.image_size}px x {spec.frame_count} frames, "
                          f"model expects {enc.image_size}px x {enc.frame_count} frames")
    if spec.vocab_size > enc.vocab_size:
        raise ConfigError(f"corpus vocabulary {spec.vocab_size} exceeds model vocab_size {enc.vocab_size}")


def train(cfg: TrainConfig, corpus: Corpus, out_dir: str | Path | None = None) -> TrainResult:
    """Optimise the total loss; with ``out_dir`` writes config, metrics.jsonl and checkpoint.bin."""
    check_encoder_matches(cfg, corpus)
    torch.set_num_threads(cfg.num_threads)
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = SGMN(cfg)
    optimizer = build_optimizer(model, cfg)

    split = corpus.split("train")
    steps_per_epoch = max(1, len(split.product_ids) // cfg.batch_size)
    total = steps_per_epoch * cfg.epochs
    out = Path(out_dir) if out_dir is not None else None
    metrics_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / "config.txt")
        metrics_fh = (out / "metrics.jsonl").open("w")

    metrics: list[dict] = []
    model.train()
    try:
        for step, idx in enumerate(batch_plan(split.product_ids, cfg.batch_size, total, rng)):
            lr = cosine_lr(cfg.lr, step, total)
            for group in optimizer.param_groups:
                group["lr"] = lr
            batch = make_batch(corpus, idx, cfg, rng)
            losses = model(batch)
            if not torch.isfinite(losses["total"]):
                where = _dump_batch(out or Path("."), batch, losses, step)
                raise TrainingDiverged(f"non-finite loss at step {step}; batch dumped to {where}")
            optimizer.zero_grad(set_to_none=True)
            losses["total"].backward()
            optimizer.step()
            row = {"event": "step", "step": step, "epoch": step // steps_per_epoch, "lr": lr}
            row.update({f"loss_{k}": float(losses[k].detach()) for k in LOSS_KEYS})
            metrics.append(row)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(row) + "\n")
            if step % steps_per_epoch == 0:
                log.info("step %d/%d loss %.4f", step, total, row["loss_total"])
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    model.eval()
    if out is not None:
        save_checkpoint(out / "checkpoint.bin", model, optimizer, total)
    return TrainResult(model, optimizer, total, metrics)
