"""Inference scoring with the alignment encoders only, and recall@K."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .encoders import GlobalAlignment

DEFAULT_KS = (1, 5, 10)


@dataclass
class RankingResult:
    order: np.ndarray  # (Q, G) gallery indices, best first
    scores: np.ndarray  # (Q, G) scores aligned with ``order``; non-increasing per row
    recall_at: dict[int, float] = field(default_factory=dict)


@dataclass
class Embeddings:
    visual: np.ndarray  # (n, D) unit norm
    text: np.ndarray | None  # (n, D) unit norm


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


@torch.no_grad()
def embed_videos(gra: GlobalAlignment, clips, asr=None, chunk: int = 64) -> Embeddings:
    gra.eval()
    dtype = gra.visual.patch_embed.weight.dtype
    vis, txt = [], []
    for sl in _chunks(len(clips), chunk):
        v, t, _ = gra.embed_videos(torch.as_tensor(clips[sl], dtype=dtype),
                                   None if asr is None else torch.as_tensor(asr[sl]))
        vis.append(v.numpy())
        if t is not None:
            txt.append(t.numpy())
    return Embeddings(np.concatenate(vis), np.concatenate(txt) if txt else None)


@torch.no_grad()
def embed_images(gra: GlobalAlignment, images, titles=None, chunk: int = 256) -> Embeddings:
    gra.eval()
    dtype = gra.visual.patch_embed.weight.dtype
    vis, txt = [], []
    for sl in _chunks(len(images), chunk):
        v, t, _ = gra.embed_images(torch.as_tensor(images[sl], dtype=dtype),
                                   None if titles is None else torch.as_tensor(titles[sl]))
        vis.append(v.numpy())
        if t is not None:
            txt.append(t.numpy())
    return Embeddings(np.concatenate(vis), np.concatenate(txt) if txt else None)


def rank(query: Embeddings, gallery: Embeddings, lam: float = 0.5) -> RankingResult:
    """Sort the gallery by ``V_vis I_vis^T + lam V_text I_text^T``; ties go to the lower index."""
    if len(gallery.visual) == 0:
        raise ValueError("empty gallery")
    scores = query.visual @ gallery.visual.T
    if lam and query.text is not None and gallery.text is not None:
        scores = scores + lam * (query.text @ gallery.text.T)
    order = np.argsort(-scores, axis=1, kind="stable")
    return RankingResult(order=order, scores=np.take_along_axis(scores, order, axis=1))


def score_gallery(gra: GlobalAlignment, query_clips, query_asr, gallery_images, gallery_titles,
                  lam: float = 0.5) -> RankingResult:
    """Rank gallery products for each query clip; pass ``None`` text to score visually only."""
    if len(gallery_images) == 0:
        raise ValueError("empty gallery")
    q = embed_videos(gra, query_clips, query_asr)
    g = embed_images(gra, gallery_images, gallery_titles)
    return rank(q, g, lam)


def true_match_ranks(order: np.ndarray, truth) -> np.ndarray:
    """0-based rank of each query's true gallery index."""
    truth = np.asarray(truth)
    if truth.shape[0] != order.shape[0]:
        raise ValueError("one truth index per query required")
    if truth.size and (truth.min() < 0 or truth.max() >= order.shape[1]):
        raise ValueError("truth index outside gallery range")
    return np.argmax(order == truth[:, None], axis=1)


def evaluate_recall(rankings, truth, ks=DEFAULT_KS) -> dict[str, float]:
    """Recall@K for each K plus their mean (``R@mean``)."""
    order = rankings.order if isinstance(rankings, RankingResult) else np.asarray(rankings)
    ranks = true_match_ranks(order, truth)
    out = {f"R@{k}": float(np.mean(ranks < k)) if len(ranks) else 0.0 for k in ks}
    out["R@mean"] = float(np.mean([out[f"R@{k}"] for k in ks]))
    if isinstance(rankings, RankingResult):
        rankings.recall_at = {k: out[f"R@{k}"] for k in ks}
    return out


def evaluate_split(gra: GlobalAlignment, corpus, split: str = "test", lam: float = 0.5,
                   use_text: bool = True) -> tuple[dict[str, float], RankingResult, np.ndarray]:
    """Query every clip of ``split`` against the full product gallery."""
    data = corpus.split(split)
    result = score_gallery(gra, data.clips, data.asr if use_text else None,
                           corpus.gallery_images, corpus.gallery_titles if use_text else None,
                           lam if use_text else 0.0)
    recall = evaluate_recall(result, data.product_ids)
    return recall, result, true_match_ranks(result.order, data.product_ids)
