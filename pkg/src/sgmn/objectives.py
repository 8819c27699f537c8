"""Loss functions: bidirectional triplet, similarity loss and the weighted total."""

from __future__ import annotations

import torch
import torch.nn.functional as F

NORM_EPS = 1e-8


def cosine_matrix(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Cosine similarity of every row of ``a`` with every row of ``b``; zero rows give 0."""
    return F.normalize(a, dim=-1, eps=NORM_EPS) @ F.normalize(b, dim=-1, eps=NORM_EPS).T


def triplet_loss(a: torch.Tensor, b: torch.Tensor, margin: float = 0.2) -> torch.Tensor:
    """Hinge triplet loss summed over all in-batch negatives in both directions.

    Row ``j`` of ``a`` and row ``j`` of ``b`` form the positive pair. For each
    anchor pair the hinge ``margin - s(a_j, b_j) + s(neg)`` is summed over
    negative ``b`` rows and negative ``a`` rows, then averaged over anchors.
    """
    n = a.shape[0]
    if n < 2:
        return a.sum() * 0.0
    s = cosine_matrix(a, b)
    pos = s.diagonal()
    off = ~torch.eye(n, dtype=torch.bool, device=s.device)
    cost_b = (margin - pos.unsqueeze(1) + s).clamp(min=0)  # negatives b_k for anchor a_j
    cost_a = (margin - pos.unsqueeze(0) + s).clamp(min=0)  # negatives a_k for anchor b_j
    per_anchor = (cost_b * off).sum(dim=1) + (cost_a * off).sum(dim=0)
    return per_anchor.mean()


def similarity_loss(v_visual, i_visual, v_text=None, i_text=None, lam: float = 0.5, margin: float = 0.2):
    loss = triplet_loss(v_visual, i_visual, margin)
    if v_text is not None and i_text is not None and lam:
        loss = loss + lam * triplet_loss(v_text, i_text, margin)
    return loss


def total_loss(l_s, l_g, l_m, beta1: float = 0.7, beta2: float = 0.3):
    """``l_s + beta1 * l_g + beta2 * l_m`` where ``l_g`` is the graph triplet plus KL term."""
    return l_s + beta1 * l_g + beta2 * l_m
