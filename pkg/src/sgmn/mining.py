"""Selective multi-modal fusion: mine confusable gallery items and score them jointly.

For each anchor video the K most similar gallery images (visual plus weighted
text similarity) are selected, the anchor's own image is forced into the set,
and a small fusion / perception stack scores anchor-candidate pairs. The
mining loss is a symmetric cross-entropy over those mined scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import ConfigError
from .layers import MultiHeadAttention


@dataclass
class HardExampleSet:
    indices: torch.Tensor  # (N, K) gallery indices per anchor
    positive_position: torch.Tensor  # (N,) slot holding the anchor's true match
    v_visual: torch.Tensor  # (N, K, D) anchor video, repeated per slot
    i_visual: torch.Tensor  # (N, K, D) candidate images
    v_text: torch.Tensor | None = None
    i_text: torch.Tensor | None = None


@dataclass
class FusedFeature:
    v_fused: torch.Tensor
    i_fused: torch.Tensor
    cross: torch.Tensor  # (N, K, D)
    logits: torch.Tensor  # (N, K)


def multimodal_similarity(v_visual, i_visual, v_text=None, i_text=None, alpha: float = 0.5):
    """``V_vis I_vis^T + alpha V_text I_text^T`` over pooled instance vectors."""
    if v_visual.shape != i_visual.shape:
        raise ValueError(f"shape mismatch: {tuple(v_visual.shape)} vs {tuple(i_visual.shape)}")
    sim = v_visual @ i_visual.T
    if v_text is not None and i_text is not None and alpha:
        if v_text.shape != i_text.shape or v_text.shape[0] != v_visual.shape[0]:
            raise ValueError("text features do not match the visual batch")
        sim = sim + alpha * (v_text @ i_text.T)
    return sim


def select_indices(sim: torch.Tensor, k: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Top-``k`` gallery indices per row (ties to the lower index) with the diagonal forced in."""
    n = sim.shape[0]
    if sim.dim() != 2 or sim.shape[1] != n:
        raise ValueError(f"expected a square similarity matrix, got {tuple(sim.shape)}")
    if not 1 <= k <= n:
        raise ConfigError(f"K={k} outside [1, N={n}]")
    order = torch.sort(sim.detach(), dim=1, descending=True, stable=True).indices
    ind = order[:, :k].clone()
    rows = torch.arange(n, device=sim.device)
    present = ind == rows.unsqueeze(1)
    missing = ~present.any(dim=1)
    ind[missing, k - 1] = rows[missing]
    positive = (ind == rows.unsqueeze(1)).to(torch.long).argmax(dim=1)
    return ind, positive


def select_hard_examples(sim, k, v_visual, i_visual, v_text=None, i_text=None) -> HardExampleSet:
    ind, positive = select_indices(sim, k)

    def anchor(x):
        return None if x is None else x.unsqueeze(1).expand(-1, k, -1)

    def gather(x):
        return None if x is None else x[ind]

    return HardExampleSet(ind, positive, anchor(v_visual), gather(i_visual), anchor(v_text), gather(i_text))


class FusionLayer(nn.Module):
    """Cross-attention fusion: visual queries text, residual, layer norm."""

    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.attn = MultiHeadAttention(dim, num_heads)
        self.norm = nn.LayerNorm(dim)

    def forward(self, visual: torch.Tensor, text: torch.Tensor | None) -> torch.Tensor:
        if text is None:
            return self.norm(visual)
        if text.shape != visual.shape:
            raise ValueError("visual and text features must share leading shape")
        q, kv = visual.unsqueeze(-2), text.unsqueeze(-2)
        return self.norm(visual + self.attn(q, kv, kv).squeeze(-2))


class CrossPerception(nn.Module):
    """Score each anchor against its mined candidates.

    Candidates first attend to each other (self-attention over the set),
    then cross-attend to the anchor side (queries from the image side, keys
    and values from the video side). The cross feature is the element-wise
    interaction of the attended image feature with the anchor feature;
    its feature-axis average passes through a learned scalar affine head.
    """

    def __init__(self, dim: int, num_heads: int, init_scale: float = 10.0):
        super().__init__()
        self.self_attn = MultiHeadAttention(dim, num_heads)
        self.norm_self = nn.LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(dim, num_heads)
        self.norm_cross = nn.LayerNorm(dim)
        self.norm_anchor = nn.LayerNorm(dim)
        self.scale = nn.Parameter(torch.tensor(float(init_scale)))
        self.shift = nn.Parameter(torch.tensor(0.0))

    def forward(self, v_hat: torch.Tensor, i_hat: torch.Tensor) -> FusedFeature:
        i_set = self.norm_self(i_hat + self.self_attn(i_hat, i_hat, i_hat))
        attended = self.norm_cross(i_set + self.cross_attn(i_set, v_hat, v_hat))
        cross = attended * self.norm_anchor(v_hat)
        logits = self.scale * cross.mean(dim=-1) + self.shift
        return FusedFeature(v_hat, i_hat, cross, logits)


def mining_loss(logits: torch.Tensor, positive_position: torch.Tensor,
                candidates: torch.Tensor | None = None) -> torch.Tensor:
    """Symmetric cross-entropy over mined scores.

    ``logits[m, k]`` scores anchor ``m`` against its ``k``-th candidate.
    The first term is the per-anchor softmax over its candidates. The second
    term looks at it from the candidate side: for anchor ``m``'s true match,
    it competes against every other anchor that mined the same candidate.
    Candidates are identified by ``candidates`` (gallery indices); without it
    the slot number stands in for the candidate identity.
    """
    n, k = logits.shape
    rows = torch.arange(n, device=logits.device)
    log_p = torch.log_softmax(logits, dim=1)
    anchor_ce = -log_p[rows, positive_position].mean()
    if candidates is None:
        candidates = torch.arange(k, device=logits.device).expand(n, k)
    target = candidates[rows, positive_position]  # (N,)
    same = candidates.unsqueeze(0) == target.view(n, 1, 1)  # (target m, anchor m', slot k')
    scores = torch.where(same, logits.unsqueeze(0).expand(n, n, k), torch.full_like(same, -torch.inf, dtype=logits.dtype))
    lse = torch.logsumexp(scores.reshape(n, n * k), dim=1)
    candidate_ce = (lse - logits[rows, positive_position]).mean()
    return 0.5 * (anchor_ce + candidate_ce)


class SelectiveFusion(nn.Module):
    def __init__(self, dim: int, num_heads: int, k: int, alpha: float = 0.5):
        super().__init__()
        self.k = k
        self.alpha = alpha
        self.fusion = FusionLayer(dim, num_heads)  # shared by video and image sides
        self.perception = CrossPerception(dim, num_heads)

    def forward(self, v_visual, i_visual, v_text=None, i_text=None):
        """Return ``(loss, fused, hard_set)`` for unit-norm pooled embeddings of one batch."""
        k = min(self.k, v_visual.shape[0])
        sim = multimodal_similarity(v_visual, i_visual, v_text, i_text, self.alpha)
        hard = select_hard_examples(sim, k, v_visual, i_visual, v_text, i_text)
        v_hat = self.fusion(hard.v_visual, hard.v_text)
        i_hat = self.fusion(hard.i_visual, hard.i_text)
        fused = self.perception(v_hat, i_hat)
        return mining_loss(fused.logits, hard.positive_position, hard.indices), fused, hard
