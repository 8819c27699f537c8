"""Attention building blocks shared by every module.

All layers run in whatever dtype their parameters hold, so the oracle and
gradient tests can call ``.double()`` on any module.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

# Finite stand-in for -inf: exp() underflows to exactly 0 in float32/float64,
# while log-softmax and its gradient stay finite (needed by the KL loss).
MASK_FILL = -1e9


def masked_logits(logits: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    """Replace disconnected entries by ``MASK_FILL``.

    Rows with no connected entry are reset to all zeros so that the softmax
    falls back to a uniform distribution instead of producing NaN.
    """
    if mask is None:
        return logits
    mask = mask.to(torch.bool)
    out = logits.masked_fill(~mask, MASK_FILL)
    empty = ~mask.any(dim=-1, keepdim=True)
    return torch.where(empty, torch.zeros_like(out), out)


class MultiHeadAttention(nn.Module):
    """Multi-head attention with an optional additive graph bias and a binary mask.

    ``bias`` and ``mask`` are indexed ``[..., query, key]`` and shared by all
    heads. Masked keys receive zero weight; a query with every key masked
    attends uniformly.
    """

    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"dim {dim} not divisible by num_heads {num_heads}")
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        *lead, n, _ = x.shape
        return x.reshape(*lead, n, self.num_heads, self.head_dim).transpose(-2, -3)

    def attention_weights(self, query, key, bias=None, mask=None) -> torch.Tensor:
        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(key))
        logits = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if bias is not None:
            logits = logits + bias.unsqueeze(-3)
        if mask is not None:
            logits = masked_logits(logits, mask.unsqueeze(-3).expand_as(logits))
        return torch.softmax(logits, dim=-1)

    def forward(self, query, key, value, bias=None, mask=None) -> torch.Tensor:
        weights = self.attention_weights(query, key, bias, mask)
        v = self._split(self.v_proj(value))
        out = (weights @ v).transpose(-2, -3)
        out = out.reshape(*out.shape[:-2], self.dim)
        return self.out_proj(out)


class FeedForward(nn.Module):
    """Residual pre-norm MLP: ``x + W2 gelu(W1 LN(x))``."""

    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.fc2(F.gelu(self.fc1(self.norm(x))))


class TransformerBlock(nn.Module):
    """Pre-norm self-attention block."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: int = 2):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, num_heads)
        self.ffn = FeedForward(dim, dim * mlp_ratio)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        h = self.norm(x)
        x = x + self.attn(h, h, h, mask=mask)
        return self.ffn(x)
