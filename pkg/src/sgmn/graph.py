"""Graph-based cross-domain interaction between frame sequences and stacked images.

Every block (V2V, I2I, V2I, I2V) is an ``N x L x L`` matrix indexed
``[pair, query position, key position]``; its columns are the key positions.
A block is the product of a learned relevance matrix and a binary connection
mask derived from the frame-level similarities of the same pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .layers import FeedForward, MultiHeadAttention, masked_logits
from .objectives import triplet_loss

BLOCKS = ("V2V", "I2I", "V2I", "I2V")


def stack_image_sequence(i_visual: torch.Tensor, length: int) -> torch.Tensor:
    """Repeat each (N, D) image feature ``length`` times -> (N, L, D)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    return i_visual.unsqueeze(1).expand(-1, length, -1)


def pairwise_similarity(s_a: torch.Tensor, s_b: torch.Tensor) -> torch.Tensor:
    """Per-pair frame similarity ``H[n] = S_a[n] @ S_b[n].T``."""
    if s_a.shape != s_b.shape or s_a.dim() != 3:
        raise ValueError(f"shape mismatch: {tuple(s_a.shape)} vs {tuple(s_b.shape)}")
    return s_a @ s_b.transpose(-1, -2)


def _column_ranks(h: torch.Tensor) -> torch.Tensor:
    """Descending rank of every entry within its column; ties go to the lower row."""
    order = torch.sort(h, dim=-2, descending=True, stable=True).indices
    ranks = torch.empty_like(order)
    positions = torch.arange(h.shape[-2], device=h.device).view(1, -1, 1).expand_as(order)
    return ranks.scatter_(-2, order, positions)


def connection_mask(h: torch.Tensor, k_conn: int, rule: str = "mean_topk") -> torch.Tensor:
    """Binary (N, L, L) mask keeping, per column, top-``k_conn`` entries that clear the column mean.

    ``rule="literal"`` instead keeps top-``k_conn`` entries lying at or below the
    mean, i.e. the inequality exactly as ``mean - topK >= 0``.
    """
    if not 1 <= k_conn <= h.shape[-2]:
        raise ValueError(f"k_conn={k_conn} outside [1, {h.shape[-2]}]")
    h = h.detach()
    in_top = _column_ranks(h) < k_conn
    mean = h.mean(dim=-2, keepdim=True)
    # relative slack so that constant columns are not lost to rounding in the mean
    tol = 8 * torch.finfo(h.dtype).eps * h.abs().amax(dim=-2, keepdim=True)
    if rule == "mean_topk":
        keep = h - mean >= -tol
    elif rule == "literal":
        keep = mean - h >= -tol
    else:
        raise ValueError(f"unknown mask rule {rule!r}")
    return in_top & keep


class RelevanceMatrix(nn.Module):
    """Learned edge weights: column mean plus remapped sorted scores, mixed across the batch.

    The MLP sees each column sorted in descending order; its outputs are
    written back to the rows the sorted values came from. The batch linear
    layer (``linear -> ReLU -> linear`` over the N axis) acts independently at
    each (row, column) position, so the batch size is fixed at construction.
    """

    def __init__(self, seq_len: int, batch_size: int, hidden: int | None = None):
        super().__init__()
        hidden = hidden or seq_len
        self.seq_len = seq_len
        self.batch_size = batch_size
        self.mlp = nn.Sequential(nn.Linear(seq_len, hidden), nn.ReLU(), nn.Linear(hidden, seq_len))
        self.bll_in = nn.Linear(batch_size, batch_size)
        self.bll_out = nn.Linear(batch_size, batch_size)
        # start as a per-pair map: identity mixing across the batch
        for lin in (self.bll_in, self.bll_out):
            nn.init.eye_(lin.weight)
            nn.init.zeros_(lin.bias)

    def column_scores(self, h: torch.Tensor) -> torch.Tensor:
        cols = h.transpose(-1, -2)  # (N, column i, row j)
        sorted_vals, order = torch.sort(cols, dim=-1, descending=True, stable=True)
        remapped = torch.empty_like(sorted_vals).scatter(-1, order, self.mlp(sorted_vals))
        a = cols.mean(dim=-1, keepdim=True) + remapped
        return a.transpose(-1, -2)

    def batch_mix(self, a: torch.Tensor) -> torch.Tensor:
        x = a.permute(1, 2, 0)  # (L, L, N)
        x = self.bll_out(torch.relu(self.bll_in(x)))
        return x.permute(2, 0, 1)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        if h.shape[0] != self.batch_size or h.shape[-1] != self.seq_len:
            raise ValueError(
                f"relevance built for N={self.batch_size}, L={self.seq_len}; got {tuple(h.shape)}"
            )
        return self.batch_mix(self.column_scores(h))


@dataclass
class CrossDomainGraph:
    similarity: dict[str, torch.Tensor] = field(default_factory=dict)  # H per block
    mask: dict[str, torch.Tensor] = field(default_factory=dict)  # M per block (bool)
    relevance: dict[str, torch.Tensor] = field(default_factory=dict)  # R per block
    blocks: dict[str, torch.Tensor] = field(default_factory=dict)  # G = R * M per block

    def assembled(self) -> torch.Tensor:
        """Full (N, 2L, 2L) graph ``[[I2I, I2V], [V2I, V2V]]``."""
        b = self.blocks
        top = torch.cat([b["I2I"], b["I2V"]], dim=-1)
        bottom = torch.cat([b["V2I"], b["V2V"]], dim=-1)
        return torch.cat([top, bottom], dim=-2)

    def to_numpy(self) -> dict[str, object]:
        out: dict[str, object] = {}
        for kind in ("similarity", "mask", "relevance", "blocks"):
            for name, t in getattr(self, kind).items():
                out[f"{kind}_{name}"] = t.detach().cpu().numpy()
        return out


def build_graph(s_v, s_i, relevance, k_conn: int, rule: str = "mean_topk") -> CrossDomainGraph:
    """Construct all four blocks from video and stacked-image sequences of one batch.

    ``relevance`` is one module applied to every block, or a dict of per-block modules.
    """
    if isinstance(relevance, nn.Module):
        relevance = dict.fromkeys(BLOCKS, relevance)
    h_v2i = pairwise_similarity(s_v, s_i)
    sims = {
        "V2V": pairwise_similarity(s_v, s_v),
        "I2I": pairwise_similarity(s_i, s_i),
        "V2I": h_v2i,
        "I2V": h_v2i.transpose(-1, -2),
    }
    graph = CrossDomainGraph(similarity=sims)
    for name in BLOCKS:
        h = sims[name]
        m = connection_mask(h, k_conn, rule)
        r = relevance[name](h)
        graph.mask[name] = m
        graph.relevance[name] = r
        graph.blocks[name] = r * m.to(r.dtype)
    return graph


def graph_masked_attention(attn: MultiHeadAttention, query, key, value, graph_block, mask_block):
    """Attention whose logits get ``+G`` on connected edges and zero weight elsewhere."""
    return attn(query, key, value, bias=graph_block, mask=mask_block)


class GraphInteraction(nn.Module):
    """Two graph-guided cross-attention branches followed by graph-guided self-attention."""

    def __init__(self, dim: int, num_heads: int, seq_len: int, batch_size: int, k_conn: int,
                 mask_rule: str = "mean_topk", mlp_ratio: int = 2):
        super().__init__()
        self.k_conn = k_conn
        self.mask_rule = mask_rule
        self.relevance = RelevanceMatrix(seq_len, batch_size)  # one scoring function for all four blocks
        self.attn_i2v = MultiHeadAttention(dim, num_heads)
        self.attn_v2i = MultiHeadAttention(dim, num_heads)
        self.norm_i = nn.LayerNorm(dim)
        self.norm_v = nn.LayerNorm(dim)
        self.attn_ii = MultiHeadAttention(dim, num_heads)
        self.attn_vv = MultiHeadAttention(dim, num_heads)
        self.ffn_i = FeedForward(dim, dim * mlp_ratio)
        self.ffn_v = FeedForward(dim, dim * mlp_ratio)

    def build(self, v_seq: torch.Tensor, i_seq: torch.Tensor) -> CrossDomainGraph:
        # graphs come from cosine similarities between frame and image features
        return build_graph(F.normalize(v_seq, dim=-1), F.normalize(i_seq, dim=-1),
                           self.relevance, self.k_conn, self.mask_rule)

    def forward(self, v_seq: torch.Tensor, i_seq: torch.Tensor, graph: CrossDomainGraph | None = None):
        """Return ``(v_g, i_g, graph)`` for (N, L, D) video and stacked-image sequences."""
        if graph is None:
            graph = self.build(v_seq, i_seq)
        g, m = graph.blocks, graph.mask
        i_m = self.norm_i(graph_masked_attention(self.attn_i2v, i_seq, v_seq, v_seq, g["I2V"], m["I2V"]))
        v_m = self.norm_v(graph_masked_attention(self.attn_v2i, v_seq, i_seq, i_seq, g["V2I"], m["V2I"]))
        i_g = self.ffn_i(graph_masked_attention(self.attn_ii, i_m, i_m, i_m, g["I2I"], m["I2I"]))
        v_g = self.ffn_v(graph_masked_attention(self.attn_vv, v_m, v_m, v_m, g["V2V"], m["V2V"]))
        return v_g, i_g, graph


def graph_loss(v_g, i_g, v_visual_seq, i_visual_seq, margin: float = 0.2) -> torch.Tensor:
    """Triplet terms between graph-enhanced and original features, frame-mean pooled."""
    vg, ig = v_g.mean(dim=1), i_g.mean(dim=1)
    vv, iv = v_visual_seq.mean(dim=1), i_visual_seq.mean(dim=1)
    return triplet_loss(vg, ig, margin) + triplet_loss(vv, ig, margin) + triplet_loss(vg, iv, margin)


def row_kl(graph_logits: torch.Tensor, mask: torch.Tensor | None, sim_logits: torch.Tensor) -> torch.Tensor:
    """Mean over rows of KL(softmax(masked graph row) || softmax(similarity row))."""
    log_p = torch.log_softmax(masked_logits(graph_logits, mask), dim=-1)
    log_q = torch.log_softmax(sim_logits, dim=-1)
    return (log_p.exp() * (log_p - log_q)).sum(dim=-1).mean()


def kl_alignment_loss(graph: CrossDomainGraph) -> torch.Tensor:
    return sum(
        row_kl(graph.blocks[name], graph.mask[name], graph.similarity[name]) for name in ("V2I", "I2V")
    )
