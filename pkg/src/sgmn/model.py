"""Full training-time model: alignment encoders plus the graph and mining heads."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import TrainConfig
from .encoders import GlobalAlignment
from .graph import GraphInteraction, graph_loss, kl_alignment_loss, stack_image_sequence
from .mining import SelectiveFusion
from .objectives import similarity_loss, total_loss


@dataclass
class Batch:
    clips: torch.Tensor  # (N, L, H, W)
    images: torch.Tensor  # (N, H, W)
    asr: torch.Tensor  # (N, T) token ids
    titles: torch.Tensor  # (N, T')


LOSS_KEYS = ("total", "similarity", "graph_triplet", "kl", "mining")


class SGMN(nn.Module):
    def __init__(self, cfg: TrainConfig):
        super().__init__()
        self.cfg = cfg
        enc = cfg.encoder
        self.gra = GlobalAlignment(enc, use_tmc=cfg.use_tmc)
        self.gci = GraphInteraction(enc.embed_dim, enc.num_heads, enc.frame_count, cfg.batch_size,
                                    cfg.conn_k, cfg.mask_rule, enc.mlp_ratio) if cfg.use_gci else None
        self.smf = SelectiveFusion(enc.embed_dim, enc.num_heads, cfg.k_mine, cfg.alpha) if cfg.use_smf else None

    def forward(self, batch: Batch) -> dict[str, torch.Tensor]:
        """Loss components for one batch of paired clips and product images."""
        cfg, w = self.cfg, self.cfg.weights
        asr = batch.asr if cfg.use_text else None
        titles = batch.titles if cfg.use_text else None
        v_vis, v_text, video = self.gra.embed_videos(batch.clips, asr)
        i_vis, i_text, image = self.gra.embed_images(batch.images, titles)
        zero = v_vis.sum() * 0.0
        losses = {"similarity": similarity_loss(v_vis, i_vis, v_text, i_text, w.lam, w.margin),
                  "graph_triplet": zero, "kl": zero, "mining": zero}
        if self.gci is not None:
            s_v = video.enhanced
            s_i = stack_image_sequence(image.cls, s_v.shape[1])
            v_g, i_g, graph = self.gci(s_v, s_i)
            losses["graph_triplet"] = graph_loss(v_g, i_g, s_v, s_i, w.margin)
            losses["kl"] = kl_alignment_loss(graph)
        if self.smf is not None:
            losses["mining"] = self.smf(v_vis, i_vis, v_text, i_text)[0]
        losses["total"] = total_loss(losses["similarity"], losses["graph_triplet"] + losses["kl"],
                                     losses["mining"], w.beta1, w.beta2)
        return losses
