"""Global representation alignment: visual, motion and text encoders.

The image and video paths share one :class:`VisualEncoder`; a clip is encoded
by flattening its frames into the image batch, so per-frame class tokens are
the very same computation as encoding each frame as an image.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import ConfigError, EncoderConfig
from .layers import TransformerBlock

TOKEN_INIT_STD = 0.02


@dataclass
class ImageEncoding:
    cls: torch.Tensor  # (N, D)
    hidden: torch.Tensor  # (N, P, D)


@dataclass
class MotionTokens:
    diffs: torch.Tensor  # (N, L-1, D) frame-to-frame differences
    token: torch.Tensor  # (N, D)


@dataclass
class VideoEncoding:
    cls_seq: torch.Tensor  # (N, L, D) raw per-frame class tokens
    hidden: torch.Tensor  # (N, L, P, D)
    enhanced: torch.Tensor  # (N, L, D) after motion compensation
    pooled: torch.Tensor  # (N, D) frame mean of ``enhanced``
    motion: MotionTokens


@dataclass
class TextEncoding:
    raw: torch.Tensor  # (N, D) frozen backbone feature
    filtered: torch.Tensor  # (N, D)


def patchify(images: torch.Tensor, patch: int) -> torch.Tensor:
    """(N, H, W) -> (N, P, patch*patch), patches in row-major order."""
    n, h, w = images.shape
    x = images.reshape(n, h // patch, patch, w // patch, patch)
    return x.permute(0, 1, 3, 2, 4).reshape(n, (h // patch) * (w // patch), patch * patch)


class VisualEncoder(nn.Module):
    """Patch transformer producing a class token and per-patch features."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.embed_dim
        self.patch_embed = nn.Linear(cfg.patch_size**2, d)
        self.cls_token = nn.Parameter(torch.randn(1, 1, d) * TOKEN_INIT_STD)
        self.pos_embed = nn.Parameter(torch.randn(1, cfg.num_patches + 1, d) * TOKEN_INIT_STD)
        self.blocks = nn.ModuleList(
            TransformerBlock(d, cfg.num_heads, cfg.mlp_ratio) for _ in range(cfg.num_layers)
        )
        self.norm = nn.LayerNorm(d)

    def tokens(self, images: torch.Tensor) -> torch.Tensor:
        """Input token sequence (class token first) before the transformer layers."""
        patches = self.patch_embed(patchify(images, self.cfg.patch_size))
        cls = self.cls_token.expand(images.shape[0], -1, -1)
        return torch.cat([cls, patches], dim=1) + self.pos_embed

    def forward(self, images: torch.Tensor) -> ImageEncoding:
        s = self.cfg.image_size
        if images.dim() == 2:
            images = images.unsqueeze(0)
        if images.dim() != 3 or tuple(images.shape[-2:]) != (s, s):
            raise ConfigError(f"expected images of shape (N, {s}, {s}), got {tuple(images.shape)}")
        x = self.tokens(images.to(self.patch_embed.weight.dtype))
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        return ImageEncoding(cls=x[:, 0], hidden=x[:, 1:])


class TemporalMotionCompensation(nn.Module):
    """Inject a motion token built from frame differences, attend over time, drop it.

    The difference projection has no bias, so a clip of identical frames
    always yields the zero token.
    """

    def __init__(self, dim: int, num_heads: int, mlp_ratio: int = 2):
        super().__init__()
        self.motion_proj = nn.Linear(dim, dim, bias=False)
        nn.init.normal_(self.motion_proj.weight, std=TOKEN_INIT_STD)
        self.block = TransformerBlock(dim, num_heads, mlp_ratio)

    def motion(self, frames_repr: torch.Tensor) -> MotionTokens:
        diffs = frames_repr[:, 1:] - frames_repr[:, :-1]
        if diffs.shape[1] == 0:
            token = frames_repr.new_zeros(frames_repr.shape[0], frames_repr.shape[-1])
        else:
            token = self.motion_proj(diffs).mean(dim=1)
        return MotionTokens(diffs=diffs, token=token)

    def forward(self, cls_seq: torch.Tensor, frames_repr: torch.Tensor | None = None):
        """Return ``(enhanced, pooled, motion)`` for a (N, L, D) class-token sequence."""
        if cls_seq.dim() != 3:
            raise ConfigError(f"expected (N, L, D) sequence, got {tuple(cls_seq.shape)}")
        frames_repr = cls_seq if frames_repr is None else frames_repr
        if frames_repr.shape != cls_seq.shape:
            raise ConfigError("frames_repr must match cls_seq in shape")
        motion = self.motion(frames_repr)
        x = torch.cat([motion.token.unsqueeze(1), cls_seq], dim=1)
        enhanced = self.block(x)[:, 1:]
        return enhanced, enhanced.mean(dim=1), motion


class TextBackbone(nn.Module):
    """Randomly initialised, frozen sentence encoder (embedding, one attention layer, mean pool)."""

    def __init__(self, vocab_size: int, dim: int, num_heads: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.embed = nn.Embedding(vocab_size, dim)
        self.block = TransformerBlock(dim, num_heads)
        self.requires_grad_(False)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.dim() == 1:
            tokens = tokens.unsqueeze(0)
        if tokens.numel() and (int(tokens.min()) < 0 or int(tokens.max()) >= self.vocab_size):
            raise ValueError(f"token id outside vocabulary [0, {self.vocab_size})")
        return self.block(self.embed(tokens.long())).mean(dim=1)


class FilterLayer(nn.Module):
    """Sigmoid-gated linear unit: ``sigmoid(Wg x + bg) * (Wp x + bp)``."""

    def __init__(self, dim: int):
        super().__init__()
        self.gate = nn.Linear(dim, dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, raw: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.gate(raw)) * self.proj(raw)


class GlobalAlignment(nn.Module):
    """Independent global embeddings for clips, product images and both text streams.

    This is the only part of the model needed at inference time.
    """

    def __init__(self, cfg: EncoderConfig, use_tmc: bool = True):
        super().__init__()
        self.cfg = cfg
        self.use_tmc = use_tmc
        d = cfg.embed_dim
        self.visual = VisualEncoder(cfg)
        self.tmc = TemporalMotionCompensation(d, cfg.num_heads, cfg.mlp_ratio)
        self.text_backbone = TextBackbone(cfg.vocab_size, d, cfg.num_heads)
        self.text_filter = FilterLayer(d)  # shared by ASR and title streams

    def encode_image(self, images: torch.Tensor) -> ImageEncoding:
        return self.visual(images)

    def encode_video(self, clips: torch.Tensor) -> VideoEncoding:
        if clips.dim() == 3:
            clips = clips.unsqueeze(0)
        length = self.cfg.frame_count
        if clips.dim() != 4 or clips.shape[1] != length:
            raise ConfigError(f"expected clips of shape (N, {length}, H, W), got {tuple(clips.shape)}")
        n = clips.shape[0]
        enc = self.visual(clips.reshape(n * length, *clips.shape[2:]))
        cls_seq = enc.cls.reshape(n, length, -1)
        hidden = enc.hidden.reshape(n, length, *enc.hidden.shape[1:])
        if self.use_tmc:
            enhanced, pooled, motion = self.tmc(cls_seq)
        else:
            motion = self.tmc.motion(cls_seq)
            enhanced, pooled = cls_seq, cls_seq.mean(dim=1)
        return VideoEncoding(cls_seq, hidden, enhanced, pooled, motion)

    def encode_text(self, tokens: torch.Tensor) -> TextEncoding:
        raw = self.text_backbone(tokens).to(self.text_filter.gate.weight.dtype)
        return TextEncoding(raw=raw, filtered=self.text_filter(raw))

    def embed_videos(self, clips, asr_tokens=None):
        """Unit-norm pooled video (and ASR text) embeddings."""
        video = self.encode_video(clips)
        v_text = None if asr_tokens is None else F.normalize(self.encode_text(asr_tokens).filtered, dim=-1)
        return F.normalize(video.pooled, dim=-1), v_text, video

    def embed_images(self, images, title_tokens=None):
        """Unit-norm image (and title text) embeddings."""
        image = self.encode_image(images)
        i_text = None if title_tokens is None else F.normalize(self.encode_text(title_tokens).filtered, dim=-1)
        return F.normalize(image.cls, dim=-1), i_text, image
