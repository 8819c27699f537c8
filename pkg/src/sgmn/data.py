"""Synthetic livestream corpus: procedural product glyphs, cluttered clips and keyword captions.

A product is a ``(class, variant)`` pair. Classes differ by shape and fill
pattern; variants of one class differ only by the position of a small marker,
which makes them the near-duplicate hard negatives. A clip shows the
intended product moving through the frame (with scale, brightness and jitter
changes, optional occluders) among static distractor products; the gallery
image shows it clean and centred.

On disk a corpus directory holds::

    spec.json        generation parameters
    gallery.jsonl    one product per line: product_id, class_id, variant_id, title_tokens, image
    manifest.jsonl   one pair per line: id, split, product_id, class_id, variant_id,
                     distractor_ids, asr_tokens, title_tokens, clip, image
    gallery/*.f32    (H, W) product images
    clips/*.f32      (L, H, W) sampled clip frames

Array files use the format in :mod:`sgmn.arrayio`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arrayio import read_array, write_array
from .config import ConfigError

NUM_SHAPES = 6
NUM_PATTERNS = 5
# marker centres in glyph coordinates, one per variant
MARKER_POSITIONS = [(-0.45, -0.45), (0.45, -0.45), (-0.45, 0.45), (0.45, 0.45),
                    (0.0, -0.5), (0.0, 0.5), (-0.5, 0.0), (0.5, 0.0)]
MARKER_HALF = 0.16
MARKER_VALUE = 0.0
PRODUCT_SCALE = 0.75  # glyph half-size / canvas half-size in gallery images
SOURCE_FRAMES_PER_FRAME = 3


@dataclass
class CorpusSpec:
    num_classes: int = 16
    variants_per_class: int = 2
    num_train: int = 400
    num_test: int = 100
    image_size: int = 32
    frame_count: int = 6
    distractors_min: int = 1
    distractors_max: int = 3
    occlusion_prob: float = 0.3
    vocab_size: int = 64
    noise_tokens_per_caption: int = 2
    variant_mention_prob: float = 1.0  # chance the ASR stream names the variant keyword
    # scene geometry, in glyph half-size / canvas half-size: the promoted product
    # is held close to the camera, background products sit further away
    intended_scale_min: float = 0.65
    intended_scale_max: float = 0.8
    distractor_scale_min: float = 0.25
    distractor_scale_max: float = 0.35
    drift: float = 0.2  # max start offset and total travel of the promoted product
    seed: int = 0

    def __post_init__(self) -> None:
        counts = (self.num_classes, self.variants_per_class, self.num_train, self.num_test,
                  self.image_size, self.frame_count, self.vocab_size)
        if min(counts) < 1:
            raise ConfigError("corpus counts must be >= 1")
        if self.num_classes > NUM_SHAPES * NUM_PATTERNS:
            raise ConfigError(f"at most {NUM_SHAPES * NUM_PATTERNS} classes are renderable")
        if self.variants_per_class > len(MARKER_POSITIONS):
            raise ConfigError(f"at most {len(MARKER_POSITIONS)} variants per class")
        if not 0 <= self.distractors_min <= self.distractors_max:
            raise ConfigError("need 0 <= distractors_min <= distractors_max")
        if self.distractors_max > 0 and self.num_products < 2:
            raise ConfigError("distractors need at least two products")
        if not (0.0 <= self.occlusion_prob <= 1.0 and 0.0 <= self.variant_mention_prob <= 1.0):
            raise ConfigError("probabilities must lie in [0, 1]")
        scales = (self.intended_scale_min, self.intended_scale_max,
                  self.distractor_scale_min, self.distractor_scale_max)
        if not (0 < self.intended_scale_min <= self.intended_scale_max
                and 0 < self.distractor_scale_min <= self.distractor_scale_max) or max(scales) > 1:
            raise ConfigError("scene scales must satisfy 0 < min <= max <= 1")
        if not 0.0 <= self.drift <= 1.0:
            raise ConfigError("drift must lie in [0, 1]")
        if self.noise_tokens_per_caption < 0:
            raise ConfigError("noise_tokens_per_caption must be >= 0")
        if self.noise_tokens_per_caption and self.vocab_size <= self.noise_offset:
            raise ConfigError(
                f"vocab_size {self.vocab_size} leaves no noise tokens after {self.noise_offset} keywords"
            )
        if self.vocab_size < self.noise_offset:
            raise ConfigError("vocab_size smaller than the keyword range")

    @property
    def num_products(self) -> int:
        return self.num_classes * self.variants_per_class

    @property
    def noise_offset(self) -> int:
        return self.num_classes + self.variants_per_class

    def product_id(self, class_id: int, variant_id: int) -> int:
        return class_id * self.variants_per_class + variant_id


# --- rendering ---------------------------------------------------------------

def _shape_mask(shape: int, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    au, av = np.abs(u), np.abs(v)
    r2 = u * u + v * v
    if shape == 0:  # disk
        return r2 <= 0.9**2
    if shape == 1:  # square
        return np.maximum(au, av) <= 0.8
    if shape == 2:  # triangle, apex up
        return (v <= 0.85) & (v >= -0.85) & (au <= 0.5 * (v + 0.85) + 0.05)
    if shape == 3:  # diamond
        return au + av <= 1.0
    if shape == 4:  # plus sign
        return ((au <= 0.32) & (av <= 0.95)) | ((av <= 0.32) & (au <= 0.95))
    return (r2 <= 0.95**2) & (r2 >= 0.45**2)  # ring


def _pattern(pattern: int, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    bu = np.floor((u + 1.0) * 2.5)
    bv = np.floor((v + 1.0) * 2.5)
    if pattern == 0:
        on = np.ones_like(u, dtype=bool)
    elif pattern == 1:
        on = bv % 2 == 0
    elif pattern == 2:
        on = bu % 2 == 0
    elif pattern == 3:
        on = (bu + bv) % 2 == 0
    else:
        on = np.floor((u + v + 2.0) * 1.8) % 2 == 0
    return np.where(on, 1.0, 0.4)


def glyph_layer(class_id: int, variant_id: int, size: int, cx: float, cy: float,
                half: float) -> tuple[np.ndarray, np.ndarray]:
    """Render one product glyph; returns ``(intensity, coverage mask)`` on a ``size x size`` canvas."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    u = (xs - cx) / half
    v = (ys - cy) / half
    shape, pattern = class_id % NUM_SHAPES, (class_id // NUM_SHAPES) % NUM_PATTERNS
    inside = _shape_mask(shape, u, v)
    value = _pattern(pattern, u, v)
    mu, mv = MARKER_POSITIONS[variant_id]
    marker = (np.abs(u - mu) <= MARKER_HALF) & (np.abs(v - mv) <= MARKER_HALF)
    value = np.where(marker, MARKER_VALUE, value)
    cover = inside | marker
    return np.where(cover, value, 0.0), cover


def render_product(class_id: int, variant_id: int, size: int) -> np.ndarray:
    """Clean, centred gallery image."""
    c = size / 2
    img, _ = glyph_layer(class_id, variant_id, size, c, c, PRODUCT_SCALE * c)
    return img.astype(np.float32)


def sample_frames(source, length: int):
    """Pick ``length`` evenly spaced frames (endpoints included, round half up)."""
    n = len(source)
    if n == 0:
        raise ValueError("empty frame source")
    if length < 1:
        raise ValueError("length must be >= 1")
    if length == 1:
        idx = np.zeros(1, dtype=np.int64)
    else:
        idx = np.floor(np.arange(length) * (n - 1) / (length - 1) + 0.5).astype(np.int64)
    if isinstance(source, np.ndarray):
        return source[idx]
    return [source[i] for i in idx]


def sample_frame_indices(n: int, length: int) -> np.ndarray:
    return sample_frames(np.arange(n), length)


def augment_mask_frames(frames: np.ndarray, mask_prob: float = 0.5,
                        ratio_range: tuple[float, float] = (0.0, 0.9),
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """Zero a random rectangle covering a random fraction of each frame, with probability ``mask_prob``.

    Works on any array whose last two axes are (H, W); returns a copy.
    """
    lo, hi = ratio_range
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError(f"ratio_range {ratio_range} must lie within [0, 1]")
    rng = rng if rng is not None else np.random.default_rng()
    out = np.array(frames, copy=True)
    h, w = out.shape[-2:]
    flat = out.reshape(-1, h, w)
    for f in range(flat.shape[0]):
        if rng.random() >= mask_prob:
            continue
        ratio = rng.uniform(lo, hi)
        aspect = np.exp(rng.uniform(np.log(0.5), np.log(2.0)))
        area = ratio * h * w
        rh = min(h, int(round(np.sqrt(area * aspect))))
        rw = min(w, int(round(area / rh))) if rh else 0
        if rw == w:  # width hit the frame edge; give the lost area back to the height
            rh = min(h, int(round(area / rw)))
        if rh == 0 or rw == 0:
            continue
        y0 = rng.integers(0, h - rh + 1)
        x0 = rng.integers(0, w - rw + 1)
        flat[f, y0:y0 + rh, x0:x0 + rw] = 0.0
    return out


def render_clip(spec: CorpusSpec, class_id: int, variant_id: int,
                rng: np.random.Generator) -> tuple[np.ndarray, list[list[int]]]:
    """Render a source clip, sample ``frame_count`` frames; also returns the distractor products."""
    size = spec.image_size
    c = size / 2
    n_src = SOURCE_FRAMES_PER_FRAME * spec.frame_count
    intended = spec.product_id(class_id, variant_id)

    n_dis = int(rng.integers(spec.distractors_min, spec.distractors_max + 1))
    distractors = []
    for _ in range(n_dis):
        pid = int(rng.integers(0, spec.num_products - 1))
        pid += pid >= intended
        dc, dv = divmod(pid, spec.variants_per_class)
        half = c * rng.uniform(spec.distractor_scale_min, spec.distractor_scale_max)
        dx, dy = rng.uniform(half * 0.6, size - half * 0.6, size=2)
        distractors.append((dc, dv, dx, dy, half))

    # intended product: moves along a line, changes scale, keeps a per-frame jitter
    half0 = c * rng.uniform(spec.intended_scale_min, spec.intended_scale_max)
    growth = rng.uniform(-0.15, 0.15)
    start = rng.uniform(c - spec.drift * c, c + spec.drift * c, size=2)
    velocity = rng.uniform(-spec.drift * c, spec.drift * c, size=2)
    background = rng.normal(0.0, 0.05, size=(size, size))

    frames = np.empty((n_src, size, size), dtype=np.float64)
    for t in range(n_src):
        s = t / max(n_src - 1, 1)
        canvas = background + rng.normal(0.0, 0.02, size=(size, size))
        for dc, dv, dx, dy, half in distractors:
            img, cover = glyph_layer(dc, dv, size, dx, dy, half)
            canvas = np.where(cover, img, canvas)
        cx, cy = start + velocity * s + rng.normal(0.0, 0.75, size=2)
        half = half0 * (1.0 + growth * s)
        img, cover = glyph_layer(class_id, variant_id, size, cx, cy, half)
        canvas = np.where(cover, img * rng.uniform(0.8, 1.2), canvas)
        if rng.random() < spec.occlusion_prob:
            oh, ow = rng.integers(max(2, size // 8), max(3, size // 3), size=2)
            oy = int(np.clip(cy - oh / 2 + rng.uniform(-half, half) * 0.5, 0, size - oh))
            ox = int(np.clip(cx - ow / 2 + rng.uniform(-half, half) * 0.5, 0, size - ow))
            canvas[oy:oy + oh, ox:ox + ow] = rng.uniform(0.0, 0.6)
        frames[t] = canvas
    clip = sample_frames(frames, spec.frame_count).astype(np.float32)
    return clip, [[dc, dv] for dc, dv, *_ in distractors]


def _noise_tokens(spec: CorpusSpec, rng: np.random.Generator, n: int) -> list[int]:
    return [int(t) for t in rng.integers(spec.noise_offset, spec.vocab_size, size=n)]


def make_title(spec: CorpusSpec, class_id: int, variant_id: int) -> list[int]:
    rng = np.random.default_rng([spec.seed, 2, class_id, variant_id])
    tokens = [class_id, spec.num_classes + variant_id] + _noise_tokens(spec, rng, spec.noise_tokens_per_caption)
    rng.shuffle(tokens)
    return tokens


def make_asr(spec: CorpusSpec, class_id: int, variant_id: int, rng: np.random.Generator) -> list[int]:
    tokens = [class_id]
    if rng.random() < spec.variant_mention_prob:
        tokens.append(spec.num_classes + variant_id)
    else:
        tokens += _noise_tokens(spec, rng, 1)
    tokens += _noise_tokens(spec, rng, spec.noise_tokens_per_caption)
    rng.shuffle(tokens)
    return tokens


def _assign_products(spec: CorpusSpec, count: int, split_code: int) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, split_code])
    reps = -(-count // spec.num_products)
    ids = np.tile(np.arange(spec.num_products), reps)[:count]
    return rng.permutation(ids)


def generate_corpus(spec: CorpusSpec, out_dir: str | Path) -> Path:
    """Write a complete corpus for ``spec`` under ``out_dir``; deterministic in ``spec.seed``."""
    out = Path(out_dir)
    (out / "gallery").mkdir(parents=True, exist_ok=True)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    (out / "spec.json").write_text(json.dumps(dataclasses.asdict(spec), sort_keys=True, indent=1) + "\n")

    gallery_lines = []
    for pid in range(spec.num_products):
        cid, vid = divmod(pid, spec.variants_per_class)
        rel = f"gallery/{pid:05d}.f32"
        write_array(out / rel, render_product(cid, vid, spec.image_size))
        gallery_lines.append({"product_id": pid, "class_id": cid, "variant_id": vid,
                              "title_tokens": make_title(spec, cid, vid), "image": rel})
    _write_jsonl(out / "gallery.jsonl", gallery_lines)

    records = []
    for split_code, (split, count) in enumerate((("train", spec.num_train), ("test", spec.num_test))):
        for idx, pid in enumerate(_assign_products(spec, count, split_code)):
            pid = int(pid)
            cid, vid = divmod(pid, spec.variants_per_class)
            rng = np.random.default_rng([spec.seed, 1, split_code, idx])
            clip, distractors = render_clip(spec, cid, vid, rng)
            rid = f"{split}-{idx:05d}"
            rel = f"clips/{rid}.f32"
            write_array(out / rel, clip)
            records.append({"id": rid, "split": split, "product_id": pid, "class_id": cid,
                            "variant_id": vid, "distractor_ids": distractors,
                            "asr_tokens": make_asr(spec, cid, vid, rng),
                            "title_tokens": gallery_lines[pid]["title_tokens"],
                            "clip": rel, "image": gallery_lines[pid]["image"]})
    _write_jsonl(out / "manifest.jsonl", records)
    return out


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def _read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def corpus_checksum(corpus_dir: str | Path) -> str:
    """SHA-256 over every file of a corpus, in sorted path order."""
    root = Path(corpus_dir)
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(root)).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


@dataclass
class Split:
    clips: np.ndarray  # (n, L, H, W)
    asr: np.ndarray  # (n, T) int64
    product_ids: np.ndarray  # (n,)
    records: list[dict]


@dataclass
class Corpus:
    spec: CorpusSpec
    gallery_images: np.ndarray  # (P, H, W)
    gallery_titles: np.ndarray  # (P, T) int64
    gallery: list[dict]
    splits: dict[str, Split]
    root: Path | None = None

    def split(self, name: str) -> Split:
        if name not in self.splits:
            raise KeyError(f"unknown split {name!r}; have {sorted(self.splits)}")
        return self.splits[name]


def load_corpus(corpus_dir: str | Path) -> Corpus:
    root = Path(corpus_dir)
    if not (root / "manifest.jsonl").is_file():
        raise FileNotFoundError(f"{root}: no manifest.jsonl (run generate-data first)")
    spec = CorpusSpec(**json.loads((root / "spec.json").read_text()))
    gallery = _read_jsonl(root / "gallery.jsonl")
    images = np.stack([read_array(root / g["image"]) for g in gallery])
    titles = np.array([g["title_tokens"] for g in gallery], dtype=np.int64)
    records = _read_jsonl(root / "manifest.jsonl")
    splits = {}
    for name in ("train", "test"):
        rows = [r for r in records if r["split"] == name]
        splits[name] = Split(
            clips=np.stack([read_array(root / r["clip"]) for r in rows]) if rows
            else np.zeros((0, spec.frame_count, spec.image_size, spec.image_size), np.float32),
            asr=np.array([r["asr_tokens"] for r in rows], dtype=np.int64).reshape(len(rows), -1),
            product_ids=np.array([r["product_id"] for r in rows], dtype=np.int64),
            records=rows,
        )
    return Corpus(spec, images, titles, gallery, splits, root)
