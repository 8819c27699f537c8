"""Time one query against a pre-embedded gallery of random unit vectors."""

import argparse
import time

import numpy as np
import torch

from sgmn.config import TrainConfig
from sgmn.evaluate import Embeddings, embed_videos, rank
from sgmn.model import SGMN


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--gallery", type=int, default=1000)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    torch.set_num_threads(1)
    cfg = TrainConfig()
    gra = SGMN(cfg).gra.eval()
    rng = np.random.default_rng(0)
    d = cfg.encoder.embed_dim
    unit = lambda x: x / np.linalg.norm(x, axis=1, keepdims=True)  # noqa: E731
    gallery = Embeddings(unit(rng.normal(size=(args.gallery, d))), unit(rng.normal(size=(args.gallery, d))))
    clip = rng.random((1, cfg.encoder.frame_count, cfg.encoder.image_size, cfg.encoder.image_size))
    asr = rng.integers(0, cfg.encoder.vocab_size, size=(1, 4))
    times = []
    for _ in range(args.repeats):
        start = time.perf_counter()
        rank(embed_videos(gra, clip, asr), gallery, cfg.weights.lam)
        times.append(time.perf_counter() - start)
    print(f"gallery {args.gallery}: median {1e3 * np.median(times):.2f} ms, max {1e3 * max(times):.2f} ms")


if __name__ == "__main__":
    main()
