import numpy as np
import pytest
import torch

from sgmn.config import EncoderConfig, TrainConfig

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(**kw) -> TrainConfig:
    """A model small enough for float64 loops and finite differences."""
    enc = EncoderConfig(patch_size=4, embed_dim=8, num_heads=2, num_layers=1, frame_count=3,
                        image_size=8, vocab_size=16, mlp_ratio=2)
    base = dict(batch_size=3, k_mine=2, encoder=enc, mask_prob=0.0)
    base.update(kw)
    return TrainConfig(**base)


ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, name: str, passed: bool, detail: str) -> str:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number} ({name}): {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
