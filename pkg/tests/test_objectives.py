import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

import oracles
from sgmn.objectives import cosine_matrix, similarity_loss, total_loss, triplet_loss


def t(x):
    return torch.as_tensor(x, dtype=torch.float64)


def test_triplet_matches_loops(rng):
    for _ in range(200):
        n, d = int(rng.integers(1, 6)), int(rng.integers(1, 9))
        a, b = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        margin = float(rng.uniform(0, 1))
        assert abs(float(triplet_loss(t(a), t(b), margin)) - oracles.triplet(a, b, margin)) <= 1e-10


def test_triplet_hand_example():
    # orthonormal pairs give s = I: every hinge is max(0, margin - 1), two per anchor
    a = torch.eye(2, dtype=torch.float64)
    assert float(triplet_loss(a, a, 0.2)) == 0.0
    assert float(triplet_loss(a, a, 1.5)) == pytest.approx(1.0)
    # all embeddings equal: every hinge is exactly the margin
    c = torch.ones(3, 2, dtype=torch.float64)
    assert float(triplet_loss(c, c, 0.2)) == pytest.approx(2 * 2 * 0.2)


def test_triplet_single_pair_is_zero():
    assert float(triplet_loss(torch.randn(1, 4), torch.randn(1, 4))) == 0.0


def test_zero_rows_give_zero_cosine():
    s = cosine_matrix(torch.zeros(2, 3), torch.randn(2, 3))
    assert torch.equal(s, torch.zeros(2, 2))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.01, 100))
def test_triplet_scale_invariant_and_nonnegative(seed, scale):
    rng = np.random.default_rng(seed)
    a, b = t(rng.normal(size=(4, 5))), t(rng.normal(size=(4, 5)))
    base = float(triplet_loss(a, b))
    assert base >= 0
    assert abs(float(triplet_loss(a * scale, b)) - base) < 1e-9


def test_similarity_and_total_combination(rng):
    a, b, c, d = (t(rng.normal(size=(3, 4))) for _ in range(4))
    assert torch.isclose(similarity_loss(a, b, c, d, lam=0.5), triplet_loss(a, b) + 0.5 * triplet_loss(c, d))
    assert torch.equal(similarity_loss(a, b, None, None), triplet_loss(a, b))
    assert float(total_loss(t(1.0), t(2.0), t(3.0), 0.7, 0.3)) == pytest.approx(1 + 1.4 + 0.9)


def test_triplet_all_violated_example():
    # s(pos) = 0 and s(neg) = 1 everywhere off the diagonal: every hinge is 1.2
    a = torch.eye(2, dtype=torch.float64)
    b = a.flip(0)
    assert float(triplet_loss(a, b, 0.2)) == pytest.approx(2.4)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), margin=st.floats(0.0, 1.0))
def test_triplet_zero_iff_margin_satisfied(seed, margin):
    rng = np.random.default_rng(seed)
    a, b = t(rng.normal(size=(4, 3))), t(rng.normal(size=(4, 3)))
    s = cosine_matrix(a, b).numpy()
    pos = np.diag(s)
    off = ~np.eye(4, dtype=bool)
    satisfied = ((pos[:, None] - s >= margin)[off].all() and (pos[None, :] - s >= margin)[off].all())
    assert (float(triplet_loss(a, b, margin)) == 0.0) == satisfied


@settings(max_examples=100, deadline=None)
@given(parts=st.lists(st.floats(0, 10), min_size=3, max_size=3), b1=st.floats(0, 1), b2=st.floats(0, 1),
       scale=st.floats(0, 5))
def test_total_loss_linear(parts, b1, b2, scale):
    l_s, l_g, l_m = (t(p) for p in parts)
    base = float(total_loss(l_s, l_g, l_m, b1, b2))
    assert float(total_loss(l_s, l_g * scale, l_m, b1, b2)) == pytest.approx(base + b1 * (scale - 1) * parts[1], abs=1e-9)
    assert float(total_loss(l_s, l_g, l_m, 0.0, 0.0)) == parts[0]


def test_weight_grid_builds_valid_configs():
    from sgmn.config import TrainConfig
    from sgmn.experiments import LOSS_WEIGHT_GRID, weight_sweep_configs

    cfgs = weight_sweep_configs(TrainConfig())
    assert [(c.weights.beta1, c.weights.beta2) for c in cfgs] == LOSS_WEIGHT_GRID
