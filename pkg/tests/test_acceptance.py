"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

The long-running experiments (criteria 4 and 5) train from scratch several
times and take tens of minutes on one CPU core.
"""

import time

import numpy as np
import torch

import oracles
import test_encoders
import test_gradients
import test_graph
from conftest import report_criterion
from sgmn.config import TrainConfig, from_flat
from sgmn.data import corpus_checksum, generate_corpus
from sgmn.evaluate import Embeddings, embed_videos, rank
from sgmn.experiments import ensure_corpus, profile_spec, run_grid, train_and_evaluate
from sgmn.graph import BLOCKS, RelevanceMatrix, build_graph, connection_mask, graph_masked_attention, pairwise_similarity
from sgmn.layers import MultiHeadAttention
from sgmn.mining import select_hard_examples
from sgmn.model import SGMN
from sgmn.train import train

SEEDS = (0, 1, 2)


def t(x):
    return torch.as_tensor(x, dtype=torch.float64)


def _oracle_diffs(rng) -> dict[str, float]:
    worst = dict.fromkeys(["pairwise_similarity", "connection_mask", "relevance_matrix", "build_graph",
                           "graph_masked_attention", "select_hard_examples"], 0.0)

    def note(name, diff):
        worst[name] = max(worst[name], float(diff))

    for _ in range(200):
        n, l, d = int(rng.integers(1, 5)), int(rng.integers(1, 7)), int(rng.integers(1, 9))
        a, b = rng.normal(size=(n, l, d)), rng.normal(size=(n, l, d))
        h = oracles.pairwise_similarity(a, b)
        note("pairwise_similarity", np.abs(pairwise_similarity(t(a), t(b)).numpy() - h).max())
        k = int(rng.integers(1, l + 1))
        note("connection_mask", np.abs(connection_mask(t(h), k).numpy().astype(float)
                                       - oracles.connection_mask(h, k)).max())
        torch.manual_seed(int(rng.integers(1 << 30)))
        rel = {name: RelevanceMatrix(l, n).double() for name in BLOCKS}
        note("relevance_matrix", np.abs(rel["V2I"](t(h)).detach().numpy() - oracles.relevance(h, rel["V2I"])).max())
        g = build_graph(t(a), t(b), rel, k)
        ref = {"V2V": oracles.pairwise_similarity(a, a), "I2I": oracles.pairwise_similarity(b, b), "V2I": h,
               "I2V": h.transpose(0, 2, 1)}
        for name in BLOCKS:
            expect = oracles.relevance(ref[name], rel[name]) * oracles.connection_mask(ref[name], k)
            note("build_graph", np.abs(g.blocks[name].detach().numpy() - expect).max())
        heads = int(rng.choice([1, 2]))
        dd = heads * int(rng.integers(1, 5))
        q, kv = rng.normal(size=(n, l, dd)), rng.normal(size=(n, l, dd))
        attn = MultiHeadAttention(dd, heads).double()
        bias, mask = rng.normal(size=(n, l, l)), rng.random(size=(n, l, l)) < 0.5
        out = graph_masked_attention(attn, t(q), t(kv), t(kv), t(bias), torch.as_tensor(mask)).detach().numpy()
        for i in range(n):
            note("graph_masked_attention", np.abs(out[i] - oracles.attention(q[i], kv[i], kv[i], attn, bias[i], mask[i])).max())
        sim = rng.normal(size=(n, n))
        kk = int(rng.integers(1, n + 1))
        hard = select_hard_examples(t(sim), kk, t(a[:, 0]), t(b[:, 0]))
        ind, pos = oracles.select_hard(sim, kk)
        note("select_hard_examples", max(np.abs(hard.indices.numpy() - ind).max(),
                                         np.abs(hard.positive_position.numpy() - pos).max(),
                                         np.abs(hard.i_visual.numpy() - b[:, 0][ind]).max()))
    return worst


def test_criterion_1_oracle_equivalence():
    start = time.perf_counter()
    worst = _oracle_diffs(np.random.default_rng(2024))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-10 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report_criterion(1, "oracle equivalence", ok, f"max abs diff over 200 instances each: {detail}; "
                     f"{elapsed:.1f} s (limit 1e-10, < 60 s)")
    assert ok


def test_criterion_2_gradient_checks():
    start = time.perf_counter()
    worst = {name: max(fn(seed) for seed in range(test_gradients.INSTANCES))
             for name, fn in test_gradients.CASES.items()}
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-4 and elapsed < 300
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report_criterion(2, "gradient checks", ok, f"worst relative error over {test_gradients.INSTANCES} "
                     f"instances: {detail}; {elapsed:.1f} s (limit < 1e-4, < 300 s)")
    assert ok


def test_criterion_3_invariants(tmp_path):
    # each hypothesis-driven property runs its configured >= 100 examples
    suites = {
        "mask scale-invariance": test_graph.test_mask_scale_invariance,
        "gate soundness": test_graph.test_gate_soundness,
        "mask column popcount": test_graph.test_mask_column_popcount,
        "recall monotonicity": test_encoders.test_recall_monotone_in_k,
        "inference purity": test_encoders.test_inference_purity,
        "weight-sharing identity": test_encoders.test_weight_sharing_identity,
        "motion-token nullity": test_encoders.test_motion_token_null_on_constant_clip,
        "frozen-text invariance": test_encoders.test_frozen_text_invariance,
    }
    failed = []
    for name, prop in suites.items():
        try:
            prop()
        except Exception as exc:  # noqa: BLE001 - reported below
            failed.append(f"{name}: {type(exc).__name__}")
    ok = not failed
    report_criterion(3, "invariant suites", ok, f"{len(suites) - len(failed)}/{len(suites)} properties "
                     f"held on >= 100 random cases each" + (f"; failed {failed}" if failed else ""))
    assert ok


def test_criterion_4_end_to_end_retrieval(tmp_path):
    rows = []
    for seed in SEEDS:
        corpus = ensure_corpus(profile_spec("standard", seed=seed), tmp_path)
        rows.append(train_and_evaluate(from_flat({"seed": seed}, TrainConfig()), corpus))
    elapsed = sum(r["train_seconds"] + r["eval_seconds"] for r in rows)
    r1, r5 = np.mean([r["R@1"] for r in rows]), np.mean([r["R@5"] for r in rows])
    ok = r1 >= 0.80 and r5 >= 0.95 and elapsed <= 600
    report_criterion(4, "end-to-end retrieval", ok,
                     f"mean over seeds {SEEDS}: R@1 {r1:.3f} (>= 0.80), R@5 {r5:.3f} (>= 0.95); "
                     f"per seed R@1 {[round(r['R@1'], 3) for r in rows]}; "
                     f"train+eval {elapsed:.0f} s on {torch.get_num_threads()} thread(s) (<= 600 s)")
    assert ok


def _grid_mean(profile, labels, tmp_path):
    corpus = ensure_corpus(profile_spec(profile, seed=0), tmp_path)
    grid = [("full", 1, 1, 1, 1), *labels]
    _, means = run_grid(TrainConfig(), corpus, SEEDS, grid)
    return {m["variant"]: m for m in means}


def test_criterion_5_directional_ablation(tmp_path):
    start = time.perf_counter()
    heavy = _grid_mean("distractor_heavy", [("-TE", 0, 1, 1, 1)], tmp_path)
    hard = _grid_mean("hard_negative", [("-SMF", 1, 1, 1, 0)], tmp_path)
    elapsed = time.perf_counter() - start
    gap_te = heavy["full"]["R@1"] - heavy["-TE"]["R@1"]
    gap_smf = hard["full"]["R@1"] - hard["-SMF"]["R@1"]
    ok = gap_te >= 0.05 and gap_smf >= 0.03 and elapsed <= 1800
    report_criterion(5, "directional ablation", ok,
                     f"distractor-heavy R@1 full {heavy['full']['R@1']:.3f} vs -TE {heavy['-TE']['R@1']:.3f} "
                     f"(gap {gap_te:+.3f}, need >= 0.05); hard-negative R@1 full {hard['full']['R@1']:.3f} vs "
                     f"-SMF {hard['-SMF']['R@1']:.3f} (gap {gap_smf:+.3f}, need >= 0.03); {elapsed:.0f} s (<= 1800 s)")
    assert ok


def test_criterion_6_determinism(tmp_path):
    spec = profile_spec("standard", seed=0, num_train=64, num_test=16)
    a = generate_corpus(spec, tmp_path / "corpus_a")
    b = generate_corpus(spec, tmp_path / "corpus_b")
    corpus_ok = corpus_checksum(a) == corpus_checksum(b)
    corpus = ensure_corpus(spec, tmp_path)
    cfg = from_flat({"epochs": 2, "batch_size": 16}, TrainConfig())
    for run in ("run_a", "run_b"):
        train(cfg, corpus, tmp_path / run)
    same = {name: (tmp_path / "run_a" / name).read_bytes() == (tmp_path / "run_b" / name).read_bytes()
            for name in ("metrics.jsonl", "checkpoint.bin")}
    ok = corpus_ok and all(same.values())
    report_criterion(6, "determinism", ok, f"corpus checksum stable: {corpus_ok}; byte-identical "
                     f"metrics log: {same['metrics.jsonl']}, checkpoint: {same['checkpoint.bin']} (single thread)")
    assert ok


def test_criterion_7_inference_throughput():
    cfg = TrainConfig()
    torch.manual_seed(0)
    gra = SGMN(cfg).gra.eval()
    rng = np.random.default_rng(0)
    d, enc = cfg.encoder.embed_dim, cfg.encoder

    def unit(x):
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    gallery = Embeddings(unit(rng.normal(size=(1000, d))), unit(rng.normal(size=(1000, d))))
    clip = rng.random((1, enc.frame_count, enc.image_size, enc.image_size))
    asr = rng.integers(0, enc.vocab_size, size=(1, 4))
    times = []
    for _ in range(10):
        start = time.perf_counter()
        result = rank(embed_videos(gra, clip, asr), gallery, cfg.weights.lam)
        times.append(time.perf_counter() - start)
    ok = max(times) < 1.0 and result.order.shape == (1, 1000)
    report_criterion(7, "inference throughput", ok, f"one query vs 1,000-item gallery: worst of 10 "
                     f"{1e3 * max(times):.1f} ms (< 1000 ms)")
    assert ok
