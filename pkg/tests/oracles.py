"""Scalar-loop reference implementations.

Everything here works element by element on Python floats pulled out of
numpy arrays; nothing calls the vectorised package code, so each oracle is an
independent route to the same value.
"""

from __future__ import annotations

import math

import numpy as np


def W(linear):
    """(weight, bias) of a torch Linear as float64 numpy arrays."""
    b = linear.bias.detach().double().numpy() if linear.bias is not None else None
    return linear.weight.detach().double().numpy(), b


def linear(x, wb):
    w, b = wb
    out = []
    for r in range(w.shape[0]):
        acc = 0.0 if b is None else float(b[r])
        for c in range(w.shape[1]):
            acc += float(w[r, c]) * float(x[c])
        out.append(acc)
    return out


def layer_norm(x, ln):
    g = ln.weight.detach().double().numpy()
    b = ln.bias.detach().double().numpy()
    n = len(x)
    mu = sum(x) / n
    var = sum((v - mu) ** 2 for v in x) / n
    return [(x[i] - mu) / math.sqrt(var + ln.eps) * float(g[i]) + float(b[i]) for i in range(n)]


def softmax(xs):
    m = max(xs)
    e = [math.exp(x - m) for x in xs]
    s = sum(e)
    return [v / s for v in e]


def pairwise_similarity(a, b):
    n, l, d = a.shape
    h = np.zeros((n, l, l))
    for i in range(n):
        for j in range(l):
            for k in range(l):
                acc = 0.0
                for t in range(d):
                    acc += float(a[i, j, t]) * float(b[i, k, t])
                h[i, j, k] = acc
    return h


def sorted_desc(col):
    """Row indices of a column, largest first, ties to the lower index."""
    return sorted(range(len(col)), key=lambda j: (-col[j], j))


def connection_mask(h, k, rule="mean_topk"):
    n, l, _ = h.shape
    m = np.zeros((n, l, l), dtype=bool)
    for b in range(n):
        for i in range(l):
            col = [float(h[b, j, i]) for j in range(l)]
            mean = math.fsum(col) / l
            tol = 8 * np.finfo(np.float64).eps * max(abs(v) for v in col)
            for j in sorted_desc(col)[:k]:
                above = col[j] - mean >= -tol
                m[b, j, i] = above if rule == "mean_topk" else (mean - col[j] >= -tol)
    return m


def relevance(h, module):
    n, l, _ = h.shape
    fc1, fc2 = W(module.mlp[0]), W(module.mlp[2])
    a = np.zeros((n, l, l))
    for b in range(n):
        for i in range(l):
            col = [float(h[b, j, i]) for j in range(l)]
            order = sorted_desc(col)
            hidden = [max(0.0, v) for v in linear([col[j] for j in order], fc1)]
            remap = linear(hidden, fc2)
            mean = sum(col) / l
            for rank, j in enumerate(order):
                a[b, j, i] = mean + remap[rank]
    w1, w2 = W(module.bll_in), W(module.bll_out)
    r = np.zeros_like(a)
    for j in range(l):
        for i in range(l):
            vec = [a[b, j, i] for b in range(n)]
            mixed = linear([max(0.0, v) for v in linear(vec, w1)], w2)
            for b in range(n):
                r[b, j, i] = mixed[b]
    return r


def attention(query, key, value, attn, bias=None, mask=None):
    """Multi-head attention for one (Lq, D) x (Lk, D) instance, looped."""
    heads, dh = attn.num_heads, attn.head_dim
    q = [linear(x, W(attn.q_proj)) for x in query]
    k = [linear(x, W(attn.k_proj)) for x in key]
    v = [linear(x, W(attn.v_proj)) for x in value]
    out = []
    for i in range(len(q)):
        concat = []
        for hd in range(heads):
            sl = slice(hd * dh, (hd + 1) * dh)
            logits = []
            for j in range(len(k)):
                s = sum(a * b for a, b in zip(q[i][sl], k[j][sl])) / math.sqrt(dh)
                if bias is not None:
                    s += float(bias[i, j])
                logits.append(s)
            if mask is not None:
                allowed = [bool(mask[i, j]) for j in range(len(k))]
                if any(allowed):
                    kept = softmax([logits[j] for j in range(len(k)) if allowed[j]])
                    it = iter(kept)
                    weights = [next(it) if allowed[j] else 0.0 for j in range(len(k))]
                else:
                    weights = [1.0 / len(k)] * len(k)
            else:
                weights = softmax(logits)
            for c in range(dh):
                concat.append(sum(weights[j] * v[j][sl][c] for j in range(len(k))))
        out.append(linear(concat, W(attn.out_proj)))
    return np.array(out)


def cosine(a, b, eps=1e-8):
    na = max(math.sqrt(sum(x * x for x in a)), eps)
    nb = max(math.sqrt(sum(x * x for x in b)), eps)
    return sum(x * y for x, y in zip(a, b)) / (na * nb)


def triplet(a, b, margin):
    n = len(a)
    if n < 2:
        return 0.0
    s = [[cosine(a[j], b[k]) for k in range(n)] for j in range(n)]
    total = 0.0
    for j in range(n):
        for k in range(n):
            if k == j:
                continue
            total += max(0.0, margin - s[j][j] + s[j][k])  # negative image for video j
            total += max(0.0, margin - s[j][j] + s[k][j])  # negative video for image j
    return total / n


def row_kl(g, m, h):
    """Mean over (batch, row) of KL(softmax(g masked) || softmax(h))."""
    n, l, _ = g.shape
    total = 0.0
    for b in range(n):
        for r in range(l):
            allowed = [bool(m[b, r, c]) for c in range(l)]
            if any(allowed):
                kept = softmax([float(g[b, r, c]) for c in range(l) if allowed[c]])
                it = iter(kept)
                p = [next(it) if allowed[c] else 0.0 for c in range(l)]
            else:
                p = [1.0 / l] * l
            q = softmax([float(h[b, r, c]) for c in range(l)])
            total += sum(p[c] * math.log(p[c] / q[c]) for c in range(l) if p[c] > 0)
    return total / (n * l)


def select_hard(sim, k):
    n = sim.shape[0]
    ind = np.zeros((n, k), dtype=np.int64)
    pos = np.zeros(n, dtype=np.int64)
    for m in range(n):
        row = [float(sim[m, j]) for j in range(n)]
        top = sorted_desc(row)[:k]
        if m not in top:
            top[-1] = m
        ind[m] = top
        pos[m] = top.index(m)
    return ind, pos


def mining_loss(logits, pos, cand=None):
    n, k = logits.shape
    if cand is None:
        cand = np.tile(np.arange(k), (n, 1))
    anchor = 0.0
    for m in range(n):
        row = [float(x) for x in logits[m]]
        anchor -= math.log(softmax(row)[pos[m]])
    other = 0.0
    for m in range(n):
        target = cand[m, pos[m]]
        pool = [float(logits[a, s]) for a in range(n) for s in range(k) if cand[a, s] == target]
        mx = max(pool)
        lse = mx + math.log(sum(math.exp(x - mx) for x in pool))
        other += lse - float(logits[m, pos[m]])
    return 0.5 * (anchor / n + other / n)


def finite_difference(f, x, h=1e-6):
    """Central-difference gradient of scalar ``f`` at float64 array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def relative_error(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
