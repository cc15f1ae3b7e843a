"""Slow reference implementations used to cross-check the vectorized code.

These deliberately avoid the code paths they verify: plain loops, direct
density sums, exhaustive enumeration.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def naive_gmm_nll(weights, means, variances, x) -> float:
    """Negative log of the directly summed mixture density (no log-sum-exp)."""
    total = 0.0
    for w, mu, var in zip(weights, means, variances):
        dens = w
        for xd, md, vd in zip(x, mu, var):
            dens *= math.exp(-(xd - md) ** 2 / (2.0 * vd)) / math.sqrt(2.0 * math.pi * vd)
        total += dens
    return -math.log(total)


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def scalar_lstm_step(x, h, c, w_x, w_h, b):
    """Gate equations evaluated one unit at a time (gate order i, f, o, g)."""
    H = len(h)
    pre = [0.0] * (4 * H)
    for r in range(4 * H):
        s = b[r]
        for j, xj in enumerate(x):
            s += w_x[r][j] * xj
        for j, hj in enumerate(h):
            s += w_h[r][j] * hj
        pre[r] = s
    h_new, c_new = [0.0] * H, [0.0] * H
    for u in range(H):
        i = _sig(pre[u])
        f = _sig(pre[H + u])
        o = _sig(pre[2 * H + u])
        g = math.tanh(pre[3 * H + u])
        c_new[u] = f * c[u] + i * g
        h_new[u] = o * math.tanh(c_new[u])
    return np.array(h_new), np.array(c_new)


def brute_force_viterbi(unary, pairwise):
    """Enumerate every state path; returns ``(path, objective)`` of the first maximum."""
    unary = np.asarray(unary, dtype=np.float64)
    T, S = unary.shape
    best, best_path = -math.inf, None
    for path in itertools.product(range(S), repeat=T):
        v = sum(unary[t, s] for t, s in enumerate(path))
        v += sum(pairwise[path[t - 1]][path[t]] for t in range(1, T))
        if v > best:
            best, best_path = v, path
    return list(best_path), float(best)


def brute_force_ngram(corpus, prefix, n, match_dims=slice(None)):
    """Scan every window of every sequence; returns ``(sequence, start, distance)``."""
    query = np.asarray(prefix, dtype=np.float64)[-n:, match_dims]
    best = (None, None, math.inf)
    for k, seq in enumerate(corpus):
        seq = np.asarray(seq, dtype=np.float64)
        for start in range(seq.shape[0] - n):
            window = seq[start:start + n, match_dims]
            d = math.sqrt(sum((a - b) ** 2 for a, b in zip(window.ravel(), query.ravel())))
            if d < best[2]:
                best = (k, start, d)
    return best


def scan_argmax(grid):
    """First ``(row, col)`` holding the maximum of a 2-D grid."""
    best, loc = -math.inf, (0, 0)
    for r, row in enumerate(grid):
        for c, v in enumerate(row):
            if v > best:
                best, loc = v, (r, c)
    return loc
