"""Evaluation protocols: horizon errors, heat-map decoding, Viterbi smoothing, PCK."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError, ParseError, ShapeError

DEFAULT_HORIZONS_MS = (80, 160, 240, 320, 400, 480, 560)
DEFAULT_PCK_THRESHOLDS = tuple(round(0.05 * k, 2) for k in range(1, 11))


# ---------------------------------------------------------------------------
# mocap prediction error


@dataclass
class HorizonErrorReport:
    horizons_ms: list[float]
    frame_offsets: list[int]
    errors: list[float]
    prefix_count: int

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["horizon_ms", "frame_offset", "mean_error", "prefix_count"])
            for h, k, e in zip(self.horizons_ms, self.frame_offsets, self.errors):
                w.writerow([_fmt(h), k, repr(float(e)), self.prefix_count])


def _fmt(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def horizon_frame_indices(horizons_ms: Sequence[float], frame_rate_hz: float) -> list[int]:
    """Number of frames past the prefix that each horizon corresponds to."""
    if not frame_rate_hz > 0:
        raise ArgumentError("frame rate must be positive")
    out = []
    prev = -math.inf
    for h in horizons_ms:
        if not h > prev:
            raise ArgumentError("horizons must be strictly increasing")
        prev = h
        k = h * frame_rate_hz / 1000.0
        r = round(k)
        if abs(k - r) > 1e-9 or r < 1:
            raise ArgumentError(f"horizon {h} ms is not a whole number of frames at {frame_rate_hz} Hz")
        out.append(int(r))
    return out


def horizon_prediction_error(generated, truth, horizons_ms=DEFAULT_HORIZONS_MS,
                             frame_rate_hz: float = 25.0, dims=None) -> HorizonErrorReport:
    """Euclidean error between generated and true frames at each horizon.

    Both arrays start at the first frame after the conditioning prefix, so
    the frame ``k`` steps past the prefix is row ``k - 1``. ``dims`` selects
    the compared columns (all by default).
    """
    g = np.asarray(generated, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    offsets = horizon_frame_indices(horizons_ms, frame_rate_hz)
    need = offsets[-1]
    if g.shape[0] < need or t.shape[0] < need:
        raise ArgumentError(f"need {need} frames past the prefix, got {g.shape[0]} / {t.shape[0]}")
    if g.shape[1:] != t.shape[1:]:
        raise ShapeError("generated and true frames differ in dimensionality")
    sel = slice(None) if dims is None else dims
    errors = [float(np.linalg.norm(g[k - 1, sel] - t[k - 1, sel])) for k in offsets]
    return HorizonErrorReport(list(horizons_ms), offsets, errors, 1)


def average_reports(reports: Sequence[HorizonErrorReport]) -> HorizonErrorReport:
    if not reports:
        raise ArgumentError("no reports to average")
    errs = np.mean([r.errors for r in reports], axis=0)
    first = reports[0]
    return HorizonErrorReport(list(first.horizons_ms), list(first.frame_offsets),
                              [float(e) for e in errs], sum(r.prefix_count for r in reports))


def prefix_ends(length: int, min_prefix: int, frames_needed: int, count: int = 8) -> list[int]:
    """``count`` evenly spaced prefix lengths leaving ``frames_needed`` frames of ground truth."""
    last = length - frames_needed
    if last < min_prefix:
        raise ArgumentError(
            f"sequence of {length} frames cannot hold a {min_prefix}-frame prefix plus {frames_needed} frames"
        )
    return [int(round(v)) for v in np.linspace(min_prefix, last, count)]


def evaluate_horizons(predict: Callable[[np.ndarray, int], np.ndarray], sequences,
                      min_prefix: int, horizons_ms=DEFAULT_HORIZONS_MS,
                      frame_rate_hz: float = 25.0, n_prefixes: int = 8,
                      dims=None) -> HorizonErrorReport:
    """Average horizon errors over ``n_prefixes`` evenly spaced prefixes per sequence.

    ``predict(prefix, steps)`` returns the ``steps`` frames following the prefix.
    """
    offsets = horizon_frame_indices(horizons_ms, frame_rate_hz)
    steps = offsets[-1]
    reports = []
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.float64)
        for end in prefix_ends(seq.shape[0], min_prefix, steps, n_prefixes):
            generated = predict(seq[:end], steps)
            reports.append(horizon_prediction_error(generated, seq[end:end + steps],
                                                    horizons_ms, frame_rate_hz, dims))
    return average_reports(reports)


# ---------------------------------------------------------------------------
# heat maps


def _heatmaps(h) -> np.ndarray:
    a = np.asarray(h, dtype=np.float64)
    if a.ndim < 3 or a.shape[-1] != a.shape[-2]:
        raise ShapeError("heat maps must have shape (..., K, N, N)")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ArgumentError("heat-map scores must be finite and non-negative")
    return a


def heatmap_argmax(h) -> np.ndarray:
    """``(row, col)`` of the best cell per joint; ties go to the first cell in row-major order."""
    a = _heatmaps(h)
    n = a.shape[-1]
    flat = a.reshape(a.shape[:-2] + (n * n,))
    idx = np.argmax(flat, axis=-1)
    return np.stack([idx // n, idx % n], axis=-1)


def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """1-D bilinear interpolation weights (pixel-centre aligned, edge clamped), shape ``(n_out, n_in)``."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for j in range(n_out):
        src = (j + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        lo = int(math.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[j, lo] += 1.0 - frac
        m[j, hi] += frac
    return m


def upsample(h, factor: int = 2) -> np.ndarray:
    a = np.asarray(h, dtype=np.float64)
    n = a.shape[-1]
    u = bilinear_matrix(n, n * factor)
    return u @ a @ u.T


def fuse_scales(coarse, fine) -> np.ndarray:
    """Bilinearly upsample the coarse heat maps to the fine grid and add them."""
    c = _heatmaps(coarse)
    f = _heatmaps(fine)
    if c.shape[:-2] != f.shape[:-2] or f.shape[-1] != 2 * c.shape[-1]:
        raise ShapeError(f"cannot fuse coarse {c.shape} into fine {f.shape}; fine side must be twice coarse")
    return f + upsample(c, 2)


def grid_coords(n: int) -> np.ndarray:
    """Cell-centre coordinates ``(row, col)`` of an ``n x n`` grid in row-major order."""
    r, c = np.divmod(np.arange(n * n), n)
    return np.stack([r, c], axis=1).astype(np.float64)


def smoothness_matrix(n: int, smoothness_scale: float) -> np.ndarray:
    coords = grid_coords(n)
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
    return np.exp(-d / smoothness_scale)


def viterbi_path(unary, pairwise):
    """Best state path for ``sum_t unary[t, s_t] + sum_t pairwise[s_{t-1}, s_t]``.

    Returns ``(path, objective)``. Ties resolve to the lowest state index.
    """
    unary = np.asarray(unary, dtype=np.float64)
    T, S = unary.shape
    score = unary[0].copy()
    back = np.zeros((T, S), dtype=np.int64)
    for t in range(1, T):
        cand = score[:, None] + pairwise
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], np.arange(S)] + unary[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(score))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(score[path[-1]])


def path_objective(unary, pairwise, path) -> float:
    unary = np.asarray(unary, dtype=np.float64)
    total = sum(unary[t, s] for t, s in enumerate(path))
    total += sum(pairwise[path[t - 1], path[t]] for t in range(1, len(path)))
    return float(total)


def viterbi_smooth(heatmaps, smoothness_scale: float = 1.0, return_objective: bool = False):
    """Temporally smooth per-joint locations over a ``(T, K, N, N)`` heat-map sequence.

    Each joint is decoded independently: heat-map scores are rewarded per
    frame and consecutive locations earn ``exp(-distance / smoothness_scale)``.
    Returns ``(T, K, 2)`` grid locations (and per-joint objectives if asked).
    """
    a = _heatmaps(heatmaps)
    if a.ndim != 4:
        raise ShapeError("expected a (T, K, N, N) heat-map sequence")
    if not smoothness_scale > 0:
        raise ArgumentError("smoothness_scale must be positive")
    T, K, n, _ = a.shape
    pair = smoothness_matrix(n, smoothness_scale)
    poses = np.empty((T, K, 2), dtype=np.int64)
    objectives = np.empty(K)
    for k in range(K):
        path, obj = viterbi_path(a[:, k].reshape(T, n * n), pair)
        poses[:, k, 0], poses[:, k, 1] = np.divmod(path, n)
        objectives[k] = obj
    return (poses, objectives) if return_objective else poses


# ---------------------------------------------------------------------------
# PCK


@dataclass
class PckCurve:
    thresholds: list[float]
    rates: list[float]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "detection_rate"])
            for t, r in zip(self.thresholds, self.rates):
                w.writerow([repr(float(t)), repr(float(r))])


def reference_distances(truth, left_hip: int, right_shoulder: int) -> np.ndarray:
    """Per-frame distance between the left hip and right shoulder."""
    p = np.asarray(truth, dtype=np.float64)
    return np.linalg.norm(p[:, left_hip] - p[:, right_shoulder], axis=-1)


def pck_curve(pred, truth, reference, thresholds=DEFAULT_PCK_THRESHOLDS) -> PckCurve:
    """Fraction of joints within ``threshold * reference[frame]`` of the truth."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(truth, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64).reshape(-1)
    if p.shape != g.shape or p.ndim != 3:
        raise ShapeError(f"predictions {p.shape} and truth {g.shape} must both be (T, K, 2)")
    if ref.shape[0] != p.shape[0]:
        raise ShapeError("need one reference distance per frame")
    bad = np.flatnonzero(~(ref > 0))
    if bad.size:
        raise ArgumentError(f"reference distance is not positive in frame {int(bad[0])}")
    dist = np.linalg.norm(p - g, axis=-1)
    thresholds = [float(t) for t in thresholds]
    rates = [float(np.mean(dist <= t * ref[:, None])) for t in thresholds]
    return PckCurve(thresholds, rates)


# ---------------------------------------------------------------------------
# file formats


def write_heatmaps(heatmaps, path) -> None:
    """Header ``K,N,T`` then its values, then ``T*K`` rows of ``N*N`` scores (row-major)."""
    a = _heatmaps(heatmaps)
    T, K, n, _ = a.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("K,N,T\n")
        fh.write(f"{K},{n},{T}\n")
        for row in a.reshape(T * K, n * n):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_heatmaps(path) -> np.ndarray:
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines()]
    if len(lines) < 2 or lines[0].strip().replace(" ", "") != "K,N,T":
        raise ParseError("expected 'K,N,T' header", path, 1)
    try:
        K, n, T = (int(v) for v in lines[1].split(","))
    except ValueError:
        raise ParseError("header values must be three integers", path, 2) from None
    if K < 1 or n < 1 or T < 1:
        raise ParseError("K, N and T must be positive", path, 2)
    body = lines[2:]
    if len(body) != T * K:
        raise ParseError(f"expected {T * K} score rows, found {len(body)}", path, 3)
    out = np.empty((T * K, n * n))
    for k, line in enumerate(body):
        cells = line.split(",")
        if len(cells) != n * n:
            raise ParseError(f"expected {n * n} scores, found {len(cells)}", path, k + 3)
        try:
            out[k] = [float(c) for c in cells]
        except ValueError as exc:
            raise ParseError(str(exc), path, k + 3) from None
    return _heatmaps(out.reshape(T, K, n, n))


def write_poses(poses, path) -> None:
    """Header ``joints,<K>`` then one frame per line: ``row_1,col_1,...,row_K,col_K``."""
    p = np.asarray(poses, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"joints,{p.shape[1]}\n")
        for frame in p.reshape(p.shape[0], -1):
            fh.write(",".join(repr(float(v)) for v in frame) + "\n")


def load_poses(path) -> np.ndarray:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    head = lines[0].split(",") if lines else []
    if len(head) != 2 or head[0].strip() != "joints":
        raise ParseError("expected 'joints,<K>' header", path, 1)
    try:
        K = int(head[1])
    except ValueError:
        raise ParseError("joint count must be an integer", path, 1) from None
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 2 * K:
            raise ParseError(f"expected {2 * K} values, found {len(cells)}", path, lineno)
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
    if not rows:
        raise ParseError("no frames", path, 2)
    return np.array(rows).reshape(len(rows), K, 2)
