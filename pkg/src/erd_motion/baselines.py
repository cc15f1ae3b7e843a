"""Reference predictors: nearest-neighbour N-gram, LSTM-3LR, and trajectory forecasters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .erd_model import ErdConfig, ErdModel
from .errors import ArgumentError, ShapeError
from .mocap_data import MocapSequence, angle_columns


@dataclass
class NgramMatch:
    frames: np.ndarray       # (steps', D) continuation copied from the corpus
    distance: float
    sequence_index: int
    start: int               # first frame of the matched window
    truncated: bool


class NgramIndex:
    """All length-``n`` windows of a training corpus that have a continuation.

    Distances use only the ``match_dims`` columns (all columns by default).
    Windows are scanned in corpus order, so ties resolve to the earliest one.
    """

    def __init__(self, sequences: Sequence, n: int = 6, match_dims=None):
        if n < 1:
            raise ArgumentError("n must be >= 1")
        self.n = n
        self.sequences = [s.frames if isinstance(s, MocapSequence) else np.asarray(s, dtype=np.float64)
                          for s in sequences]
        if not self.sequences:
            raise ArgumentError("corpus is empty")
        dims = {s.shape[1] for s in self.sequences}
        if len(dims) != 1:
            raise ShapeError("corpus sequences differ in dimensionality")
        self.dim = dims.pop()
        self.match_dims = slice(None) if match_dims is None else match_dims
        keys, handles = [], []
        for k, seq in enumerate(self.sequences):
            feats = seq[:, self.match_dims]
            for start in range(0, seq.shape[0] - n):
                keys.append(feats[start:start + n].ravel())
                handles.append((k, start))
        if not keys:
            raise ArgumentError(f"no training sequence is longer than n={n}")
        self.keys = np.stack(keys)
        self.handles = handles

    @classmethod
    def from_mocap(cls, sequences: Sequence[MocapSequence], n: int = 6) -> "NgramIndex":
        """Index mocap sequences matching on joint angles only (global deltas excluded)."""
        return cls(sequences, n, angle_columns(sequences[0].dim))

    def __len__(self):
        return len(self.handles)

    def distances(self, prefix) -> np.ndarray:
        p = prefix.frames if isinstance(prefix, MocapSequence) else np.asarray(prefix, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != self.dim:
            raise ShapeError(f"prefix must have shape (T, {self.dim})")
        if p.shape[0] < self.n:
            raise ArgumentError(f"prefix has {p.shape[0]} frames, need at least n={self.n}")
        query = p[-self.n:, self.match_dims].ravel()
        return np.sqrt(np.sum((self.keys - query) ** 2, axis=1))


def ngram_continue(index: NgramIndex, prefix, steps: int) -> NgramMatch:
    """Copy the frames that followed the training window closest to the prefix's last ``n`` frames."""
    if steps < 1:
        raise ArgumentError("steps must be >= 1")
    d = index.distances(prefix)
    best = int(np.argmin(d))
    k, start = index.handles[best]
    seq = index.sequences[k]
    first = start + index.n
    frames = seq[first:first + steps].copy()
    return NgramMatch(frames, float(d[best]), k, start, frames.shape[0] < steps)


def ngram_predict(index: NgramIndex, prefix, steps: int) -> np.ndarray:
    """:func:`ngram_continue` frames, holding the last copied frame if the match ran out."""
    m = ngram_continue(index, prefix, steps)
    if m.truncated:
        pad = np.repeat(m.frames[-1:], steps - m.frames.shape[0], axis=0)
        return np.concatenate([m.frames, pad])
    return m.frames


def make_lstm3lr(input_dim: int, scale: str = "full", units: int | None = None,
                 output_head: str = "gmm", rng=None, **overrides) -> ErdModel:
    """Three stacked LSTM layers between a single linear encoder and a linear decoder."""
    if input_dim < 1:
        raise ArgumentError("input_dim must be >= 1")
    if units is None:
        if scale not in ("full", "desk"):
            raise ArgumentError("scale must be 'full' or 'desk'")
        units = 1000 if scale == "full" else 128
    cfg = ErdConfig(
        input_dim,
        encoder_sizes=[units],
        lstm_sizes=[units, units, units],
        decoder_sizes=[],
        output_head=output_head,
        hidden_activation="identity",
        **overrides,
    )
    return ErdModel(cfg, rng)


# ---------------------------------------------------------------------------
# 2D joint trajectories


def _poses(seq) -> np.ndarray:
    p = np.asarray(seq, dtype=np.float64)
    if p.ndim != 3 or p.shape[-1] != 2:
        raise ShapeError("pose sequence must have shape (T, K, 2)")
    return p


def zero_motion_forecast(seq, horizon_frames: int) -> np.ndarray:
    """Forecast issued at frame ``t`` for frame ``t + H``: the pose at ``t`` itself.

    Returns an array aligned with the input, ``out[t]`` targeting ``t + H``.
    """
    if horizon_frames < 0:
        raise ArgumentError("horizon must be >= 0")
    return _poses(seq).copy()


def constant_displacement_forecast(seq, horizon_frames: int, grid_size: int | None = None) -> np.ndarray:
    """Extrapolate each joint by ``H`` times its last observed displacement.

    ``out[t] = loc_t + H * (loc_t - loc_{t-1})`` clamped to ``[0, grid_size-1]``
    when a grid size is given. Frame 0 has no displacement and is forecast
    as static.
    """
    p = _poses(seq)
    if p.shape[0] < 2:
        raise ArgumentError("constant-displacement forecasting needs at least 2 frames")
    if horizon_frames < 0:
        raise ArgumentError("horizon must be >= 0")
    d = np.zeros_like(p)
    d[1:] = p[1:] - p[:-1]
    out = p + horizon_frames * d
    if grid_size is not None:
        out = np.clip(out, 0, grid_size - 1)
    return out


def forecast_error(forecast, truth, horizon_frames: int) -> np.ndarray:
    """Per (frame, joint) Euclidean error of forecasts against the frames they target."""
    f, g = _poses(forecast), _poses(truth)
    T = g.shape[0]
    H = horizon_frames
    if H >= T:
        raise ArgumentError("horizon exceeds the sequence length")
    return np.linalg.norm(f[:T - H] - g[H:], axis=-1)
