"""Mocap feature vectors: file IO, standardization, global motion, windowing.

A frame is a flat vector of ``3*J`` exponential-map joint angles followed by
three global-motion deltas ``(dx, dy, dyaw)`` expressed relative to the
previous frame's position and heading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArgumentError, ParseError, ShapeError

GLOBAL_DIMS = 3
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class SkeletonSpec:
    joint_names: tuple[str, ...]
    parent_index: tuple[int, ...]
    dof_per_joint: int = 3

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "parent_index", tuple(int(p) for p in self.parent_index))
        n = len(self.joint_names)
        if len(self.parent_index) != n:
            raise ArgumentError("parent_index and joint_names lengths differ")
        roots = [j for j, p in enumerate(self.parent_index) if p == -1]
        if len(roots) != 1:
            raise ArgumentError(f"skeleton needs exactly one root, found {len(roots)}")
        for j, p in enumerate(self.parent_index):
            if p != -1 and not 0 <= p < n:
                raise ArgumentError(f"joint {j} has out-of-range parent {p}")
        # every joint must reach the root without revisiting a joint
        for j in range(n):
            seen = set()
            k = j
            while k != -1:
                if k in seen:
                    raise ArgumentError(f"cycle in skeleton through joint {k}")
                seen.add(k)
                k = self.parent_index[k]

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @property
    def frame_dim(self) -> int:
        return self.dof_per_joint * self.joint_count + GLOBAL_DIMS


@dataclass(frozen=True)
class MocapFrame:
    joint_angles: np.ndarray
    global_dx: float = 0.0
    global_dy: float = 0.0
    global_dyaw: float = 0.0

    @classmethod
    def from_vector(cls, v) -> "MocapFrame":
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1 or v.size < GLOBAL_DIMS or (v.size - GLOBAL_DIMS) % 3:
            raise ShapeError(f"frame vector of length {v.size} is not 3*J + 3")
        return cls(v[:-GLOBAL_DIMS].copy(), float(v[-3]), float(v[-2]), float(v[-1]))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.joint_angles, [self.global_dx, self.global_dy, self.global_dyaw]])


@dataclass
class MocapSequence:
    """A ``(T, 3*J + 3)`` array of frames plus frame rate and joint names."""

    frames: np.ndarray
    frame_rate_hz: float
    joint_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.frames = np.array(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] == 0:
            raise ArgumentError("a mocap sequence needs at least one frame")
        if not self.frame_rate_hz > 0:
            raise ArgumentError("frame_rate_hz must be positive")
        if not np.all(np.isfinite(self.frames)):
            raise ArgumentError("mocap frames must be finite")
        if self.joint_names:
            expected = 3 * len(self.joint_names) + GLOBAL_DIMS
            if self.frames.shape[1] != expected:
                raise ShapeError(
                    f"{len(self.joint_names)} joints need {expected} columns, got {self.frames.shape[1]}"
                )

    def __len__(self):
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def joint_angles(self) -> np.ndarray:
        return self.frames[:, :-GLOBAL_DIMS]

    @property
    def global_deltas(self) -> np.ndarray:
        return self.frames[:, -GLOBAL_DIMS:]

    def frame(self, t: int) -> MocapFrame:
        return MocapFrame.from_vector(self.frames[t])

    def with_frames(self, frames, frame_rate_hz=None) -> "MocapSequence":
        rate = self.frame_rate_hz if frame_rate_hz is None else frame_rate_hz
        return MocapSequence(frames, rate, list(self.joint_names))


def angle_columns(dim: int) -> slice:
    """Columns holding joint angles in a frame vector of width ``dim``."""
    return slice(0, dim - GLOBAL_DIMS)


# ---------------------------------------------------------------------------
# CSV format


def load_mocap(path) -> MocapSequence:
    """Read the mocap CSV format.

    Line 1 is ``frame_rate_hz,<rate>``, line 2 the comma separated joint
    names, then one frame per line (``3*J`` angles, ``dx, dy, dyaw``).
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or all(not ln.strip() for ln in lines):
        raise ArgumentError(f"{path}: file is empty")
    head = lines[0].split(",")
    if len(head) != 2 or head[0].strip() != "frame_rate_hz":
        raise ParseError("expected 'frame_rate_hz,<value>' header", path, 1)
    try:
        rate = float(head[1])
    except ValueError:
        raise ParseError(f"bad frame rate {head[1]!r}", path, 1) from None
    if not rate > 0 or not math.isfinite(rate):
        raise ParseError(f"frame rate must be positive, got {rate}", path, 1)
    if len(lines) < 2:
        raise ParseError("missing joint-name line", path, 2)
    names = [n.strip() for n in lines[1].split(",")] if lines[1].strip() else []
    if any(not n for n in names):
        raise ParseError("empty joint name", path, 2)
    width = 3 * len(names) + GLOBAL_DIMS
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != width:
            raise ParseError(f"expected {width} values, found {len(cells)}", path, lineno)
        try:
            row = [float(c) for c in cells]
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
        if not all(math.isfinite(v) for v in row):
            raise ParseError("non-finite value", path, lineno)
        rows.append(row)
    if not rows:
        raise ArgumentError(f"{path}: no frames")
    return MocapSequence(np.array(rows), rate, names)


def write_mocap(seq: MocapSequence, path) -> None:
    if not seq.joint_names:
        raise ArgumentError("writing the CSV format requires joint names")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"frame_rate_hz,{seq.frame_rate_hz!r}\n")
        fh.write(",".join(seq.joint_names) + "\n")
        for row in seq.frames:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# standardization


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ShapeError("mean and std must be vectors of equal length")
        if np.any(self.std < STD_FLOOR):
            raise ArgumentError("std entries must be >= the floor")

    @property
    def dim(self) -> int:
        return self.mean.size


def _frames_of(x):
    return x.frames if isinstance(x, MocapSequence) else np.asarray(x, dtype=np.float64)


def fit_standardizer(seqs) -> Standardizer:
    """Per-dimension mean and population std over all frames of all sequences."""
    arrays = [_frames_of(s) for s in seqs]
    if not arrays:
        raise ArgumentError("need at least one sequence")
    dims = {a.shape[1] for a in arrays}
    if len(dims) != 1:
        raise ShapeError(f"sequences have differing dimensionality {sorted(dims)}")
    data = np.concatenate(arrays, axis=0)
    if data.shape[0] < 2:
        raise ArgumentError("fitting a standardizer needs at least 2 frames")
    mean = data.mean(axis=0)
    std = np.maximum(data.std(axis=0), STD_FLOOR)
    return Standardizer(mean, std)


def _check_dim(frames, s: Standardizer):
    if frames.shape[-1] != s.dim:
        raise ShapeError(f"data has {frames.shape[-1]} dims, standardizer has {s.dim}")


def standardize(seq, s: Standardizer):
    """``(x - mean) / std``; returns the same kind of object it was given."""
    frames = _frames_of(seq)
    _check_dim(frames, s)
    out = (frames - s.mean) / s.std
    return seq.with_frames(out) if isinstance(seq, MocapSequence) else out


def destandardize(seq, s: Standardizer):
    frames = _frames_of(seq)
    _check_dim(frames, s)
    out = frames * s.std + s.mean
    return seq.with_frames(out) if isinstance(seq, MocapSequence) else out


# ---------------------------------------------------------------------------
# global motion


def wrap_angle(a):
    """Map angles to ``[-pi, pi)``."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def to_relative_global(absolute) -> np.ndarray:
    """Convert absolute ``(x, y, yaw)`` per frame to ``T-1`` deltas.

    Each delta is the translation expressed in the previous frame's heading
    frame plus the wrapped heading change.
    """
    a = np.asarray(absolute, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ShapeError("absolute trajectory must have shape (T, 3)")
    if a.shape[0] < 2:
        raise ArgumentError("need at least 2 frames to compute deltas")
    d = np.diff(a[:, :2], axis=0)
    yaw = a[:-1, 2]
    cos, sin = np.cos(yaw), np.sin(yaw)
    dx = cos * d[:, 0] + sin * d[:, 1]
    dy = -sin * d[:, 0] + cos * d[:, 1]
    dyaw = wrap_angle(np.diff(a[:, 2]))
    return np.stack([dx, dy, dyaw], axis=1)


def integrate_global(deltas, initial=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Inverse of :func:`to_relative_global`: returns ``len(deltas) + 1`` poses."""
    d = np.asarray(deltas, dtype=np.float64).reshape(-1, 3)
    out = np.empty((d.shape[0] + 1, 3))
    out[0] = initial
    x, y, yaw = (float(v) for v in initial)
    for t, (dx, dy, dyaw) in enumerate(d, start=1):
        c, s = math.cos(yaw), math.sin(yaw)
        x += c * dx - s * dy
        y += s * dx + c * dy
        yaw += dyaw
        out[t] = (x, y, yaw)
    return out


def compose_deltas(deltas) -> np.ndarray:
    """Collapse consecutive deltas into one delta relative to the first frame's heading."""
    pose = integrate_global(deltas)[-1]
    return np.array([pose[0], pose[1], wrap_angle(pose[2])])


def subsample(seq: MocapSequence, factor: int) -> MocapSequence:
    """Keep every ``factor``-th frame, recomposing the global deltas over each new step."""
    if int(factor) != factor or factor < 1:
        raise ArgumentError(f"subsample factor must be an integer >= 1, got {factor}")
    factor = int(factor)
    if factor == 1:
        return seq.with_frames(seq.frames.copy())
    idx = np.arange(0, len(seq), factor)
    frames = seq.frames[idx].copy()
    g = seq.global_deltas
    for k in range(1, idx.size):
        frames[k, -GLOBAL_DIMS:] = compose_deltas(g[idx[k - 1] + 1: idx[k] + 1])
    return seq.with_frames(frames, seq.frame_rate_hz / factor)


# ---------------------------------------------------------------------------
# denoising curriculum


@dataclass(frozen=True)
class NoiseSchedule:
    sigma_max: float = 0.1
    ramp_fraction: float = 0.5

    def __post_init__(self):
        if self.sigma_max < 0:
            raise ArgumentError("sigma_max must be >= 0")
        if not 0 < self.ramp_fraction <= 1:
            raise ArgumentError("ramp_fraction must lie in (0, 1]")


def noise_sigma(schedule: NoiseSchedule, epoch: int, total_epochs: int) -> float:
    """Linear ramp from 0 at epoch 0 to ``sigma_max``, flat afterwards."""
    if not 0 <= epoch < total_epochs:
        raise ArgumentError(f"epoch {epoch} outside [0, {total_epochs})")
    ramp_end = schedule.ramp_fraction * total_epochs
    return schedule.sigma_max * min(1.0, epoch / ramp_end)


def corrupt(frame, sigma: float, rng: np.random.Generator):
    """Add i.i.d. zero-mean Gaussian noise with std ``sigma`` to every feature."""
    if sigma < 0:
        raise ArgumentError("sigma must be >= 0")
    x = np.asarray(frame, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    return x + rng.normal(0.0, sigma, size=x.shape)


def make_windows(seq, window_len: int, stride: int = 1):
    """Pair input frames ``t..t+L-1`` with next-frame targets ``t+1..t+L``."""
    frames = _frames_of(seq)
    if window_len < 1 or stride < 1:
        raise ArgumentError("window_len and stride must be >= 1")
    T = frames.shape[0]
    if T < window_len + 1:
        raise ArgumentError(f"sequence of {T} frames is too short for window {window_len}")
    return [(frames[t:t + window_len], frames[t + 1:t + window_len + 1])
            for t in range(0, T - window_len, stride)]


def sequence_arrays(seqs: Sequence) -> list[np.ndarray]:
    return [_frames_of(s) for s in seqs]
