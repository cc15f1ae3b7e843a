"""Synthetic quasi-periodic corpora for smoke tests and desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mocap_data import MocapSequence


@dataclass(frozen=True)
class SineDynamics:
    """Per-dimension sum of two sinusoids with fixed frequencies and amplitudes.

    Sequences differ only in their phases, so a model that learns the
    dynamics generalizes to unseen phase combinations.
    """

    freqs_hz: np.ndarray      # (D, 2)
    amplitudes: np.ndarray    # (D, 2)
    frame_rate_hz: float = 25.0

    @classmethod
    def random(cls, dim: int = 20, seed: int = 0, frame_rate_hz: float = 25.0,
               freq_range=(0.3, 1.2)) -> "SineDynamics":
        rng = np.random.default_rng(seed)
        freqs = rng.uniform(*freq_range, size=(dim, 2))
        amps = rng.uniform(0.5, 1.0, size=(dim, 2))
        return cls(freqs, amps, frame_rate_hz)

    @property
    def dim(self) -> int:
        return self.freqs_hz.shape[0]

    def sequence(self, phases: np.ndarray, length: int) -> np.ndarray:
        t = np.arange(length)[:, None, None] / self.frame_rate_hz
        waves = self.amplitudes * np.sin(2 * np.pi * self.freqs_hz * t + phases)
        return waves.sum(axis=-1)

    def corpus(self, n_sequences: int, length: int, rng: np.random.Generator) -> list[np.ndarray]:
        return [self.sequence(rng.uniform(0, 2 * np.pi, size=(self.dim, 2)), length)
                for _ in range(n_sequences)]


def sine_corpus(n_sequences: int = 20, dim: int = 20, length: int = 500,
                frame_rate_hz: float = 25.0, seed: int = 0, dynamics_seed: int = 0):
    """Return ``(dynamics, sequences)``; phases are drawn from ``seed``."""
    dyn = SineDynamics.random(dim, dynamics_seed, frame_rate_hz)
    return dyn, dyn.corpus(n_sequences, length, np.random.default_rng(seed))


def walking_mocap(length: int = 120, joints: int = 4, frame_rate_hz: float = 50.0,
                  seed: int = 0) -> MocapSequence:
    """A toy mocap clip: oscillating joint angles and steady forward motion with slow turning."""
    rng = np.random.default_rng(seed)
    t = np.arange(length) / frame_rate_hz
    freq = rng.uniform(0.8, 1.2)
    angles = np.stack(
        [0.3 * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi)) for _ in range(3 * joints)],
        axis=1,
    )
    speed = 1.2 / frame_rate_hz
    dx = np.full(length, speed)
    dy = np.zeros(length)
    dyaw = np.full(length, 0.05 / frame_rate_hz)
    dx[0] = dy[0] = dyaw[0] = 0.0
    frames = np.concatenate([angles, np.stack([dx, dy, dyaw], axis=1)], axis=1)
    return MocapSequence(frames, frame_rate_hz, [f"joint{j}" for j in range(joints)])
