"""Desk-scale synthetic-dynamics experiment used by the acceptance suite.

A corpus of phase-shifted sinusoid sums stands in for mocap: the dynamics
are shared across sequences, so held-out phases test generalization, and
the data amplitude gives a natural yardstick for closed-loop drift.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import NgramIndex, ngram_predict
from .erd_model import ErdConfig, ErdModel, generate
from .evaluation import DEFAULT_HORIZONS_MS, evaluate_horizons, prefix_ends
from .mocap_data import NoiseSchedule, fit_standardizer, standardize
from .synthetic import sine_corpus
from .training import TrainConfig, seed_streams, train


@dataclass(frozen=True)
class SyntheticSetup:
    n_train: int = 20
    dim: int = 20
    length: int = 500
    frame_rate_hz: float = 25.0
    n_test: int = 4
    test_length: int = 300
    corpus_seed: int = 1000
    test_seed: int = 2000
    prefix_len: int = 50
    n_prefixes: int = 8
    unroll_steps: int = 100
    ngram_n: int = 6
    epochs: int = 200
    learning_rate: float = 3e-3
    momentum: float = 0.9
    batch_size: int = 8
    window_len: int = 100
    stride: int = 50
    lr_decay: float = 0.985
    ramp_fraction: float = 0.5


@dataclass
class SyntheticResult:
    seed: int
    sigma_max: float
    train_seconds: float
    train_amplitude: float          # max |standardized training value|
    max_unroll_amplitude: float     # over all held-out prefixes and steps
    amplitude_at_final_step: float  # mean over prefixes of max |frame| at the last step
    horizon_errors: dict = field(default_factory=dict)   # horizon ms -> mean error
    ngram_errors: dict = field(default_factory=dict)
    final_loss: float = float("nan")

    @property
    def drift_ratio(self) -> float:
        return self.max_unroll_amplitude / self.train_amplitude


def synthetic_data(setup: SyntheticSetup = SyntheticSetup()):
    """Standardized ``(train, test)`` lists drawn from one set of sinusoid dynamics."""
    dyn, train_raw = sine_corpus(setup.n_train, setup.dim, setup.length,
                                 setup.frame_rate_hz, seed=setup.corpus_seed)
    test_raw = dyn.corpus(setup.n_test, setup.test_length, np.random.default_rng(setup.test_seed))
    st = fit_standardizer(train_raw)
    return [standardize(s, st) for s in train_raw], [standardize(s, st) for s in test_raw], st


def run_synthetic(seed: int, sigma_max: float, setup: SyntheticSetup = SyntheticSetup(),
                  horizons_ms=DEFAULT_HORIZONS_MS) -> SyntheticResult:
    """Train a desk-scale ERD on the synthetic corpus and measure drift and horizon error."""
    train_seqs, test_seqs, st = synthetic_data(setup)
    streams = seed_streams(seed)
    model = ErdModel(ErdConfig.desk_scale(setup.dim), streams["init"], standardizer=st)
    cfg = TrainConfig(setup.learning_rate, setup.momentum, setup.epochs, setup.window_len,
                      setup.stride, setup.batch_size, lr_decay=setup.lr_decay,
                      noise=NoiseSchedule(sigma_max, setup.ramp_fraction))
    start = time.perf_counter()
    history = train(model, train_seqs, cfg, streams["noise"], streams["shuffle"])
    elapsed = time.perf_counter() - start

    amp = max(float(np.abs(s).max()) for s in train_seqs)
    steps = setup.unroll_steps
    peak, final = 0.0, []
    for seq in test_seqs:
        for end in prefix_ends(len(seq), setup.prefix_len, steps, setup.n_prefixes):
            g = generate(model, seq[:end], steps)
            peak = max(peak, float(np.abs(g).max()))
            final.append(float(np.abs(g[-1]).max()))

    erd = evaluate_horizons(lambda p, k: generate(model, p, k), test_seqs, setup.prefix_len,
                            horizons_ms, setup.frame_rate_hz, setup.n_prefixes)
    index = NgramIndex(train_seqs, setup.ngram_n)
    ngram = evaluate_horizons(lambda p, k: ngram_predict(index, p, k), test_seqs,
                              setup.prefix_len, horizons_ms, setup.frame_rate_hz, setup.n_prefixes)
    return SyntheticResult(
        seed, sigma_max, elapsed, amp, peak, float(np.mean(final)),
        dict(zip(erd.horizons_ms, erd.errors)), dict(zip(ngram.horizons_ms, ngram.errors)),
        history[-1].loss,
    )
