"""Fast built-in verification: gradient checks, oracle equivalences, round trips."""

from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import evaluation, nn_core, oracles
from .baselines import NgramIndex, make_lstm3lr, ngram_continue
from .erd_model import (ErdConfig, ErdModel, GmmParams, gmm_nll, load_checkpoint,
                        save_checkpoint, sequence_loss)
from .mocap_data import (destandardize, fit_standardizer, integrate_global, load_mocap,
                         standardize, to_relative_global, write_mocap)
from .synthetic import walking_mocap

GRAD_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def micro_erd(seed: int, head: str = "gmm") -> ErdModel:
    return ErdModel(ErdConfig(4, [6], [6], [6], output_head=head, gmm_components=2), rng=seed)


def micro_lstm3lr(seed: int) -> ErdModel:
    return make_lstm3lr(4, units=4, gmm_components=2, rng=seed)


def _loss_fn(fault: str | None = None) -> Callable:
    def loss_fn(model, inputs, backward):
        x, y = inputs
        loss = sequence_loss(model, x, y, training=True, backward=backward)
        if backward and fault:
            for name, p in model.parameters().items():
                if name.split(".")[0] == fault:
                    p.grad *= 1.01
                    p.grad += 1e-3
        return loss
    return loss_fn


def gradient_check(model: ErdModel, seed: int, fault: str | None = None, steps: int = 4,
                   batch: int = 2) -> dict[str, float]:
    rng = np.random.default_rng(10_000 + seed)
    d = model.config.input_dim
    x = rng.normal(size=(steps, batch, d))
    y = rng.normal(size=(steps, batch, d))
    return nn_core.gradient_errors(model, _loss_fn(fault), (x, y))


def check_gradients(seeds=range(3), fault: str | None = None) -> list[CheckResult]:
    out = []
    builders = [("erd-gmm", lambda s: micro_erd(s, "gmm")),
                ("erd-euclidean", lambda s: micro_erd(s, "euclidean")),
                ("lstm3lr", micro_lstm3lr)]
    for label, build in builders:
        worst, worst_param = 0.0, ""
        for seed in seeds:
            errors = gradient_check(build(seed), seed, fault)
            name, err = max(errors.items(), key=lambda kv: kv[1])
            if err > worst:
                worst, worst_param = err, name
        layer = worst_param.split(".")[0]
        out.append(CheckResult(
            f"gradient {label}", worst < GRAD_TOL,
            f"max rel error {worst:.2e} (layer {layer}, parameter {worst_param})",
        ))
    return out


def check_gmm_oracle(cases: int = 200, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        K, D = rng.integers(1, 5), rng.integers(1, 7)
        w = rng.dirichlet(np.ones(K))
        mu = rng.normal(size=(K, D))
        var = rng.uniform(0.2, 2.0, size=(K, D))
        x = rng.normal(size=D)
        a = float(gmm_nll(GmmParams(w, mu, var), x))
        b = oracles.naive_gmm_nll(w, mu, var, x)
        worst = max(worst, abs(a - b))
    return CheckResult("gmm nll vs direct density", worst < 1e-10, f"max abs diff {worst:.2e}")


def check_viterbi_oracle(cases: int = 30, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(cases):
        T, n = rng.integers(1, 5), rng.integers(1, 4)
        unary = rng.uniform(0, 3, size=(T, n * n))
        pair = evaluation.smoothness_matrix(n, rng.uniform(0.3, 3.0))
        path, obj = evaluation.viterbi_path(unary, pair)
        bpath, bobj = oracles.brute_force_viterbi(unary, pair)
        if list(path) != bpath or abs(obj - bobj) > 1e-9:
            failures += 1
    return CheckResult("viterbi vs exhaustive paths", failures == 0, f"{failures}/{cases} mismatches")


def check_ngram(cases: int = 20, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    corpus = [rng.normal(size=(rng.integers(20, 40), 5)) for _ in range(3)]
    index = NgramIndex(corpus, 6)
    failures = 0
    for _ in range(cases):
        k = int(rng.integers(len(corpus)))
        end = int(rng.integers(6, corpus[k].shape[0] - 3))
        m = ngram_continue(index, corpus[k][:end], 3)
        if m.distance != 0.0 or not np.array_equal(m.frames, corpus[k][end:end + 3]):
            failures += 1
    return CheckResult("ngram exact continuation", failures == 0, f"{failures}/{cases} mismatches")


def check_round_trips(seed: int = 0) -> list[CheckResult]:
    out = []
    seq = walking_mocap(40, joints=3, seed=seed)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "clip.csv"
        write_mocap(seq, path)
        back = load_mocap(path)
        ok = np.array_equal(back.frames, seq.frames) and back.frame_rate_hz == seq.frame_rate_hz
        out.append(CheckResult("mocap csv round trip", ok))

        st = fit_standardizer([seq])
        dev = np.abs(destandardize(standardize(seq.frames, st), st) - seq.frames).max()
        out.append(CheckResult("standardize round trip", dev < 1e-9, f"max dev {dev:.1e}"))

        rng = np.random.default_rng(seed)
        traj = np.cumsum(rng.normal(scale=0.05, size=(50, 3)), axis=0)
        rec = integrate_global(to_relative_global(traj), traj[0])
        dev = np.abs(rec - traj).max()
        out.append(CheckResult("global motion round trip", dev < 1e-9, f"max dev {dev:.1e}"))

        model = micro_erd(seed)
        model.standardizer = fit_standardizer([rng.normal(size=(10, 4))])
        ck = Path(tmp) / "model.npz"
        save_checkpoint(model, ck)
        loaded, _ = load_checkpoint(ck)
        same = all(np.array_equal(a.value, b.value) for a, b in
                   zip(model.parameters().values(), loaded.parameters().values()))
        same = same and np.array_equal(loaded.standardizer.std, model.standardizer.std)
        out.append(CheckResult("checkpoint round trip", same))
    return out


def run_selftest(fault: str | None = None, report: Callable[[str], None] = print) -> bool:
    """Run every check, reporting one line each; returns True when all pass."""
    start = time.perf_counter()
    results = check_gradients(fault=fault)
    results.append(check_gmm_oracle())
    results.append(check_viterbi_oracle())
    results.append(check_ngram())
    results.extend(check_round_trips())
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        report(f"[{status}] {r.name}" + (f": {r.detail}" if r.detail else ""))
    ok = all(r.passed for r in results)
    report(f"{sum(r.passed for r in results)}/{len(results)} checks passed "
           f"in {time.perf_counter() - start:.1f} s")
    return ok
