"""Encoder-Recurrent-Decoder model with Euclidean and Gaussian-mixture heads.

The network maps a standardized frame ``x_t`` to ``y_t``, which either is a
point prediction of ``x_{t+1}`` (Euclidean head) or parametrizes a diagonal
Gaussian mixture over it (GMM head). The raw GMM output vector is laid out
as ``[K logits | K*D means | K*D log-variances]``.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, log_softmax

from . import nn_core
from .errors import ArgumentError, CheckpointError, NumericError, ShapeError
from .mocap_data import Standardizer

CHECKPOINT_VERSION = 1
HEADS = ("euclidean", "gmm")
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class ErdConfig:
    input_dim: int
    encoder_sizes: list[int] = field(default_factory=lambda: [64, 64])
    lstm_sizes: list[int] = field(default_factory=lambda: [128])
    decoder_sizes: list[int] = field(default_factory=lambda: [64, 64])
    output_head: str = "gmm"
    gmm_components: int = 5
    variance_pad: float = 0.01
    hidden_activation: str = "relu"
    peepholes: bool = False
    forget_bias: float = 1.0

    def __post_init__(self):
        self.encoder_sizes = [int(n) for n in self.encoder_sizes]
        self.lstm_sizes = [int(n) for n in self.lstm_sizes]
        self.decoder_sizes = [int(n) for n in self.decoder_sizes]
        if self.input_dim < 1:
            raise ArgumentError("input_dim must be >= 1")
        if any(n < 1 for n in self.encoder_sizes + self.lstm_sizes + self.decoder_sizes):
            raise ArgumentError("all layer sizes must be >= 1")
        if self.output_head not in HEADS:
            raise ArgumentError(f"output_head must be one of {HEADS}")
        if self.gmm_components < 1:
            raise ArgumentError("gmm_components must be >= 1")
        if self.variance_pad < 0:
            raise ArgumentError("variance_pad must be >= 0")
        if self.hidden_activation not in nn_core.ACTIVATIONS:
            raise ArgumentError(f"unknown activation {self.hidden_activation!r}")

    @property
    def output_dim(self) -> int:
        if self.output_head == "euclidean":
            return self.input_dim
        return self.gmm_components * (1 + 2 * self.input_dim)

    @classmethod
    def desk_scale(cls, input_dim: int, **overrides) -> "ErdConfig":
        return cls(input_dim, [64, 64], [128], [64, 64], **overrides)

    @classmethod
    def full_scale(cls, input_dim: int, **overrides) -> "ErdConfig":
        return cls(input_dim, [500, 500], [1000, 1000], [500, 500], **overrides)


# ---------------------------------------------------------------------------
# Gaussian mixture head


@dataclass
class GmmParams:
    """Mixture over ``D``-dim vectors; arrays may carry leading batch axes."""

    weights: np.ndarray          # (..., K)
    means: np.ndarray            # (..., K, D)
    variances: np.ndarray        # (..., K, D)
    log_weights: np.ndarray | None = None
    raw_variances: np.ndarray | None = None   # exp-layer output before padding

    def __post_init__(self):
        self.weights = nn_core.as_real(self.weights)
        self.means = nn_core.as_real(self.means)
        self.variances = nn_core.as_real(self.variances)
        if self.means.shape != self.variances.shape or self.means.shape[:-1] != self.weights.shape:
            raise ShapeError(
                f"GMM shapes disagree: w{self.weights.shape}, mu{self.means.shape}, var{self.variances.shape}"
            )
        if self.log_weights is None:
            with np.errstate(divide="ignore"):
                self.log_weights = np.log(self.weights)
        if self.raw_variances is None:
            self.raw_variances = self.variances

    @property
    def components(self) -> int:
        return self.weights.shape[-1]

    @property
    def dim(self) -> int:
        return self.means.shape[-1]

    def __getitem__(self, idx) -> "GmmParams":
        return GmmParams(self.weights[idx], self.means[idx], self.variances[idx],
                         self.log_weights[idx], self.raw_variances[idx])


def split_gmm(raw, components: int, dim: int, pad: float = 0.0) -> GmmParams:
    """Decode the raw output layer into mixture parameters (softmax / identity / exp)."""
    raw = nn_core.as_real(raw)
    K, D = components, dim
    if raw.shape[-1] != K * (1 + 2 * D):
        raise ShapeError(f"raw GMM output has {raw.shape[-1]} entries, expected {K * (1 + 2 * D)}")
    lead = raw.shape[:-1]
    logits = raw[..., :K]
    means = raw[..., K:K + K * D].reshape(lead + (K, D))
    log_var = raw[..., K + K * D:].reshape(lead + (K, D))
    log_w = log_softmax(logits, axis=-1)
    with np.errstate(over="raise"):
        try:
            raw_var = np.exp(log_var)
        except FloatingPointError:
            raise NumericError("variance exponent overflowed") from None
    return GmmParams(np.exp(log_w), means, raw_var + pad, log_w, raw_var)


def pad_variances(g: GmmParams, pad: float) -> GmmParams:
    """Add a constant floor to every variance (training-time only)."""
    if pad < 0:
        raise ArgumentError("pad must be >= 0")
    return GmmParams(g.weights, g.means, g.variances + pad, g.log_weights, g.raw_variances)


def _component_log_density(g: GmmParams, target):
    x = nn_core.as_real(target)
    if x.shape[-1] != g.dim:
        raise ShapeError(f"target has {x.shape[-1]} dims, mixture has {g.dim}")
    if np.any(~(g.variances > 0)):
        raise NumericError("mixture variances must be positive")
    diff = x[..., None, :] - g.means
    return -0.5 * np.sum(LOG_2PI + np.log(g.variances) + diff * diff / g.variances, axis=-1)


def gmm_nll(g: GmmParams, target):
    """``-log sum_k w_k N(target; mu_k, diag(var_k))`` via log-sum-exp."""
    log_joint = g.log_weights + _component_log_density(g, target)
    return -logsumexp(log_joint, axis=-1)


def responsibilities(g: GmmParams, target) -> np.ndarray:
    log_joint = g.log_weights + _component_log_density(g, target)
    return np.exp(log_joint - logsumexp(log_joint, axis=-1, keepdims=True))


def gmm_nll_backward(g: GmmParams, target):
    """Gradients of :func:`gmm_nll` w.r.t. weight logits, means and log-variances.

    Log-variance here is the input of the exponential layer, so padding is
    accounted for: ``d var / d s = exp(s)``.
    """
    x = nn_core.as_real(target)
    r = responsibilities(g, x)
    diff = x[..., None, :] - g.means
    var = g.variances
    d_logits = g.weights - r
    d_means = -r[..., None] * diff / var
    d_var = 0.5 * r[..., None] * (1.0 / var - diff * diff / (var * var))
    d_logvar = d_var * g.raw_variances
    return d_logits, d_means, d_logvar


def pack_gmm_grad(d_logits, d_means, d_logvar) -> np.ndarray:
    lead = d_logits.shape[:-1]
    return np.concatenate(
        [d_logits, d_means.reshape(lead + (-1,)), d_logvar.reshape(lead + (-1,))], axis=-1
    )


def euclidean_loss(y, target):
    """``0.5*||y - target||^2`` over the last axis and its gradient ``y - target``."""
    y = nn_core.as_real(y)
    target = nn_core.as_real(target)
    if y.shape != target.shape:
        raise ShapeError(f"prediction {y.shape} and target {target.shape} differ")
    diff = y - target
    return 0.5 * np.sum(diff * diff, axis=-1), diff


def sample_output(g, mode: str = "most_probable", rng: np.random.Generator | None = None):
    """Draw one frame from a mixture (or pass a point prediction through).

    ``most_probable`` returns the mean of the highest-weight component;
    ``stochastic`` picks a component by weight and draws from its Gaussian.
    """
    if not isinstance(g, GmmParams):
        return np.asarray(g, dtype=np.float64).copy()
    if g.weights.ndim != 1:
        raise ShapeError("sample_output expects a single (unbatched) mixture")
    if mode == "most_probable":
        return g.means[int(np.argmax(g.weights))].copy()
    if mode == "stochastic":
        if rng is None:
            raise ArgumentError("stochastic sampling needs an rng")
        w = g.weights / g.weights.sum()
        k = int(rng.choice(g.components, p=w))
        return g.means[k] + np.sqrt(g.variances[k]) * rng.standard_normal(g.dim)
    raise ArgumentError(f"unknown sampling mode {mode!r}")


# ---------------------------------------------------------------------------
# model


class ErdModel:
    """Layer stack plus output head, recurrent streaming state and optional standardizer."""

    def __init__(self, config: ErdConfig, rng: np.random.Generator | int | None = None,
                 standardizer: Standardizer | None = None):
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self.config = config
        self.net = nn_core.LayerStack.build(
            config.input_dim, config.encoder_sizes, config.lstm_sizes, config.decoder_sizes,
            config.output_dim, config.hidden_activation, rng,
            peepholes=config.peepholes, forget_bias=config.forget_bias,
        )
        self.standardizer = standardizer
        self.state = self.net.zero_state()

    def parameters(self) -> dict[str, nn_core.Parameter]:
        return self.net.parameters()

    def reset_state(self):
        self.state = self.net.zero_state()

    def decode(self, raw, training: bool = False):
        """Turn raw output-layer activations into a prediction or mixture."""
        if self.config.output_head == "euclidean":
            return raw
        pad = self.config.variance_pad if training else 0.0
        return split_gmm(raw, self.config.gmm_components, self.config.input_dim, pad)

    def loss_and_grad(self, raw, targets, training: bool = True):
        """Per-step losses (shape ``raw.shape[:-1]``) and gradient w.r.t. ``raw``."""
        if self.config.output_head == "euclidean":
            return euclidean_loss(raw, targets)
        g = self.decode(raw, training)
        return gmm_nll(g, targets), pack_gmm_grad(*gmm_nll_backward(g, targets))

    def copy(self) -> "ErdModel":
        clone = ErdModel.__new__(ErdModel)
        clone.config = ErdConfig(**asdict(self.config))
        clone.net = nn_core.LayerStack.build(
            self.config.input_dim, self.config.encoder_sizes, self.config.lstm_sizes,
            self.config.decoder_sizes, self.config.output_dim, self.config.hidden_activation,
            np.random.default_rng(0), peepholes=self.config.peepholes,
        )
        for (_, dst), (_, src) in zip(clone.parameters().items(), self.parameters().items()):
            dst.value[...] = src.value
        clone.standardizer = self.standardizer
        clone.state = [s.copy() for s in self.state]
        return clone


def sequence_loss(model: ErdModel, inputs, targets, training: bool = True,
                  backward: bool = False) -> float:
    """Sum over time of the batch-mean per-step loss for ``(T, [B,] D)`` arrays.

    With ``backward`` the gradients are accumulated into the model parameters.
    """
    xs = nn_core.as_real(inputs)
    ys = nn_core.as_real(targets)
    if xs.shape != ys.shape:
        raise ShapeError(f"inputs {xs.shape} and targets {ys.shape} differ")
    raw, tape = nn_core.sequence_forward(xs, model.net)
    losses, draw = model.loss_and_grad(raw, ys, training)
    batch = int(np.prod(xs.shape[1:-1])) if xs.ndim > 2 else 1
    total = np.sum(losses) / batch
    if not np.isfinite(total):
        raise NumericError("loss is not finite")
    if backward:
        nn_core.sequence_backward(tape, draw / batch, model.net)
    return total


def erd_step(model: ErdModel, x_t, training: bool = False):
    """Feed one standardized frame; advances ``model.state`` and returns the decoded output."""
    x = np.asarray(x_t, dtype=np.float64)
    if x.shape[-1] != model.config.input_dim:
        raise ShapeError(f"frame has {x.shape[-1]} dims, model expects {model.config.input_dim}")
    raw, model.state = model.net.step(x, model.state)
    return model.decode(raw, training)


def condition_on_prefix(model: ErdModel, prefix):
    """Reset the state and run the model over ``prefix``.

    Returns ``(state, last_output)`` where ``last_output`` predicts the
    frame following the prefix.
    """
    frames = prefix.frames if hasattr(prefix, "frames") else np.asarray(prefix, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ArgumentError("prefix must be a non-empty (T, D) sequence")
    model.reset_state()
    out = None
    for frame in frames:
        out = erd_step(model, frame)
    return [s.copy() for s in model.state], out


def unroll(model: ErdModel, last_output, steps: int, mode: str = "most_probable",
           rng: np.random.Generator | None = None, state=None) -> np.ndarray:
    """Closed-loop generation in standardized space.

    Each step turns the current output into a frame and feeds it back as the
    next input. Returns a ``(steps, D)`` array.
    """
    if steps < 1:
        raise ArgumentError("steps must be >= 1")
    if state is not None:
        model.state = [s.copy() for s in state]
    frames = np.empty((steps, model.config.input_dim))
    out = last_output
    for k in range(steps):
        frame = sample_output(out, mode, rng)
        if not np.all(np.isfinite(frame)):
            raise NumericError(f"non-finite output at unroll step {k}")
        frames[k] = frame
        try:
            out = erd_step(model, frame)
        except NumericError as exc:
            raise NumericError(f"unroll step {k}: {exc}") from None
    return frames


def generate(model: ErdModel, prefix, steps: int, mode: str = "most_probable",
             rng: np.random.Generator | None = None) -> np.ndarray:
    """Condition on ``prefix`` then unroll ``steps`` frames."""
    state, out = condition_on_prefix(model, prefix)
    return unroll(model, out, steps, mode, rng, state)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: ErdModel, path, extra: dict | None = None) -> None:
    """Write config, parameters and standardizer to an ``.npz`` container."""
    params = model.parameters()
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "parameters": [[name, list(p.shape)] for name, p in params.items()],
        "has_standardizer": model.standardizer is not None,
        "extra": extra or {},
    }
    arrays = {"meta": np.array(json.dumps(meta))}
    for k, p in enumerate(params.values()):
        arrays[f"p{k}"] = p.value
    if model.standardizer is not None:
        arrays["std_mean"] = model.standardizer.mean
        arrays["std_std"] = model.standardizer.std
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> tuple[ErdModel, dict]:
    """Inverse of :func:`save_checkpoint`; returns ``(model, extra)``."""
    try:
        data = np.load(Path(path), allow_pickle=False)
        meta = json.loads(str(data["meta"]))
    except (OSError, ValueError, KeyError) as exc:
        raise CheckpointError(f"{path}: not a checkpoint ({exc})") from None
    version = meta.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version!r}")
    model = ErdModel(ErdConfig(**meta["config"]), rng=0)
    params = model.parameters()
    declared = meta["parameters"]
    if [n for n, _ in declared] != list(params):
        raise CheckpointError(f"{path}: parameter names do not match the config")
    for k, ((name, shape), p) in enumerate(zip(declared, params.values())):
        value = data[f"p{k}"]
        if list(value.shape) != list(shape) or value.shape != p.shape:
            raise CheckpointError(f"{path}: parameter {name} has shape {value.shape}, expected {p.shape}")
        p.value[...] = value
    if meta.get("has_standardizer"):
        model.standardizer = Standardizer(data["std_mean"], data["std_std"])
    return model, meta.get("extra", {})
