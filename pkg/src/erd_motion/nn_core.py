"""Numerical core: dense and LSTM layers with hand-derived gradients.

Parameters and gradients are float64 numpy arrays. Layers accept inputs with
any number of leading (batch / time) axes; the last axis is the feature
axis. Inputs given in extended precision (``np.longdouble``) propagate
through the forward pass unchanged, which the gradient checker relies on.
Gradients are accumulated into :class:`Parameter.grad` and consumed by
:func:`clip_gradients` and :func:`sgd_momentum_step`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .errors import ArgumentError, NumericError, ShapeError

ACTIVATIONS = ("identity", "relu", "tanh")
GATES = ("i", "f", "o", "g")


def as_real(x):
    """Array view of ``x`` as float64, keeping extended precision if given."""
    x = np.asarray(x)
    if x.dtype == np.longdouble:
        return x
    return x.astype(np.float64, copy=False)


def sigmoid(z):
    return expit(as_real(z))


def activate(z, kind):
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    raise ArgumentError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_grad(z, y, kind):
    """Derivative of the activation evaluated at pre-activation ``z`` (output ``y``)."""
    if kind == "identity":
        return np.ones_like(z)
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - y * y
    raise ArgumentError(f"unknown activation {kind!r}")


@dataclass(eq=False)
class Parameter:
    """A trainable array together with its gradient and momentum buffer."""

    value: np.ndarray
    grad: np.ndarray = None
    velocity: np.ndarray = None

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.velocity is None:
            self.velocity = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape or self.velocity.shape != self.value.shape:
            raise ShapeError("parameter value, grad and velocity must share a shape")

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def zero_grad(self):
        self.grad.fill(0.0)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


# ---------------------------------------------------------------------------
# fully connected layers


class FcCache(NamedTuple):
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    activation: str


def fc_forward(x, w, b, activation="identity"):
    """Return ``(activation(x @ w.T + b), cache)``.

    ``x`` may carry leading batch axes. The cache holds the input and the
    pre-activation for :func:`fc_backward`.
    """
    x = as_real(x)
    w = as_real(w)
    b = as_real(b)
    if w.ndim != 2 or x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeError(
            f"fc_forward: x{x.shape}, w{w.shape}, b{b.shape} are incompatible"
        )
    z = x @ w.T + b
    y = activate(z, activation)
    return y, FcCache(x, z, y, activation)


def fc_backward(cache: FcCache, w, dy):
    """Return ``(dx, dw, db)`` for a cached :func:`fc_forward` call."""
    dz = dy * activation_grad(cache.z, cache.y, cache.activation)
    out_dim = dz.shape[-1]
    dz2 = dz.reshape(-1, out_dim)
    x2 = cache.x.reshape(-1, cache.x.shape[-1])
    dw = dz2.T @ x2
    db = dz2.sum(axis=0)
    dx = dz @ w
    return dx, dw, db


class Dense:
    """Fully connected layer owning its weight and bias parameters."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "identity",
                 rng: np.random.Generator | None = None):
        if in_dim < 1 or out_dim < 1:
            raise ArgumentError("layer sizes must be >= 1")
        if activation not in ACTIVATIONS:
            raise ArgumentError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.w = Parameter(glorot_uniform(rng, in_dim, out_dim, (out_dim, in_dim)))
        self.b = Parameter(np.zeros(out_dim))

    def forward(self, x):
        return fc_forward(x, self.w.value, self.b.value, self.activation)

    def backward(self, cache: FcCache, dy):
        dx, dw, db = fc_backward(cache, self.w.value, dy)
        self.w.grad += dw
        self.b.grad += db
        return dx

    def parameters(self) -> dict[str, Parameter]:
        return {"w": self.w, "b": self.b}


# ---------------------------------------------------------------------------
# LSTM


@dataclass
class LstmState:
    hidden: np.ndarray
    cell: np.ndarray

    def copy(self) -> "LstmState":
        return LstmState(self.hidden.copy(), self.cell.copy())


class LstmLayerParams:
    """Weights of one LSTM layer.

    Gate blocks are stacked in the order input, forget, output, candidate:
    ``w_x`` is ``(4H, I)``, ``w_h`` is ``(4H, H)`` and ``b`` is ``(4H,)``.
    :meth:`gate` returns per-gate views. Optional peephole weights connect
    the cell to the input/forget gates (previous cell) and the output gate
    (new cell).
    """

    def __init__(self, input_size: int, hidden_size: int,
                 rng: np.random.Generator | None = None,
                 peepholes: bool = False, forget_bias: float = 1.0):
        if input_size < 1 or hidden_size < 1:
            raise ArgumentError("LSTM sizes must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        H, I = hidden_size, input_size
        self.input_size = I
        self.hidden_size = H
        self.peepholes = peepholes
        wx = np.concatenate([glorot_uniform(rng, I, H, (H, I)) for _ in GATES])
        wh = np.concatenate([glorot_uniform(rng, H, H, (H, H)) for _ in GATES])
        b = np.zeros(4 * H)
        b[H:2 * H] = forget_bias
        self.w_x = Parameter(wx)
        self.w_h = Parameter(wh)
        self.b = Parameter(b)
        self.peep = Parameter(np.zeros(3 * H)) if peepholes else None

    def gate(self, name: str):
        """Views ``(input_weights, recurrent_weights, bias)`` of one gate."""
        k = GATES.index(name)
        H = self.hidden_size
        s = slice(k * H, (k + 1) * H)
        return self.w_x.value[s], self.w_h.value[s], self.b.value[s]

    def parameters(self) -> dict[str, Parameter]:
        params = {"w_x": self.w_x, "w_h": self.w_h, "b": self.b}
        if self.peep is not None:
            params["peep"] = self.peep
        return params

    def zero_state(self, batch_shape=()) -> LstmState:
        shape = tuple(batch_shape) + (self.hidden_size,)
        return LstmState(np.zeros(shape), np.zeros(shape))


class LstmStepCache(NamedTuple):
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def _check_lstm_shapes(x, prev: LstmState, p: LstmLayerParams):
    if x.shape[-1] != p.input_size:
        raise ShapeError(f"LSTM input has {x.shape[-1]} features, layer expects {p.input_size}")
    H = p.hidden_size
    if prev.hidden.shape[-1] != H or prev.cell.shape != prev.hidden.shape:
        raise ShapeError(
            f"LSTM state shapes h{prev.hidden.shape}, c{prev.cell.shape} do not match hidden size {H}"
        )


def _gates(z, c_prev, p: LstmLayerParams):
    H = p.hidden_size
    if p.peep is None:
        ifo = expit(z[..., :3 * H])
        i, f, o = ifo[..., :H], ifo[..., H:2 * H], ifo[..., 2 * H:]
        g = np.tanh(z[..., 3 * H:])
        c = f * c_prev + i * g
    else:
        pv = p.peep.value
        i = expit(z[..., :H] + pv[:H] * c_prev)
        f = expit(z[..., H:2 * H] + pv[H:2 * H] * c_prev)
        g = np.tanh(z[..., 3 * H:])
        c = f * c_prev + i * g
        o = expit(z[..., 2 * H:3 * H] + pv[2 * H:] * c)
    tanh_c = np.tanh(c)
    return i, f, o, g, c, tanh_c


def lstm_step(x, prev: LstmState, p: LstmLayerParams):
    """Advance one LSTM layer by one step.

    Returns ``(LstmState(h', c'), cache)`` with ``c' = f*c + i*g`` and
    ``h' = o*tanh(c')``.
    """
    x = as_real(x)
    _check_lstm_shapes(x, prev, p)
    z = x @ p.w_x.value.T + prev.hidden @ p.w_h.value.T + p.b.value
    i, f, o, g, c, tanh_c = _gates(z, prev.cell, p)
    h = o * tanh_c
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise NumericError("LSTM step produced a non-finite state")
    return LstmState(h, c), LstmStepCache(x, prev.hidden, prev.cell, i, f, o, g, c, tanh_c)


def _gate_backward(dh, dc, cache, p: LstmLayerParams):
    """Gradient w.r.t. the stacked gate pre-activations and the previous cell."""
    i, f, o, g, c_prev = cache.i, cache.f, cache.o, cache.g, cache.c_prev
    tanh_c = cache.tanh_c
    dzo = dh * tanh_c * o * (1.0 - o)
    dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
    H = p.hidden_size
    if p.peep is not None:
        dc = dc + dzo * p.peep.value[2 * H:]
    dzi = dc * g * i * (1.0 - i)
    dzf = dc * c_prev * f * (1.0 - f)
    dzg = dc * i * (1.0 - g * g)
    dc_prev = dc * f
    if p.peep is not None:
        pv = p.peep.value
        dc_prev = dc_prev + dzi * pv[:H] + dzf * pv[H:2 * H]
        red = tuple(range(dzi.ndim - 1))
        p.peep.grad[:H] += np.sum(dzi * c_prev, axis=red)
        p.peep.grad[H:2 * H] += np.sum(dzf * c_prev, axis=red)
        p.peep.grad[2 * H:] += np.sum(dzo * cache.c, axis=red)
    dz = np.concatenate([dzi, dzf, dzo, dzg], axis=-1)
    return dz, dc_prev


def lstm_step_backward(cache: LstmStepCache, p: LstmLayerParams, dh, dc):
    """Backward through one :func:`lstm_step`; returns ``(dx, dh_prev, dc_prev)``."""
    dz, dc_prev = _gate_backward(dh, dc, cache, p)
    dz2 = dz.reshape(-1, dz.shape[-1])
    p.w_x.grad += dz2.T @ cache.x.reshape(-1, p.input_size)
    p.w_h.grad += dz2.T @ cache.h_prev.reshape(-1, p.hidden_size)
    p.b.grad += dz2.sum(axis=0)
    return dz @ p.w_x.value, dz @ p.w_h.value, dc_prev


@dataclass
class LstmSequenceCache:
    steps: list[LstmStepCache]
    final: LstmState


def lstm_sequence_forward(xs, p: LstmLayerParams, init: LstmState | None = None):
    """Run one LSTM layer over ``xs`` of shape ``(T, ..., I)``."""
    xs = as_real(xs)
    if xs.shape[-1] != p.input_size:
        raise ShapeError(f"LSTM input has {xs.shape[-1]} features, layer expects {p.input_size}")
    state = init if init is not None else p.zero_state(xs.shape[1:-1])
    _check_lstm_shapes(xs[0], state, p)
    zx = xs @ p.w_x.value.T + p.b.value
    wh_t = p.w_h.value.T
    hs = np.empty(xs.shape[:-1] + (p.hidden_size,), dtype=zx.dtype)
    steps = []
    h, c = state.hidden, state.cell
    for t in range(xs.shape[0]):
        z = zx[t] + h @ wh_t
        i, f, o, g, c_new, tanh_c = _gates(z, c, p)
        h_new = o * tanh_c
        steps.append(LstmStepCache(xs[t], h, c, i, f, o, g, c_new, tanh_c))
        h, c = h_new, c_new
        hs[t] = h
    if not np.all(np.isfinite(hs)):
        raise NumericError("LSTM sequence produced a non-finite state")
    return hs, LstmSequenceCache(steps, LstmState(h, c))


def lstm_sequence_backward(cache: LstmSequenceCache, p: LstmLayerParams, dhs):
    """Backpropagation through time over a cached layer; returns ``dxs``."""
    steps = cache.steps
    T = len(steps)
    if dhs.shape[0] != T:
        raise ArgumentError(f"got {dhs.shape[0]} output gradients for {T} steps")
    dzs = np.empty(dhs.shape[:-1] + (4 * p.hidden_size,))
    dh_next = np.zeros_like(dhs[0])
    dc_next = np.zeros_like(dhs[0])
    wh = p.w_h.value
    for t in range(T - 1, -1, -1):
        dz, dc_next = _gate_backward(dhs[t] + dh_next, dc_next, steps[t], p)
        dzs[t] = dz
        dh_next = dz @ wh
    dz2 = dzs.reshape(-1, dzs.shape[-1])
    xs = np.stack([s.x for s in steps]).reshape(-1, p.input_size)
    hp = np.stack([s.h_prev for s in steps]).reshape(-1, p.hidden_size)
    p.w_x.grad += dz2.T @ xs
    p.w_h.grad += dz2.T @ hp
    p.b.grad += dz2.sum(axis=0)
    return dzs @ p.w_x.value


# ---------------------------------------------------------------------------
# encoder -> LSTM stack -> decoder


@dataclass
class TapeCache:
    """Activations recorded by :func:`sequence_forward` for one sequence."""

    encoder: list = field(default_factory=list)
    lstm: list = field(default_factory=list)
    decoder: list = field(default_factory=list)
    length: int = 0

    def clear(self):
        self.encoder.clear()
        self.lstm.clear()
        self.decoder.clear()
        self.length = 0


class LayerStack:
    """Feedforward encoder, stacked LSTM layers and feedforward decoder.

    The last decoder layer is the (linear) output projection.
    """

    def __init__(self, encoder: Sequence[Dense], lstm: Sequence[LstmLayerParams],
                 decoder: Sequence[Dense]):
        if not decoder:
            raise ArgumentError("decoder needs at least the output layer")
        self.encoder = list(encoder)
        self.lstm = list(lstm)
        self.decoder = list(decoder)
        prev = self.input_dim
        for layer in self.encoder:
            if layer.in_dim != prev:
                raise ShapeError("encoder layer sizes do not chain")
            prev = layer.out_dim
        for layer in self.lstm:
            if layer.input_size != prev:
                raise ShapeError("LSTM layer sizes do not chain")
            prev = layer.hidden_size
        for layer in self.decoder:
            if layer.in_dim != prev:
                raise ShapeError("decoder layer sizes do not chain")
            prev = layer.out_dim

    @classmethod
    def build(cls, input_dim: int, encoder_sizes: Sequence[int], lstm_sizes: Sequence[int],
              decoder_sizes: Sequence[int], output_dim: int, hidden_activation: str = "relu",
              rng: np.random.Generator | None = None, peepholes: bool = False,
              forget_bias: float = 1.0) -> "LayerStack":
        rng = rng if rng is not None else np.random.default_rng(0)
        encoder, lstm, decoder = [], [], []
        prev = input_dim
        for n in encoder_sizes:
            encoder.append(Dense(prev, n, hidden_activation, rng))
            prev = n
        for n in lstm_sizes:
            lstm.append(LstmLayerParams(prev, n, rng, peepholes=peepholes, forget_bias=forget_bias))
            prev = n
        for n in decoder_sizes:
            decoder.append(Dense(prev, n, hidden_activation, rng))
            prev = n
        decoder.append(Dense(prev, output_dim, "identity", rng))
        return cls(encoder, lstm, decoder)

    @property
    def input_dim(self) -> int:
        if self.encoder:
            return self.encoder[0].in_dim
        if self.lstm:
            return self.lstm[0].input_size
        return self.decoder[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.decoder[-1].out_dim

    def parameters(self) -> dict[str, Parameter]:
        """All parameters keyed ``<group><index>.<name>`` in a fixed order."""
        out = {}
        for group, layers in (("encoder", self.encoder), ("lstm", self.lstm),
                              ("decoder", self.decoder)):
            for k, layer in enumerate(layers):
                for name, param in layer.parameters().items():
                    out[f"{group}{k}.{name}"] = param
        return out

    def zero_state(self, batch_shape=()) -> list[LstmState]:
        return [layer.zero_state(batch_shape) for layer in self.lstm]

    def step(self, x, states: list[LstmState]):
        """One streaming step without recording a tape; returns ``(y, new_states)``."""
        h = as_real(x)
        if h.shape[-1] != self.input_dim:
            raise ShapeError(f"input has {h.shape[-1]} features, model expects {self.input_dim}")
        for layer in self.encoder:
            h, _ = layer.forward(h)
        new_states = []
        for layer, state in zip(self.lstm, states):
            state, _ = lstm_step(h, state, layer)
            new_states.append(state)
            h = state.hidden
        for layer in self.decoder:
            h, _ = layer.forward(h)
        return h, new_states


def sequence_forward(inputs, model: LayerStack, init_states: list[LstmState] | None = None):
    """Run a whole sequence through ``model``; returns ``(outputs, tape)``.

    ``inputs`` is a list of vectors or an array of shape ``(T, ..., D)``.
    Recurrent state starts at zero unless ``init_states`` is given. The
    final recurrent states are available as ``tape.final_states``.
    """
    xs = as_real(inputs)
    if xs.ndim < 2 or xs.shape[0] == 0:
        raise ArgumentError("sequence_forward needs a non-empty sequence of vectors")
    if xs.shape[-1] != model.input_dim:
        raise ShapeError(f"input has {xs.shape[-1]} features, model expects {model.input_dim}")
    tape = TapeCache(length=xs.shape[0])
    h = xs
    for layer in model.encoder:
        h, cache = layer.forward(h)
        tape.encoder.append(cache)
    finals = []
    for k, layer in enumerate(model.lstm):
        init = init_states[k] if init_states is not None else None
        h, cache = lstm_sequence_forward(h, layer, init)
        tape.lstm.append(cache)
        finals.append(cache.final)
    for layer in model.decoder:
        h, cache = layer.forward(h)
        tape.decoder.append(cache)
    tape.final_states = finals
    return h, tape


def sequence_backward(tape: TapeCache, output_grads, model: LayerStack):
    """Accumulate gradients of the summed per-step loss into every parameter.

    Returns the gradient with respect to the inputs. The tape is cleared.
    """
    dy = np.asarray(output_grads, dtype=np.float64)
    if tape.length == 0:
        raise ArgumentError("tape is empty (already consumed by a backward pass?)")
    if dy.shape[0] != tape.length:
        raise ArgumentError(f"got {dy.shape[0]} output gradients for a {tape.length}-step tape")
    for layer, cache in zip(reversed(model.decoder), reversed(tape.decoder)):
        dy = layer.backward(cache, dy)
    for layer, cache in zip(reversed(model.lstm), reversed(tape.lstm)):
        dy = lstm_sequence_backward(cache, layer, dy)
    for layer, cache in zip(reversed(model.encoder), reversed(tape.encoder)):
        dy = layer.backward(cache, dy)
    tape.clear()
    return dy


# ---------------------------------------------------------------------------
# optimisation


def _param_list(params) -> list[Parameter]:
    if hasattr(params, "parameters"):
        params = params.parameters()
    if isinstance(params, dict):
        return list(params.values())
    return list(params)


def zero_grads(params):
    for p in _param_list(params):
        p.zero_grad()


def global_grad_norm(params) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in _param_list(params))))


def clip_gradients(params, threshold: float) -> float:
    """Rescale all gradients so their joint L2 norm is at most ``threshold``.

    Returns the factor that was applied (1.0 when no clipping happened).
    """
    if threshold <= 0:
        raise ArgumentError("clip threshold must be positive")
    plist = _param_list(params)
    norm = global_grad_norm(plist)
    if not np.isfinite(norm):
        raise NumericError("gradient norm is not finite")
    if norm <= threshold:
        return 1.0
    factor = threshold / norm
    for p in plist:
        p.grad *= factor
    return factor


def sgd_momentum_step(params, learning_rate: float, momentum: float):
    """``v <- momentum*v - lr*grad; value <- value + v``, then zero the grads."""
    if learning_rate <= 0:
        raise ArgumentError("learning_rate must be positive")
    if not 0 <= momentum < 1:
        raise ArgumentError("momentum must lie in [0, 1)")
    for p in _param_list(params):
        p.velocity *= momentum
        p.velocity -= learning_rate * p.grad
        p.value += p.velocity
        p.grad.fill(0.0)


# ---------------------------------------------------------------------------
# gradient checking


def _extended(inputs):
    if isinstance(inputs, np.ndarray) and inputs.dtype.kind == "f":
        return inputs.astype(np.longdouble)
    if isinstance(inputs, (tuple, list)):
        return type(inputs)(_extended(x) for x in inputs)
    return inputs


def gradient_errors(model, loss_fn: Callable, inputs, epsilon: float = 1e-5,
                    extended: bool = True) -> dict[str, float]:
    """Per-parameter max relative error between analytic and numeric gradients.

    ``loss_fn(model, inputs, backward)`` returns the scalar loss; when
    ``backward`` is true it must also accumulate analytic gradients into the
    model parameters. Numeric gradients are central differences. With
    ``extended`` the perturbed losses are evaluated on long-double inputs so
    that float64 round-off in the loss does not swamp small gradients.
    """
    if epsilon <= 0:
        raise ArgumentError("epsilon must be positive")
    params = model.parameters() if hasattr(model, "parameters") else dict(model)
    zero_grads(params.values())
    loss_fn(model, inputs, True)
    analytic = {name: p.grad.copy() for name, p in params.items()}
    zero_grads(params.values())
    probe_inputs = _extended(inputs) if extended else inputs
    errors = {}
    for name, p in params.items():
        flat = p.value.reshape(-1)
        numeric = np.empty(flat.size)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up = loss_fn(model, probe_inputs, False)
            flat[j] = orig - epsilon
            down = loss_fn(model, probe_inputs, False)
            flat[j] = orig
            # the step actually taken after float64 rounding of orig +- epsilon
            step = np.longdouble(orig + epsilon) - np.longdouble(orig - epsilon)
            numeric[j] = (up - down) / step
        a = analytic[name].reshape(-1)
        rel = np.abs(a - numeric) / (np.abs(a) + np.abs(numeric) + 1e-10)
        errors[name] = float(rel.max()) if rel.size else 0.0
    return errors


def finite_difference_check(model, loss_fn: Callable, inputs, epsilon: float = 1e-5) -> float:
    """Max relative error over all parameters; see :func:`gradient_errors`."""
    errors = gradient_errors(model, loss_fn, inputs, epsilon)
    return max(errors.values()) if errors else 0.0


def parameter_count(params: Iterable[Parameter] | dict) -> int:
    return sum(p.size for p in _param_list(params))
