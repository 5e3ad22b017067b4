"""Time-conditioned vector field network.

A small dense net maps [x; time_embed(t)] to a velocity in data space.
Everything runs in float64 and gradients are computed by handwritten
reverse-mode passes so they match central finite differences to
near machine precision. The activation is the smooth x * sigmoid(x)
(zero-initialised final layer, so a fresh net is the zero field).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from . import container
from .errors import ConfigError, NumericalError

DEFAULT_HIDDEN = (128, 128)
DEFAULT_FREQS = 8

# tolerated floating-point overshoot when integrators land on 0 or 1
_T_SLACK = 1e-9


def time_embed(t: np.ndarray | float, k: int) -> np.ndarray:
    """Sinusoidal features [sin(2 pi f_j t), cos(2 pi f_j t)], f_j = 2^(j-1).

    Scalar t gives a (2k,) vector, an (n,) array gives (n, 2k); pairs are
    interleaved per frequency, lowest first. t must lie in [0, 1].
    """
    if k < 1:
        raise ConfigError(f"time embedding needs k >= 1, got {k}")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < -_T_SLACK) or np.any(t_arr > 1.0 + _T_SLACK):
        raise ConfigError(f"time outside [0, 1]: {t_arr.min()}..{t_arr.max()}")
    t_arr = np.clip(t_arr, 0.0, 1.0)
    freqs = 2.0 ** np.arange(k)
    angles = 2.0 * np.pi * np.multiply.outer(t_arr, freqs)
    out = np.empty(angles.shape[:-1] + (2 * k,), dtype=np.float64)
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


@dataclass
class VectorFieldParams:
    """Dense net parameters. weights[i] has shape (fan_in, fan_out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    data_dim: int
    freq_count: int = DEFAULT_FREQS
    activation: str = "silu"
    version: int = container.VERSION

    def __post_init__(self):
        if self.activation != "silu":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("weights and biases must pair up, one layer minimum")
        expect_in = self.data_dim + 2 * self.freq_count
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ConfigError(f"layer {i}: weight {w.shape} / bias {b.shape}")
            if w.shape[0] != expect_in:
                raise ConfigError(
                    f"layer {i} expects fan-in {expect_in}, has {w.shape[0]}"
                )
            expect_in = w.shape[1]
        if self.weights[-1].shape[1] != self.data_dim:
            raise ConfigError(
                f"output width {self.weights[-1].shape[1]} != data dim {self.data_dim}"
            )
        for arr in self.weights + self.biases:
            if not np.all(np.isfinite(arr)):
                raise NumericalError("non-finite parameter value")

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])

    def copy(self) -> "VectorFieldParams":
        return replace(
            self,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_params(
    data_dim: int,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    freq_count: int = DEFAULT_FREQS,
    seed: int = 0,
) -> VectorFieldParams:
    """Fan-in scaled uniform init; the final layer starts at exactly zero."""
    rng = np.random.default_rng(seed)
    widths = [data_dim + 2 * freq_count, *hidden, data_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    weights[-1][:] = 0.0
    biases[-1][:] = 0.0
    return VectorFieldParams(weights, biases, data_dim, freq_count)


def _silu(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (value, derivative) of z * sigmoid(z)."""
    s = expit(z)
    return z * s, s * (1.0 + z * (1.0 - s))


def _prepare(params: VectorFieldParams, x: np.ndarray, t) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.data_dim:
        raise ConfigError(f"expected (n, {params.data_dim}) input, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite network input")
    t_arr = np.asarray(t, dtype=np.float64)
    if t_arr.ndim == 0:
        t_arr = np.full(x.shape[0], float(t_arr))
    if t_arr.shape != (x.shape[0],):
        raise ConfigError(f"time shape {t_arr.shape} does not match batch {x.shape[0]}")
    emb = time_embed(t_arr, params.freq_count)
    return np.concatenate([x, emb], axis=1)


def forward(params: VectorFieldParams, x: np.ndarray, t) -> np.ndarray:
    """Evaluate the field on a batch x of shape (n, d); t scalar or (n,)."""
    h = _prepare(params, x, t)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i != last:
            h, _ = _silu(h)
    return h


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def loss_and_grad(
    params: VectorFieldParams,
    x: np.ndarray,
    t,
    target: np.ndarray,
    sample_weight: np.ndarray | None = None,
) -> tuple[float, Gradients]:
    """Mean squared velocity error and its exact parameter gradient.

    loss = mean_i w_i * ||net(x_i, t_i) - target_i||^2  (w defaults to 1).
    """
    h = _prepare(params, x, t)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (x.shape[0], params.data_dim):
        raise ConfigError(f"target shape {target.shape} does not match batch")
    n = h.shape[0]
    if sample_weight is None:
        w_vec = np.ones(n)
    else:
        w_vec = np.asarray(sample_weight, dtype=np.float64)
        if w_vec.shape != (n,):
            raise ConfigError("sample_weight must be one scalar per row")

    acts = [h]
    derivs = []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w + b
        if i != last:
            a, da = _silu(z)
            acts.append(a)
            derivs.append(da)
        else:
            acts.append(z)
    out = acts[-1]
    err = out - target
    # overflow to inf is fine here; callers treat a non-finite loss as divergence
    with np.errstate(over="ignore"):
        per_sample = np.sum(err * err, axis=1)
        loss = float(np.mean(w_vec * per_sample))

    grad_out = (2.0 / n) * w_vec[:, None] * err
    gw = [np.empty(0)] * len(params.weights)
    gb = [np.empty(0)] * len(params.biases)
    g = grad_out
    for i in range(last, -1, -1):
        gw[i] = acts[i].T @ g
        gb[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ params.weights[i].T) * derivs[i - 1]
    return loss, Gradients(gw, gb)


@dataclass
class OptState:
    """Adam state; step counts completed updates."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: VectorFieldParams, lr: float = 1e-3) -> "OptState":
        zw = [np.zeros_like(w) for w in params.weights]
        zb = [np.zeros_like(b) for b in params.biases]
        return cls(
            m_w=zw,
            v_w=[np.zeros_like(w) for w in params.weights],
            m_b=zb,
            v_b=[np.zeros_like(b) for b in params.biases],
            lr=lr,
        )


def opt_step(
    params: VectorFieldParams, grads: Gradients, state: OptState
) -> tuple[VectorFieldParams, OptState]:
    """One bias-corrected Adam update. Inputs are not mutated."""
    t = state.step + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t

    def update(p, g, m, v):
        m_new = state.beta1 * m + (1.0 - state.beta1) * g
        v_new = state.beta2 * v + (1.0 - state.beta2) * g * g
        p_new = p - state.lr * (m_new / c1) / (np.sqrt(v_new / c2) + state.eps)
        return p_new, m_new, v_new

    new_w, new_mw, new_vw = [], [], []
    for p, g, m, v in zip(params.weights, grads.weights, state.m_w, state.v_w):
        pn, mn, vn = update(p, g, m, v)
        new_w.append(pn)
        new_mw.append(mn)
        new_vw.append(vn)
    new_b, new_mb, new_vb = [], [], []
    for p, g, m, v in zip(params.biases, grads.biases, state.m_b, state.v_b):
        pn, mn, vn = update(p, g, m, v)
        new_b.append(pn)
        new_mb.append(mn)
        new_vb.append(vn)

    new_params = VectorFieldParams(
        new_w, new_b, params.data_dim, params.freq_count, params.activation
    )
    new_state = replace(state, m_w=new_mw, v_w=new_vw, m_b=new_mb, v_b=new_vb, step=t)
    return new_params, new_state


@dataclass
class TrainLog:
    losses: np.ndarray
    evals: list[tuple[int, float]] = field(default_factory=list)
    diagnostics: dict[str, float] = field(default_factory=dict)


def fit_field(
    params: VectorFieldParams,
    steps: int,
    batch_fn,
    lr: float = 1e-3,
    eval_every: int = 500,
) -> tuple[VectorFieldParams, TrainLog]:
    """Generic training loop shared by the generator and all refiners.

    batch_fn(step) returns (x_t, t, target) or (x_t, t, target, weights).
    Raises NumericalError with the step index if the loss goes non-finite.
    """
    if steps < 1:
        raise ConfigError(f"training needs steps >= 1, got {steps}")
    state = OptState.for_params(params, lr=lr)
    losses = np.empty(steps)
    evals: list[tuple[int, float]] = []
    for i in range(steps):
        batch = batch_fn(i)
        x_t, t, target = batch[:3]
        weight = batch[3] if len(batch) > 3 else None
        loss, grads = loss_and_grad(params, x_t, t, target, weight)
        if not np.isfinite(loss):
            raise NumericalError(f"training loss diverged at step {i}")
        params, state = opt_step(params, grads, state)
        losses[i] = loss
        if eval_every > 0 and (i + 1) % eval_every == 0:
            evals.append((i + 1, float(losses[max(0, i - 99) : i + 1].mean())))
    return params, TrainLog(losses=losses, evals=evals)


def save(path: str, params: VectorFieldParams) -> None:
    container.write_file(path, container.pack_layers(params.weights, params.biases))


def pack(params: VectorFieldParams) -> bytes:
    return container.pack_header() + container.pack_layers(
        params.weights, params.biases
    )


def unpack_body(reader: container.Reader, data_dim: int | None = None) -> VectorFieldParams:
    """Read a layer table from a reader positioned after the header.

    The data dimension is the output width of the last layer unless given;
    the embedding width k is recovered from the first layer's fan-in.
    """
    weights, biases = container.read_layers(reader)
    d = int(weights[-1].shape[1]) if data_dim is None else data_dim
    k2 = weights[0].shape[0] - d
    if k2 <= 0 or k2 % 2:
        raise ConfigError(
            f"layer table implies invalid embedding width {k2} for data dim {d}"
        )
    return VectorFieldParams(weights, biases, d, k2 // 2)


def load(path: str) -> VectorFieldParams:
    return unpack_body(container.read_file(path))
