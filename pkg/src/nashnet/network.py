"""Game-playing multilayer perceptron, its squared-regret gradient and checkpoints.

The input of a player's network is ``(vec(u_own), vec(u_opp))`` with ``vec``
stacking columns, so one architecture serves both roles: the row player sees
``(u1, u2)`` and the column player ``(u2, u1)``. Hidden layers are ReLU,
the output is a softmax over the player's own actions.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .errors import CheckpointFormatError, NonFiniteUpdate, ShapeMismatch
from .game_space import Game

LOSS_KINDS = ("squared_regret", "linear_regret")
FEEDBACK_MODES = ("full_mixed", "realized_action")

MAGIC = b"GPNNCKPT"
CKPT_VERSION = 1
_HEADER = struct.Struct("<8sIIIIQQ")


@dataclass(frozen=True)
class NetworkShape:
    n: int
    layers: int
    width: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.layers < 1:
            raise ValueError("need at least one hidden layer")
        if self.width <= 2 * self.n ** 2:
            raise ValueError(f"width must exceed 2n^2 = {2 * self.n ** 2}")

    @property
    def layer_sizes(self):
        """(fan_in, fan_out) of every affine layer."""
        d = self.width
        sizes = [(2 * self.n ** 2, d)] + [(d, d)] * (self.layers - 1) + [(d, self.n)]
        return sizes


def param_count(shape: NetworkShape) -> int:
    n, L, d = shape.n, shape.layers, shape.width
    return (L - 1) * d * d + (2 * n * n + n + L) * d + n


@dataclass
class NetworkParams:
    shape: NetworkShape
    weights: list
    biases: list

    def count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.shape, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(self.shape, [np.zeros_like(w) for w in self.weights],
                             [np.zeros_like(b) for b in self.biases])

    def to_vector(self) -> np.ndarray:
        """Flatten in checkpoint order: W(1) row-major, b(1), W(2), b(2), ..."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, shape: NetworkShape, vec) -> "NetworkParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != param_count(shape):
            raise ShapeMismatch(f"expected {param_count(shape)} parameters, got {vec.size}")
        weights, biases = [], []
        pos = 0
        for fan_in, fan_out in shape.layer_sizes:
            weights.append(vec[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in).copy())
            pos += fan_in * fan_out
            biases.append(vec[pos:pos + fan_out].copy())
            pos += fan_out
        return cls(shape, weights, biases)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (*self.weights, *self.biases))


def zero_params(shape: NetworkShape) -> NetworkParams:
    return NetworkParams.from_vector(shape, np.zeros(param_count(shape)))


def init_params(shape: NetworkShape, seed: int) -> NetworkParams:
    """He-normal weights (variance 2/fan_in), zero biases."""
    gen = rngmod.stream(seed, rngmod.INIT, shape.n, shape.layers, shape.width)
    weights, biases = [], []
    for fan_in, fan_out in shape.layer_sizes:
        weights.append(gen.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return NetworkParams(shape, weights, biases)


# --------------------------------------------------------------------------
# forward / backward
# --------------------------------------------------------------------------

def encode(u_own, u_opp) -> np.ndarray:
    """Network input rows for stacks of games: column-major vec of each matrix."""
    u_own = np.asarray(u_own, dtype=np.float64)
    u_opp = np.asarray(u_opp, dtype=np.float64)
    m = u_own.shape[0]
    return np.concatenate([u_own.transpose(0, 2, 1).reshape(m, -1),
                           u_opp.transpose(0, 2, 1).reshape(m, -1)], axis=1)


def role_inputs(u1, u2, role):
    if role == "row":
        return u1, u2
    if role == "column":
        return u2, u1
    raise ValueError(f"role must be 'row' or 'column', got {role!r}")


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(params: NetworkParams, x):
    """Strategies for input rows ``x``; the cache holds every layer's activations."""
    h = x
    acts = [x]
    pre = []
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pre.append(z)
        if l < last:
            h = np.maximum(z, 0.0)
            acts.append(h)
    y = softmax(pre[-1])
    return y, (acts, pre)


def policy(params: NetworkParams, u1, u2, role="row") -> np.ndarray:
    """Mixed strategies of ``params`` playing ``role`` in stacked games."""
    own, opp = role_inputs(np.asarray(u1), np.asarray(u2), role)
    if own.shape[-1] != params.shape.n:
        raise ShapeMismatch(f"network plays n={params.shape.n}, game has n={own.shape[-1]}")
    y, _ = forward_batch(params, encode(own, opp))
    return y


def forward(params: NetworkParams, g: Game, role="row"):
    own, opp = role_inputs(g.u1[None], g.u2[None], role)
    if g.n != params.shape.n:
        raise ShapeMismatch(f"network plays n={params.shape.n}, game has n={g.n}")
    y, cache = forward_batch(params, encode(own, opp))
    return y[0], cache


def backward_batch(params: NetworkParams, cache, y, dy, weights=None) -> NetworkParams:
    """Gradient of ``sum_i w_i * L_i`` given ``dL_i/dy_i = dy[i]`` (``w`` defaults to 1/m)."""
    acts, pre = cache
    m = y.shape[0]
    scale = np.full(m, 1.0 / m) if weights is None else np.asarray(weights, dtype=float)
    dz = y * (dy - np.sum(y * dy, axis=1, keepdims=True))
    dz = dz * scale[:, None]
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for l in range(len(params.weights) - 1, -1, -1):
        gw[l] = dz.T @ acts[l]
        gb[l] = dz.sum(axis=0)
        if l > 0:
            dz = (dz @ params.weights[l]) * (pre[l - 1] > 0.0)
    return NetworkParams(params.shape, gw, gb)


def regret_terms(u_own, y, opp):
    """Expected payoffs of own actions against ``opp`` and the resulting regret."""
    g = np.einsum("bjk,bk->bj", u_own, opp)
    r = g.max(axis=1) - np.einsum("bj,bj->b", y, g)
    return g, np.maximum(r, 0.0)


def batch_loss_and_gradient(params, u_own, u_opp, opp, loss="squared_regret"):
    """Mean loss over a batch and its exact gradient.

    ``opp`` holds the opponent strategies (one-hot rows for realized actions)
    and is treated as a constant.
    """
    if loss not in LOSS_KINDS:
        raise ValueError(f"unknown loss {loss!r}")
    y, cache = forward_batch(params, encode(u_own, u_opp))
    g, r = regret_terms(u_own, y, opp)
    if loss == "squared_regret":
        values = r * r
        dy = -2.0 * r[:, None] * g
    else:
        values = r
        dy = -g
    grad = backward_batch(params, cache, y, dy)
    return float(values.mean()), grad, y, r


@dataclass(frozen=True)
class OpponentFeedback:
    mode: str
    strategy: np.ndarray | None = None
    action: int | None = None

    def __post_init__(self):
        if self.mode not in FEEDBACK_MODES:
            raise ValueError(f"unknown feedback mode {self.mode!r}")
        if self.mode == "realized_action" and self.action is None:
            raise ValueError("realized_action feedback needs an action")
        if self.mode == "full_mixed" and self.strategy is None:
            raise ValueError("full_mixed feedback needs a strategy")

    def vector(self, n):
        if self.mode == "full_mixed":
            return np.asarray(self.strategy, dtype=np.float64)
        if not 0 <= self.action < n:
            raise ValueError(f"action {self.action} out of range for n={n}")
        e = np.zeros(n)
        e[self.action] = 1.0
        return e


def loss_and_gradient(params, g: Game, role, fb: OpponentFeedback, loss="squared_regret"):
    own, opp = role_inputs(g.u1[None], g.u2[None], role)
    value, grad, _, _ = batch_loss_and_gradient(params, own, opp, fb.vector(g.n)[None], loss)
    return value, grad


def loss_value(params, g: Game, role, fb: OpponentFeedback, loss="squared_regret") -> float:
    own, opp = role_inputs(g.u1[None], g.u2[None], role)
    y, _ = forward_batch(params, encode(own, opp))
    _, r = regret_terms(own, y, fb.vector(g.n)[None])
    return float(r[0] ** 2) if loss == "squared_regret" else float(r[0])


def finite_difference_gradient(params, g, role, fb, loss="squared_regret", h=1e-6) -> NetworkParams:
    if h <= 0:
        raise ValueError("step must be positive")
    base = params.to_vector()
    out = np.empty_like(base)
    for k in range(base.size):
        old = base[k]
        base[k] = old + h
        up = loss_value(NetworkParams.from_vector(params.shape, base), g, role, fb, loss)
        base[k] = old - h
        down = loss_value(NetworkParams.from_vector(params.shape, base), g, role, fb, loss)
        base[k] = old
        out[k] = (up - down) / (2 * h)
    return NetworkParams.from_vector(params.shape, out)


def apply_update(params, grad, eta, step=None) -> NetworkParams:
    if eta < 0:
        raise ValueError("learning rate must be nonnegative")
    weights = [w - eta * gw for w, gw in zip(params.weights, grad.weights)]
    biases = [b - eta * gb for b, gb in zip(params.biases, grad.biases)]
    out = NetworkParams(params.shape, weights, biases)
    if not out.all_finite():
        raise NonFiniteUpdate("update produced non-finite parameters", step=step)
    return out


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

def checkpoint_bytes(params: NetworkParams, step: int, seed: int) -> bytes:
    s = params.shape
    header = _HEADER.pack(MAGIC, CKPT_VERSION, s.n, s.layers, s.width, int(step), int(seed) & rngmod.SEED_MASK)
    return header + params.to_vector().astype("<f8").tobytes()


def parse_checkpoint(data: bytes):
    """Returns ``(params, step, seed)``."""
    if len(data) < _HEADER.size:
        raise CheckpointFormatError("truncated checkpoint header")
    magic, version, n, layers, width, step, seed = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}")
    if version != CKPT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    try:
        shape = NetworkShape(n, layers, width)
    except ValueError as exc:
        raise CheckpointFormatError(f"invalid network shape in header: {exc}") from None
    body = data[_HEADER.size:]
    expected = 8 * param_count(shape)
    if len(body) != expected:
        raise CheckpointFormatError(f"checkpoint body has {len(body)} bytes, expected {expected}")
    vec = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return NetworkParams.from_vector(shape, vec), int(step), int(seed)


def save_checkpoint(path, params, step, seed):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(params, step, seed))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())
