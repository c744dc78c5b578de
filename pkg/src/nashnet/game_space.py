"""Bimatrix games on the normalized payoff space and samplers over it.

Payoff matrices are indexed own-action-first for both players: ``u1[j, k]``
is the row player's payoff for (j, k) and ``u2[k, j]`` the column player's
payoff when the column player plays k and the row player j.

The normalized space holds matrices with zero entry sum and Frobenius norm
``n``; it contains exactly one representative for every class of positive
affine transformations, except for constant matrices.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConstantMatrix

NORM_EPS = 1e-12

# half-space normals used for the quarter-space experiments
M = np.array([[-1.0, 1.0], [-1.0, 1.0]])
N = np.array([[1.0, -1.0], [-1.0, 1.0]])


@dataclass(frozen=True)
class Game:
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        u1 = np.asarray(self.u1, dtype=np.float64)
        u2 = np.asarray(self.u2, dtype=np.float64)
        if u1.ndim != 2 or u1.shape[0] != u1.shape[1] or u1.shape != u2.shape:
            raise ValueError(f"payoff matrices must be equal square arrays, got {u1.shape} and {u2.shape}")
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)

    @property
    def n(self) -> int:
        return self.u1.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Game):
            return NotImplemented
        return np.array_equal(self.u1, other.u1) and np.array_equal(self.u2, other.u2)

    __hash__ = None


@dataclass
class GameSet:
    """A stack of ``m`` games as two ``(m, n, n)`` arrays."""

    u1: np.ndarray
    u2: np.ndarray
    seed: int | None = None
    indices: np.ndarray | None = None

    def __post_init__(self):
        self.u1 = np.asarray(self.u1, dtype=np.float64).reshape(-1, *np.shape(self.u1)[-2:])
        self.u2 = np.asarray(self.u2, dtype=np.float64).reshape(self.u1.shape)
        if self.indices is None:
            self.indices = np.arange(len(self.u1))

    @property
    def n(self) -> int:
        return self.u1.shape[-1]

    def __len__(self) -> int:
        return self.u1.shape[0]

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return Game(self.u1[i], self.u2[i])
        return GameSet(self.u1[i], self.u2[i], self.seed, self.indices[i])

    def __iter__(self):
        for i in range(len(self)):
            yield Game(self.u1[i], self.u2[i])

    @classmethod
    def from_games(cls, games, seed=None):
        games = list(games)
        return cls(np.stack([g.u1 for g in games]), np.stack([g.u2 for g in games]), seed)


@dataclass(frozen=True)
class SubspaceSpec:
    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        for v in (self.v1, self.v2):
            if not np.any(np.asarray(v)):
                raise ValueError("half-space normal must be nonzero")

    def contains(self, u1, u2):
        """Membership mask for single matrices or stacks."""
        a = np.tensordot(np.asarray(u1), self.v1, axes=([-2, -1], [0, 1]))
        b = np.tensordot(np.asarray(u2), self.v2, axes=([-2, -1], [0, 1]))
        return (a >= 0) & (b >= 0)


SUBSPACES = {
    "a": SubspaceSpec(M, M),
    "b": SubspaceSpec(M, N),
    "c": SubspaceSpec(N, N),
}


SAMPLER_MODES = ("uniform", "nonuniform", "subspace", "affine")


@dataclass(frozen=True)
class SamplerConfig:
    n: int = 2
    mode: str = "uniform"
    seed: int = 0
    tilt: float = 2.0
    subspace: SubspaceSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.tilt < 0:
            raise ValueError("tilt must be nonnegative")
        if self.mode not in SAMPLER_MODES:
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.mode == "subspace" and self.subspace is None:
            raise ValueError("subspace mode needs a SubspaceSpec")


def is_normalized(a, atol=1e-9) -> bool:
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    return abs(a.sum()) <= atol * n * n and abs(np.linalg.norm(a) - n) <= atol * n


def normalize_to_payoff_space(a) -> np.ndarray:
    """Center ``a`` and rescale it to Frobenius norm ``n``."""
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("payoff matrix has non-finite entries")
    n = a.shape[0]
    c = a - a.mean()
    norm = np.linalg.norm(c)
    if norm <= NORM_EPS:
        raise ConstantMatrix("constant payoff matrix has no normalized representative")
    return c * (n / norm)


def normalize_game(g: Game) -> Game:
    return Game(normalize_to_payoff_space(g.u1), normalize_to_payoff_space(g.u2))


def _normalize_stack(a):
    a = a - a.mean(axis=(-2, -1), keepdims=True)
    norms = np.sqrt((a * a).sum(axis=(-2, -1), keepdims=True))
    return a * (a.shape[-1] / norms), norms[..., 0, 0]


def uniform_matrices(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    """``count`` matrices uniform on the normalized sphere (Gaussian, center, scale)."""
    out = np.empty((count, n, n))
    filled = 0
    while filled < count:
        raw = rng.standard_normal((count - filled, n, n))
        a, norms = _normalize_stack(raw)
        ok = norms > NORM_EPS
        k = int(ok.sum())
        out[filled:filled + k] = a[ok]
        filled += k
    return out


def sample_uniform_games(rng: np.random.Generator, count: int, n: int) -> GameSet:
    u1 = uniform_matrices(rng, count, n)
    u2 = uniform_matrices(rng, count, n)
    return GameSet(u1, u2)


def sample_uniform_game(cfg: SamplerConfig, rng: np.random.Generator) -> Game:
    return sample_uniform_games(rng, 1, cfg.n)[0]


def _tilted_matrices(rng, count, n, tilt):
    out = np.empty((count, n, n))
    filled = 0
    while filled < count:
        cand = uniform_matrices(rng, max(2 * (count - filled), 16), n)
        absval = np.abs(cand).reshape(len(cand), -1)
        spread = absval.max(axis=1) - absval.min(axis=1)
        accept = rng.random(len(cand)) < np.exp(-tilt * spread)
        cand = cand[accept][: count - filled]
        out[filled:filled + len(cand)] = cand
        filled += len(cand)
    return out


def sample_nonuniform_games(rng, count, n, tilt=2.0) -> GameSet:
    """Rejection sampler favouring matrices whose entries are similar in magnitude."""
    if tilt == 0:
        return sample_uniform_games(rng, count, n)
    return GameSet(_tilted_matrices(rng, count, n, tilt), _tilted_matrices(rng, count, n, tilt))


def sample_nonuniform_game(cfg: SamplerConfig, rng) -> Game:
    return sample_nonuniform_games(rng, 1, cfg.n, cfg.tilt)[0]


def sample_subspace_games(spec: SubspaceSpec, rng, count, n=None) -> GameSet:
    n = np.asarray(spec.v1).shape[0] if n is None else n
    u1 = np.empty((count, n, n))
    u2 = np.empty((count, n, n))
    filled = 0
    while filled < count:
        batch = sample_uniform_games(rng, 4 * (count - filled) + 8, n)
        ok = spec.contains(batch.u1, batch.u2)
        k = min(int(ok.sum()), count - filled)
        u1[filled:filled + k] = batch.u1[ok][:k]
        u2[filled:filled + k] = batch.u2[ok][:k]
        filled += k
    return GameSet(u1, u2)


def sample_subspace_game(spec: SubspaceSpec, rng) -> Game:
    return sample_subspace_games(spec, rng, 1)[0]


def sample_games(cfg: SamplerConfig, rng, count) -> GameSet:
    if cfg.mode == "uniform":
        return sample_uniform_games(rng, count, cfg.n)
    if cfg.mode == "nonuniform":
        return sample_nonuniform_games(rng, count, cfg.n, cfg.tilt)
    if cfg.mode == "affine":
        return affine_transform_games(sample_uniform_games(rng, count, cfg.n), rng)
    return sample_subspace_games(cfg.subspace, rng, count, cfg.n)


def affine_transform_game(g: Game, rng, alpha=None, beta=None) -> Game:
    """Random positive affine map per player; leaves the normalized space on purpose.

    ``alpha`` and ``beta`` may force the per-player draws (pairs).
    """
    n = g.n
    a = rng.uniform(1.0, n, size=2) if alpha is None else np.asarray(alpha, dtype=float)
    b = rng.uniform(-n, n, size=2) if beta is None else np.asarray(beta, dtype=float)
    return Game(a[0] * g.u1 + b[0], a[1] * g.u2 + b[1])


def affine_transform_games(games: GameSet, rng) -> GameSet:
    m, n = len(games), games.n
    a = rng.uniform(1.0, n, size=(m, 2))
    b = rng.uniform(-n, n, size=(m, 2))
    u1 = a[:, 0, None, None] * games.u1 + b[:, 0, None, None]
    u2 = a[:, 1, None, None] * games.u2 + b[:, 1, None, None]
    return GameSet(u1, u2, games.seed, games.indices)


def strategic_matrix(theta: float) -> np.ndarray:
    x = np.sqrt(2.0) * np.cos(theta)
    y = np.sqrt(2.0) * np.sin(theta)
    return np.array([[x, y], [-x, -y]])


def game_from_angles(theta1: float, theta2: float) -> Game:
    """Point of the strategic torus: zero column sums, norm 2, for each player."""
    for th in (theta1, theta2):
        if not 0.0 <= th < 2 * np.pi:
            raise ValueError("angles must lie in [0, 2*pi)")
    return Game(strategic_matrix(theta1), strategic_matrix(theta2))


def sample_br_equivalent(a, rng, alpha=None, gamma=None) -> np.ndarray:
    """Best-reply-equivalent matrix ``alpha*a + 1 gamma^T``, renormalized."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    alpha = rng.uniform(0.25, 4.0) if alpha is None else alpha
    gamma = rng.uniform(-n, n, size=n) if gamma is None else np.asarray(gamma, dtype=float)
    return normalize_to_payoff_space(alpha * a + gamma[None, :])


def permute_game(g: Game, p, q) -> Game:
    """Relabel row actions by ``p`` and column actions by ``q``.

    ``p[j]`` is the new label of the row player's action ``j``.
    """
    p = np.asarray(p)
    q = np.asarray(q)
    u1 = np.empty_like(g.u1)
    u2 = np.empty_like(g.u2)
    u1[np.ix_(p, q)] = g.u1
    u2[np.ix_(q, p)] = g.u2
    return Game(u1, u2)


def invert_permutation(p):
    p = np.asarray(p)
    inv = np.empty_like(p)
    inv[p] = np.arange(len(p))
    return inv


def all_permutation_pairs(n):
    perms = [np.array(p) for p in itertools.permutations(range(n))]
    return [(p, q) for p in perms for q in perms]


def swap_roles(g: Game) -> Game:
    return Game(g.u2, g.u1)


def restrict_game(g: Game, keep1, keep2) -> Game:
    keep1 = list(keep1)
    keep2 = list(keep2)
    if not keep1 or not keep2:
        raise ValueError("action subsets must be nonempty")
    return Game(g.u1[np.ix_(keep1, keep2)], g.u2[np.ix_(keep2, keep1)])


def pure_nash_counts(games: GameSet) -> np.ndarray:
    mask = kernels.pure_nash_mask(games.u1, games.u2)
    return mask.reshape(len(games), -1).sum(axis=1)
