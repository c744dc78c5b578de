"""Adversarial training of a row and a column network across random games."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import rng as rngmod
from .errors import InsufficientData, NonFiniteUpdate
from .evaluator import build_test_set
from .game_space import SUBSPACES, GameSet, SamplerConfig, pure_nash_counts, sample_games
from .network import (
    FEEDBACK_MODES,
    LOSS_KINDS,
    NetworkParams,
    NetworkShape,
    apply_update,
    backward_batch,
    encode,
    forward_batch,
    init_params,
    regret_terms,
    save_checkpoint,
)
from .oracle import max_normalized_regret_batch

log = logging.getLogger(__name__)

REALIZED_ACTION_ETA0 = 0.005


@dataclass(frozen=True)
class TrainConfig:
    n: int = 2
    layers1: int = 4
    width1: int = 64
    layers2: int = 4
    width2: int = 64
    sampler: str = "uniform"
    tilt: float = 2.0
    subspace: str = ""
    total_games: int = 250_000
    batch_size: int = 128
    eta0: float = 0.5
    alpha: float = 0.999999
    loss: str = "squared_regret"
    feedback: str = "full_mixed"
    seed: int = 0
    eval_points: int = 48
    test_size: int = 2 ** 13
    test_seed: int = 7
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.total_games < 0:
            raise ValueError("total_games must be >= 0")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.eta0 < 0:
            raise ValueError("eta0 must be nonnegative")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}")
        if self.feedback not in FEEDBACK_MODES:
            raise ValueError(f"feedback must be one of {FEEDBACK_MODES}")
        if self.sampler == "subspace" and self.subspace not in SUBSPACES:
            raise ValueError(f"subspace must be one of {sorted(SUBSPACES)}")
        self.shape1, self.shape2, self.sampler_config  # validate eagerly

    @property
    def shape1(self):
        return NetworkShape(self.n, self.layers1, self.width1)

    @property
    def shape2(self):
        return NetworkShape(self.n, self.layers2, self.width2)

    @property
    def sampler_config(self):
        spec = SUBSPACES.get(self.subspace) if self.sampler == "subspace" else None
        return SamplerConfig(self.n, self.sampler, self.seed, self.tilt, spec)

    @property
    def steps(self) -> int:
        return self.total_games // self.batch_size

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


@dataclass
class TrainState:
    w1: NetworkParams
    w2: NetworkParams
    step: int = 0


@dataclass(frozen=True)
class CurvePoint:
    step: int
    games_seen: int
    eta: float
    mean_maxreg_all: float
    mean_maxreg_pure_only: float
    mean_maxreg_mixed_only: float


@dataclass
class TrainResult:
    state: TrainState
    curve: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)


def learning_rate(t, eta0, alpha) -> float:
    return eta0 * alpha ** t


def initial_state(cfg: TrainConfig) -> TrainState:
    # distinct seeds per player keep the two networks independent
    return TrainState(init_params(cfg.shape1, cfg.seed * 2 + 1), init_params(cfg.shape2, cfg.seed * 2 + 2), 0)


def sample_batch(cfg: TrainConfig, step: int) -> GameSet:
    gen = rngmod.stream(cfg.seed, rngmod.TRAIN_GAMES, step)
    return sample_games(cfg.sampler_config, gen, cfg.batch_size)


def _realize(strategies, gen):
    """One-hot rows of actions drawn from each row of ``strategies``."""
    u = gen.random(len(strategies))
    cum = np.cumsum(strategies, axis=1)
    idx = np.minimum((cum <= u[:, None]).sum(axis=1), strategies.shape[1] - 1)
    out = np.zeros_like(strategies)
    out[np.arange(len(idx)), idx] = 1.0
    return out


def train_step(state: TrainState, cfg: TrainConfig, batch: GameSet, action_rng=None) -> TrainState:
    """One simultaneous SGD step for both players on ``batch``.

    Both players respond to the opponent's output under the time-t parameters;
    neither update sees the other's new parameters.
    """
    u1, u2 = batch.u1, batch.u2
    y1, cache1 = forward_batch(state.w1, encode(u1, u2))
    y2, cache2 = forward_batch(state.w2, encode(u2, u1))
    if cfg.feedback == "realized_action":
        if action_rng is None:
            action_rng = rngmod.stream(cfg.seed, rngmod.TRAIN_ACTIONS, state.step)
        opp1, opp2 = _realize(y2, action_rng), _realize(y1, action_rng)
    else:
        opp1, opp2 = y2, y1
    grads = []
    for w, y, cache, own, opp in ((state.w1, y1, cache1, u1, opp1), (state.w2, y2, cache2, u2, opp2)):
        g, r = regret_terms(own, y, opp)
        dy = -2.0 * r[:, None] * g if cfg.loss == "squared_regret" else -g
        grads.append(backward_batch(w, cache, y, dy))
    eta = learning_rate(state.step, cfg.eta0, cfg.alpha)
    try:
        w1 = apply_update(state.w1, grads[0], eta, step=state.step)
        w2 = apply_update(state.w2, grads[1], eta, step=state.step)
    except NonFiniteUpdate as exc:
        bad = np.flatnonzero(~np.all(np.isfinite(y1), axis=1) | ~np.all(np.isfinite(y2), axis=1))
        raise NonFiniteUpdate(
            f"non-finite parameters at step {state.step}"
            + (f", first bad game {int(bad[0])}" if bad.size else ""),
            step=state.step, game_index=int(bad[0]) if bad.size else None) from exc
    return TrainState(w1, w2, state.step + 1)


def eval_schedule(steps: int, points: int = 48) -> list[int]:
    """Log-spaced evaluation steps between 1 and ``steps`` (unique, increasing)."""
    if steps <= 0 or points <= 0:
        return []
    grid = np.unique(np.round(np.geomspace(1, steps, points)).astype(int))
    return [int(s) for s in grid]


def curve_point(state: TrainState, cfg: TrainConfig, test: GameSet, pure_counts=None) -> CurvePoint:
    from .network import policy

    s1 = policy(state.w1, test.u1, test.u2, "row")
    s2 = policy(state.w2, test.u1, test.u2, "column")
    mr = max_normalized_regret_batch(test.u1, test.u2, s1, s2)
    pure_counts = pure_nash_counts(test) if pure_counts is None else pure_counts
    has_pure = pure_counts > 0

    def _mean(mask):
        return float(np.mean(mr[mask])) if mask.any() else float("nan")

    return CurvePoint(
        step=state.step,
        games_seen=state.step * cfg.batch_size,
        eta=learning_rate(state.step, cfg.eta0, cfg.alpha),
        mean_maxreg_all=float(np.mean(mr)),
        mean_maxreg_pure_only=_mean(has_pure),
        mean_maxreg_mixed_only=_mean(~has_pure),
    )


def _write_pair(out_dir, state, cfg, written):
    paths = []
    for name, w in (("p1", state.w1), ("p2", state.w2)):
        path = os.path.join(out_dir, f"{name}_{state.step}.ckpt")
        save_checkpoint(path, w, state.step, cfg.seed)
        paths.append(path)
    written.extend(paths)


def train(cfg: TrainConfig, out_dir=None, test: GameSet | None = None, progress=None) -> TrainResult:
    """Run ``cfg.steps`` steps, evaluating on the held-out set at log-spaced steps.

    With ``out_dir`` the curve CSV and a checkpoint pair per evaluation point
    (plus the initial and final pair) are written there.
    """
    from .formats import write_curve_csv

    state = initial_state(cfg)
    result = TrainResult(state)
    schedule = set(eval_schedule(cfg.steps, cfg.eval_points))
    if schedule and test is None:
        test = build_test_set(cfg.n, cfg.test_size, cfg.test_seed)
    pure_counts = pure_nash_counts(test) if test is not None else None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_pair(out_dir, state, cfg, result.checkpoints)
    for t in range(cfg.steps):
        state = train_step(state, cfg, sample_batch(cfg, t))
        if state.step in schedule:
            point = curve_point(state, cfg, test, pure_counts)
            result.curve.append(point)
            log.info("step %d games %d maxreg %.4f", point.step, point.games_seen, point.mean_maxreg_all)
            if progress is not None:
                progress(point)
        if out_dir is not None:
            periodic = cfg.checkpoint_every > 0 and state.step % cfg.checkpoint_every == 0
            if state.step in schedule or periodic or state.step == cfg.steps:
                _write_pair(out_dir, state, cfg, result.checkpoints)
    result.state = state
    if out_dir is not None:
        path = os.path.join(out_dir, "curve.csv")
        write_curve_csv(path, result.curve)
    return result


def with_overrides(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **kw)


def _linfit(x, y):
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    return coef[0], float(resid @ resid)


def fit_learning_curve(points, min_window: int = 3):
    """Exponential fit on an early window, power law on the tail.

    Returns ``(exp_rate, power_exponent, split_step)`` where the split minimizes
    the combined squared residual of ``log y`` over candidate split points.
    ``points`` is a list of CurvePoint or of ``(step, value)`` pairs.
    """
    if len(points) < 10:
        raise InsufficientData(f"need at least 10 curve points, got {len(points)}")
    if isinstance(points[0], CurvePoint):
        steps = np.array([p.step for p in points], dtype=float)
        vals = np.array([p.mean_maxreg_all for p in points], dtype=float)
    else:
        steps = np.array([p[0] for p in points], dtype=float)
        vals = np.array([p[1] for p in points], dtype=float)
    logy = np.log(np.maximum(vals, 1e-300))
    best = None
    for k in range(min_window, len(steps) - min_window + 1):
        slope_e, sse_e = _linfit(steps[:k], logy[:k])
        slope_p, sse_p = _linfit(np.log(steps[k:]), logy[k:])
        total = sse_e + sse_p
        if best is None or total < best[0] - 1e-15:
            best = (total, -slope_e, slope_p, int(steps[k]))
    return best[1], best[2], best[3]
