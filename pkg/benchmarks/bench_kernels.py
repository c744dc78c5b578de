"""Time the numba kernels against their numpy fallbacks and check they agree.

    python3 benchmarks/bench_kernels.py [--games 65536] [--enum-games 2000]

The first JIT call compiles (or loads from cache); that cost is reported
separately and excluded from the per-call timings.
"""
import argparse
import time

import numpy as np

from nashnet import kernels
from nashnet.game_space import sample_uniform_games
from nashnet.rng import stream


def best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def enum_all(impl, games, pairs):
    return [impl(games.u1[i], games.u2[i], pairs) for i in range(len(games))]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--games", type=int, default=1 << 16)
    ap.add_argument("--enum-games", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    if not kernels.USE_JIT:
        print("numba disabled (NASHNET_JIT=0 or numba missing); only numpy timings are meaningful")

    rows = []
    for n in (2, 3):
        games = sample_uniform_games(stream(0, 99, n), args.games, n)
        s = np.full((args.games, n), 1.0 / n)
        cases = {
            "pure_nash_mask": (lambda: kernels._pure_nash_mask_numpy(games.u1, games.u2),
                               lambda: kernels._pure_nash_mask_jit(games.u1, games.u2)),
            "regrets": (lambda: kernels._regrets_numpy(games.u1, games.u2, s, s),
                        lambda: kernels._regrets_jit(games.u1, games.u2, s, s)),
        }
        small = games[: args.enum_games]
        pairs = kernels.support_pairs(n, unequal=True)
        cases["support_enum"] = (lambda: enum_all(kernels._support_enum_numpy, small, pairs),
                                 lambda: enum_all(kernels._support_enum_jit, small, pairs))
        for name, (np_fn, jit_fn) in cases.items():
            t = time.perf_counter()
            jit_fn()
            warm = time.perf_counter() - t
            t_np, out_np = best_of(np_fn, args.repeats)
            t_jit, out_jit = best_of(jit_fn, args.repeats)
            rows.append((name, n, t_np, t_jit, warm, _agree(name, out_np, out_jit)))

    print(f"{'kernel':<16}{'n':>3}{'numpy s':>12}{'jit s':>12}{'speedup':>10}{'first jit s':>13}  agree")
    for name, n, t_np, t_jit, warm, ok in rows:
        print(f"{name:<16}{n:>3}{t_np:>12.4f}{t_jit:>12.4f}{t_np / t_jit:>10.1f}{warm:>13.3f}  {ok}")


def _agree(name, a, b):
    if name == "pure_nash_mask":
        return bool(np.array_equal(a, b))
    if name == "regrets":
        return bool(np.allclose(a[0], b[0], atol=1e-12) and np.allclose(a[1], b[1], atol=1e-12))
    return all(x[0].shape == y[0].shape and np.allclose(x[0], y[0], atol=1e-9) for x, y in zip(a, b))


if __name__ == "__main__":
    main()
