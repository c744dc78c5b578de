"""Command-line entry points: ``nashnet <command> [options]``."""
from __future__ import annotations

import argparse
import glob
import hashlib
import logging
import os
import re
import sys
import time

from threadpoolctl import threadpool_limits

from . import evaluator as ev
from . import formats
from .config import config_text, read_config, shipped_config_path, train_config
from .errors import (
    CheckpointFormatError,
    ConfigError,
    DegenerateGame,
    NonFiniteUpdate,
    ParseError,
    ShapeMismatch,
    TracingFailure,
)
from .game_space import SUBSPACES, Game, GameSet
from .network import CKPT_VERSION, load_checkpoint
from .oracle import (
    enumerate_all_nash,
    rationalizable_actions,
    selection_reference,
    strictly_dominated_actions,
)
from .trainer import train

log = logging.getLogger("nashnet")

EXIT_OK, EXIT_CONFIG, EXIT_FORMAT, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_CONFIG = "baseline2x2_desk"


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def resolve_config(path):
    if path is None:
        return shipped_config_path(DEFAULT_CONFIG)
    if not os.path.exists(path) and re.fullmatch(r"[\w.-]+", path):
        shipped = shipped_config_path(path)
        if os.path.exists(shipped):
            return shipped
    return path


def load_config(args):
    values = read_config(resolve_config(args.config)) if args.config or args.command == "train" else {}
    overrides = {"seed": args.seed}
    return train_config(values, **overrides)


def final_checkpoints(run_dir):
    """Highest-step checkpoint pair of a training run."""
    steps = []
    for path in glob.glob(os.path.join(run_dir, "p1_*.ckpt")):
        m = re.fullmatch(r"p1_(\d+)\.ckpt", os.path.basename(path))
        if m and os.path.exists(os.path.join(run_dir, f"p2_{m.group(1)}.ckpt")):
            steps.append(int(m.group(1)))
    if not steps:
        raise CheckpointFormatError(f"no checkpoint pair in {run_dir}")
    s = max(steps)
    return os.path.join(run_dir, f"p1_{s}.ckpt"), os.path.join(run_dir, f"p2_{s}.ckpt")


def _read_ckpt(path):
    if not os.path.isfile(path):
        raise CheckpointFormatError(f"checkpoint not found: {path}")
    return load_checkpoint(path)[0]


def load_pair(p1, p2, run, n=None):
    if run:
        p1, p2 = final_checkpoints(run)
    if not p1 or not p2:
        raise ConfigError("give --run or both --p1 and --p2")
    w1, w2 = _read_ckpt(p1), _read_ckpt(p2)
    if w1.shape.n != w2.shape.n:
        raise ShapeMismatch(f"checkpoints are for n={w1.shape.n} and n={w2.shape.n}")
    if n is not None and w1.shape.n != n:
        raise ShapeMismatch(f"checkpoints are for n={w1.shape.n}, test games have n={n}")
    return (w1, w2), [p1, p2]


def run_id_for(cfg_text):
    return hashlib.sha256(cfg_text.encode()).hexdigest()[:12]


def finish(out, entries, started):
    """Write the manifest (deterministic) and the wall-clock file (excluded from it)."""
    formats.write_manifest(out, entries)
    with open(os.path.join(out, "timing.txt"), "w") as fh:
        fh.write(f"wall_seconds = {time.time() - started:.3f}\n")


def read_game_rows(path):
    """``(game, seed, index)`` rows from a game CSV or, for ``.bin`` paths, the binary format."""
    if path.endswith(".bin"):
        u1, u2 = formats.read_games_bin(path)
        return [(Game(a, b), "", i) for i, (a, b) in enumerate(zip(u1, u2))]
    return formats.read_games_csv(path)


def test_games(args, cfg):
    if getattr(args, "games", None):
        rows = read_game_rows(args.games)
        if not rows:
            raise ParseError("no games in input", row=0)
        return GameSet.from_games([g for g, _, _ in rows])
    size = args.test_size if args.test_size is not None else cfg.test_size
    seed = args.test_seed if args.test_seed is not None else cfg.test_seed
    return ev.build_test_set(cfg.n, size, seed)


def _inputs(paths):
    return [(f"input.{i}", f"{os.path.basename(p)} {formats.sha256_file(p)}") for i, p in enumerate(paths)]


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_train(args):
    cfg, extra = load_config(args)
    out = args.out or "run"
    os.makedirs(out, exist_ok=True)
    started = time.time()
    text = config_text(cfg, extra)
    with open(os.path.join(out, "config.cfg"), "w") as fh:
        fh.write(text)
    result = train(cfg, out_dir=out)
    entries = [("run_id", extra.get("run_id") or run_id_for(text)),
               ("seed", cfg.seed),
               ("checkpoint_format_version", CKPT_VERSION),
               ("reference_run", extra.get("reference_run", "")),
               ("final_step", result.state.step)]
    entries += [(f"config.{k}", v) for k, v in cfg.items()]
    finish(out, entries, started)
    if result.curve:
        log.info("final maxreg_all %.4f", result.curve[-1].mean_maxreg_all)
    return EXIT_OK


def _eval_common(args):
    cfg, _ = load_config(args)
    games = test_games(args, cfg)
    pair, paths = load_pair(args.p1, args.p2, args.run, games.n)
    out = args.out or "eval"
    os.makedirs(out, exist_ok=True)
    return cfg, games, pair, paths, out


def cmd_eval(args):
    started = time.time()
    cfg, games, (w1, w2), paths, out = _eval_common(args)
    report = ev.evaluate_models(w1, w2, games)
    points, marks = ev.maxreg_cdf(report)
    formats.write_eval_csv(os.path.join(out, "eval.csv"), report, extra_rows=sorted(marks.items()))
    formats.write_cdf_csv(os.path.join(out, "cdf.csv"), points)
    finish(out, _inputs(paths) + [("test_games", len(games))], started)
    print(f"mean MaxReg {report.mean:.6f} over {report.games} games")
    return EXIT_OK


def cmd_select(args):
    started = time.time()
    cfg, games, (w1, w2), paths, out = _eval_common(args)
    table = ev.selection_report(w1, w2, games)
    formats.write_selection_csv(os.path.join(out, "selection.csv"), table)
    finish(out, _inputs(paths) + [("test_games", len(games))], started)
    print(f"risk-dominant selected {table.risk_dominant_rate:.4f} of {table.totals['utilitarian']} games")
    return EXIT_OK


def cmd_axioms(args):
    started = time.time()
    cfg, games, (w1, w2), paths, out = _eval_common(args)
    stats = [
        ev.axiom_symmetry(w1, w2, games),
        ev.axiom_equivariance(w1, w2, games),
        ev.axiom_br_invariance(w1, w2, games, k=args.samples, seed=cfg.seed),
        ev.axiom_monotonicity(w1, w2, games, k=args.samples, seed=cfg.seed),
    ]
    extra = [("argmax_kept", stats[-1].extra.get("argmax_kept"))]
    if args.small_run or args.small_p1:
        (s1, s2), spaths = load_pair(args.small_p1, args.small_p2, args.small_run)
        if s1.shape.n + 1 != games.n:
            raise ShapeMismatch("small models must have one action fewer than the test games")
        paths += spaths
        ind, raw = ev.axiom_independence(s1, s2, w1, w2, games)
        stats += [ind, raw]
        extra.append(("independence_eligible_fraction", ind.extra.get("eligible_fraction")))
    formats.write_axioms_csv(os.path.join(out, "axioms.csv"), stats)
    formats.write_csv(os.path.join(out, "axioms_summary.csv"), ["metric", "value"], extra)
    finish(out, _inputs(paths) + [("test_games", len(games))], started)
    return EXIT_OK


def cmd_heatmap(args):
    started = time.time()
    (w1, w2), paths = load_pair(args.p1, args.p2, args.run, 2)
    out = args.out or "heatmap"
    os.makedirs(out, exist_ok=True)
    grid = ev.heatmap_grid(w1, w2, args.resolution)
    formats.write_heatmap_csv(os.path.join(out, "heatmap.csv"), grid)
    finish(out, _inputs(paths) + [("resolution", args.resolution)], started)
    return EXIT_OK


def cmd_ood(args):
    started = time.time()
    cfg, _ = load_config(args)
    games = test_games(args, cfg)
    out = args.out or "ood"
    os.makedirs(out, exist_ok=True)
    paths = []
    reference = None
    if args.ref_run or args.ref_p1:
        reference, rpaths = load_pair(args.ref_p1, args.ref_p2, args.ref_run, games.n)
        paths += rpaths
    ref_id = args.reference_id or (os.path.basename(os.path.normpath(args.ref_run)) if args.ref_run else "")
    rows = []
    if args.mode == "affine":
        pair, ppaths = load_pair(args.p1, args.p2, args.run, games.n)
        paths = ppaths + paths
        res = {"affine": ev.ood_affine_report(*pair, games, args.transform_seed, reference, ref_id)}
    else:
        if not args.model:
            raise ConfigError("subspace mode needs --model LABEL RUN_DIR for each subspace")
        models = {}
        for label, run in args.model:
            if label not in SUBSPACES:
                raise ConfigError(f"unknown subspace label {label!r}")
            pair, ppaths = load_pair(None, None, run, games.n)
            paths += ppaths
            models[label] = (*pair, SUBSPACES[label])
        res = ev.ood_subspace_report(models, games, reference, ref_id)
    for label, r in res.items():
        for bucket, row in zip(r.report.buckets, formats.eval_rows(r.report)):
            rows.append([label, *row, r.dist_mean if bucket == "all" else "", r.dist_std if bucket == "all" else ""])
    formats.write_csv(os.path.join(out, "ood.csv"),
                      ["model", *formats.EVAL_HEADER, "dist_baseline_mean", "dist_baseline_std"], rows)
    finish(out, _inputs(paths) + [("mode", args.mode), ("reference_run", ref_id)], started)
    for label, r in res.items():
        print(f"{label}: mean MaxReg {r.report.mean:.6f}")
    return EXIT_OK


def cmd_oracle(args):
    started = time.time()
    if not args.games:
        raise ConfigError("oracle needs --games CSV")
    rows = read_game_rows(args.games)
    out = args.out or "oracle"
    os.makedirs(out, exist_ok=True)
    eq_rows, flag_rows, dom_rows = [], [], []
    for gi, (g, _, idx) in enumerate(rows):
        try:
            eqs = enumerate_all_nash(g)
        except DegenerateGame:
            flag_rows.append([idx, 0, "", "", "", "degenerate"])
            continue
        for k, e in enumerate(eqs):
            eq_rows.append([idx, k, e.kind, formats.strategy_text(e.s1), formats.strategy_text(e.s2), e.residual])
        status, rd, util, pd = "ok", "", "", ""
        if len(eqs) >= 2 and g.n <= 3:
            try:
                rd_i, util_i, pd_i = selection_reference(g, eqs)
                rd, util, pd = rd_i, " ".join(map(str, util_i)), "" if pd_i is None else pd_i
            except (TracingFailure, DegenerateGame) as exc:
                status = f"selection failed: {exc}"
        flag_rows.append([idx, len(eqs), rd, util, pd, status])
        r1, r2 = rationalizable_actions(g)
        for player, u, r in ((1, g.u1, r1), (2, g.u2, r2)):
            dom = sorted(strictly_dominated_actions(u))
            dom_rows.append([idx, player, " ".join(map(str, dom)), " ".join(map(str, sorted(r)))])
    formats.write_csv(os.path.join(out, "equilibria.csv"), formats.EQUILIBRIUM_HEADER, eq_rows)
    formats.write_csv(os.path.join(out, "selection_flags.csv"), formats.FLAGS_HEADER, flag_rows)
    formats.write_csv(os.path.join(out, "dominance.csv"), formats.DOMINANCE_HEADER, dom_rows)
    finish(out, _inputs([args.games]) + [("games", len(rows))], started)
    return EXIT_OK


def cmd_verify(args):
    out = args.out or "."
    path = os.path.join(out, "manifest")
    if not os.path.isfile(path):
        raise CheckpointFormatError(f"no manifest in {out}")
    problems = formats.verify_manifest(out)
    for p in problems:
        print(p)
    if problems:
        return EXIT_FORMAT
    print("manifest ok")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "axioms": cmd_axioms, "select": cmd_select,
    "heatmap": cmd_heatmap, "ood": cmd_ood, "oracle": cmd_oracle, "verify": cmd_verify,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file or shipped config name")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for evaluation (results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")

    pair = argparse.ArgumentParser(add_help=False)
    pair.add_argument("--p1", help="row player checkpoint")
    pair.add_argument("--p2", help="column player checkpoint")
    pair.add_argument("--run", help="training run directory (uses its last checkpoint pair)")

    tests = argparse.ArgumentParser(add_help=False)
    tests.add_argument("--games", help="game CSV to evaluate instead of a sampled test set")
    tests.add_argument("--test-size", type=int)
    tests.add_argument("--test-seed", type=int)

    parser = argparse.ArgumentParser(prog="nashnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train a player pair")
    sub.add_parser("eval", parents=[common, pair, tests], help="MaxReg report")
    sub.add_parser("select", parents=[common, pair, tests], help="equilibrium selection tables")
    p = sub.add_parser("axioms", parents=[common, pair, tests], help="behavioural axiom statistics")
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--small-p1")
    p.add_argument("--small-p2")
    p.add_argument("--small-run", help="run with one action fewer, for the independence axiom")
    p = sub.add_parser("heatmap", parents=[common, pair], help="strategic-torus grid")
    p.add_argument("--resolution", type=int, default=128)
    p = sub.add_parser("ood", parents=[common, pair, tests], help="out-of-distribution reports")
    p.add_argument("mode", choices=("affine", "subspace"))
    p.add_argument("--model", nargs=2, action="append", metavar=("LABEL", "RUN_DIR"))
    p.add_argument("--ref-p1")
    p.add_argument("--ref-p2")
    p.add_argument("--ref-run")
    p.add_argument("--reference-id", default="")
    p.add_argument("--transform-seed", type=int, default=0)
    p = sub.add_parser("oracle", parents=[common], help="equilibria, selection and dominance per game")
    p.add_argument("--games", help="game CSV")
    sub.add_parser("verify", parents=[common], help="check manifest checksums in --out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        # BLAS stays single-threaded: its multithreaded kernels reorder sums.
        # --threads only sizes the pool that evaluates fixed game chunks.
        ev.set_workers(max(1, args.threads))
        with threadpool_limits(limits=1):
            return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointFormatError, ParseError, ShapeMismatch) as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (NonFiniteUpdate, TracingFailure) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
