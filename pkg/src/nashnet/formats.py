"""On-disk formats: CSV tables, binary game files and run manifests.

Floats are written with ``repr`` (shortest round-trip form), so the same
values always produce the same bytes.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import struct

import numpy as np

from .errors import CheckpointFormatError, ParseError
from .game_space import Game

GAMES_MAGIC = b"GPNNGAME"
GAMES_VERSION = 1
_GAMES_HEADER = struct.Struct("<8sIIQ")
MANIFEST_VERSION = 1


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return repr(x)
    if x is None:
        return ""
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(header, rows))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [], []
    return rows[0], rows[1:]


# --------------------------------------------------------------------------
# games
# --------------------------------------------------------------------------

def game_csv_header(n: int) -> list[str]:
    cells = [f"{i}{j}" for i in range(1, n + 1) for j in range(1, n + 1)]
    return ["n", "seed", "index"] + [f"u1_{c}" for c in cells] + [f"u2_{c}" for c in cells]


def write_games_csv(path, games, seeds=None, indices=None):
    games = list(games)
    n = games[0].n if games else 2
    rows = []
    for i, g in enumerate(games):
        if g.n != n:
            raise ValueError("a game CSV holds games of a single size")
        seed = seeds[i] if seeds is not None else 0
        idx = indices[i] if indices is not None else i
        rows.append([n, seed, idx, *g.u1.ravel(), *g.u2.ravel()])
    write_csv(path, game_csv_header(n), rows)


def parse_games_csv(text: str):
    """Returns a list of ``(game, seed, index)``; rows are numbered from 1 after the header."""
    out = []
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 0 and row[0].strip() == "n":
            continue
        try:
            n = int(row[0])
            if n < 1:
                raise ValueError("n must be positive")
            if len(row) != 3 + 2 * n * n:
                raise ValueError(f"expected {3 + 2 * n * n} fields, got {len(row)}")
            seed, idx = int(row[1]), int(row[2])
            vals = np.array([float(c) for c in row[3:]])
            if not np.all(np.isfinite(vals)):
                raise ValueError("non-finite payoff")
        except ValueError as exc:
            raise ParseError(str(exc), row=lineno) from None
        out.append((Game(vals[: n * n].reshape(n, n), vals[n * n:].reshape(n, n)), seed, idx))
    return out


def read_games_csv(path):
    with open(path, newline="") as fh:
        return parse_games_csv(fh.read())


def games_bytes(u1, u2) -> bytes:
    u1 = np.ascontiguousarray(u1, dtype="<f8")
    u2 = np.ascontiguousarray(u2, dtype="<f8")
    m, n = u1.shape[0], u1.shape[1]
    body = np.concatenate([u1.reshape(m, -1), u2.reshape(m, -1)], axis=1)
    return _GAMES_HEADER.pack(GAMES_MAGIC, GAMES_VERSION, n, m) + body.tobytes()


def parse_games_bytes(data: bytes):
    """Inverse of :func:`games_bytes`; returns stacked ``(u1, u2)``."""
    if len(data) < _GAMES_HEADER.size:
        raise CheckpointFormatError("truncated game file header")
    magic, version, n, m = _GAMES_HEADER.unpack_from(data)
    if magic != GAMES_MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}")
    if version != GAMES_VERSION:
        raise CheckpointFormatError(f"unsupported game file version {version}")
    body = data[_GAMES_HEADER.size:]
    if len(body) != 16 * n * n * m:
        raise CheckpointFormatError("game file body has the wrong length")
    arr = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(m, 2, n, n)
    return arr[:, 0].copy(), arr[:, 1].copy()


def write_games_bin(path, u1, u2):
    with open(path, "wb") as fh:
        fh.write(games_bytes(u1, u2))


def read_games_bin(path):
    with open(path, "rb") as fh:
        return parse_games_bytes(fh.read())


def strategy_text(s) -> str:
    return " ".join(fmt(float(x)) for x in s)


# --------------------------------------------------------------------------
# curves and reports
# --------------------------------------------------------------------------

CURVE_HEADER = ["step", "games_seen", "eta", "maxreg_all", "maxreg_pure", "maxreg_mixed"]


def write_curve_csv(path, points):
    write_csv(path, CURVE_HEADER, [
        [p.step, p.games_seen, p.eta, p.mean_maxreg_all, p.mean_maxreg_pure_only, p.mean_maxreg_mixed_only]
        for p in points
    ])


def read_curve_csv(path):
    header, rows = read_csv(path)
    if header != CURVE_HEADER:
        raise ParseError(f"unexpected curve header {header}", row=0)
    from .trainer import CurvePoint

    return [CurvePoint(int(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5])) for r in rows]


# --------------------------------------------------------------------------
# manifests
# --------------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, entries, files=None, name="manifest"):
    """Write ``key = value`` entries followed by one checksum line per output file.

    ``files`` defaults to every regular file in ``out_dir`` except the manifest
    itself and ``timing.txt``; names are sorted so the manifest is stable.
    """
    if files is None:
        files = sorted(f for f in os.listdir(out_dir)
                       if f not in (name, "timing.txt") and os.path.isfile(os.path.join(out_dir, f)))
    lines = [f"manifest_version = {MANIFEST_VERSION}"]
    lines += [f"{k} = {fmt(v)}" for k, v in entries]
    lines += [f"file {f} sha256 {sha256_file(os.path.join(out_dir, f))}" for f in sorted(files)]
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_manifest(path):
    """Returns ``(entries, files)`` with ``files`` mapping name to sha256."""
    entries, files = {}, {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("file "):
                parts = line.split()
                if len(parts) != 4 or parts[2] != "sha256":
                    raise ParseError(f"malformed file line: {line}", row=lineno)
                files[parts[1]] = parts[3]
            elif "=" in line:
                k, v = line.split("=", 1)
                entries[k.strip()] = v.strip()
            else:
                raise ParseError(f"malformed manifest line: {line}", row=lineno)
    return entries, files


def verify_manifest(out_dir, name="manifest") -> list[str]:
    """Return a list of problems; empty means every checksum matches."""
    _, files = read_manifest(os.path.join(out_dir, name))
    problems = []
    for f, digest in files.items():
        path = os.path.join(out_dir, f)
        if not os.path.isfile(path):
            problems.append(f"missing {f}")
        elif sha256_file(path) != digest:
            problems.append(f"checksum mismatch {f}")
    return problems


# --------------------------------------------------------------------------
# evaluation outputs
# --------------------------------------------------------------------------

EVAL_HEADER = ["bucket", "count", "frequency", "mean_maxreg", "std_maxreg", "benchmark_mean"]
SELECTION_HEADER = ["table", "risk_dominant", "criterion", "count", "frequency",
                    "freq_if_rd_meets", "freq_if_rd_fails"]
AXIOM_HEADER = ["axiom", "games", "transforms", "mean", "std", "q90", "q99"]
HEATMAP_HEADER = ["theta1", "theta2", "p1_action1", "p2_action1", "maxreg"]
CDF_HEADER = ["epsilon", "fraction"]
EQUILIBRIUM_HEADER = ["game", "eq", "kind", "s1", "s2", "residual"]
FLAGS_HEADER = ["game", "equilibria", "risk_dominant", "utilitarian", "payoff_dominant", "status"]
DOMINANCE_HEADER = ["game", "player", "dominated", "rationalizable"]


def eval_rows(report):
    return [[k, b.count, b.frequency, b.mean, b.std, b.benchmark] for k, b in report.buckets.items()]


def write_eval_csv(path, report, extra_rows=()):
    rows = eval_rows(report)
    write_csv(path, EVAL_HEADER, rows)
    summary = [
        ("games", report.games), ("excluded", report.excluded),
        ("exact_pure_hit_rate", report.exact_pure_hit_rate), ("unique_pure_games", report.unique_pure_games),
        ("dominated_mass", report.dominated_mass), ("dominated_cases", report.dominated_cases),
        ("nonrationalizable_mass", report.nonrationalizable_mass),
        ("nonrationalizable_cases", report.nonrationalizable_cases),
        *extra_rows,
    ]
    base, ext = os.path.splitext(path)
    write_csv(f"{base}_summary{ext}", ["metric", "value"], summary)


def write_selection_csv(path, table):
    rows = []
    for crit in ("utilitarian", "payoff_dominant"):
        for rd in (True, False):
            for c in (True, False):
                rows.append([crit, rd, c, table.cells[crit][(rd, c)], table.frequency(crit, rd, c),
                             table.frequency(crit, rd, c, "aligned"), table.frequency(crit, rd, c, "conflict")])
    write_csv(path, SELECTION_HEADER, rows)
    base, ext = os.path.splitext(path)
    write_csv(f"{base}_summary{ext}", ["metric", "value"], [
        ("games", table.games), ("multi_equilibrium", table.multi_equilibrium),
        ("excluded", table.excluded), ("ties", table.ties),
        ("quarantined", table.quarantined), ("quarantine_margin", table.quarantine_margin),
        ("utilitarian_total", table.totals["utilitarian"]),
        ("payoff_dominant_total", table.totals["payoff_dominant"]),
        ("risk_dominant_rate", table.risk_dominant_rate),
    ])


def write_axioms_csv(path, stats):
    write_csv(path, AXIOM_HEADER, [[s.axiom, s.games, s.transforms, s.mean, s.std, s.q90, s.q99] for s in stats])


def write_heatmap_csv(path, grid):
    write_csv(path, HEATMAP_HEADER, grid.rows())


def write_cdf_csv(path, points):
    write_csv(path, CDF_HEADER, points)
