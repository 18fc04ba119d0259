"""Command-line front end.

Subcommands: ``simulate``, ``bounds``, ``seesaw``, ``ingest`` and ``pvalue``.
Exit codes: 0 on success, 1 on invalid input, 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .bounds import (
    certified_schmidt_number,
    classical_bound,
    critical_visibility,
    has_sdp_reference,
    schmidt_bound,
    sdp_reference,
    unassisted_quantum_bound,
)
from .formats import ProtocolSpec, parse_dataset, read_dataset_text
from .optimize import SeesawConfig, seesaw_physical, seesaw_relaxed
from .protocol import (
    correlation,
    is_prime,
    isotropic_protocol,
    isotropic_state,
    mub_game_correlation,
    mub_game_value,
    success_rate,
)
from .stats import azuma_pvalue, estimate_success, poisson_bootstrap, win_frequencies

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2


class UsageError(ValueError):
    pass


@dataclass
class RunReport:
    """Everything needed to reproduce and audit one command invocation."""

    command: list[str]
    input_digest: str
    results: dict[str, Any]
    started: str
    finished: str = ""
    version: str = __version__
    seed: int | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self, precision: int) -> dict[str, Any]:
        return {
            "command": self.command,
            "input_digest": self.input_digest,
            "seed": self.seed,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "results": _rounded(self.results, precision),
            "notes": self.notes,
        }

    def to_json(self, precision: int) -> str:
        return json.dumps(self.to_dict(precision), indent=2)

    def to_text(self, precision: int) -> str:
        out = [f"# densecode {self.version}: {' '.join(self.command)}", f"# input sha256: {self.input_digest}"]
        if self.seed is not None:
            out.append(f"# seed: {self.seed}")
        for key, value in self.results.items():
            if isinstance(value, list) and value and isinstance(value[0], dict):
                out.append(f"{key}:")
                out.extend("  " + line for line in _table(value, precision))
            else:
                out.append(f"{key}: {_fmt(value, precision)}")
        out.extend(f"note: {n}" for n in self.notes)
        return "\n".join(out)


def _fmt(value: Any, precision: int) -> str:
    if isinstance(value, bool) or value is None:
        return str(value).lower() if isinstance(value, bool) else "null"
    if isinstance(value, float):
        return _fmt_float(value, precision)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v, precision) for v in value) + "]"
    return str(value)


def _fmt_float(x: float, precision: int) -> str:
    if math.isfinite(x) and x == 0:
        return "0"
    return f"{x:.{precision}g}"


def _rounded(value: Any, precision: int) -> Any:
    # JSON carries exactly the digits the text view prints
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        return float(_fmt_float(value, precision)) if math.isfinite(value) else str(value)
    if isinstance(value, dict):
        return {k: _rounded(v, precision) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(v, precision) for v in value]
    return value


def _table(rows: list[dict[str, Any]], precision: int) -> list[str]:
    keys = list(rows[0])
    cells = [keys] + [[_fmt(r[k], precision) for k in keys] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(keys))]
    return ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]


def _digest(*parts: str) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _default_seed() -> int:
    raw = os.environ.get("DENSECODE_SEED")
    if raw is None:
        return 0
    try:
        seed = int(raw)
    except ValueError:
        raise UsageError(f"DENSECODE_SEED must be an integer, got {raw!r}") from None
    if seed < 0:
        raise UsageError("DENSECODE_SEED must be non-negative")
    return seed


def _parse_noise(spec: str) -> float:
    kind, _, value = spec.partition(":")
    if kind != "isotropic" or not value:
        raise UsageError(f"noise must look like 'isotropic:<v>', got {spec!r}")
    try:
        v = float(value)
    except ValueError:
        raise UsageError(f"bad visibility in {spec!r}") from None
    if not 0.0 <= v <= 1.0:
        raise UsageError(f"visibility must lie in [0, 1], got {v}")
    return v


def _bound_rows(n: int, d_values) -> list[dict[str, Any]]:
    return [
        {"d": d, "schmidt_bound": schmidt_bound(n, d), "critical_visibility": critical_visibility(schmidt_bound(n, d), n)}
        for d in d_values
    ]


# --- commands ----------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> RunReport:
    n = args.n
    if n is not None and n < 2:
        raise UsageError("n must be >= 2")
    if args.game == "mub":
        if n is None:
            raise UsageError("--n is required")
        if args.protocol:
            raise UsageError("--protocol applies to the stochastic game only")
        if not is_prime(n) or n == 2:
            raise UsageError(f"the mub game needs an odd prime n, got {n}")
        m = args.m if args.m is not None else n + 1
        if not 2 <= m <= n + 1:
            raise UsageError(f"m must lie in [2, {n + 1}], got {m}")
        v = _parse_noise(args.noise)
        value = mub_game_value(mub_game_correlation(n, m, isotropic_state(n, v)), n, m)
        results: dict[str, Any] = {"game": "mub", "n": n, "m": m, "visibility": v, "R": value}
        if has_sdp_reference(n, m):
            refs = [
                {"d": d, "reference_bound": sdp_reference(n, m, d), "exceeded": value > sdp_reference(n, m, d)}
                for d in range(1, n)
            ]
            results["reference"] = refs
            results["certified_d"] = certified_schmidt_number(value, n, lambda _n, d: sdp_reference(n, m, d), n - 1)
        else:
            results["certified_d"] = None
        return RunReport(args.argv, _digest(*args.argv), results, args.started)

    if args.protocol:
        text = Path(args.protocol).read_text(encoding="utf-8")
        spec = ProtocolSpec.from_json(text)
        if n is not None and spec.n != n:
            raise UsageError(f"--n {n} disagrees with protocol file n={spec.n}")
        n = spec.n
        proto = spec.build()
        digest = _digest(text)
        v = None
    else:
        if n is None:
            raise UsageError("--n is required")
        v = _parse_noise(args.noise)
        proto = isotropic_protocol(n, v)
        digest = _digest(*args.argv)
    s = success_rate(correlation(proto))
    d_cert = certified_schmidt_number(s, n)
    results = {
        "game": "stochastic",
        "n": n,
        "visibility": v,
        "S": s,
        "classical_bound": classical_bound(n),
        "unassisted_quantum_bound": unassisted_quantum_bound(n),
        "bounds": [
            {"d": d, "schmidt_bound": schmidt_bound(n, d), "exceeded": s > schmidt_bound(n, d)} for d in range(1, n + 1)
        ],
        "certified_d": d_cert,
        "certified": s > schmidt_bound(n, 1),
    }
    return RunReport(args.argv, digest, results, args.started)


def cmd_bounds(args: argparse.Namespace) -> RunReport:
    n = args.n
    if n < 2:
        raise UsageError("n must be >= 2")
    d_min = args.d_min if args.d_min is not None else 1
    d_max = args.d_max if args.d_max is not None else n
    if not 1 <= d_min <= d_max <= n:
        raise UsageError(f"need 1 <= d-min <= d-max <= {n}")
    rows = _bound_rows(n, range(d_min, d_max + 1))
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    results = {
        "n": n,
        "classical_bound": classical_bound(n),
        "unassisted_quantum_bound": unassisted_quantum_bound(n),
        "bounds": rows,
    }
    return RunReport(args.argv, _digest(*args.argv), results, args.started)


def cmd_seesaw(args: argparse.Namespace) -> RunReport:
    cfg = SeesawConfig(
        args.n,
        args.d,
        restarts=args.restarts,
        max_iterations=args.max_iter,
        threshold=args.threshold,
        seed=args.seed,
        workers=args.workers,
    )
    run = seesaw_relaxed if args.mode == "relaxed" else seesaw_physical
    res = run(cfg)
    if not all(np.isfinite(t[-1]) for t in res.trajectories):
        raise FloatingPointError("see-saw produced a non-finite objective")
    bound = schmidt_bound(args.n, args.d)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["restart", "iteration", "objective"])
            for r, traj in enumerate(res.trajectories):
                w.writerows([r, i, repr(obj)] for i, obj in enumerate(traj))
    results = {
        "n": args.n,
        "d": args.d,
        "mode": args.mode,
        "restarts": args.restarts,
        "best_objective": res.best_objective,
        "schmidt_bound": bound,
        "gap": bound - res.best_objective,
        "relative_gap": (bound - res.best_objective) / bound,
        "best_restart": res.best_restart,
        "converged_restarts": int(sum(res.converged)),
        "total_iterations": res.iterations_used,
    }
    report = RunReport(args.argv, _digest(*args.argv), results, args.started, seed=args.seed)
    if not all(res.converged):
        report.notes.append(f"{args.restarts - sum(res.converged)} restart(s) hit --max-iter before converging")
    return report


def _load(args: argparse.Namespace):
    text = read_dataset_text(args.path)
    return text, parse_dataset(text, args.total_counts)


def cmd_ingest(args: argparse.Namespace) -> RunReport:
    text, ds = _load(args)
    est = estimate_success(ds)
    boot = poisson_bootstrap(ds, args.samples, args.seed)
    freq = win_frequencies(ds)
    order = np.argsort(freq, axis=None, kind="stable")[: args.worst]
    worst = []
    for flat in order:
        x1, x2, y = np.unravel_index(flat, freq.shape)
        worst.append({"x1": int(x1), "x2": int(x2), "y": int(y) + 1, "p_win": float(freq[x1, x2, y])})
    d_cert = certified_schmidt_number(est.value, ds.n)
    results = {
        "n": ds.n,
        "total_events": ds.total_events,
        "S": est.value,
        "sigma": boot.std_dev,
        "bootstrap_mean": boot.value,
        "bootstrap_samples": boot.sample_count,
        "worst_settings": worst,
        "schmidt_bound_n_minus_1": schmidt_bound(ds.n, ds.n - 1),
        "certified_d": d_cert,
        "certified": est.value > schmidt_bound(ds.n, 1),
    }
    report = RunReport(args.argv, _digest(text), results, args.started, seed=args.seed)
    if "total_counts" in ds.metadata:
        report.notes.append(f"probability rows converted with total_counts={ds.metadata['total_counts']}")
    return report


def cmd_pvalue(args: argparse.Namespace) -> RunReport:
    if (args.dataset is None) == (args.s_hat is None):
        raise UsageError("give exactly one of --dataset or --s-hat")
    digest_parts = list(args.argv)
    n = args.n
    n_rounds = args.n_rounds
    if args.dataset is not None:
        args.path = args.dataset
        text, ds = _load(args)
        digest_parts.append(text)
        s_hat = estimate_success(ds).value
        if n != ds.n:
            n = ds.n
        if n_rounds is None:
            n_rounds = ds.total_events
    else:
        s_hat = args.s_hat
        if n_rounds is None:
            raise UsageError("--n-rounds is required with --s-hat")
    if not 1 <= args.d_null <= n:
        raise UsageError(f"d-null must lie in [1, {n}]")
    bound = schmidt_bound(n, args.d_null)
    pv = azuma_pvalue(s_hat, bound, n_rounds, args.delta)
    results = {
        "n": n,
        "d_null": args.d_null,
        "S": s_hat,
        "bound": bound,
        "mu": s_hat - bound,
        "n_rounds": n_rounds,
        "delta": args.delta,
        "p": pv.p,
        "log10_p": pv.log10_p,
    }
    report = RunReport(args.argv, _digest(*digest_parts), results, args.started)
    if s_hat <= bound:
        report.notes.append("score does not exceed the null bound; p = 1")
    elif n_rounds == 0:
        report.notes.append("no rounds; p = 1")
    return report


# --- parser ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors are validation errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=["text", "json"], default="text", help="output format")
    common.add_argument("--precision", type=int, default=6, help="significant digits for floats")

    seeded = _Parser(add_help=False)
    seeded.add_argument("--seed", type=int, default=None, help="RNG seed (default: $DENSECODE_SEED or 0)")

    p = _Parser(prog="densecode", description="Stochastic dense coding and Schmidt-number certification.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="evaluate a protocol under noise")
    s.add_argument("--n", type=int)
    s.add_argument("--game", choices=["stochastic", "mub"], default="stochastic")
    s.add_argument("--m", type=int, help="number of bases for the mub game (default n+1)")
    s.add_argument("--noise", default="isotropic:1.0", help="isotropic:<visibility>")
    s.add_argument("--protocol", help="JSON protocol file (stochastic game)")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bounds", parents=[common], help="tabulate Schmidt-number bounds")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--d-min", type=int)
    b.add_argument("--d-max", type=int)
    b.add_argument("--csv", help="also write the rows to this CSV file")
    b.set_defaults(func=cmd_bounds)

    w = sub.add_parser("seesaw", parents=[common, seeded], help="numerically optimize at fixed Schmidt number")
    w.add_argument("--n", type=int, required=True)
    w.add_argument("--d", type=int, required=True)
    w.add_argument("--mode", choices=["relaxed", "physical"], default="relaxed")
    w.add_argument("--restarts", type=int, default=10)
    w.add_argument("--max-iter", type=int, default=500)
    w.add_argument("--threshold", type=float, default=1e-9)
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--csv", help="write per-iteration objectives to this CSV file")
    w.set_defaults(func=cmd_seesaw)

    i = sub.add_parser("ingest", parents=[common, seeded], help="estimate S from a dataset file")
    i.add_argument("path", help="dataset file, or 'tables_s2_s3' for the bundled data")
    i.add_argument("--total-counts", type=int, help="override total_counts for probability rows")
    i.add_argument("--samples", type=int, default=1000, help="bootstrap samples")
    i.add_argument("--worst", type=int, default=3, help="number of weakest settings to list")
    i.set_defaults(func=cmd_ingest)

    v = sub.add_parser("pvalue", parents=[common], help="Azuma-Hoeffding p-value against a Schmidt-number null")
    v.add_argument("--dataset", help="dataset file or bundled name")
    v.add_argument("--s-hat", type=float)
    v.add_argument("--d-null", type=int, default=7)
    v.add_argument("--n", type=int, default=8)
    v.add_argument("--n-rounds", type=int)
    v.add_argument("--delta", type=float, default=1.0)
    v.add_argument("--total-counts", type=int, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_pvalue)
    return p


def run(argv: list[str]) -> tuple[RunReport, argparse.Namespace]:
    """Parse and execute a command line, returning the report and parsed options."""
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = list(argv)
    args.started = _now()
    if args.precision < 1:
        raise UsageError("--precision must be >= 1")
    if hasattr(args, "seed") and args.seed is None:
        args.seed = _default_seed()
    report = args.func(args)
    report.finished = _now()
    return report, args


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        report, args = run(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"densecode: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, LookupError, OSError) as exc:
        print(f"densecode: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(report.to_json(args.precision) if args.format == "json" else report.to_text(args.precision))
    return EXIT_OK
