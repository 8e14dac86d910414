"""Command-line interface.

Exit codes: 0 success, 1 validation failure, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .design import (
    Contrast,
    DesignDims,
    DesignError,
    PotentialOutcomeTable,
    population_contrast,
    table_from_csv,
    table_from_json,
)
from .estimators import confidence_interval, conservative_variance, estimate_contrast
from .randomizer import Assignment, draw_assignment, observe
from .simulation import (
    DEFAULT_REPS,
    DEFAULT_SEED,
    DEFAULT_B,
    DEFAULT_H,
    SimScenario,
    paper_contrasts,
    reports_to_csv,
    reports_to_json,
    reports_to_table,
    run_coverage,
)

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class CliIOError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliIOError(f"cannot read {path}: {exc.strerror or exc}") from None


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CliIOError(f"cannot write {path}: {exc.strerror or exc}") from None


def _load_table(path: str) -> PotentialOutcomeTable:
    text = _read(path)
    return table_from_csv(text) if path.lower().endswith(".csv") else table_from_json(text)


def _parse_contrast(spec: str, dims: DesignDims) -> Contrast:
    """``s1``..``s5`` selects a built-in 2 x 3 contrast; otherwise comma-separated coefficients."""
    spec = spec.strip()
    if spec.lower().startswith("s") and spec[1:].isdigit():
        idx = int(spec[1:])
        builtin = paper_contrasts()
        if not 1 <= idx <= len(builtin):
            raise DesignError(f"unknown built-in contrast {spec}")
        l = builtin[idx - 1]
    else:
        try:
            coefs = [float(v) for v in spec.split(",")]
        except ValueError:
            raise DesignError(f"cannot parse contrast {spec!r}") from None
        l = Contrast(coefs, dims.P, dims.Q)
    l.check_dims(dims)
    return l


def _fmt_matrix(m: np.ndarray) -> str:
    return "\n".join("  " + " ".join(f"{v:>12.6g}" for v in row) for row in m)


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    reports = []
    for h in args.h:
        for B in args.B:
            sc = SimScenario(B=B, h=h, reps=args.reps, level=args.level, seed=args.seed,
                             redraw_outcomes=args.redraw_outcomes)
            reports.append(run_coverage(sc, threads=args.threads))
    render = {"table": reports_to_table, "csv": reports_to_csv, "json": reports_to_json}[args.format]
    _write(args.out, render(reports))
    return EXIT_OK


def cmd_estimate(args) -> int:
    table = _load_table(args.table)
    if args.assignment:
        a = Assignment.from_json(_read(args.assignment))
    else:
        a = draw_assignment(table.dims, args.seed)
    l = _parse_contrast(args.contrast, table.dims)
    est = estimate_contrast(observe(table, a), l)
    ci = confidence_interval(est, args.level)
    out = {
        "tau_hat": est.pooled,
        "tau_hat_blocks": est.per_block.tolist(),
        "var0": conservative_variance(est),
        "level": ci.level,
        "z": ci.z,
        "ci": [ci.lower, ci.upper],
    }
    if args.show_truth:
        out["tau_true"] = population_contrast(table, l)
    if args.json:
        _write(None, json.dumps(out, indent=2) + "\n")
    else:
        _write(None, "".join(f"{k}: {v}\n" for k, v in out.items()))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verification import run_verification

    ok, lines = run_verification(trials=args.trials, seed=args.seed)
    _write(None, "\n".join(lines) + "\n")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_theory(args) -> int:
    from .variance import (
        covariance_matrix,
        delta0_bias,
        matrix_to_csv,
        max_eigenvalue,
        minimax_bound,
        sampling_variance,
        u0_matrix,
    )

    lines = []
    table = _load_table(args.table) if args.table else None
    B = table.dims.B if table is not None else args.B
    u0 = u0_matrix(B)
    lines.append(f"U0 (B={B}):")
    lines.append(_fmt_matrix(u0.u))
    lines.append(f"lambda_max(U0) = {max_eigenvalue(u0)!r}  (bound 1/(B(B-1)) = {minimax_bound(B)!r})")
    if table is not None:
        d = table.dims
        labels = [f"{p + 1}{q + 1}" for p, q in d.treatments()]
        for b in range(d.B):
            w = covariance_matrix(table, b)
            lines.append(f"W_{b + 1} (treatments {' '.join(labels)}):")
            lines.append(_fmt_matrix(w))
            if args.dump_dir:
                _write(str(Path(args.dump_dir) / f"W_{b + 1}.csv"), matrix_to_csv(w, labels))
        if args.contrast:
            l = _parse_contrast(args.contrast, d)
            lines.append(f"var(tau_hat) = {sampling_variance(table, l)!r}")
            lines.append(f"delta0 = {delta0_bias(table, l)!r}")
    if args.dump_dir:
        _write(str(Path(args.dump_dir) / "U0.csv"), matrix_to_csv(u0.u, [str(b + 1) for b in range(B)]))
    _write(None, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import exact_estimator_moments

    table = _load_table(args.table)
    l = _parse_contrast(args.contrast, table.dims)
    m = exact_estimator_moments(table, l)
    _write(None, json.dumps({
        "mean_tau_hat": m.mean_tau_hat,
        "var_tau_hat": m.var_tau_hat,
        "mean_var0": m.mean_var0,
        "n_block_assignments": m.n_block_assignments,
        "mean_obs": m.mean_obs.tolist(),
    }, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="striprct", description="Randomization inference for strip-plot designs.")
    sub = parser.add_subparsers(dest="command", metavar="{simulate,estimate,verify,theory}")
    sub.required = True

    s = sub.add_parser("simulate", help="coverage study of the conservative interval")
    s.add_argument("--h", type=float, nargs="+", default=list(DEFAULT_H))
    s.add_argument("--B", type=int, nargs="+", default=list(DEFAULT_B))
    s.add_argument("--reps", type=int, default=DEFAULT_REPS)
    s.add_argument("--level", type=float, default=0.95)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--out", default=None, help="output file (default stdout)")
    s.add_argument("--format", choices=("table", "csv", "json"), default="table")
    s.add_argument("--redraw-outcomes", action="store_true", help="new outcome table for every replicate")
    s.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate a contrast from a table and an assignment")
    e.add_argument("--table", required=True, help="potential outcome table (.json or .csv)")
    e.add_argument("--assignment", help="assignment JSON; drawn from --seed when omitted")
    e.add_argument("--seed", type=int, default=DEFAULT_SEED)
    e.add_argument("--contrast", required=True, help="comma-separated coefficients, or s1..s5 for 2 x 3 designs")
    e.add_argument("--level", type=float, default=0.95)
    e.add_argument("--show-truth", action="store_true", help="also print the population contrast")
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("verify", help="cross-check closed forms against exhaustive enumeration")
    v.add_argument("--trials", type=int, default=50)
    v.add_argument("--seed", type=int, default=DEFAULT_SEED)
    v.set_defaults(func=cmd_verify)

    t = sub.add_parser("theory", help="print covariance matrices, U0 and eigenvalue diagnostics")
    t.add_argument("--table", help="potential outcome table (.json or .csv)")
    t.add_argument("--B", type=int, default=2, help="U0 order when no table is given")
    t.add_argument("--contrast", help="also print the sampling variance and bias for this contrast")
    t.add_argument("--dump-dir", help="write W_b and U0 matrices as CSV files here")
    t.set_defaults(func=cmd_theory)

    # debugging aid, deliberately left out of --help
    o = sub.add_parser("oracle")
    o.add_argument("--table", required=True)
    o.add_argument("--contrast", required=True)
    o.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DesignError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
