"""
Command-line entry point.

Exit codes: 0 test did not reject (or command finished), 2 test rejected,
64 usage or input-parse error, 66 missing input file, 78 bad configuration,
3 any other library error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DimensionMismatch, ParseError, ResiSpikeError
from .nulllaw import NullLaw, Variant, density_curve, null_law_general, null_law_mp
from .simlab import (
    criterion_curve_for,
    load_study,
    power_cell,
    run_null_study,
    with_replicates,
    write_csv,
)
from .spectra import MomentSet, Spectrum, normalize_trace
from .spike import estimate_spike
from .testkit import residual_spike_test

SCHEMA = "1"
EXIT_OK, EXIT_REJECT, EXIT_ERROR = 0, 2, 3
EXIT_USAGE, EXIT_NOINPUT, EXIT_CONFIG = 64, 66, 78


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def sig12(x: float) -> float:
    return float(f"{float(x):.12g}")


def law_json(law: NullLaw) -> dict:
    d = law.to_dict()
    return {k: (v if k == "m" else sig12(v)) for k, v in d.items()}


def _show(cell: str) -> str:
    cell = cell.strip()
    return repr(cell if len(cell) <= 30 else cell[:27] + "...")


def read_matrix(path, delimiter: str = ",", header: bool = False, transpose: bool = False) -> np.ndarray:
    """Numeric CSV, one variable per row unless ``transpose``.  CRLF and LF both accepted."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    rows = []
    width = None
    start = 1 if header else 0
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        cells = next(csv.reader(io.StringIO(line), delimiter=delimiter))
        vals = []
        for col, cell in enumerate(cells, start=1):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(f"not a number: {_show(cell)}", lineno, col) from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ParseError(f"expected {width} fields, found {len(vals)}", lineno, len(vals))
        rows.append(vals)
    if not rows:
        raise ParseError("no data rows", 1, 1)
    a = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        i, j = np.argwhere(~np.isfinite(a))[0]
        raise ParseError("non-finite value", int(i) + start + 1, int(j) + 1)
    return a.T.copy() if transpose else a


def read_spectrum(path) -> Spectrum:
    text = Path(path).read_text(encoding="utf-8").replace(",", " ")
    vals = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for col, tok in enumerate(line.split(), start=1):
            try:
                vals.append(float(tok))
            except ValueError:
                raise ParseError(f"not a number: {_show(tok)}", lineno, col) from None
    if not vals:
        raise ParseError("empty spectrum", 1, 1)
    return normalize_trace(Spectrum.from_values(vals))


def _emit(obj: dict, output) -> None:
    payload = {"schema": SCHEMA, **obj}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("RESISPIKE_SEED")
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"not an integer: {env!r}", "RESISPIKE_SEED") from None


def _data_args(p) -> None:
    p.add_argument("--delimiter", default=",", help="CSV field separator")
    p.add_argument("--header", action="store_true", help="skip the first line of each CSV")
    p.add_argument("--transpose", action="store_true", help="files hold one observation per row")


def cmd_test(args) -> int:
    x = read_matrix(args.x, args.delimiter, args.header, args.transpose)
    y = read_matrix(args.y, args.delimiter, args.header, args.transpose)
    rep = residual_spike_test(
        x, y, alpha=args.alpha, variant=args.variant, center=not args.no_center, strict=not args.lenient
    )
    _emit({"report": rep.to_dict()}, args.output)
    return EXIT_REJECT if rep.reject else EXIT_OK


def _bulk_moments(a, label) -> MomentSet:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        est = estimate_spike(a @ a.T / a.shape[1])
    return MomentSet.from_spectrum(est.bulk, label)


def null_params_from_data(x_path, y_path, args) -> NullLaw:
    """Null law from two data files, with the same orientation and ordering as ``test``."""
    x = read_matrix(x_path, args.delimiter, args.header, args.transpose)
    y = read_matrix(y_path, args.delimiter, args.header, args.transpose)
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X has {x.shape[0]} variables, Y has {y.shape[0]}")
    if not args.no_center:
        x = x - x.mean(axis=1, keepdims=True)
        y = y - y.mean(axis=1, keepdims=True)
    if x.shape[1] < y.shape[1]:
        x, y = y, x
    return null_law_general(_bulk_moments(x, "X"), _bulk_moments(y, "Y"), x.shape[0])


def cmd_null_params(args) -> int:
    if args.mp:
        if args.cx is None or args.cy is None:
            raise ConfigError("--mp needs --cx and --cy", "cx")
        law = null_law_mp(args.cx, args.cy, args.m or 1)
    elif args.x and args.y:
        law = null_params_from_data(args.x, args.y, args)
    elif args.spectrum_x and args.spectrum_y:
        sx, sy = read_spectrum(args.spectrum_x), read_spectrum(args.spectrum_y)
        law = null_law_general(MomentSet.from_spectrum(sx, "X"), MomentSet.from_spectrum(sy, "Y"), args.m or sx.dim)
    else:
        raise ConfigError("give --mp, or --x/--y data files, or --spectrum-x/--spectrum-y", "input")
    curves = {}
    for which in ("max", "min"):
        grid, dens = density_curve(law, which, points=args.points)
        curves[which] = {"x": [sig12(v) for v in grid], "density": [sig12(v) for v in dens]}
    _emit({"law": law_json(law), "density": curves}, args.output)
    return EXIT_OK


def _write_table(rows, args, key: str) -> None:
    if args.format == "csv":
        if args.output:
            write_csv(rows, args.output)
        else:
            w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    else:
        _emit({key: rows}, args.output)


def _study(args, kind: str):
    # --seed overrides every scenario; the environment only fills in missing seeds
    fallback = _seed(args) if args.seed is None and os.environ.get("RESISPIKE_SEED", "").strip() else None
    study = load_study(args.config, seed_override=fallback)
    if study.kind != kind:
        raise ConfigError(f"expected kind={kind!r}, found {study.kind!r}", "study.kind")
    scen = study.scenarios
    if args.seed is not None:
        scen = tuple(replace(s, seed=int(args.seed)) for s in scen)
    if args.replicates is not None:
        scen = tuple(with_replicates(s, args.replicates) for s in scen)
    workers = args.workers if args.workers is not None else study.workers
    return study, scen, workers


def cmd_simulate(args) -> int:
    _, scen, workers = _study(args, "null")
    rows = []
    for s in scen:
        for summ in run_null_study(s, workers=workers):
            rows.append({"scenario": s.name, "family": s.family, "m": s.m, "n_x": s.n_x, "n_y": s.n_y, **summ.row()})
    _write_table(rows, args, "summaries")
    return EXIT_OK


def cmd_power(args) -> int:
    study, scen, workers = _study(args, "power")
    null_reps = args.null_reps if args.null_reps is not None else study.null_reps
    rows = [power_cell(s, null_reps, study.alpha, workers).row() for s in scen]
    _write_table(rows, args, "power")
    return EXIT_OK


def cmd_criterion(args) -> int:
    _, scen, _ = _study(args, "criterion")
    out = []
    for s in scen:
        curve = criterion_curve_for(s)
        d = curve.to_dict()
        out.append({"scenario": s.name, "verdict": d["verdict"], "regime_switch": d["regime_switch"],
                    "points": [[t, mu] for t, mu in zip(d["thetas"], d["mu"])]})
    if args.format == "csv":
        rows = [{"scenario": c["scenario"], "theta": t, "mu": mu} for c in out for t, mu in c["points"]]
        _write_table(rows, args, "curves")
    else:
        _emit({"curves": out}, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="resispike", description="Residual-spike test for equal rank-one covariance perturbations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="run the two-sample test on two CSV data files")
    t.add_argument("x")
    t.add_argument("y")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.BOTH_FILTERED.value)
    t.add_argument("--no-center", action="store_true")
    t.add_argument("--lenient", action="store_true", help="do not fail when a spike is below the detection edge")
    t.add_argument("--output")
    t.add_argument("--seed", type=int)
    _data_args(t)
    t.set_defaults(func=cmd_test)

    n = sub.add_parser("null-params", help="null law parameters and density curves")
    n.add_argument("--mp", action="store_true", help="closed form for Marcenko-Pastur bulks")
    n.add_argument("--cx", type=float)
    n.add_argument("--cy", type=float)
    n.add_argument("--m", type=int, help="dimension used for the standard deviations (default: from the input, 1 with --mp)")
    n.add_argument("--x")
    n.add_argument("--y")
    n.add_argument("--spectrum-x")
    n.add_argument("--spectrum-y")
    n.add_argument("--points", type=int, default=201)
    n.add_argument("--no-center", action="store_true")
    n.add_argument("--output")
    n.add_argument("--seed", type=int)
    _data_args(n)
    n.set_defaults(func=cmd_null_params)

    for name, func, help_ in (
        ("simulate", cmd_simulate, "null-distribution Monte Carlo study from a config file"),
        ("power", cmd_power, "power study from a config file"),
        ("criterion", cmd_criterion, "criterion curves from a config file"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config")
        s.add_argument("--seed", type=int)
        s.add_argument("--replicates", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--format", choices=("json", "csv"), default="json")
        s.add_argument("--output")
        if name == "power":
            s.add_argument("--null-reps", type=int)
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not 0 < getattr(args, "alpha", 0.5) < 1:
        parser.error("--alpha must lie in (0, 1)")
    try:
        return int(args.func(args))
    except ParseError as exc:
        print(f"resispike: parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"resispike: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"resispike: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except (ResiSpikeError, ValueError) as exc:
        print(f"resispike: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
