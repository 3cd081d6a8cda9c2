"""Command-line front end.

Examples::

    attitude-bench --preset case1 --repeats 20 --seed 42 --out case1.csv
    attitude-bench --preset case1 --filters GAME,CGO --decimate 100
    attitude-bench --scenario my_case.yaml --no-bias
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    AllRunsDiverged,
    ErrorTrace,
    ExperimentSpec,
    asymptotic_stat,
    preset_experiments,
    run_monte_carlo,
    standard_filters,
)
from .filters import FilterKind
from .models import ConfigError, load_scenario

PRESETS = ("case1", "case2", "case1_nobias", "case1_game_x30", "case1_riekf_variants")

# ratios reported with this orientation when both labels are present
NAMED_RATIOS = (("USQUE", "GAME"), ("GAMEx30", "USQUE"), ("RIEKF_orig", "RIEKF"))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="attitude-bench", description="Monte-Carlo comparison of quaternion attitude filters.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=PRESETS, help="named experiment (default: case1)")
    src.add_argument("--scenario", type=Path, help="YAML scenario file; runs all five filters")
    p.add_argument("--filters", help="comma-separated filter labels to keep, e.g. GAME,CGO")
    p.add_argument("--repeats", type=int, help="Monte-Carlo runs (default: 20, or 1 for case2)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p.add_argument("--out", type=Path, help="write the RMS traces to this CSV file")
    p.add_argument("--decimate", type=int, default=1, help="keep every k-th CSV row plus the last")
    p.add_argument("--no-bias", action="store_true", help="disable gyro bias in truth and filters")
    p.add_argument("--riekf-variant", choices=("corrected", "original"), help="RIEKF formulation for every RIEKF filter")
    p.add_argument("--game-riccati", choices=("table", "equation"), help="GAME gain propagation form")
    p.add_argument("--window", type=float, default=10.0, help="asymptotic window in seconds (default: 10)")
    p.add_argument("--workers", type=int, default=1, help="worker threads (results do not depend on this)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def build_experiment(args: argparse.Namespace) -> ExperimentSpec:
    if args.repeats is not None and args.repeats < 1:
        raise ConfigError("--repeats must be at least 1")
    if args.decimate < 1:
        raise ConfigError("--decimate must be at least 1")
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")

    if args.scenario is not None:
        try:
            scenario = load_scenario(args.scenario)
        except OSError as exc:
            raise ConfigError(f"cannot read scenario file {args.scenario}: {exc.strerror or exc}") from exc
        spec = ExperimentSpec(scenario, standard_filters(scenario), 20, args.seed)
    else:
        spec = preset_experiments(master_seed=args.seed)[args.preset or "case1"]

    if args.repeats is not None:
        spec = replace(spec, repeats=args.repeats)

    if args.no_bias:
        scenario = spec.scenario.with_bias(False)
        filters = tuple(replace(f, config=replace(f.config, bias_enabled=False)) for f in spec.filters)
        spec = replace(spec, scenario=scenario, filters=filters)

    def _override(kind, **kw):
        return tuple(replace(f, config=replace(f.config, **kw)) if f.kind is kind else f for f in spec.filters)

    if args.riekf_variant:
        spec = replace(spec, filters=_override(FilterKind.RIEKF, riekf_variant=args.riekf_variant))
    if args.game_riccati:
        spec = replace(spec, filters=_override(FilterKind.GAME, game_riccati=args.game_riccati))

    if args.filters:
        labels = [s.strip() for s in args.filters.split(",") if s.strip()]
        if not labels:
            raise ConfigError("--filters needs at least one label")
        try:
            spec = spec.with_filters(labels)
        except ValueError as exc:
            known = ", ".join(f.label for f in spec.filters)
            raise ConfigError(f"{exc} (available: {known})") from exc

    horizon = spec.scenario.horizon
    if not 0 < args.window < horizon:
        raise ConfigError(f"--window must lie in (0, {horizon:g}) s")
    return spec


def trace_rows(trace: ErrorTrace, decimate: int = 1) -> np.ndarray:
    n = trace.time.shape[0]
    keep = np.arange(0, n, decimate)
    if keep[-1] != n - 1:
        keep = np.append(keep, n - 1)
    return keep


def write_csv(trace: ErrorTrace, stream, decimate: int = 1) -> None:
    """RMS traces as CSV with LF line endings and fixed numeric formats."""
    w = csv.writer(stream, lineterminator="\n")
    header = ["t"]
    for label in trace.labels:
        header += [f"{label}_angle_rms_deg", f"{label}_bias_rms_degps"]
    w.writerow(header)
    cols = []
    for label in trace.labels:
        cols += [trace.angle_rms_deg[label], trace.bias_rms_degps[label]]
    for k in trace_rows(trace, decimate):
        w.writerow([f"{trace.time[k]:.6f}"] + [f"{c[k]:.9e}" for c in cols])


def csv_text(trace: ErrorTrace, decimate: int = 1) -> str:
    buf = io.StringIO()
    write_csv(trace, buf, decimate)
    return buf.getvalue()


def summarize(trace: ErrorTrace, window: float = 10.0) -> str:
    """Per-filter asymptotic statistics, then asymptotic angle ratios."""
    ang = asymptotic_stat(trace, window)
    bias = asymptotic_stat(trace, window, metric="bias")
    labels = trace.labels
    width = max(len(s) for s in labels)
    lines = [
        f"{lab:<{width}}  angle {ang[lab]:.4g} deg  bias {bias[lab]:.4g} deg/s  "
        f"diverged {trace.diverged_runs[lab]}/{trace.repeats}  (last {window:g} s)"
        for lab in labels
    ]
    if len(labels) > 1:
        pairs = [(a, b) for a, b in NAMED_RATIOS if a in ang and b in ang]
        done = {frozenset(p) for p in pairs}
        for i, den in enumerate(labels):
            for num in labels[i + 1 :]:
                if frozenset((num, den)) not in done:
                    pairs.append((num, den))
        lines.append("asymptotic angle ratios:")
        lines += [f"  {a}/{b} = {ang[a] / ang[b]:.3g}" for a, b in pairs]
    return "\n".join(lines)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        spec = build_experiment(args)
    except ValueError as exc:  # ConfigError included
        print(f"attitude-bench: error: {exc}", file=sys.stderr)
        return 1

    try:
        trace = run_monte_carlo(spec, workers=args.workers)
    except AllRunsDiverged as exc:
        print(f"attitude-bench: {exc}", file=sys.stderr)
        return 2

    if args.out is not None:
        try:
            with open(args.out, "w", newline="", encoding="ascii") as fh:
                write_csv(trace, fh, args.decimate)
        except OSError as exc:
            print(f"attitude-bench: error: cannot write {args.out}: {exc.strerror or exc}", file=sys.stderr)
            return 1
    print(summarize(trace, args.window))
    return 0


if __name__ == "__main__":
    sys.exit(main())
