"""Command line entry point: analyze, simulate, sweep, plan, verify.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 infeasible plan, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .analytics import analyze
from .config import RunConfig, parse_assignments, parse_config
from .errors import ConfigurationError, DomainError, InfeasiblePlan, NumericalError
from .montecarlo import estimate_probabilities, run_batch
from .stats import SweepRow, required_trials, significance_sweep, z_test

log = logging.getLogger("finite_collapse")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3, 4
OUTPUT_DIR_ENV = "FINITE_COLLAPSE_OUTPUT_DIR"
# one coincidence detection per 10 microseconds, in seconds
COINCIDENCE_PERIOD_S = 10e-6
QUOTED_DURATION_H = 12.0
QUOTED_N = 1.0e9

SWEEP_COLUMNS = ("axis_value", "p_less", "lambda", "lambda_cond", "p_plus_minus", "delta_n",
                 "required_n", "z", "seed", "note")
_ROW_ATTRS = ("axis_value", "p_less", "lambda_uncond", "lambda_cond", "p_plus_minus", "delta_n",
              "required_n", "z", "seed", "note")


class UsageError(Exception):
    pass


def _record(command: str, cfg: RunConfig, **sections) -> dict:
    rec = {
        "artifact": "finite_collapse",
        "version": __version__,
        "command": command,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }
    rec.update(sections)
    return rec


def _flatten(prefix: str, obj, out: dict):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else k, v, out)
    elif isinstance(obj, (list, tuple)):
        out[prefix] = " | ".join(map(str, obj))
    else:
        out[prefix] = obj


def _write(cfg: RunConfig, command: str, payload, stdout) -> None:
    if cfg.output_format == "csv":
        buf = io.StringIO()
        if isinstance(payload, list):
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for row in payload:
                w.writerow(["" if getattr(row, a) is None else getattr(row, a) for a in _ROW_ATTRS])
        else:
            flat: dict = {}
            _flatten("", payload, flat)
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(flat.keys())
            w.writerow(["" if v is None else v for v in flat.values()])
        text = buf.getvalue()
    else:
        if isinstance(payload, list):
            payload = [{c: getattr(r, a) for c, a in zip(SWEEP_COLUMNS, _ROW_ATTRS)} for r in payload]
        text = json.dumps(payload, indent=2) + "\n"

    path = cfg.output_path
    if path is None and os.environ.get(OUTPUT_DIR_ENV):
        path = str(Path(os.environ[OUTPUT_DIR_ENV]) / f"{command}-seed{cfg.seed}.{cfg.output_format}")
    if path is None:
        stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
        log.info("wrote %s", path)


# ---------------------------------------------------------------- commands

def cmd_analyze(cfg: RunConfig, stdout=sys.stdout) -> int:
    report, kin = analyze(cfg.kinematics(), cfg.geometry())
    lam = cfg.lambda_eff(report)
    rec = _record("analyze", cfg, analytics=report.to_dict(), lambda_eff=lam,
                  route1_rate=getattr(kin.family, "rate1", None))
    _write(cfg, "analyze", rec, stdout)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, stdout=sys.stdout) -> int:
    report, kin = analyze(cfg.kinematics(), cfg.geometry())
    table = run_batch(cfg.trial_config(kinematics=kin), partitions=cfg.partitions)
    lam = cfg.lambda_eff(report)
    sig = z_test(table, cfg.alpha2, lam)
    est = estimate_probabilities(table, cfg.confidence_level)
    rec = _record(
        "simulate", cfg,
        counts=table.as_dict(),
        estimates={k: vars(v) for k, v in est.items()},
        analytics=report.to_dict(),
        significance=sig.to_dict(),
    )
    _write(cfg, "simulate", rec, stdout)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, axis: str, grid, monte_carlo: bool = False, stdout=sys.stdout) -> int:
    if not grid:
        raise UsageError("sweep needs a non-empty --grid")
    rows: list[SweepRow] = significance_sweep(cfg, axis, grid, monte_carlo=monte_carlo)
    failures = sum(1 for r in rows if r.note.startswith("error"))
    _write(cfg, "sweep", rows, stdout)
    if failures:
        log.warning("%d sweep point(s) failed; see the note column", failures)
    return EXIT_OK


def plan(cfg: RunConfig, k_sigma: float) -> dict:
    report, _ = analyze(cfg.kinematics(), cfg.geometry())
    lam = cfg.lambda_eff(report)
    out = {
        "k_sigma": k_sigma,
        "alpha2": cfg.alpha2,
        "lambda_eff": lam,
        "lambda_source": cfg.lambda_source,
        "coincidence_period_s": COINCIDENCE_PERIOD_S,
        "quoted_duration_h": QUOTED_DURATION_H,
        "quoted_n": QUOTED_N,
    }
    try:
        n = required_trials(k_sigma, cfg.alpha2, lam)
    except InfeasiblePlan as exc:
        out.update(feasible=False, required_n=None, reason=str(exc))
        return out
    seconds = n * COINCIDENCE_PERIOD_S
    out.update(
        feasible=True,
        required_n=n,
        duration_s=seconds,
        duration_h=seconds / 3600.0,
        note=(f"{n} trials at one coincidence per {COINCIDENCE_PERIOD_S * 1e6:g} us take "
              f"{seconds / 3600.0:.3g} h; the quoted figure is {QUOTED_DURATION_H:g} h for "
              f"N ~ {QUOTED_N:.0e}. Both are reported, neither is adjusted."),
    )
    return out


def cmd_plan(cfg: RunConfig, k_sigma: float = 6.0, stdout=sys.stdout) -> int:
    result = plan(cfg, k_sigma)
    _write(cfg, "plan", _record("plan", cfg, plan=result), stdout)
    return EXIT_OK if result["feasible"] else EXIT_INFEASIBLE


def cmd_verify(cfg: RunConfig, tolerance_scale: float = 1.0, stdout=sys.stdout) -> int:
    from .verify import run_checks

    checks = run_checks(cfg, tolerance_scale=tolerance_scale)
    failed = [c.name for c in checks if not c.passed]
    rec = _record("verify", cfg, checks=[c.to_dict() for c in checks], failed=failed, passed=not failed)
    _write(cfg, "verify", rec, stdout)
    for c in checks:
        log.info("%-22s %s", c.name, "PASS" if c.passed else "FAIL")
    return EXIT_OK if not failed else EXIT_VERIFY


# -------------------------------------------------------------------- main

def _parse_grid(text: str) -> list[float]:
    from .config import parse_time

    items = [s for s in (p.strip() for p in text.split(",")) if s]
    return [parse_time(s) for s in items]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="finite-collapse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", type=Path, help="flat key = value configuration file")
    common.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("-o", "--output", help="output path (overrides output_path)")
    common.add_argument("-f", "--format", choices=("json", "csv"), help="output format")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="closed-form and quadrature analytics")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo batch plus z-test")
    sw = sub.add_parser("sweep", parents=[common], help="one-axis parameter sweep")
    sw.add_argument("--axis", required=True, choices=("delta_t", "alpha2", "T", "lambda_rate"))
    sw.add_argument("--grid", required=True, help="comma separated values (time suffixes allowed)")
    sw.add_argument("--mc", action="store_true", help="also run a Monte Carlo batch per point")
    pl = sub.add_parser("plan", parents=[common], help="required trials and lab duration")
    pl.add_argument("-k", "--k-sigma", type=float, default=6.0)
    ve = sub.add_parser("verify", parents=[common], help="run all cross-checks")
    ve.add_argument("--tolerance-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    return p


def load_config(args) -> RunConfig:
    base = RunConfig()
    if args.config is not None:
        base = parse_config(args.config.read_text(encoding="utf-8"))
    pairs = []
    for item in args.set:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        pairs.append((0, k.strip(), v))
    if args.output is not None:
        pairs.append((0, "output_path", args.output))
    if args.format is not None:
        pairs.append((0, "output_format", args.format))
    return parse_assignments(pairs, base) if pairs else base


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "analyze":
            return cmd_analyze(cfg, stdout)
        if args.command == "simulate":
            return cmd_simulate(cfg, stdout)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.axis, _parse_grid(args.grid), args.mc, stdout)
        if args.command == "plan":
            return cmd_plan(cfg, args.k_sigma, stdout)
        return cmd_verify(cfg, args.tolerance_scale, stdout)
    except (UsageError, ConfigurationError, DomainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
