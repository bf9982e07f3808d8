"""Command-line front end.

Exit codes: 0 success (non-elimination included), 1 configuration error,
2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import campaign as camp
from .critical import (
    DomainError, GainCase, RootFindError, critical_rates, feedback_gain_interval, lambda_per_crit,
    mixed_cap, sit_equilibria,
)
from .dynamics import IntegrationError, ScheduleError
from .model import offspring_numbers, wild_equilibrium
from .policies import PolicyError
from .scenario import PRESET_NAME, ConfigError, Scenario, load, preset, with_overrides

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
TRAJECTORY_COLUMNS = ("t", "M", "F", "M_S", "release_applied")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--scenario", type=Path, help="scenario TOML file")
    src.add_argument("--preset", choices=[PRESET_NAME], help=f"built-in scenario (default {PRESET_NAME})")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one scenario value, repeatable")
    common.add_argument("--out", type=Path, help="output directory (default from scenario)")
    common.add_argument("--format", choices=["csv", "json"], help="machine-readable output format")
    common.add_argument("--seedless", action="store_true", help="no-op: nothing in this tool is random")

    parser = _Parser(prog="sitcontrol", description="Sterile-male release strategies for a sex-structured mosquito model")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("equilibria", parents=[common], help="offspring numbers and equilibria")
    sub.add_parser("critical-rates", parents=[common], help="threshold release rates and gain intervals")
    sub.add_parser("simulate", parents=[common], help="run one campaign, write trajectory and metrics")
    sub.add_parser("tables", parents=[common], help="sweep the reference configurations")
    return parser


def _scenario(args) -> Scenario:
    scen = load(args.scenario) if args.scenario else preset(args.preset or PRESET_NAME)
    if args.overrides:
        scen = with_overrides(scen, args.overrides)
    return scen


def _emit(report: dict, fmt, out):
    if fmt == "json":
        out.write(json.dumps(report, indent=2) + "\n")
    elif fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["key", "value"])
        for key, val in _flatten(report):
            w.writerow([key, val])
    else:
        for key, val in _flatten(report):
            out.write(f"{key}: {val}\n")


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list) and obj and isinstance(obj[0], dict):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def cmd_equilibria(scen: Scenario, fmt=None, out=None) -> int:
    out = out or sys.stdout
    params, sterile = scen.params(), scen.sterile_params()
    off = offspring_numbers(params)
    report = {"n_F": off.n_F, "n_M": off.n_M}
    wild = wild_equilibrium(params)
    if wild is None:
        report["notice"] = "population not viable (n_F <= 1): the mosquito-free state is the only equilibrium"
        _emit(report, fmt, out)
        return EXIT_OK
    report["wild_equilibrium"] = {"M_star": wild.M_star, "F_star": wild.F_star, "total": wild.total}
    lam = scen.simulation.release_rate
    eqs = sit_equilibria(params, sterile, lam)
    report["release_rate"] = lam
    report["sit_equilibria"] = [{"M_star": e.M_star, "F_star": e.F_star} for e in eqs]
    if not eqs:
        report["notice"] = "no positive equilibrium: the release rate exceeds the critical rate"
    _emit(report, fmt, out)
    return EXIT_OK


def cmd_critical_rates(scen: Scenario, fmt=None, out=None) -> int:
    out = out or sys.stdout
    params, sterile = scen.params(), scen.sterile_params()
    cr = critical_rates(params, sterile)
    periodic = []
    for tau in scen.simulation.taus:
        lam = lambda_per_crit(params, sterile, tau)
        periodic.append({
            "tau": tau, "lambda_per_crit": lam, "per_release": tau * lam,
            "lambda_bar_case1": mixed_cap(params, sterile, tau, GainCase.CASE1),
            "lambda_bar_case2": mixed_cap(params, sterile, tau, GainCase.CASE2),
        })
    report = {
        "phi_crit": cr.phi_crit,
        "lambda_crit": cr.lambda_crit,
        "alpha": cr.alpha,
        "periodic": periodic,
        "gain_interval_case1": list(feedback_gain_interval(params, GainCase.CASE1)),
        "gain_interval_case2": list(feedback_gain_interval(params, GainCase.CASE2)),
    }
    _emit(report, fmt, out)
    return EXIT_OK


def write_trajectory_csv(traj, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for row in traj.as_array():
        w.writerow([repr(float(v)) for v in row])


def write_trajectory_json(traj, fh) -> None:
    cols = dict(zip(TRAJECTORY_COLUMNS, (traj.t, traj.M, traj.F, traj.M_S, traj.release)))
    json.dump({k: [float(x) for x in v] for k, v in cols.items()}, fh)


def _campaign_config(scen: Scenario) -> camp.CampaignConfig:
    sim = scen.simulation
    return camp.CampaignConfig(scen.params(), scen.sterile_params(), scen.release_policy(), sim.tau,
                               elimination_threshold=sim.threshold, max_horizon=sim.horizon)


def cmd_simulate(scen: Scenario, out_dir: Path, fmt=None, out=None) -> int:
    out = out or sys.stdout
    fmt = fmt or scen.output.format
    traj, metrics = camp.run_campaign(_campaign_config(scen), scen.simulation.integrator())
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{scen.output.trajectory}.{fmt}"
    with open(path, "w", newline="") as fh:
        (write_trajectory_csv if fmt == "csv" else write_trajectory_json)(traj, fh)
    (out_dir / scen.output.metrics).write_text(json.dumps(metrics.to_dict(), indent=2) + "\n")
    _emit(metrics.to_dict(), None, out)
    if not metrics.eliminated:
        out.write("notice: elimination not reached within the horizon\n")
    return EXIT_OK


TABLE_COLUMNS = (
    "cell", "kind", "tau", "p", "k_nF", "cumulative", "ref_cumulative", "dev_cumulative",
    "weeks", "ref_weeks", "dev_weeks", "nonzero", "ref_nonzero", "dev_nonzero", "eliminated", "error",
)


def _fmt_cell(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:+.2%}" if abs(v) < 10 else f"{v:,.0f}"
    return str(v)


def cmd_tables(scen: Scenario, out_dir: Path, fmt=None, out=None) -> int:
    out = out or sys.stdout
    fmt = fmt or scen.output.format
    pol = scen.policy
    results = camp.sweep(
        params=scen.params(), sterile=scen.sterile_params(), integ=scen.simulation.integrator(),
        case=GainCase(pol.case), lambda_bar=pol.lambda_bar,
    )
    rows = [r.row() for r in results]
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{scen.output.table}.{fmt}"
    with open(path, "w", newline="") as fh:
        if fmt == "json":
            json.dump(rows, fh, indent=2)
        else:
            w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    head = f"{'configuration':<40} {'cumulative':>11} {'reference':>11} {'dev':>8} {'weeks':>9} {'nonzero':>9}"
    out.write(head + "\n")
    for r in rows:
        if r["error"]:
            out.write(f"{r['cell']:<40} FAILED: {r['error']}\n")
            continue
        weeks = f"{_fmt_cell(r['weeks'])}/{r['ref_weeks']}"
        nz = f"{r['nonzero']}/{_fmt_cell(r['ref_nonzero'])}"
        out.write(f"{r['cell']:<40} {r['cumulative']:>11,.0f} {r['ref_cumulative']:>11,.0f} "
                  f"{r['dev_cumulative']:>+8.2%} {weeks:>9} {nz:>9}\n")
    failed = sum(1 for r in rows if r["error"])
    if failed:
        out.write(f"{failed} of {len(rows)} cells failed\n")
    return EXIT_NUMERIC if failed == len(rows) else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scen = _scenario(args)
        out_dir = args.out or Path(scen.output.dir)
        if args.command == "equilibria":
            return cmd_equilibria(scen, args.format)
        if args.command == "critical-rates":
            return cmd_critical_rates(scen, args.format)
        if args.command == "simulate":
            return cmd_simulate(scen, out_dir, args.format)
        return cmd_tables(scen, out_dir, args.format)
    except (ConfigError, PolicyError, ScheduleError, DomainError, camp.CampaignError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, RootFindError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
