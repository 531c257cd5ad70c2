"""Command line: ``sheepdog {simulate,batch,certify,validate-gains,export}``.

Exit codes: 0 success, 1 usage or configuration error, 2 a safety verdict
failed (breach, collision, failed certificate or failed gain check).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import config as cfgmod
from .barriers import tune_gains, validate_gains
from .certificate import certify_1v1
from .errors import ConfigError, SheepdogError
from .montecarlo import emit_table, parse_table, run_batch
from .sim import EventKind, run

EXIT_OK, EXIT_USAGE, EXIT_UNSAFE = 0, 1, 2
DEFAULT_SEED = 0

log = logging.getLogger("sheepdog")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def atomic_write(path, text: str):
    """Write to a sibling temporary file, then rename over ``path``."""
    path = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=os.path.dirname(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- trajectory

FLAG_KINDS = (
    EventKind.BREACH,
    EventKind.COLLISION,
    EventKind.QP_INFEASIBLE,
    EventKind.GAIN_CONDITION_VIOLATED,
    EventKind.SINGULAR,
)


def _event_flags(traj, dt):
    """Per-record event flags; an event is attached to the nearest grid sample."""
    flags = np.zeros((len(traj), len(FLAG_KINDS)), dtype=int)
    col = {k: c for c, k in enumerate(FLAG_KINDS)}
    if not len(traj):
        return flags
    for e in traj.events:
        idx = min(int(round(e.time / dt)), len(traj) - 1)
        flags[idx, col[e.kind]] = 1
    return flags


def trajectory_records(traj, dt):
    """Yield one dict per time step with positions, commands, h and flags."""
    flags = _event_flags(traj, dt)
    n = traj.sheep.shape[1]
    m = traj.dogs.shape[1]
    Z = traj.h.shape[2]
    for t in range(len(traj)):
        rec = {"t": float(traj.times[t])}
        for i in range(n):
            rec[f"sheep{i}_x"], rec[f"sheep{i}_y"] = map(float, traj.sheep[t, i])
        for k in range(m):
            rec[f"dog{k}_x"], rec[f"dog{k}_y"] = map(float, traj.dogs[t, k])
        for k in range(m):
            rec[f"u{k}_x"], rec[f"u{k}_y"] = map(float, traj.commands[t, 2 * k : 2 * k + 2])
        for i in range(n):
            for z in range(Z):
                rec[f"h{i}_{z}"] = float(traj.h[t, i, z])
        rec["qp_status"] = traj.qp_status[t].value
        for c, kind in enumerate(FLAG_KINDS):
            rec[kind.value] = int(flags[t, c])
        yield rec


def render_trajectory(traj, dt, fmt: str) -> str:
    records = list(trajectory_records(traj, dt))
    buf = io.StringIO()
    if fmt == "jsonl":
        for rec in records:
            buf.write(json.dumps(rec, allow_nan=True) + "\n")
        return buf.getvalue()
    if fmt != "csv":
        raise ValueError(f"unknown trajectory format {fmt!r}")
    if not records:
        return ""
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(records[0].keys())
    for rec in records:
        w.writerow(_num(v) if isinstance(v, float) else v for v in rec.values())
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def _load(args):
    doc = cfgmod.load(args.config)
    cfgmod.apply_overrides(doc, args.set)
    seed = DEFAULT_SEED if args.seed is None else args.seed
    if args.seed is not None or "seed" not in doc.section("scenario"):
        doc.data.setdefault("scenario", {})["seed"] = seed
    return doc


def cmd_simulate(args) -> int:
    doc = _load(args)
    scenario = cfgmod.scenario(doc)
    traj, out = run(scenario)
    atomic_write(args.out, render_trajectory(traj, scenario.dt, args.format))
    summary = (
        f"success={str(out.success).lower()} min_h={out.min_h:.6g} "
        f"gains=({out.gains.p1:g}, {out.gains.p2:g}) validated={str(out.gains_validated).lower()} "
        f"events={json.dumps(out.events, sort_keys=True)}"
    )
    print(summary)
    return EXIT_OK if out.success else EXIT_UNSAFE


def cmd_batch(args) -> int:
    doc = cfgmod.load(args.config)
    cfgmod.apply_overrides(doc, args.set)
    if args.seed is not None:
        doc.data.setdefault("batch", {})["base_seed"] = args.seed
    elif "base_seed" not in doc.section("batch") and "seed" not in doc.section("scenario"):
        doc.data.setdefault("batch", {})["base_seed"] = DEFAULT_SEED
    if args.workers is not None:
        doc.data.setdefault("batch", {})["workers"] = args.workers
    spec = cfgmod.batch(doc)
    table = run_batch(spec)
    text = emit_table(table, args.format)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _initial_for_report(doc):
    scenario = cfgmod.scenario(doc)
    return scenario, scenario.initial_state()


def cmd_certify(args) -> int:
    doc = _load(args)
    scenario, state = _initial_for_report(doc)
    if state.n != 1 or state.m != 1:
        raise ConfigError(
            f"certify needs exactly one sheep and one dog, got n={state.n}, m={state.m}", key="scenario.n"
        )
    if not 0 <= args.zone < len(scenario.zones):
        raise ConfigError(f"zone index {args.zone} out of range", key="zones")
    bounds = cfgmod.certificate_bounds(doc)
    gains = scenario.gains
    if gains is None:
        gains, _ = tune_gains(scenario.zones, state, scenario.params, scenario.gamma, scenario.gain_ladder)
    report = certify_1v1(state, scenario.zones[args.zone], scenario.params, gains, bounds)
    print(report.to_text())
    return EXIT_OK if report.verdict else EXIT_UNSAFE


def cmd_validate_gains(args) -> int:
    doc = _load(args)
    scenario, state = _initial_for_report(doc)
    if scenario.gains is None:
        gains, report = tune_gains(scenario.zones, state, scenario.params, scenario.gamma, scenario.gain_ladder)
        print(f"tuned on ladder of {len(scenario.gain_ladder)} rungs")
    else:
        report = validate_gains(scenario.gains, scenario.zones, state, scenario.params)
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_UNSAFE


def cmd_export(args) -> int:
    if args.kind == "table":
        src = args.input
        fmt_in = args.input_format or ("json" if src.endswith(".json") else "csv")
        try:
            with open(src, encoding="utf-8") as fh:
                table = parse_table(fh.read(), fmt_in)
        except OSError as exc:
            raise ConfigError(f"cannot read {src}: {exc.strerror}") from None
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{src}: not a {fmt_in} table ({exc})") from None
        text = emit_table(table, args.format or "text")
    else:
        args.config = args.input
        doc = _load(args)
        scenario = cfgmod.scenario(doc)
        traj, _ = run(scenario)
        text = render_trajectory(traj, scenario.dt, args.format or "csv")
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _common(p, config=True):
    if config:
        p.add_argument("config", help="TOML scenario or batch file")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config key (TOML value syntax); repeatable",
    )
    p.add_argument("--seed", type=int, default=None, help=f"random seed (default {DEFAULT_SEED})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sheepdog", description="Herding-based zone defense simulator.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run one scenario and write its trajectory")
    _common(p)
    p.add_argument("--out", default="trajectory.csv", help="trajectory file (default trajectory.csv)")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("batch", help="run a Monte Carlo batch and emit the success table")
    _common(p)
    p.add_argument("--out", default=None, help="table file (default: standard output)")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("certify", help="one-sheep one-dog feasibility certificate")
    _common(p)
    p.add_argument("--zone", type=int, default=0, help="zone index (default 0)")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("validate-gains", help="check p1, p2 at the initial state (or tune them)")
    _common(p)
    p.set_defaults(func=cmd_validate_gains)

    p = sub.add_parser("export", help="convert a table, or write a trajectory regardless of verdict")
    p.add_argument("kind", choices=("table", "trajectory"))
    p.add_argument("input", help="table file (csv/json) or scenario file")
    _common(p, config=False)
    p.add_argument("--input-format", choices=("csv", "json"), default=None)
    p.add_argument("--format", choices=("text", "csv", "json", "jsonl"), default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "export":
        fmt = args.format
        ok = {"table": (None, "text", "csv", "json"), "trajectory": (None, "csv", "jsonl")}[args.kind]
        if fmt not in ok:
            parser.error(f"--format {fmt} is not available for export {args.kind}")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SheepdogError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
