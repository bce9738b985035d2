"""Command-line front end.

Subcommands: solve, simulate, sweep, policy-table, validate. File outputs are
written atomically and are byte-stable across runs and worker counts; paths
given via --out also get a rendered PNG figure next to them.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    ConvergenceError,
    ModelMismatchError,
)
from .mdp import _AVAIL_NAMES, build_mdp, enumerate_actions, enumerate_states
from .model import (
    ExponentialLink,
    OnOffLink,
    SystemConfig,
    block_packet_count,
    parse_rate,
)
from .sim import simulate
from .solver import (
    policy_from_file,
    relative_value_iteration,
    round_gain,
    solve_result_to_jsonable,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOCONV = 3
EXIT_CONTRACT = 4

SWEEP_DEFAULTS = {
    "onoff.p_out": (0.0, 0.5, 0.025),
    "exponential.capacity_bps": (24e6, 72e6, 2.4e6),
}
SWEEP_HEADER = "parameter,gain,sim_estimate,ci_low,ci_high"


def _write_text(path: str, text: str) -> None:
    """Atomic write: no partial file is ever visible."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".part-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _figure_path(out: str) -> str:
    root, ext = os.path.splitext(out)
    return out + ".png" if ext == ".png" else root + ".png"


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _load_config(args) -> SystemConfig:
    return SystemConfig.from_file(args.config)


def _policy_for(args, config: SystemConfig):
    """Policy from --policy when given, else the freshly solved optimum."""
    if args.policy:
        return policy_from_file(args.policy, config), None
    result = relative_value_iteration(build_mdp(config))
    return result.policy, result.gain


def cmd_solve(args) -> int:
    config = _load_config(args)
    result = relative_value_iteration(build_mdp(config))
    text = _json_text(solve_result_to_jsonable(result, config))
    summary = (f"gain {result.gain:.6f} iterations {result.iterations} "
               f"residual {result.span_residual:.3e}")
    if args.out:
        _write_text(args.out, text)
        if len(config.links) <= 2:
            from . import plots
            plots.policy_figure(_figure_path(args.out), result.policy, config,
                                title=f"optimal policy, gain {result.gain:.6f}")
        print(summary)
    else:
        sys.stdout.write(text)
        print(summary, file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    config = _load_config(args)
    k = block_packet_count(config)
    n_states = len(enumerate_states(config))
    n_actions = len(enumerate_actions(config))
    print("ok")
    print(f"fps {_fmt(config.fps)}  slot {1000.0 / config.fps:.4f} ms  "
          f"deadline {_fmt(config.deadline_slots)} slots")
    print(f"K {k}  q_max {config.q_max}  n_cap {config.n_cap}  "
          f"states {n_states}  actions {n_actions}  allow_drop {config.allow_drop}")
    for i, link in enumerate(config.links):
        if isinstance(link, OnOffLink):
            print(f"link {i + 1}: onoff p_out {_fmt(link.p_out)} "
                  f"mean_outage {_fmt(link.mean_outage_slots)} slots")
        else:
            mu = link.service_rate(config.packet_bits) * config.slot_seconds
            print(f"link {i + 1}: exponential {_fmt(link.capacity_bps)} b/s "
                  f"({_fmt(mu)} packets/slot)")
    return EXIT_OK


def _histogram_csv(report) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["state", "count"])
    for key, count in report.state_visit_histogram.items():
        writer.writerow([key, count])
    return buffer.getvalue()


def cmd_simulate(args) -> int:
    config = _load_config(args)
    policy, analytic = _policy_for(args, config)
    report = simulate(config, policy, args.blocks, args.seed)
    text = _histogram_csv(report) if args.format == "csv" else _json_text(report.to_jsonable())
    summary = (f"estimate {report.estimate:.6f} "
               f"ci99 [{report.ci_low:.6f}, {report.ci_high:.6f}]")
    if args.out:
        _write_text(args.out, text)
        from . import plots
        plots.report_figure(_figure_path(args.out), report, analytic_gain=analytic)
        print(summary)
    else:
        sys.stdout.write(text)
        print(summary, file=sys.stderr)
    return EXIT_OK


def _parse_sweep_value(param: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        pass
    if param == "exponential.capacity_bps":
        return parse_rate(text)
    raise ConfigError("--from/--to/--step", f"not a number: {text!r}")


def _sweep_values(args):
    lo, hi, step = SWEEP_DEFAULTS[args.param]
    if args.sweep_from is not None:
        lo = _parse_sweep_value(args.param, args.sweep_from)
    if args.sweep_to is not None:
        hi = _parse_sweep_value(args.param, args.sweep_to)
    if args.sweep_step is not None:
        step = _parse_sweep_value(args.param, args.sweep_step)
    if step <= 0:
        raise ConfigError("--step", f"must be > 0, got {step}")
    if lo > hi:
        raise ConfigError("--from", f"must be <= --to, got {lo} > {hi}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(count)]


def _apply_param(config: SystemConfig, param: str, value: float) -> SystemConfig:
    if param == "onoff.p_out":
        if not any(isinstance(link, OnOffLink) for link in config.links):
            raise ConfigError("--param", "config has no on/off links to sweep")
        links = tuple(OnOffLink(value, link.mean_outage_slots)
                      if isinstance(link, OnOffLink) else link
                      for link in config.links)
    else:
        if not any(isinstance(link, ExponentialLink) for link in config.links):
            raise ConfigError("--param", "config has no exponential links to sweep")
        links = tuple(ExponentialLink(value)
                      if isinstance(link, ExponentialLink) else link
                      for link in config.links)
    return replace(config, links=links)


def cmd_sweep(args) -> int:
    config = _load_config(args)
    values = _sweep_values(args)
    if args.blocks is not None and args.seed is None:
        raise ConfigError("--seed", "required when --blocks requests simulation")

    def point(item):
        index, value = item
        row = {"parameter": value, "gain": None, "sim": None}
        point_config = _apply_param(config, args.param, value)
        try:
            result = relative_value_iteration(build_mdp(point_config))
        except ConvergenceError:
            return row
        row["gain"] = result.gain
        if args.blocks is not None:
            report = simulate(point_config, result.policy, args.blocks, args.seed + index)
            row["sim"] = (report.estimate, report.ci_low, report.ci_high)
        return row

    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(point, enumerate(values)))

    lines = [SWEEP_HEADER]
    for row in rows:
        if row["gain"] is None:
            lines.append(f"{_fmt(row['parameter'])},error,,,")
        elif row["sim"] is None:
            lines.append(f"{_fmt(row['parameter'])},{_fmt(round_gain(row['gain']))},,,")
        else:
            est, low, high = row["sim"]
            lines.append(f"{_fmt(row['parameter'])},{_fmt(round_gain(row['gain']))},"
                         f"{_fmt(est)},{_fmt(low)},{_fmt(high)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        _write_text(args.out, text)
        from . import plots
        label = ("outage probability" if args.param == "onoff.p_out"
                 else "link capacity [bits/s]")
        gains = [row["gain"] if row["gain"] is not None else np.nan for row in rows]
        sims = [row["sim"][0] if row["sim"] else np.nan for row in rows]
        lows = [row["sim"][1] if row["sim"] else np.nan for row in rows]
        highs = [row["sim"][2] if row["sim"] else np.nan for row in rows]
        plots.sweep_figure(_figure_path(args.out), label, values, gains,
                           sim_estimates=sims, ci_lows=lows, ci_highs=highs)
        print(f"wrote {args.out} ({len(rows)} points)")
    else:
        sys.stdout.write(text)
    if any(row["gain"] is None for row in rows):
        print("error: some sweep points did not converge", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


def _policy_cells(policy, config: SystemConfig):
    """(availability, queues, fractions, redundancy) per state, in state order."""
    k = block_packet_count(config)
    cells = []
    for index, state in enumerate(enumerate_states(config)):
        action = policy.action(index)
        if action.drop:
            fractions, redundancy = None, None
        else:
            fractions = tuple(n / k for n in action.counts)
            redundancy = action.total / k - 1.0
        cells.append((state, fractions, redundancy))
    return cells


def _policy_table_csv(policy, config: SystemConfig) -> str:
    onoff_idx = [i for i, link in enumerate(config.links) if isinstance(link, OnOffLink)]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([f"link{i + 1}_state" for i in onoff_idx]
                    + [f"q{i + 1}" for i in range(len(config.links))]
                    + [f"frac{i + 1}" for i in range(len(config.links))]
                    + ["redundancy"])
    for state, fractions, redundancy in _policy_cells(policy, config):
        flags = [_AVAIL_NAMES[f] for f in state.availability]
        if fractions is None:
            writer.writerow(flags + list(state.queues)
                            + ["drop"] * len(config.links) + [""])
        else:
            writer.writerow(flags + list(state.queues)
                            + [f"{f:.1f}" for f in fractions] + [f"{redundancy:.1f}"])
    return buffer.getvalue()


def _policy_table_text(policy, config: SystemConfig) -> str:
    if len(config.links) > 2:
        raise ContractError(
            "aligned policy grids support one or two links; use --format csv "
            "for a flat dump")
    q_levels = config.q_max + 1
    two = len(config.links) == 2
    onoff_idx = [i for i, link in enumerate(config.links) if isinstance(link, OnOffLink)]
    by_state = {}
    for state, fractions, redundancy in _policy_cells(policy, config):
        by_state[(state.queues, state.availability)] = (fractions, redundancy)

    def grid_lines(title, cell):
        cols = range(q_levels) if two else (None,)
        body = [[cell((q0, q1) if two else (q0,)) for q1 in cols] for q0 in range(q_levels)]
        width = max(len(text) for row in body for text in row)
        width = max(width, len(f"q2={q_levels - 1}"))
        lines = [title]
        if two:
            lines.append(" " * 7 + " ".join(f"q2={q1}".rjust(width) for q1 in range(q_levels)))
        for q0, row in enumerate(body):
            lines.append(f"q1={q0}".ljust(7) + " ".join(text.rjust(width) for text in row))
        return lines

    lines = []
    for combo in itertools.product((0, 1), repeat=len(onoff_idx)):
        if combo:
            lines.append(", ".join(f"link {onoff_idx[j] + 1} {_AVAIL_NAMES[flag]}"
                                   for j, flag in enumerate(combo)) + ":")

        def frac_cell(queues, _combo=combo):
            fractions, _ = by_state[(queues, _combo)]
            if fractions is None:
                return "drop"
            return "\\".join(f"{f:.1f}" for f in fractions)

        def red_cell(queues, _combo=combo):
            _, redundancy = by_state[(queues, _combo)]
            return "drop" if redundancy is None else f"{redundancy:.1f}"

        lines.extend(grid_lines("scheduled fraction per link (link1\\link2)"
                                if two else "scheduled fraction", frac_cell))
        lines.extend(grid_lines("redundancy", red_cell))
        lines.append("")
    return "\n".join(lines).rstrip("\n") + "\n"


def cmd_policy_table(args) -> int:
    config = _load_config(args)
    policy, _ = _policy_for(args, config)
    text = (_policy_table_csv(policy, config) if args.format == "csv"
            else _policy_table_text(policy, config))
    if args.out:
        _write_text(args.out, text)
        if len(config.links) <= 2:
            from . import plots
            plots.policy_figure(_figure_path(args.out), policy, config)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parlink",
        description="Optimal coding and scheduling of periodic blocks over "
                    "parallel unreliable links: solve, simulate, sweep, render.")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="compute the optimal policy and gain")
    solve.add_argument("--config", required=True, help="config JSON path")
    solve.add_argument("--out", help="write policy JSON here (plus a PNG)")
    solve.set_defaults(func=cmd_solve)

    sim = sub.add_parser("simulate", help="Monte Carlo check of a policy")
    sim.add_argument("--config", required=True, help="config JSON path")
    sim.add_argument("--policy", help="policy JSON (default: solve first)")
    sim.add_argument("--blocks", type=int, default=10**6, help="number of blocks")
    sim.add_argument("--seed", type=int, required=True, help="random seed")
    sim.add_argument("--format", choices=("json", "csv"), default="json",
                     help="json report or visit-histogram csv")
    sim.add_argument("--out", help="write the report here (plus a PNG)")
    sim.set_defaults(func=cmd_simulate)

    sweep = sub.add_parser("sweep", help="gain across a parameter grid, as CSV")
    sweep.add_argument("--config", required=True, help="config JSON path")
    sweep.add_argument("--param", required=True,
                       choices=("onoff.p_out", "exponential.capacity_bps"),
                       help="parameter applied to every link of that family")
    sweep.add_argument("--from", dest="sweep_from", help="grid start (default per param)")
    sweep.add_argument("--to", dest="sweep_to", help="grid end (default per param)")
    sweep.add_argument("--step", dest="sweep_step", help="grid step (default per param)")
    sweep.add_argument("--blocks", type=int, help="also simulate each point")
    sweep.add_argument("--seed", type=int, help="base seed for per-point simulation")
    sweep.add_argument("--workers", type=int, default=1, help="parallel solvers")
    sweep.add_argument("--out", help="write the CSV here (plus a PNG)")
    sweep.set_defaults(func=cmd_sweep)

    table = sub.add_parser("policy-table", help="render a policy as grids")
    table.add_argument("--config", required=True, help="config JSON path")
    table.add_argument("--policy", help="policy JSON (default: solve first)")
    table.add_argument("--format", choices=("csv", "text"), default="text")
    table.add_argument("--out", help="write the table here (plus a PNG)")
    table.set_defaults(func=cmd_policy_table)

    validate = sub.add_parser("validate", help="check a config and summarize it")
    validate.add_argument("--config", required=True, help="config JSON path")
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ModelMismatchError, CapacityError, FileNotFoundError,
            IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
