"""Command-line entry points: simulate, sweep, sis, extract-network."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .engine import run_simulation, simulation_step, inject_shock, Shock, \
    apply_mark_to_market
from .market import build_market
from .output import write_summary, write_timeseries
from .scenario import (Scenario, ScenarioError, load_scenario,
                       set_scenario_value, validate_scenario)
from .sis import (WeightedNetwork, epidemic_threshold, extract_exposure_network,
                  integrate_sis, read_edge_list, write_edge_list)

log = logging.getLogger("repo_contagion")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _configure_logging() -> None:
    level = os.environ.get("SIM_LOG", "warn").lower()
    logging.basicConfig(level=_LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _load(path: str | None) -> Scenario:
    if path is None:
        scenario = Scenario()
        problems = validate_scenario(scenario)
        if problems:
            raise ScenarioError("; ".join(problems))
        return scenario
    return load_scenario(path)


def _cmd_simulate(args) -> int:
    scenario = _load(args.scenario)
    seed = args.seed if args.seed is not None else scenario.run.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_simulation(scenario, seed)
    write_timeseries(result.reports, out / "timeseries.csv")
    write_summary(result.summary, out / "summary.csv")
    log.info("run complete: %d steps, %d bankrupt",
             result.reports[-1].step, result.summary.final_bankrupt)
    return 0


def _cmd_sweep(args) -> int:
    scenario = _load(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = np.linspace(args.start, args.stop, args.steps)
    base_seed = scenario.run.seed
    aggregate_lines = ["param,value,seeds,mean_final_bankrupt,stderr_final_bankrupt,"
                       "mean_peak_haircut,mean_final_leverage"]
    for value in values:
        swept = set_scenario_value(scenario, args.param, float(value))
        finals = []
        peaks = []
        levs = []
        for k in range(args.seeds):
            seed = base_seed + k
            result = run_simulation(swept, seed)
            token = f"{args.param.replace('.', '_')}_{value:.6f}_seed{seed}"
            write_timeseries(result.reports, out / f"run_{token}.csv")
            finals.append(result.reports[-1].n_bankrupt)
            peaks.append(result.summary.peak_haircut)
            levs.append(result.summary.final_avg_leverage)
        mean = sum(finals) / len(finals)
        if len(finals) > 1:
            var = sum((f - mean) ** 2 for f in finals) / (len(finals) - 1)
            stderr = math.sqrt(var / len(finals))
        else:
            stderr = 0.0
        aggregate_lines.append(
            f"{args.param},{value:.6f},{args.seeds},{mean:.6f},{stderr:.6f},"
            f"{sum(peaks) / len(peaks):.6f},{sum(levs) / len(levs):.6f}")
    with open(out / "aggregate.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(aggregate_lines) + "\n")
    return 0


def _cmd_sis(args) -> int:
    network = read_edge_list(args.network)
    if args.threshold:
        lam_c = epidemic_threshold(network)
        print(f"lambda_c = {lam_c:.6f}")
        return 0
    if args.lam is None:
        print("error: --lambda is required unless --threshold is given",
              file=sys.stderr)
        return 1
    rho0 = np.full(network.size, args.rho0)
    times, states = integrate_sis(rho0, args.lam, network, dt=args.dt,
                                  t_end=args.t_end, stride=args.stride)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["t,rho_mean,rho_max"]
    for t, state in zip(times, states):
        lines.append(f"{t:.6f},{state.mean():.6f},{state.max():.6f}")
    with open(out / "sis_trajectory.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    final_lines = ["node,rho"]
    final_lines += [f"{i},{v:.10f}" for i, v in enumerate(states[-1])]
    with open(out / "sis_final_state.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(final_lines) + "\n")
    return 0


def _cmd_extract_network(args) -> int:
    scenario = _load(args.scenario)
    seed = args.seed if args.seed is not None else scenario.run.seed
    market = build_market(scenario, seed)
    shock = Shock(scenario.shock.p, scenario.shock.q, scenario.shock_step)
    for step in range(1, args.at_step + 1):
        if step == shock.at_step and not market.shock_applied:
            inject_shock(market, shock)
            apply_mark_to_market(market, shock)
        simulation_step(market)
    network = extract_exposure_network(market, gross=args.gross)
    write_edge_list(network, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repo-contagion",
        description="Artificial repo market contagion simulator and SIS risk spread")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one market simulation")
    p_sim.add_argument("--scenario", help="scenario file (defaults when omitted)")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=_cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="Monte Carlo parameter sweep")
    p_sweep.add_argument("--scenario", help="scenario file (defaults when omitted)")
    p_sweep.add_argument("--seeds", type=int, required=True)
    p_sweep.add_argument("--param", required=True, help="dotted scenario key")
    p_sweep.add_argument("--from", dest="start", type=float, required=True)
    p_sweep.add_argument("--to", dest="stop", type=float, required=True)
    p_sweep.add_argument("--steps", type=int, required=True)
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_sis = sub.add_parser("sis", help="integrate the SIS model on a network")
    p_sis.add_argument("--network", required=True, help="edge-list file")
    p_sis.add_argument("--lambda", dest="lam", type=float, default=None)
    p_sis.add_argument("--t-end", dest="t_end", type=float, default=50.0)
    p_sis.add_argument("--dt", type=float, default=0.01)
    p_sis.add_argument("--stride", type=int, default=10)
    p_sis.add_argument("--rho0", type=float, default=0.5)
    p_sis.add_argument("--threshold", action="store_true",
                       help="print the epidemic threshold and exit")
    p_sis.add_argument("--out", default="sis_out", help="output directory")
    p_sis.set_defaults(func=_cmd_sis)

    p_net = sub.add_parser("extract-network",
                           help="dump the exposure network of a run")
    p_net.add_argument("--scenario", help="scenario file (defaults when omitted)")
    p_net.add_argument("--seed", type=int, default=None)
    p_net.add_argument("--at-step", dest="at_step", type=int, required=True)
    p_net.add_argument("--gross", action="store_true",
                       help="ignore collateral when netting repo exposure")
    p_net.add_argument("--out", required=True, help="edge-list output file")
    p_net.set_defaults(func=_cmd_extract_network)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
