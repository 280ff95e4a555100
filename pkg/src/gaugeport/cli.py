"""Batch command-line surface.

Subcommands: simulate, gauge, riskfree, price, discount, sensitivity.
Every run embeds the config hash and seed in its report.  Exit codes:
0 success, 1 usage error, 2 computation error.  GAUGEPORT_THREADS overrides
the simulation worker count; nothing else reads the environment.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import discounting, io, pricer, riskfree, sim
from .catalog import build_process
from .grid import TimeGrid

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_COMPUTE = 2


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("GAUGEPORT_THREADS", "1")))
    except ValueError:
        return 1


def _sim_inputs(config: io.RunConfig):
    section = config.section("simulate")
    steps = max(1, round(float(section["horizon"]) / float(section["dt"])))
    grid = TimeGrid(t0=0.0, dt=float(section["dt"]), steps=steps)
    spec = build_process(
        section["process"], section.get("process_params", {}),
        int(section["n_assets"]), section["noise"],
    )
    env = sim.EnvironmentSeries.constant(grid, float(section.get("xi", 0.0)))
    return section, grid, spec, env


def cmd_simulate(args, config: io.RunConfig) -> dict:
    section, grid, spec, env = _sim_inputs(config)
    seed = int(section["seed"])
    paths = sim.simulate(spec, env, grid, int(section["n_paths"]), seed, n_jobs=_thread_count())
    terminal = paths.paths[:, -1, :]
    body = {
        "n_paths": paths.n_paths,
        "n_assets": paths.n_assets,
        "steps": grid.steps,
        "dt": grid.dt,
        "terminal_mean": terminal.mean(axis=0),
        "terminal_std": terminal.std(axis=0),
        "log_return_mean": np.log(terminal / paths.paths[:, 0, :]).mean(axis=0),
    }
    return {"seed": seed, "body": body}


def cmd_gauge(args, config: io.RunConfig) -> dict:
    if not args.panel:
        raise UsageError("gauge requires --panel")
    panel = io.ingest(args.panel, normalize=args.normalize)
    weights = riskfree.WeightVector.equal(panel.n_assets)
    result = riskfree.extract_market_gauge(panel, weights)
    diag = np.einsum("kii->ki", result.b_n.bfield)
    body = {
        "asset_ids": list(panel.asset_ids or ()),
        "a_field": result.a.a,
        "b_diag": diag,
        "portfolio_value": result.portfolio_value_series,
    }
    return {"seed": None, "body": body}


def cmd_riskfree(args, config: io.RunConfig) -> dict:
    section, grid, spec, env = _sim_inputs(config)
    rf = config.section("riskfree")
    seed = int(section["seed"])
    sizes = [int(n) for n in rf["sizes"]]
    big_spec = build_process(
        section["process"], section.get("process_params", {}), max(sizes), section["noise"]
    )
    study = riskfree.convergence_study(big_spec, env, grid, sizes, int(rf["n_paths"]), seed)
    rng = np.random.Generator(np.random.Philox(key=[seed, 1]))
    w_b = rng.uniform(0.5, 1.5, max(sizes))
    w_b /= w_b.sum()
    etemadi = riskfree.etemadi_check(
        big_spec, env, grid,
        riskfree.WeightVector.equal(max(sizes)), riskfree.WeightVector(w_b),
        int(rf["n_paths"]), seed, sizes=sizes,
    )
    body = {
        "sizes": list(study.sizes),
        "sigma_hats": study.sigma_hats,
        "slope": study.slope,
        "analytic_slope": study.analytic_slope,
        "etemadi_sizes": list(etemadi.sizes),
        "etemadi_divergences": etemadi.divergences,
    }
    return {"seed": seed, "body": body}


def cmd_price(args, config: io.RunConfig) -> dict:
    pde = config.section("pde")
    problem = pricer.vanilla_problem(
        pde["payoff"], float(pde["strike"]), float(pde["sigma"]), float(pde["tau"]),
        a_field=float(pde["a"]), b_scalar=float(pde["b"]),
        n_s=int(pde["n_s"]), n_t=int(pde["n_t"]),
    )
    surface = pricer.solve_gauge_bs(problem)
    strike = float(pde["strike"])
    body = {
        "at_the_money_value": surface.value_at(strike, 0),
        "at_the_money_delta": surface.delta_at(strike, 0),
        "s_slice": surface.s_grid[:: max(1, surface.s_grid.size // 32)],
        "value_slice": surface.values[0][:: max(1, surface.s_grid.size // 32)],
    }
    return {"seed": None, "body": body}


def cmd_discount(args, config: io.RunConfig) -> dict:
    if not args.panel:
        raise UsageError("discount requires --panel")
    disc = config.section("discount")
    panel = io.ingest(args.panel, normalize=args.normalize)
    report = discounting.empirical_pipeline(panel, window=int(disc["window"]))
    series = discounting.cash_value_series(panel)
    body = {
        "asset_ids": list(report.asset_ids),
        "final_values": report.final_values,
        "discount_factors": report.discount_factors,
        "metadata": report.metadata,
        "cash_series_label": series.label,
        "cash_series_times": series.times,
        "cash_series_values": series.values,
        "table": report.as_table(),
    }
    return {"seed": None, "body": body}


def cmd_sensitivity(args, config: io.RunConfig) -> dict:
    sens = config.section("sensitivity")
    n = int(sens["n_assets"])
    seed = int(sens["seed"])
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    gradients = rng.standard_normal((n, int(sens["n_factors"])))
    problem = riskfree.SensitivityProblem(gradients, cap=float(sens["cap_c"]) / n)
    result = riskfree.sensitivity_neutral_weights(problem)
    body = {
        "weights": result.weights.w,
        "residual": result.residual,
        "exact": result.exact,
        "equal_weight_residual": float(np.linalg.norm(gradients.T @ np.full(n, 1.0 / n))),
    }
    return {"seed": seed, "body": body}


class UsageError(ValueError):
    pass


_COMMANDS = {
    "simulate": cmd_simulate,
    "gauge": cmd_gauge,
    "riskfree": cmd_riskfree,
    "price": cmd_price,
    "discount": cmd_discount,
    "sensitivity": cmd_sensitivity,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaugeport", description="Gauge-invariant portfolio analytics"
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="YAML run configuration", default=None)
    parser.add_argument("--panel", help="PanelFile CSV input", default=None)
    parser.add_argument("--out", help="report output path", default="report.yaml")
    parser.add_argument(
        "--normalize", action="store_true",
        help="rescale ingested prices to 1 at inception",
    )
    parser.add_argument(
        "--no-timestamp", action="store_true",
        help="canonical report form for determinism comparisons",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        config = io.load_config(args.config)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        outcome = _COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    io.write_report(
        args.out, args.command, outcome["body"], config,
        seed=outcome["seed"], timestamp=not args.no_timestamp,
    )
    print(f"wrote {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
