"""Command-line driver: capital tables, pooling sweeps, calibration.

Subcommands:
  solve      per-capita capital for each strategy / risk measure / mode
  sweep      per-capita capital against pool size, with the
             systematic-risk-only (deterministic) reference
  calibrate  fit mortality factors and state dynamics from CSV data and
             write a parameter file

Configuration comes from an optional JSON file (--config); flags win over
file values.  Exit codes: 0 success, 1 numerical failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .calibration import (
    VarFitSpec,
    build_state_series,
    fit_factor_series,
    fit_var,
    load_market_csv,
    load_mortality_csv,
    load_parameters,
    save_parameters,
)
from .mortality import EstimationError, PiecewiseLinearBasis
from .parameters import DEFAULT_X0, default_economy_params
from .plan import STRATEGIES, homogeneous_plan, make_nonhomogeneous_plan, simulate_claims
from .scenarios import generate_scenarios
from .valuation import (
    RiskSpec,
    best_estimate_value,
    risk_neutral_value,
    solve_min_capital,
)

RESULT_COLUMNS = (
    "poolSize",
    "strategy",
    "riskKind",
    "gamma",
    "mode",
    "w0PerCapita",
    "stderr",
    "iterations",
)

DEFAULT_POOL_GRID = (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000)
FULL_SCENARIOS = 500_000

CONFIG_DEFAULTS = {
    "scenarios": 20000,
    "horizon": 35,
    "seed": 20070801,
    "gamma": 0.05,
    "pool": 100,
    "nonhomogeneous": False,
    "cohorts": None,
    "strategies": ["safe", "risky"],
    "risks": ["entropic", "neutral", "best-estimate"],
    "modes": ["deterministic", "binomial"],
    "pool_grid": list(DEFAULT_POOL_GRID),
    "sampling": "lhs",
    "tol": 1e-4,
    "workers": 1,
    "self_test": False,
    "params_file": None,
    "x0": None,
    "cpi_drift": None,
    "out": None,
}


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_csv(path, rows) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(",".join(RESULT_COLUMNS) + "\n")
        for row in rows:
            handle.write(",".join(_fmt(row[col]) for col in RESULT_COLUMNS) + "\n")


def _load_config(path, command_defaults: dict | None = None) -> dict:
    config = dict(CONFIG_DEFAULTS)
    if command_defaults:
        config.update(command_defaults)
    if path is not None:
        with open(path) as handle:
            try:
                user = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ValueError(f"config: invalid JSON: {exc}") from None
        unknown = set(user) - set(CONFIG_DEFAULTS)
        if unknown:
            raise ValueError(f"config: unknown keys {sorted(unknown)}")
        config.update(user)
    return config


def _apply_flags(config: dict, args: argparse.Namespace) -> dict:
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if getattr(args, "scenarios", None) is not None:
        config["scenarios"] = args.scenarios
    if getattr(args, "full", False):
        config["scenarios"] = FULL_SCENARIOS
    if getattr(args, "gamma", None) is not None:
        config["gamma"] = args.gamma
    if getattr(args, "mode", None) is not None:
        config["modes"] = ["binomial", "deterministic"] if args.mode == "both" else [args.mode]
    if getattr(args, "strategy", None) is not None:
        config["strategies"] = ["safe", "risky"] if args.strategy == "both" else [args.strategy]
    if getattr(args, "risk", None) is not None:
        config["risks"] = (
            ["entropic", "neutral", "best-estimate"] if args.risk == "all" else [args.risk]
        )
    if getattr(args, "pool_grid", None) is not None:
        try:
            config["pool_grid"] = [int(x) for x in args.pool_grid.split(",") if x.strip()]
        except ValueError:
            raise ValueError(f"--pool-grid: expected comma-separated integers, got {args.pool_grid!r}")
    if getattr(args, "pool", None) is not None:
        config["pool"] = args.pool
    if getattr(args, "nonhomogeneous", False):
        config["nonhomogeneous"] = True
    if getattr(args, "out", None) is not None:
        config["out"] = args.out
    if getattr(args, "workers", None) is not None:
        config["workers"] = args.workers
    if getattr(args, "tol", None) is not None:
        config["tol"] = args.tol
    if getattr(args, "self_test", False):
        config["self_test"] = True
    if getattr(args, "params_file", None) is not None:
        config["params_file"] = args.params_file
    return config


def _validate_config(config: dict) -> None:
    if config["scenarios"] < 1:
        raise ValueError("config.scenarios: must be >= 1")
    if config["horizon"] < 1:
        raise ValueError("config.horizon: must be >= 1")
    if config["pool"] < 1:
        raise ValueError("config.pool: must be >= 1")
    grid = config["pool_grid"]
    if not grid or any(n <= 0 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("config.pool_grid: must be strictly increasing positive integers")
    for name in config["strategies"]:
        if name not in STRATEGIES:
            raise ValueError(f"config.strategies: unknown strategy {name!r}")
    for kind in config["risks"]:
        if kind not in ("entropic", "neutral", "best-estimate"):
            raise ValueError(f"config.risks: unknown risk kind {kind!r}")
    for mode in config["modes"]:
        if mode not in ("binomial", "deterministic"):
            raise ValueError(f"config.modes: unknown mode {mode!r}")
    if not config["gamma"] > 0:
        raise ValueError("config.gamma: must be positive")


def _economy(config: dict):
    if config["params_file"] is not None:
        params, x0, basis = load_parameters(config["params_file"])
    else:
        params = default_economy_params(cpi_drift=config["cpi_drift"])
        x0 = DEFAULT_X0.copy()
        basis = PiecewiseLinearBasis()
    if config["x0"] is not None:
        x0 = np.asarray(config["x0"], dtype=float)
    return params, x0, basis


def _make_plan(config: dict, total: int, mode: str):
    if config["nonhomogeneous"]:
        return make_nonhomogeneous_plan(total, config["horizon"], mode)
    return homogeneous_plan(total, config["horizon"], mode)


def _solve_rows(config, sset, plan, mode, pool_label):
    """Result rows for one plan/mode over the configured strategies and risks."""
    claims = simulate_claims(plan, sset, seed=config["seed"])
    members = plan.members
    rows = []
    for name in config["strategies"]:
        returns = sset.portfolio_returns(STRATEGIES[name].weights)
        for kind in config["risks"]:
            row = {
                "poolSize": pool_label,
                "strategy": name,
                "riskKind": kind,
                "gamma": config["gamma"] if kind == "entropic" else "",
                "mode": mode,
            }
            if kind == "entropic":
                res = solve_min_capital(
                    returns, claims, RiskSpec("entropic", config["gamma"]),
                    tol=config["tol"], members=members,
                )
                row.update(w0PerCapita=res.w0_per_capita, stderr=res.stderr,
                           iterations=res.iterations)
            elif kind == "neutral":
                value, se = risk_neutral_value(returns, claims / members, with_stderr=True)
                row.update(w0PerCapita=value, stderr=se, iterations=0)
                if config["self_test"]:
                    res = solve_min_capital(
                        returns, claims, RiskSpec("neutral"),
                        tol=max(1e-12, 1e-7 * abs(value)), members=members,
                    )
                    gap = abs(res.w0_per_capita - value) / max(abs(value), 1e-12)
                    if gap > 1e-6:
                        raise ArithmeticError(
                            f"self-test: risk-neutral solver disagrees with the closed "
                            f"form by {gap:.2e} relative ({name}, {mode})"
                        )
            else:
                value, se = best_estimate_value(returns, claims / members, with_stderr=True)
                row.update(w0PerCapita=value, stderr=se, iterations=0)
            rows.append(row)
    return rows


def cmd_solve(config: dict) -> int:
    _validate_config(config)
    params, x0, basis = _economy(config)
    ages = (65,)
    sset = generate_scenarios(
        params, x0, config["scenarios"], config["horizon"], config["seed"],
        mode=config["sampling"], basis=basis, ages=ages, workers=config["workers"],
    )
    rows = []
    for mode in config["modes"]:
        plan = _make_plan(config, config["pool"], mode)
        rows.extend(_solve_rows(config, sset, plan, mode, plan.members))
    out = config["out"] or "solve.csv"
    _write_csv(out, rows)
    print(f"wrote {len(rows)} rows to {out}")
    for row in rows:
        print(
            f"  {row['mode']:<13} {row['strategy']:<5} {row['riskKind']:<13} "
            f"w0/capita = {row['w0PerCapita']:.4f}"
        )
    return 0


def cmd_sweep(config: dict) -> int:
    _validate_config(config)
    params, x0, basis = _economy(config)
    sset = generate_scenarios(
        params, x0, config["scenarios"], config["horizon"], config["seed"],
        mode=config["sampling"], basis=basis, ages=(65,), workers=config["workers"],
    )
    rows = []
    # systematic-risk-only reference: per-capita value independent of pool size
    ref_plan = _make_plan(config, max(config["pool_grid"]), "deterministic")
    rows.extend(_solve_rows(config, sset, ref_plan, "deterministic", 0))
    for pool in config["pool_grid"]:
        plan = _make_plan(config, pool, "binomial")
        rows.extend(_solve_rows(config, sset, plan, "binomial", pool))
    out = config["out"] or "sweep.csv"
    _write_csv(out, rows)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_calibrate(args) -> int:
    mortality = load_mortality_csv(args.mortality_csv)
    market = load_market_csv(args.market_csv)
    basis = PiecewiseLinearBasis()
    years, factors = fit_factor_series(mortality, basis)
    state_years, states = build_state_series(years, factors, market)
    pins = {}
    for pin in args.pin or []:
        key, _, value = pin.partition("=")
        if not value:
            raise ValueError(f"--pin expects name=value, got {pin!r}")
        pins[key.strip()] = float(value)
    params = fit_var(states, VarFitSpec(pinned=pins))
    x0 = states[-1]
    out = args.out or "parameters.json"
    save_parameters(out, params, x0, basis)
    print(f"fitted {len(state_years)} years ({state_years[0]}-{state_years[-1]})")
    with np.printoptions(precision=4, suppress=True):
        print("A =\n", params.A)
        print("b =", params.b)
        print("sigma =\n", params.sigma)
    print(f"sigma asymmetry before symmetrization: {params.sigma_asymmetry:.3e}")
    print(f"sigma eigenvalue clipped at zero: {params.sigma_eigenvalue_clip:.3e}")
    print(f"x0 = last observed state ({state_years[-1]})")
    print(f"wrote {out}")
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pencap",
        description="Pension capital requirements under pooled mortality and market risk",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--scenarios", type=int, help="number of Monte Carlo scenarios")
        p.add_argument("--full", action="store_true",
                       help=f"use {FULL_SCENARIOS} scenarios")
        p.add_argument("--mode", choices=["binomial", "deterministic", "both"])
        p.add_argument("--strategy", choices=["safe", "risky", "both"])
        p.add_argument("--risk", choices=["entropic", "neutral", "best-estimate", "all"])
        p.add_argument("--gamma", type=float, help="entropic risk aversion")
        p.add_argument("--nonhomogeneous", action="store_true",
                       help="20%% of members receive a double benefit")
        p.add_argument("--pool", type=int, help="plan membership for solve")
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--workers", type=int, help="threads for scenario generation")
        p.add_argument("--tol", type=float, help="per-capita bisection tolerance")
        p.add_argument("--self-test", dest="self_test", action="store_true",
                       help="check the risk-neutral solver against its closed form")
        p.add_argument("--params-file", dest="params_file",
                       help="parameter file from `pencap calibrate`")

    p_solve = sub.add_parser("solve", help="capital per strategy / risk measure / mode")
    common(p_solve)

    p_sweep = sub.add_parser("sweep", help="capital per pool size with deterministic reference")
    common(p_sweep)
    p_sweep.add_argument("--pool-grid", dest="pool_grid",
                         help="comma-separated pool sizes, strictly increasing")

    p_cal = sub.add_parser("calibrate", help="fit parameters from mortality and market CSVs")
    p_cal.add_argument("mortality_csv")
    p_cal.add_argument("market_csv")
    p_cal.add_argument("--out", help="output parameter file (default parameters.json)")
    p_cal.add_argument("--pin", action="append",
                       help="pin a coefficient, e.g. --pin b5=0.192 (repeatable)")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "calibrate":
            return cmd_calibrate(args)
        # sweeps default to the entropic criterion; solve reports all three
        defaults = {"risks": ["entropic"]} if args.command == "sweep" else None
        config = _apply_flags(_load_config(args.config, defaults), args)
        if args.command == "solve":
            return cmd_solve(config)
        return cmd_sweep(config)
    except (EstimationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
