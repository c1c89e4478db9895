"""Command-line entry point: ``selffin price|hedge|verify``.

Exit codes: 0 success, 1 failed acceptance criteria, 2 invalid scenario or
arguments, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import acceptance
from .errors import DomainError, NumericError
from .funding_pde import solve_funding_pde
from .hedge_sim import replicate, simulate_gbm_paths
from .scenario import Scenario, ScenarioError, load_scenario

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_SCHEMA = 2
EXIT_NUMERIC = 3


def _sig12(obj: Any) -> Any:
    if isinstance(obj, float):
        return float(format(obj, ".12g"))
    if isinstance(obj, dict):
        return {k: _sig12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sig12(v) for v in obj]
    return obj


def _dump(data: dict) -> str:
    return json.dumps(_sig12(data), indent=2, sort_keys=True) + "\n"


def _seed_override() -> int | None:
    raw = os.environ.get("SELFFIN_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ScenarioError(f"SELFFIN_SEED: not an integer: {raw!r}") from None


def _load(args: argparse.Namespace) -> Scenario:
    if args.scenario is None:
        raise ScenarioError("--scenario FILE is required")
    return load_scenario(args.scenario, _seed_override())


def _price(args: argparse.Namespace) -> int:
    scenario = _load(args)
    solution = solve_funding_pde(scenario.market, scenario.policy, scenario.payoff, scenario.grid)
    result = {"price": solution.price, "delta_at_spot": solution.delta_at_spot}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = _dump(result)
    (out / "price.json").write_text(text, encoding="utf-8")
    if args.surface or "surface" in scenario.outputs:
        solution.write_surface_csv(out / "surface.csv")
    sys.stdout.write(text)
    return EXIT_OK


def _hedge(args: argparse.Namespace) -> int:
    scenario = _load(args)
    if scenario.simulation is None:
        raise ScenarioError("simulation: block required for the hedge command")
    solution = solve_funding_pde(scenario.market, scenario.policy, scenario.payoff, scenario.grid)
    paths = simulate_gbm_paths(scenario.simulation)
    reports = {
        mode: replicate(solution, paths, mode, threads=args.threads) for mode in scenario.modes
    }
    spec = scenario.simulation
    summary = {
        "price": solution.price,
        "delta_at_spot": solution.delta_at_spot,
        "seed": spec.seed,
        "drift": spec.mu,
        "modes": {mode.value: rep.summary() for mode, rep in reports.items()},
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = _dump(summary)
    (out / "hedge_summary.json").write_text(text, encoding="utf-8")
    if args.paths_csv or "paths_csv" in scenario.outputs:
        for mode, rep in reports.items():
            rep.write_paths_csv(out / f"paths_{mode.value}.csv")
    sys.stdout.write(text)
    return EXIT_OK


def _verify(args: argparse.Namespace) -> int:
    results = acceptance.run_all(sys.stdout)
    failed = [r for r in results if not r.passed]
    if failed:
        names = ", ".join(f"{r.number} ({r.name})" for r in failed)
        print(f"FAILED criteria: {names}")
        return EXIT_FAILED
    print(f"all {len(results)} criteria passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selffin",
        description="Funding-adjusted pricing and self-financing hedge diagnostics.",
    )
    parser.add_argument("command", choices=["price", "hedge", "verify"])
    parser.add_argument("--scenario", metavar="FILE", help="JSON scenario file")
    parser.add_argument("--out", metavar="DIR", default="./out", help="output directory")
    parser.add_argument("--threads", type=int, default=1, metavar="N")
    parser.add_argument("--surface", action="store_true", help="write surface.csv")
    parser.add_argument("--paths-csv", action="store_true", help="write per-path CSV")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_SCHEMA
    handler = {"price": _price, "hedge": _hedge, "verify": _verify}[args.command]
    try:
        return handler(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (DomainError, NumericError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
