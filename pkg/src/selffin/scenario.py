"""JSON scenario files: schema, validation and conversion to model objects."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .errors import SelfFinError
from .funding_pde import CollateralPolicy, GridSpec, MarketParams, Payoff
from .hedge_sim import EngineMode, PathSpec

_NUMBER = {"type": "number"}
_COUNT = {"type": "integer", "minimum": 1}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["market", "policy", "payoff"],
    "additionalProperties": False,
    "properties": {
        "market": {
            "type": "object",
            "required": ["sigma", "r_d", "r_r", "r_c", "r_f", "spot", "horizon"],
            "additionalProperties": False,
            "properties": {
                "sigma": {"type": "number", "minimum": 0},
                "r_d": _NUMBER,
                "r_r": _NUMBER,
                "r_c": _NUMBER,
                "r_f": _NUMBER,
                "spot": {"type": "number", "exclusiveMinimum": 0},
                "horizon": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "policy": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["none", "full", "fraction"]},
                "gamma": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "payoff": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["call", "put", "custom"]},
                "strike": {"type": "number", "minimum": 0},
                "custom_values": {
                    "type": "array",
                    "minItems": 2,
                    "items": {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2},
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "s_nodes": {"type": "integer", "minimum": 3},
                "t_steps": _COUNT,
                "s_max_multiple": {"type": "number", "minimum": 3},
                "scheme_theta": {"type": "number", "minimum": 0, "maximum": 1},
                "rannacher_steps": {"type": "integer", "minimum": 0},
            },
        },
        "simulation": {
            "type": "object",
            "required": ["n_paths", "n_steps", "seed"],
            "additionalProperties": False,
            "properties": {
                "n_paths": _COUNT,
                "n_steps": _COUNT,
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "mode": {
                    "oneOf": [
                        {"enum": [m.value for m in EngineMode]},
                        {
                            "type": "array",
                            "minItems": 1,
                            "uniqueItems": True,
                            "items": {"enum": [m.value for m in EngineMode]},
                        },
                    ]
                },
                "drift": {"type": ["number", "null"]},
            },
        },
        "outputs": {
            "type": "array",
            "items": {"enum": ["surface", "paths_csv"]},
        },
    },
}


class ScenarioError(SelfFinError):
    """A scenario file is unreadable, malformed or fails validation."""


@dataclass(frozen=True)
class Scenario:
    market: MarketParams
    policy: CollateralPolicy
    payoff: Payoff
    grid: GridSpec
    simulation: PathSpec | None = None
    modes: tuple[EngineMode, ...] = (EngineMode.CORRECT,)
    outputs: frozenset[str] = field(default_factory=frozenset)


def _build(block: str, factory, data: dict):
    try:
        return factory(**data)
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"{block}: {exc}") from None


def parse_scenario(doc: Any, seed_override: int | None = None) -> Scenario:
    """Validate a decoded JSON document and build every block.

    Every block is constructed before anything is computed, so a bad field
    anywhere fails the whole scenario.
    """
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{where}: {exc.message}") from None

    market = _build("market", MarketParams, doc["market"])
    policy = _build("policy", CollateralPolicy, doc["policy"])
    payoff_doc = dict(doc["payoff"])
    if "custom_values" in payoff_doc:
        payoff_doc["custom_values"] = tuple(map(tuple, payoff_doc["custom_values"]))
    payoff = _build("payoff", Payoff, payoff_doc)
    grid = _build("grid", GridSpec, doc.get("grid", {}))

    simulation = None
    modes: tuple[EngineMode, ...] = (EngineMode.CORRECT,)
    if "simulation" in doc:
        sim = dict(doc["simulation"])
        mode = sim.pop("mode", EngineMode.CORRECT.value)
        modes = tuple(EngineMode(m) for m in ([mode] if isinstance(mode, str) else mode))
        if seed_override is not None:
            sim["seed"] = seed_override
        simulation = _build("simulation", PathSpec, {**sim, "params": market})
    return Scenario(
        market, policy, payoff, grid, simulation, modes, frozenset(doc.get("outputs", []))
    )


def load_scenario(path: str | Path, seed_override: int | None = None) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return parse_scenario(doc, seed_override)
