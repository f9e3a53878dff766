"""Experiment configuration: a JSON document validated against ``CONFIG_SCHEMA``.

Field meanings and units are documented in docs/config.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import jsonschema

from .model import GrowthModelSpec, RunoffModelSpec, model_from_dict
from .montecarlo import McConfig, horizon_from_dict

ESTIMATORS = ("mc", "hybrid", "asymptotic-growth", "asymptotic-runoff", "compound-tail", "decomposition")
PRESETS = ("table51", "table52")

_DIST = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["constant", "lognormal", "exponential", "gamma", "discrete", "normal", "pareto"]}
    },
}

_DELAY = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["gamma", "tabulated"]},
        "shape": {"type": "number", "exclusiveMinimum": 0},
        "rate": {"type": "number", "exclusiveMinimum": 0},
        "x_grid": {"type": "array", "items": {"type": "number"}},
        "cdf": {"type": "array", "items": {"type": "number"}},
        "phi": {"type": "number", "exclusiveMinimum": 0},
        "h_model": {
            "type": "object",
            "required": ["c", "gamma"],
            "properties": {"c": {"type": "number"}, "gamma": {"type": "number"}},
        },
    },
    "additionalProperties": False,
}

_XI = {
    "oneOf": [
        {
            "type": "object",
            "required": ["kind", "phi"],
            "properties": {"kind": {"const": "deterministic_exp"}, "phi": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["kind", "exposure"],
            "properties": {
                "kind": {"const": "reporting_delay"},
                "exposure": {
                    "type": "object",
                    "required": ["d", "dist_q_past", "delay"],
                    "properties": {
                        "d": {"type": "integer", "minimum": 0},
                        "pi": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                        "pi_csv": {"type": "string"},
                        "dist_q_past": _DIST,
                        "delay": _DELAY,
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
    ]
}

_COMMON_MODEL = {
    "lam": {"type": "number", "exclusiveMinimum": 0},
    "inflation_factor": _DIST,
    "return_factor": _DIST,
    "claim_size": _DIST,
    "transition_rule": {"enum": ["claims_start_of_year", "claims_end_of_year"]},
    "joint_ir": {
        "type": "object",
        "required": ["inflation", "returns", "probs"],
        "properties": {k: {"type": "array", "items": {"type": "number"}} for k in ("inflation", "returns", "probs")},
    },
}

_MODEL = {
    "oneOf": [
        {
            "type": "object",
            "required": ["regime", "lam", "s", "growth_factor", "structure", "inflation_factor", "return_factor", "claim_size"],
            "properties": {
                "regime": {"const": "growth"},
                "s": {"type": "number", "exclusiveMinimum": 0},
                "growth_factor": _DIST,
                "structure": _DIST,
                **_COMMON_MODEL,
            },
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["regime", "lam", "inflation_factor", "return_factor", "claim_size", "xi_model"],
            "properties": {"regime": {"const": "runoff"}, "xi_model": _XI, **_COMMON_MODEL},
            "additionalProperties": False,
        },
    ]
}

_HORIZON = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["fixed", "adaptive_runoff", "adaptive_growth"]},
        "years": {"type": "integer", "minimum": 1},
        "intensity_floor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "residual_tol": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "max_years": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["model", "estimators", "u_grid"],
    "properties": {
        "name": {"type": "string"},
        "model": _MODEL,
        "estimators": {"type": "array", "minItems": 1, "uniqueItems": True, "items": {"enum": list(ESTIMATORS)}},
        "u_grid": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "lambda_grid": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "mc": {
            "type": "object",
            "properties": {
                "replications": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "workers": {"type": "integer", "minimum": 1},
                "block_size": {"type": "integer", "minimum": 1},
                "horizon": _HORIZON,
            },
            "additionalProperties": False,
        },
        "hybrid": {
            "type": "object",
            "required": ["lam0"],
            "properties": {"lam0": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        "goldie": {
            "type": "object",
            "properties": {
                "n_samples": {"type": "integer", "minimum": 1000},
                "burn_in": {"type": "integer", "minimum": 1000},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "decomposition": {
            "type": "object",
            "properties": {"n_max": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"csv": {"type": "string"}, "report": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """The configuration document is malformed or inconsistent."""


@dataclass(frozen=True)
class ExperimentConfig:
    model: Union[GrowthModelSpec, RunoffModelSpec]
    estimators: tuple[str, ...]
    u_grid: tuple[float, ...]
    lambda_grid: tuple[float, ...]
    mc: McConfig = field(default_factory=McConfig)
    lam0: Optional[float] = None
    goldie_samples: int = 10**6
    goldie_burn_in: int = 10_000
    goldie_seed: int = 1
    decomposition_n_max: int = 600
    output_csv: Optional[str] = None
    output_report: Optional[str] = None
    name: str = "experiment"

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "model": self.model.to_dict(),
            "estimators": list(self.estimators),
            "u_grid": list(self.u_grid),
            "lambda_grid": list(self.lambda_grid),
            "mc": self.mc.to_dict(),
            "goldie": {"n_samples": self.goldie_samples, "burn_in": self.goldie_burn_in, "seed": self.goldie_seed},
            "decomposition": {"n_max": self.decomposition_n_max},
        }
        if self.lam0 is not None:
            d["hybrid"] = {"lam0": self.lam0}
        out = {k: v for k, v in (("csv", self.output_csv), ("report", self.output_report)) if v is not None}
        if out:
            d["output"] = out
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _resolve_exposure(model: dict, base: Path) -> dict:
    xm = model.get("xi_model", {})
    exp = xm.get("exposure")
    if not exp or "pi" in exp:
        return model
    if "pi_csv" not in exp:
        raise ConfigError("exposure needs either pi or pi_csv")
    from .runoff import RunoffExposure, DelayModel
    from .distributions import distribution_from_dict

    ex = RunoffExposure.from_csv(
        base / exp["pi_csv"], distribution_from_dict(exp["dist_q_past"]), DelayModel.from_dict(exp["delay"])
    )
    model = json.loads(json.dumps(model))
    model["xi_model"]["exposure"] = ex.to_dict()
    return model


def parse_config(doc: dict, base: Path | str = ".") -> ExperimentConfig:
    """Validate and build an experiment; raises ``ConfigError`` on any problem."""
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from exc
    try:
        model = model_from_dict(_resolve_exposure(doc["model"], Path(base)))
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"model: {exc}") from exc
    est = tuple(doc["estimators"])
    if "hybrid" in est and "hybrid" not in doc:
        raise ConfigError("hybrid estimator needs a hybrid.lam0 block")
    mc = dict(doc.get("mc", {}))
    if "horizon" in mc:
        mc["horizon"] = horizon_from_dict(mc["horizon"])
    g = doc.get("goldie", {})
    out = doc.get("output", {})
    return ExperimentConfig(
        model=model,
        estimators=est,
        u_grid=tuple(float(u) for u in doc["u_grid"]),
        lambda_grid=tuple(float(x) for x in doc.get("lambda_grid", [model.lam])),
        mc=McConfig(**mc),
        lam0=doc.get("hybrid", {}).get("lam0"),
        goldie_samples=g.get("n_samples", 10**6),
        goldie_burn_in=g.get("burn_in", 10_000),
        goldie_seed=g.get("seed", 1),
        decomposition_n_max=doc.get("decomposition", {}).get("n_max", 600),
        output_csv=out.get("csv"),
        output_report=out.get("report"),
        name=doc.get("name", "experiment"),
    )


def load_config(path_or_preset: str) -> ExperimentConfig:
    """Read a config file, or a bundled preset by name."""
    if path_or_preset in PRESETS:
        text = resources.files("ruinsim.presets").joinpath(f"{path_or_preset}.json").read_text()
        return parse_config(json.loads(text))
    path = Path(path_or_preset)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(doc, base=path.parent)
