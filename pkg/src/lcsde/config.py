"""Experiment configuration: a versioned JSON document checked against a schema.

Unknown keys are rejected at every level. ``load_config`` returns plain
dicts with defaults filled in; ``dump_config`` writes the canonical form, so
load, dump and load again gives the same document.
"""
from __future__ import annotations

import json
from copy import deepcopy

import jsonschema

SCHEMA_VERSION = 1
MODES = ("geom", "integrate", "solve", "finance", "proptest")


class ConfigError(ValueError):
    """The configuration failed validation; nothing was computed."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec}
_cost = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}

SET_LITERAL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["vertices"],
    "properties": {"vertices": {"type": "array", "items": _vec, "minItems": 1}, "cone": _mat},
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "mode"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "mode": {"enum": list(MODES)},
        "dimension": {"type": "integer", "minimum": 1},
        "cone": _mat,
        "preset": {"enum": ["compounding", "bounded-diffusion", "cone-constant", "finance-default"]},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["M"],
            "properties": {"T": _pos, "M": {"type": "integer", "minimum": 1}},
        },
        "paths": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "iterations": {"type": "integer", "minimum": 1},
        "tol": {"type": "number", "minimum": 0},
        "vertex_cap": {"type": "integer", "minimum": 2},
        "output": {"type": "string", "minLength": 1},
        "expressions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "field": {"type": "array", "items": SET_LITERAL, "minItems": 1},
        "suite": {"type": "string"},
        "cases": {"type": "integer", "minimum": 1},
        "strategies": {"type": "integer", "minimum": 1},
        "export_paths": {"type": "boolean"},
        "stability": {"type": "boolean"},
        "market": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lambda", "mu"],
            "properties": {
                "lambda": _cost,
                "mu": _cost,
                "r": _num,
                "b": _num,
                "sigma": {"type": "number", "minimum": 0},
                "p": _pos,
                "x": _num,
                "y": _num,
                "strategy": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["theta_L", "theta_M"],
                    "properties": {
                        "theta_L": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                        "theta_M": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                    },
                },
            },
        },
    },
    "allOf": [
        {"if": {"properties": {"mode": {"const": "geom"}}}, "then": {"required": ["expressions"]}},
        {"if": {"properties": {"mode": {"const": "integrate"}}}, "then": {"required": ["field", "grid"]}},
        {"if": {"properties": {"mode": {"const": "solve"}}}, "then": {"required": ["preset", "grid"]}},
        {"if": {"properties": {"mode": {"const": "proptest"}}}, "then": {"required": ["suite"]}},
        {"if": {"properties": {"mode": {"const": "finance"}}}, "then": {"required": ["grid"]}},
    ],
}

DEFAULTS = {
    "paths": 1,
    "seed": 0,
    "iterations": 8,
    "tol": 0.0,
    "vertex_cap": 64,
    "output": "out",
    "cases": 100,
    "strategies": 1,
    "export_paths": False,
    "stability": True,
}


def validate(cfg):
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    m = cfg.get("market", {}).get("strategy")
    if m and len(m["theta_L"]) != len(m["theta_M"]):
        raise ConfigError("invalid config at market/strategy: theta_L and theta_M differ in length")
    if cfg["mode"] == "finance" and "market" not in cfg and cfg.get("preset") != "finance-default":
        raise ConfigError("invalid config: finance mode needs a market block or the finance-default preset")
    return cfg


def normalize(cfg):
    out = deepcopy(cfg)
    for k, v in DEFAULTS.items():
        out.setdefault(k, v)
    if "grid" in out:
        out["grid"].setdefault("T", 1.0)
    return validate(out)


def parse_config(text: str):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    validate(raw)
    return normalize(raw)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def dump_config(cfg) -> str:
    return json.dumps(cfg, sort_keys=True, indent=1)
