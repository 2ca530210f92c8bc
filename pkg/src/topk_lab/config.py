"""Experiment configuration: JSON schema, defaults and typed accessors."""

from __future__ import annotations

import copy
import json

import jsonschema

from .core import CardinalitySet, doubling_schedule
from .costsens import CostSpec
from .data import SyntheticRecipe
from .losses import FAMILIES, LossKind
from .train import TrainConfig

CONFIG_VERSION = 1

_LOSS = {
    "oneOf": [
        {"type": "string", "enum": list(FAMILIES)},
        {
            "type": "object",
            "properties": {
                "family": {"type": "string", "enum": list(FAMILIES)},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "rho": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["family"],
            "additionalProperties": False,
        },
    ]
}

_TRAIN = {
    "type": "object",
    "properties": {
        "loss": _LOSS,
        "model": {"type": "string", "enum": ["linear", "mlp2"]},
        "epochs": {"type": "integer", "minimum": 0},
        "lr": {"type": "number", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "weight_decay": {"type": "number", "minimum": 0},
        "hidden_dim": {"type": "integer", "minimum": 1},
        "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "eps_adam": {"type": "number", "exclusiveMinimum": 0},
        "decoupled_decay": {"type": "boolean"},
        "eval_k": {"type": "array", "items": {"type": "integer", "minimum": 1}},
    },
    "additionalProperties": False,
}

_RECIPE = {
    "type": "object",
    "properties": {
        "kind": {"type": "string", "enum": ["gaussian_clusters"]},
        "n_classes": {"type": "integer", "minimum": 2},
        "dim": {"type": "integer", "minimum": 1},
        "samples": {"type": "integer", "minimum": 0},
        "cluster_spread": {"type": "number", "minimum": 0},
        "overlap_factor": {"type": "number", "minimum": 0},
        "seed": {"type": "integer"},
        "group_size": {"type": "integer", "minimum": 1},
        "group_radius": {"type": "number", "minimum": 0},
        "class_radius": {"type": "number", "minimum": 0},
    },
    "required": ["n_classes", "dim", "samples"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "seed": {"type": "integer"},
        "dataset": {
            "type": "object",
            "properties": {
                "source": {"type": "string", "enum": ["synthetic", "file"]},
                "recipe": _RECIPE,
                "path": {"type": "string"},
                "test_path": {"type": "string"},
                "n_classes": {"type": "integer", "minimum": 2},
                "test_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            },
            "required": ["source"],
            "additionalProperties": False,
        },
        "base": _TRAIN,
        "selector": _TRAIN,
        "cost": {
            "type": "object",
            "properties": {
                "lam": {"type": "number", "minimum": 0},
                "penalty": {"type": "string", "enum": ["log_k", "linear_k", "table"]},
                "table": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "normalize": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "kset_schedule": {
            "type": "object",
            "properties": {
                "kind": {"type": "string", "enum": ["doubling", "custom"]},
                "k_max": {"type": "integer", "minimum": 1},
                "sets": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "minItems": 1,
                              "items": {"type": "integer", "minimum": 1}},
                },
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "output_dir": {"type": "string"},
    },
    "required": ["version", "dataset"],
    "additionalProperties": False,
}

DEFAULT_TRAIN = {
    "lr": 1e-3,
    "batch_size": 128,
    "weight_decay": 1e-5,
    "epochs": 100,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps_adam": 1e-8,
    "decoupled_decay": True,
    "hidden_dim": 64,
}

DEFAULTS = {
    "seed": 0,
    "base": {**DEFAULT_TRAIN, "loss": "comp_log", "model": "linear", "eval_k": [1]},
    "selector": {**DEFAULT_TRAIN, "loss": "comp_log", "model": "mlp2"},
    "cost": {"lam": 0.05, "penalty": "log_k", "normalize": True},
    "kset_schedule": {"kind": "doubling", "k_max": 8},
    "output_dir": "out",
}


class ConfigError(ValueError):
    """Raised for schema violations and inconsistent settings."""


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def validate(raw: dict) -> dict:
    """Check ``raw`` against the schema and return it merged with defaults."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {err.message}") from None
    cfg = _merge(DEFAULTS, raw)
    ds = cfg["dataset"]
    if ds["source"] == "synthetic" and "recipe" not in ds:
        raise ConfigError("a synthetic dataset needs a recipe")
    if ds["source"] == "file" and "path" not in ds:
        raise ConfigError("a file dataset needs a path")
    sched = cfg["kset_schedule"]
    if sched["kind"] == "custom" and "sets" not in sched:
        raise ConfigError("a custom schedule needs explicit sets")
    if cfg["cost"]["penalty"] == "table":
        raise_if = sched["kind"] != "custom" or len(sched["sets"]) != 1
        if "table" not in cfg["cost"] or raise_if:
            raise ConfigError("a penalty table needs a single custom cardinality set")
    return cfg


def load(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return validate(raw)


def loss_from(spec) -> LossKind:
    return LossKind(spec) if isinstance(spec, str) else LossKind(**spec)


def train_config(section: dict, seed: int) -> TrainConfig:
    s = dict(section)
    s.pop("eval_k", None)
    s["loss"] = loss_from(s["loss"])
    try:
        return TrainConfig(seed=seed, **s)
    except ValueError as err:
        raise ConfigError(str(err)) from None


def recipe(cfg: dict) -> SyntheticRecipe:
    r = dict(cfg["dataset"]["recipe"])
    r.setdefault("seed", cfg["seed"])
    return SyntheticRecipe(**r)


def kset_schedule(cfg: dict, n: int) -> list[CardinalitySet]:
    sched = cfg["kset_schedule"]
    try:
        if sched["kind"] == "doubling":
            return doubling_schedule(min(n, sched.get("k_max", n)))
        return [CardinalitySet(s, n) for s in sched["sets"]]
    except ValueError as err:
        raise ConfigError(str(err)) from None


def cost_spec(cfg: dict, kset: CardinalitySet) -> CostSpec:
    c = cfg["cost"]
    table = tuple(c["table"]) if c["penalty"] == "table" else None
    try:
        return CostSpec(c["lam"], kset, c["penalty"], c["normalize"], table)
    except ValueError as err:
        raise ConfigError(str(err)) from None
