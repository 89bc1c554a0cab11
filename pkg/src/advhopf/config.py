"""Run configuration: TOML document, schema check, dotted-path overrides."""
from __future__ import annotations

import copy
import sys
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .model import GrowthSpec, KernelSpec, ModelParams

REQUIRED = object()

# section -> key -> default (REQUIRED marks mandatory keys; dicts are subsections)
SCHEMA = {
    "model": {
        "alpha": REQUIRED,
        "L": REQUIRED,
        "r": REQUIRED,
        "tau": 0.0,
        "n_cells": 256,
        "growth": {"variant": "constant", "m0": 1.0, "values": None},
        "kernel": {"variant": "delta", "matrix": None},
    },
    "steady": {"r_max": None, "dr": 0.01},
    "hopf": {"n_max": 3, "dr": 0.01},
    "spectrum": {"M": 24, "k": 20, "taus": None},
    "normal_form": {"n": [0]},
    "simulate": {
        "tau": None,
        "tau_factor": 1.1,
        "t_end": 20000.0,
        "M_delay": 256,
        "dt": None,
        "eps": 0.01,
        "shape": "cos",
        "random_seed": None,
        "sample_every": 1,
    },
    "sweep": {
        "kind": "monotonicity",
        "alpha": [-2.0, 2.0, 21],
        "L": [0.5, 3.0, 21],
        "r": [0.05],
    },
    "verify": {"criteria": [1, 2, 3, 4, 5, 6, 7, 8]},
    "output": {"dir": "out", "format": "csv", "snapshot_times": [], "workers": 0},
}


def _merge(schema, data, path):
    out = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {path or '<root>'} must be a table")
    unknown = sorted(set(data) - set(schema))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key(s): {', '.join(where + k for k in unknown)}")
    for key, default in schema.items():
        full = f"{path}.{key}" if path else key
        if isinstance(default, dict):
            out[key] = _merge(default, data.get(key, {}), full)
        elif key in data:
            out[key] = data[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {full}")
        else:
            out[key] = copy.deepcopy(default)
    return out


def validate(data: dict) -> dict:
    """Fill defaults and reject unknown or missing keys."""
    cfg = _merge(SCHEMA, data, "")
    model_params(cfg)
    fmt = cfg["output"]["format"]
    if fmt not in ("csv", "json"):
        raise ConfigError(f"output.format must be csv or json, got {fmt!r}")
    return cfg


def parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.sub=value`` overrides to the raw document."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} crosses a value")
        node[parts[-1]] = parse_value(text.strip())
    return data


def default_config_text() -> str:
    return resources.files("advhopf").joinpath("default.toml").read_text()


def load(path=None, overrides=()) -> dict:
    """Read, override and validate a config file (the shipped default if ``path`` is None)."""
    try:
        if path is None:
            raw = tomllib.loads(default_config_text())
        else:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return validate(apply_overrides(raw, overrides))


def model_params(cfg: dict) -> ModelParams:
    m = cfg["model"]
    try:
        g = m["growth"]
        k = m["kernel"]
        growth = GrowthSpec(variant=g["variant"], m0=float(g["m0"]),
                            values=None if g["values"] is None else tuple(g["values"]))
        kernel = KernelSpec(variant=k["variant"],
                            matrix=None if k["matrix"] is None else tuple(map(tuple, k["matrix"])))
        return ModelParams(alpha=float(m["alpha"]), L=float(m["L"]), r=float(m["r"]),
                           tau=float(m["tau"]), growth=growth, kernel=kernel,
                           n_cells=int(m["n_cells"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model section: {exc}") from exc
