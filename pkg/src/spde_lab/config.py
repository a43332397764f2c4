"""Experiment configuration: TOML files validated against a JSON schema.

Sections: ``spectrum``, ``drift``, ``simulation``, ``checks`` (array of
tables) and ``output``.  Unknown keys are rejected everywhere.  The resolved
configuration (defaults filled in) hashes to a stable hex digest that does
not depend on key order.
"""
from __future__ import annotations

import copy
import hashlib
import json
from typing import Any, Dict, List

import jsonschema
import numpy as np
import tomli

from .drift import DriftSpec, PotentialSpec
from .report import ANCHORS, AUX_ANCHORS
from .integrator import SCHEMES
from .spectrum import ModeSpectrum, build_example_dirichlet


class ConfigError(ValueError):
    """The configuration is malformed or inconsistent."""


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT_POS = {"type": "integer", "minimum": 1}
_NUM_OR_VEC = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]}
_NUM_LIST = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]}
_FUNC = {"type": "object"}  # checked by cylinder.from_declaration
_VEC = {"oneOf": [{"type": "array", "items": _NUM}, {"type": "object"}]}


def _closed(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_COMMON = {"name": {"type": "string"}, "label": {"type": "string"}}
_ENS = {"ensemble": {"enum": ["sample", "quadrature"]}}
_NESTED = {"n_paths": _INT_POS, "n_points": _INT_POS}
_TIMES = {"t": _NUM_LIST, "t_over_zeta_alpha": _NUM_LIST}

CHECK_SCHEMAS: Dict[str, dict] = {
    "poincare": _closed({**_COMMON, **_ENS, "functions": {"type": "array", "items": _FUNC,
                                                          "minItems": 1},
                         "labels": {"type": "array", "items": {"type": "string"}},
                         "sharp": {"type": "array", "items": {"type": "string"}}},
                        ["name", "functions"]),
    "logsob": _closed({**_COMMON, **_ENS, "function": _FUNC, "p": _NUM_LIST},
                      ["name", "function", "p"]),
    "hypercontractivity": _closed({**_COMMON, **_ENS, **_NESTED, **_TIMES, "function": _FUNC,
                                   "q": _NUM_LIST}, ["name", "function", "q"]),
    "ergodicity": _closed({**_COMMON, **_ENS, **_NESTED, **_TIMES, "function": _FUNC,
                           "slack": _NUM, "rate_slack": _NUM, "sharp": {"type": "boolean"}},
                          ["name", "function"]),
    "energy_identity": _closed({**_COMMON, **_ENS, **_NESTED, **_TIMES, "function": _FUNC,
                                "n_time_nodes": _INT_POS}, ["name", "function"]),
    "integration_by_parts": _closed({**_COMMON, **_ENS, "functions": {
        "type": "array", "items": _FUNC, "minItems": 1}}, ["name", "functions"]),
    "resolvent_bounds": _closed({**_COMMON, **_ENS, **_NESTED, "functions": {
        "type": "array", "items": _FUNC, "minItems": 1}, "lams": _NUM_LIST, "t_max": _POS,
        "second_order": {"enum": ["auto", "on", "off"]}, "second_order_slack": _NUM,
        "fd_step": _POS}, ["name", "functions", "lams"]),
    "moment_bound": _closed({**_COMMON, "x0": {"type": "array", "items": _VEC, "minItems": 1},
                             "k": _NUM_LIST, "t_final_over_zeta": _POS, "n_times": _INT_POS,
                             "n_paths": _INT_POS, "dt": _POS, "forget_slack": _NUM},
                            ["name", "x0", "k"]),
    "gradient_commutation": _closed({**_COMMON, **_TIMES, "function": _FUNC,
                                     "points": {"type": "array", "items": _VEC, "minItems": 1},
                                     "n_paths": _INT_POS, "form": {"enum": ["halpha", "literal"]},
                                     "slack": _NUM}, ["name", "function", "points"]),
    "product_rule": _closed({**_COMMON, "pairs": {"type": "array", "items": {
        "type": "array", "items": _FUNC, "minItems": 2, "maxItems": 2}},
        "random_pairs": _INT_POS, "n_points": _INT_POS, "max_freq": _INT_POS,
        "max_terms": _INT_POS, "seed": {"type": "integer", "minimum": 0},
        "tol": _POS}, ["name"]),
    "stationarity": _closed({**_COMMON, **_ENS, "functions": {"type": "array", "items": _FUNC,
                                                              "minItems": 1}},
                            ["name", "functions"]),
    "yosida": _closed({**_COMMON, "delta": _NUM_LIST, "n_pairs": _INT_POS, "scale": _POS,
                       "seed": {"type": "integer", "minimum": 0}}, ["name"]),
    "pathwise_contraction": _closed({**_COMMON, "dt": _NUM_LIST, "t_final_over_zeta": _POS,
                                     "n_paths": _INT_POS, "C": _NUM}, ["name"]),
    "trace_condition": _closed({**_COMMON, "eta": _NUM_LIST}, ["name"]),
    "invariant_law": _closed({**_COMMON, "modes": {"type": "array", "items": _INT_POS},
                              "orders": {"type": "array", "items": _INT_POS},
                              "n_sigma": _POS}, ["name"]),
}

KNOWN_CHECKS = tuple(CHECK_SCHEMAS)
assert set(KNOWN_CHECKS) <= set(ANCHORS) | set(AUX_ANCHORS)

SCHEMA = _closed({
    "spectrum": _closed({
        "preset": {"enum": ["dirichlet", "explicit"]},
        "n_modes": _INT_POS, "alpha": {"type": "number", "minimum": 0},
        "beta": {"type": "number", "minimum": 0},
        "a": {"type": "array", "items": _NUM, "minItems": 1},
        "lam": {"type": "array", "items": _NUM, "minItems": 1},
    }, ["preset", "alpha"]),
    "drift": _closed({
        "variant": {"enum": ["zero", "linear_diagonal", "gradient", "cubic_diagonal"]},
        "m": _NUM_OR_VEC, "c": _NUM_OR_VEC, "premultiply": {"type": "boolean"},
        "potential": _closed({"w": _NUM_OR_VEC, "c": _NUM_OR_VEC, "eps": _NUM_OR_VEC}),
    }, ["variant"]),
    "simulation": _closed({
        "dt": _POS, "scheme": {"enum": list(SCHEMES)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 63 - 1},
        "n_paths": _INT_POS, "burn_in": _POS, "thinning": _POS, "n_draws": _INT_POS,
        "invariant_dt": _POS, "provenance": {"enum": ["long_path", "ensemble"]},
    }),
    "checks": {"type": "array", "items": {
        "type": "object", "required": ["name"],
        "properties": {"name": {"enum": list(KNOWN_CHECKS)}}}},
    "output": _closed({
        "directory": {"type": "string"},
        "formats": {"type": "array", "items": {"enum": ["jsonl", "summary", "trajectory"]}},
        "trajectory_t_final": _POS,
    }),
}, ["spectrum", "drift"])

DEFAULTS = {
    "simulation": {"dt": 0.01, "scheme": "drift_implicit", "seed": 0, "n_paths": 1000,
                   "n_draws": 10000, "provenance": "long_path"},
    "output": {"directory": "out", "formats": ["jsonl", "summary"]},
    "checks": [],
}


def load(path) -> dict:
    """Parse a TOML file (no validation)."""
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def validate(raw: dict) -> dict:
    """Schema-check ``raw`` and return the resolved config with defaults."""
    try:
        jsonschema.validate(raw, SCHEMA)
        for chk in raw.get("checks", []):
            jsonschema.validate(chk, CHECK_SCHEMAS[chk["name"]])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    cfg = copy.deepcopy(raw)
    for key, val in DEFAULTS.items():
        if isinstance(val, dict):
            cfg[key] = {**val, **cfg.get(key, {})}
        else:
            cfg.setdefault(key, copy.deepcopy(val))
    sp = cfg["spectrum"]
    if sp["preset"] == "dirichlet":
        for k in ("n_modes", "beta"):
            if k not in sp:
                raise ConfigError(f"spectrum preset 'dirichlet' needs '{k}'")
        if "a" in sp or "lam" in sp:
            raise ConfigError("explicit arrays are not allowed with the dirichlet preset")
    else:
        if "a" not in sp or "lam" not in sp:
            raise ConfigError("explicit spectrum needs 'a' and 'lam'")
        if len(sp["a"]) != len(sp["lam"]):
            raise ConfigError("'a' and 'lam' must have equal length")
    dr = cfg["drift"]
    if dr["variant"] == "gradient" and "potential" not in dr:
        raise ConfigError("gradient drift needs a [drift.potential] table")
    return cfg


def apply_overrides(raw: dict, overrides: List[str]) -> dict:
    """Apply ``section.key=value`` overrides; values are parsed as TOML."""
    out = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        try:
            value = tomli.loads(f"v = {text}")["v"]
        except tomli.TOMLDecodeError:
            value = text
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override inside {key!r}")
        node[parts[-1]] = value
    return out


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def build_spectrum(cfg: dict) -> ModeSpectrum:
    sp = cfg["spectrum"]
    try:
        if sp["preset"] == "dirichlet":
            return build_example_dirichlet(sp["n_modes"], sp["alpha"], sp["beta"])
        return ModeSpectrum(np.asarray(sp["a"], float), np.asarray(sp["lam"], float), sp["alpha"])
    except ValueError as exc:
        raise ConfigError(f"invalid spectrum: {exc}") from exc


def build_drift(cfg: dict) -> DriftSpec:
    dr = cfg["drift"]
    try:
        pot = None
        if "potential" in dr:
            p = dr["potential"]
            pot = PotentialSpec(p.get("w", 0.0), p.get("c", 0.0), p.get("eps", 0.0))
        return DriftSpec(dr["variant"], m=dr.get("m", 0.0), potential=pot, c=dr.get("c", 0.0),
                         premultiply=dr.get("premultiply", False))
    except ValueError as exc:
        raise ConfigError(f"invalid drift: {exc}") from exc


def as_plain(obj: Any) -> Any:
    """Resolved config as JSON-native values (for embedding in outputs)."""
    return json.loads(canonical_json(obj))
