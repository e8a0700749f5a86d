"""Typed, dotted-path run settings shared by the scenario registry and the CLI.

Every tunable quantity has a canonical dotted path such as ``params.gamma``
or ``controls.mu1``.  Short names (``gamma``, ``mu1``, ``o``, ``t_f``) are
accepted wherever they are unambiguous.  All rates are in units of g and all
times in units of 1/g.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Mapping

from .dynamics import FeedbackRule, IntegratorConfig
from .models import InitialStateSpec, ModelParams, StirapParams


class ConfigError(ValueError):
    """Invalid configuration: unknown key, wrong type or out-of-domain value."""


_FLOAT, _INT, _BOOL, _STR, _OPT_FLOAT = "number", "integer", "boolean", "text", "number or null"

SCHEMA: dict[str, str] = {
    "model.kind": _STR,
    "params.g": _FLOAT,
    "params.Omega": _FLOAT,
    "params.omega": _FLOAT,
    "params.Xi": _FLOAT,
    "params.Delta": _FLOAT,
    "params.U_rr": _OPT_FLOAT,
    "params.gamma": _FLOAT,
    "params.kappa": _FLOAT,
    "params.Gamma": _FLOAT,
    "params.cavity_truncation": _INT,
    "params.rydberg_decay": _BOOL,
    "stirap.Omega0": _FLOAT,
    "stirap.t_o": _FLOAT,
    "stirap.t_c": _FLOAT,
    "stirap.t_f": _FLOAT,
    "controls.mu1": _FLOAT,
    "controls.mu2": _FLOAT,
    "controls.mu3": _FLOAT,
    "controls.mu4": _FLOAT,
    "controls.formula": _STR,
    "initial.o": _FLOAT,
    "noise.eta1": _FLOAT,
    "noise.eta2": _FLOAT,
    "noise.eta3": _FLOAT,
    "noise.replay": _BOOL,
    "integrator.dt": _FLOAT,
    "integrator.t_f": _FLOAT,
    "integrator.record_stride": _INT,
    "integrator.verify_state": _BOOL,
}

_CHOICES = {
    "model.kind": ("full", "effective", "stirap"),
    "controls.formula": ("projector", "sqrt"),
}

# Short names that would otherwise collide.
_PREFERRED = {"t_f": "integrator.t_f", "g": "params.g", "kind": "model.kind"}

DEFAULTS: dict[str, Any] = {
    "model.kind": "effective",
    "params.g": 1.0,
    "params.Omega": 0.07,
    "params.omega": 0.02,
    "params.Xi": 5.0,
    "params.Delta": 100.0,
    "params.U_rr": None,
    "params.gamma": 0.1,
    "params.kappa": 0.0,
    "params.Gamma": 0.001,
    "params.cavity_truncation": 2,
    "params.rydberg_decay": True,
    "stirap.Omega0": 0.15,
    "stirap.t_o": 20.0,
    "stirap.t_c": 35.0,
    "stirap.t_f": 200.0,
    "controls.mu1": 0.0,
    "controls.mu2": 0.0,
    "controls.mu3": 0.0,
    "controls.mu4": 0.0,
    "controls.formula": "projector",
    "initial.o": 1.0,
    "noise.eta1": 0.0,
    "noise.eta2": 0.0,
    "noise.eta3": 0.0,
    "noise.replay": True,
    "integrator.dt": None,  # model-dependent default
    "integrator.t_f": 1000.0,
    "integrator.record_stride": None,
    "integrator.verify_state": False,
}

DEFAULT_DT = {"effective": 0.01, "full": 0.002, "stirap": 0.01}
RECORD_SPACING = 0.1


def _short_names() -> dict[str, str]:
    seen: dict[str, list[str]] = {}
    for path in SCHEMA:
        seen.setdefault(path.rsplit(".", 1)[-1], []).append(path)
    out = {name: paths[0] for name, paths in seen.items() if len(paths) == 1}
    out.update(_PREFERRED)
    return out


SHORT_NAMES = _short_names()


def canonical_key(key: str) -> str:
    key = key.strip()
    if key in SCHEMA:
        return key
    if key in SHORT_NAMES:
        return SHORT_NAMES[key]
    raise ConfigError(f"unknown setting {key!r}")


def coerce(path: str, value: Any) -> Any:
    """Convert ``value`` (possibly command-line text) to the schema type of ``path``."""
    kind = SCHEMA[path]
    if kind in (_FLOAT, _OPT_FLOAT):
        if value is None or (isinstance(value, str) and value.strip().lower() in ("none", "null")):
            if kind == _OPT_FLOAT:
                return None
            raise ConfigError(f"{path}: expected a {kind}, got {value!r}")
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected a {kind}, got {value!r}")
        try:
            out = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected a {kind}, got {value!r}") from None
        if not math.isfinite(out):
            raise ConfigError(f"{path}: expected a finite number, got {value!r}")
        return out
    if kind == _INT:
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        try:
            fval = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected an integer, got {value!r}") from None
        if not fval.is_integer():
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(fval)
    if kind == _BOOL:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("true", "1", "yes", "on"):
            return True
        if text in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    text = str(value).strip()
    if path in _CHOICES and text not in _CHOICES[path]:
        raise ConfigError(f"{path}: expected one of {_CHOICES[path]}, got {value!r}")
    return text


def normalise(overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Canonicalise keys and coerce values; duplicate keys after aliasing are rejected."""
    out: dict[str, Any] = {}
    origin: dict[str, str] = {}
    for key, value in overrides.items():
        path = canonical_key(key)
        if path in out:
            raise ConfigError(f"conflicting keys {origin[path]!r} and {key!r} both set {path}")
        out[path] = coerce(path, value)
        origin[path] = key
    return out


def parse_assignment(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, value = text.split("=", 1)
    if not key.strip():
        raise ConfigError(f"override {text!r} has an empty key")
    return key.strip(), value.strip()


def flatten(doc: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """Nested mapping to dotted paths; a path set twice is a conflict."""
    out: dict[str, Any] = {}
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if isinstance(value, Mapping):
            items = flatten(value, prefix=path + ".")
        else:
            items = {path: value}
        for k, v in items.items():
            if k in out:
                raise ConfigError(f"conflicting duplicate key {k!r}")
            out[k] = v
    return out


def _reject_duplicates(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise ConfigError(f"conflicting duplicate key {key!r}")
        seen[key] = value
    return seen


def load_settings_file(path) -> dict[str, Any]:
    """Read a JSON settings document (nested objects or dotted keys)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    if not text.strip():
        return {}
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return flatten(doc)


@dataclass(frozen=True)
class ResolvedRun:
    """Validated objects for one simulation."""

    settings: dict
    kind: str
    params: ModelParams
    stirap: StirapParams
    mus: tuple[float, float, float, float]
    etas: tuple[float, float, float]
    initial: InitialStateSpec
    integrator: IntegratorConfig
    rule: FeedbackRule
    rydberg_decay: bool
    replay: bool


def resolve(settings: Mapping[str, Any]) -> ResolvedRun:
    """Build and validate the parameter records; domain errors become ConfigError."""
    s = dict(DEFAULTS)
    s.update(normalise(settings))
    kind = s["model.kind"]
    try:
        params = ModelParams(
            g=s["params.g"], Omega=s["params.Omega"], omega=s["params.omega"],
            Xi=s["params.Xi"], Delta=s["params.Delta"], U_rr=s["params.U_rr"],
            gamma=s["params.gamma"], kappa=s["params.kappa"], Gamma=s["params.Gamma"],
            cavity_truncation=s["params.cavity_truncation"],
        )
        stirap = StirapParams(Omega0=s["stirap.Omega0"], t_o=s["stirap.t_o"],
                              t_c=s["stirap.t_c"], t_f=s["stirap.t_f"], g=s["params.g"])
        initial = InitialStateSpec(o=s["initial.o"], model_kind=kind,
                                   cavity_truncation=s["params.cavity_truncation"])
        dt = s["integrator.dt"] if s["integrator.dt"] is not None else DEFAULT_DT[kind]
        stride = s["integrator.record_stride"]
        if stride is None:
            stride = max(1, int(round(RECORD_SPACING / dt)))
        t_f = s["integrator.t_f"]
        integrator = IntegratorConfig(dt=dt, t_f=t_f, record_stride=stride,
                                      verify_state=s["integrator.verify_state"])
        rule = FeedbackRule(formula=s["controls.formula"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    s["integrator.dt"] = dt
    s["integrator.record_stride"] = stride
    mus = tuple(s[f"controls.mu{m}"] for m in (1, 2, 3, 4))
    etas = tuple(s[f"noise.eta{j}"] for j in (1, 2, 3))
    if kind == "stirap" and any(mus):
        raise ConfigError("coherent-control fields are not defined for the STIRAP model")
    if kind == "stirap" and any(etas):
        raise ConfigError("amplitude noise is not defined for the STIRAP model")
    return ResolvedRun(settings=s, kind=kind, params=params, stirap=stirap, mus=mus,
                       etas=etas, initial=initial, integrator=integrator, rule=rule,
                       rydberg_decay=s["params.rydberg_decay"], replay=s["noise.replay"])
