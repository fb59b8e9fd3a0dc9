"""Scenario files: TOML parsed with tomli, validated against the bundled schema."""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import tomli

from ..geometry import SetSpec, make_canonical

__all__ = ["ScenarioConfig", "ConfigError", "load_config", "build_obstacle", "DEFAULTS",
           "OUT_ENV", "default_output_dir", "gallery_path", "gallery_names", "load_schema"]

OUT_ENV = "WIENER_INF_OUT"

DEFAULTS = {
    "seed": 0,
    "shells": {"n_min": 1, "n_max": 12, "method": "hitting_mc", "n_paths": 20000,
               "growth": 0.3, "refinements": [1.0, 2.0]},
    "forms": {"lambda": 3.0, "lambda_n_min": 1, "lambda_n_max": 10,
              "integral_k_min": 0, "integral_k_max": 12},
    "measure": {"routes": ["wos"], "n_paths": 50000, "growth": 0.2, "refine": 1.0, "tol": 1e-8,
                "eps_shell": 1e-3},
    "classifier": {},
    "agreement": {"tau0": 0.1, "tau1": 0.5, "flat_tol": 0.1},
    "budget": {"workers": 1, "max_steps": 20000, "block_size": 4096},
}


class ConfigError(ValueError):
    """Scenario file unreadable or invalid."""


def load_schema(name: str) -> dict:
    text = resources.files("wiener_inf").joinpath("schemas", name).read_text()
    return json.loads(text)


def gallery_path(name: str) -> Path:
    stem = name[:-5] if name.endswith(".toml") else name
    return Path(str(resources.files("wiener_inf").joinpath("gallery", f"{stem}.toml")))


def gallery_names() -> list[str]:
    d = resources.files("wiener_inf").joinpath("gallery")
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".toml"))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ScenarioConfig:
    name: str
    dimension: int
    obstacle: dict
    seed: int = 0
    description: str = ""
    expected_class: str | None = None
    shells: dict = field(default_factory=dict)
    operator: dict | None = None
    forms: dict = field(default_factory=dict)
    measure: dict = field(default_factory=dict)
    recurrence: dict | None = None
    classifier: dict = field(default_factory=dict)
    agreement: dict = field(default_factory=dict)
    budget: dict = field(default_factory=dict)
    output_dir: str | None = None
    source: str | None = None

    @property
    def deltas(self) -> list[float] | None:
        d = self.obstacle.get("deltas")
        return [float(x) for x in d] if d else None

    def to_dict(self) -> dict:
        d = {k: copy.deepcopy(getattr(self, k)) for k in
             ("name", "description", "dimension", "seed", "expected_class", "obstacle", "shells",
              "operator", "forms", "measure", "recurrence", "classifier", "agreement", "budget")}
        return {k: v for k, v in d.items() if v is not None}


def _check_ranges(raw: dict):
    for sec, lo, hi in (("shells", "n_min", "n_max"), ("operator", "n_min", "n_max"),
                        ("forms", "lambda_n_min", "lambda_n_max"),
                        ("forms", "integral_k_min", "integral_k_max")):
        s = raw.get(sec) or {}
        if lo in s and hi in s and s[hi] < s[lo]:
            raise ConfigError(f"[{sec}] {hi} must be >= {lo}")
    N = raw["dimension"]
    for sec, key in (("measure", "point"), ("recurrence", "start")):
        p = (raw.get(sec) or {}).get(key)
        if p is not None and len(p) != N:
            raise ConfigError(f"[{sec}] {key} must have {N} coordinates")
    ag = raw["agreement"]
    if ag["tau0"] >= ag["tau1"]:
        raise ConfigError("[agreement] tau0 must be below tau1")


def load_config(src) -> ScenarioConfig:
    """Parse and validate a scenario from a path, a TOML string or a dict."""
    origin = None
    if isinstance(src, dict):
        raw = copy.deepcopy(src)
    else:
        p = Path(src)
        if p.suffix == ".toml" or p.exists():
            if not p.exists():
                raise ConfigError(f"scenario file not found: {p}")
            origin = str(p)
            try:
                raw = tomli.loads(p.read_text())
            except tomli.TOMLDecodeError as exc:
                raise ConfigError(f"{p}: {exc}") from exc
        else:
            try:
                raw = tomli.loads(str(src))
            except tomli.TOMLDecodeError as exc:
                raise ConfigError(str(exc)) from exc
    try:
        jsonschema.validate(raw, load_schema("scenario.schema.json"))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ConfigError(f"{origin or 'scenario'}: {where}: {exc.message}") from exc
    raw = _merge(DEFAULTS, raw)
    _check_ranges(raw)
    known = set(ScenarioConfig.__dataclass_fields__) - {"source"}
    return ScenarioConfig(**{k: v for k, v in raw.items() if k in known}, source=origin)


def build_obstacle(spec: dict, dimension: int) -> SetSpec:
    """Canonical set from an [obstacle] table; ``deltas`` is ignored here."""
    kind = spec["kind"]
    delta = spec.get("delta")
    if delta is None and spec.get("deltas"):
        delta = min(spec["deltas"])
    if kind == "dyadic_ball_union" and "params" not in spec:
        try:
            n0, n1 = int(spec["n_min"]), int(spec["n_max"])
        except KeyError as exc:
            raise ConfigError("dyadic_ball_union needs params or n_min/n_max") from exc
        scale, e = float(spec.get("scale", 1.0)), float(spec.get("exponent", 0.0))
        params = [n0] + [scale * 2.0 ** (e * n) for n in range(n0, n1 + 1)]
        return make_canonical(kind, params, dimension)
    members = [build_obstacle(m, dimension) for m in spec.get("members", [])]
    return make_canonical(kind, spec.get("params", []), dimension, delta, members)


def default_output_dir(cfg: ScenarioConfig, override=None) -> Path:
    if override:
        return Path(override)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    base = os.environ.get(OUT_ENV)
    return Path(base) / cfg.name if base else Path("wiener_inf_runs") / cfg.name
