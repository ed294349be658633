"""Run configuration: JSON schema, defaults and validation."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .coeffs import DampingModel, PerturbationModel, predict_rates
from .fields import Grid
from .model import Model
from .nonlinearity import NonlinearityModel, validate as validate_nonlinearity

SCHEMA_VERSION = 1

DEFAULTS: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "id": "run",
    "n": 1,
    "grid": {"L": 256.0, "N": 2048},
    "scaled_grid": None,
    "coeffs": {"beta": 0.0, "mu": 1.0, "gamma": 1.0, "nu": 2.0, "c_amp": None, "d_amp": 0.0},
    "nonlinearity": [],
    "data": {"family": "gaussian", "seed": 0, "epsilon": 0.1, "m": 1, "width": 1.0,
             "u1_scale": 0.0, "center": 3.0},
    "time": {"s_end": 6.5, "ds_out": 0.1, "dt_max": 0.1, "cfl": 0.4, "ceiling": 1.0e6},
    "analysis": {"delta": 0.5, "eta": 0.01, "eta_tilde": 0.1, "eta_e2": None, "C0": 64.0, "C1": 16.0,
                 "fit_window": None},
}

SCALED_GRID_DEFAULTS = {1: {"L": 20.0, "N": 512}, 2: {"L": 16.0, "N": 128}}
FIT_WINDOW_DEFAULTS = {1: [20.0, 500.0], 2: [10.0, 100.0]}


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ValidationResult:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def as_dict(self) -> dict:
        return {"ok": self.ok, "errors": self.errors, "warnings": self.warnings}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise SchemaError(here, "unknown key")
        if isinstance(base[key], dict) and val is not None:
            if not isinstance(val, dict):
                raise SchemaError(here, "expected an object")
            out[key] = _merge(base[key], val, here)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _number(cfg: dict, path: str, *, integer: bool = False) -> float:
    node: Any = cfg
    for part in path.split("."):
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise SchemaError(path, f"expected a number, got {node!r}")
    if integer and int(node) != node:
        raise SchemaError(path, f"expected an integer, got {node!r}")
    if not math.isfinite(node):
        raise SchemaError(path, "must be finite")
    return node


def normalize(raw: dict) -> dict:
    """Fill defaults and check types; raises ``SchemaError`` with the offending field path."""
    if not isinstance(raw, dict):
        raise SchemaError("<root>", "configuration must be a JSON object")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError("schema_version", f"unsupported version {version!r} (expected {SCHEMA_VERSION})")
    cfg = _merge(DEFAULTS, raw)
    n = int(_number(cfg, "n", integer=True))
    cfg["n"] = n
    for p in ("grid.L", "coeffs.beta", "coeffs.mu", "coeffs.gamma", "coeffs.nu", "coeffs.d_amp",
              "data.epsilon", "data.m", "data.width", "data.u1_scale", "data.center",
              "time.s_end", "time.ds_out", "time.dt_max", "time.cfl", "time.ceiling",
              "analysis.delta", "analysis.eta", "analysis.eta_tilde", "analysis.C0", "analysis.C1"):
        _number(cfg, p)
    _number(cfg, "grid.N", integer=True)
    _number(cfg, "data.seed", integer=True)
    if not isinstance(cfg["id"], str) or not cfg["id"] or "/" in cfg["id"]:
        raise SchemaError("id", "must be a nonempty string without '/'")
    if cfg["scaled_grid"] is None and n in SCALED_GRID_DEFAULTS:
        cfg["scaled_grid"] = dict(SCALED_GRID_DEFAULTS[n])
    if cfg["analysis"]["fit_window"] is None and n in FIT_WINDOW_DEFAULTS:
        cfg["analysis"]["fit_window"] = list(FIT_WINDOW_DEFAULTS[n])
    c_amp = cfg["coeffs"]["c_amp"]
    if c_amp is None:
        cfg["coeffs"]["c_amp"] = [0.0] * n
    elif not isinstance(c_amp, list) or not all(isinstance(a, (int, float)) for a in c_amp):
        raise SchemaError("coeffs.c_amp", "expected a list of numbers")
    if not isinstance(cfg["nonlinearity"], list):
        raise SchemaError("nonlinearity", "expected a list of monomials")
    power_key = "p1" if n == 1 else "p"
    for i, term in enumerate(cfg["nonlinearity"]):
        if not isinstance(term, dict):
            raise SchemaError(f"nonlinearity[{i}]", "expected an object")
        allowed = {"coeff", "p1", "p2", "p3", "odd", "signed_derivs"} if n == 1 else {"coeff", "p", "odd"}
        for key in term:
            if key not in allowed:
                raise SchemaError(f"nonlinearity[{i}].{key}", "unknown key")
        for key in ("coeff", power_key):
            if key not in term:
                raise SchemaError(f"nonlinearity[{i}].{key}", "missing")
    return cfg


def load(path: str | Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError("<root>", f"invalid JSON: {exc}") from exc
    return normalize(raw)


def validate(cfg: dict) -> ValidationResult:
    """Check a normalized configuration against every admissibility condition.

    Structural and coefficient assumptions are errors.  Nonlinearity
    exponent conditions are warnings: runs outside the admissible range are
    legitimate contrast experiments.
    """
    res = ValidationResult()
    n = cfg["n"]
    if n not in (1, 2):
        res.errors.append(f"n: dimension must be 1 or 2, got {n}")
        return res
    co = cfg["coeffs"]
    if not -1.0 <= co["beta"] < 1.0:
        res.errors.append(f"coeffs.beta: beta ∈ [−1,1) required, got {co['beta']}")
    if co["mu"] <= 0:
        res.errors.append(f"coeffs.mu: must be positive, got {co['mu']}")
    m = cfg["data"]["m"]
    if n == 1 and m != 1:
        res.errors.append(f"data.m: m=1 (n=1) required, got {m}")
    if n >= 2 and not m > n / 2 + 1:
        res.errors.append(f"data.m: m > n/2+1 (n≥2) required, got {m}")
    for name in ("grid", "scaled_grid"):
        g = cfg[name]
        try:
            Grid(n, float(g["L"]), int(g["N"]))
        except (ValueError, KeyError, TypeError) as exc:
            res.errors.append(f"{name}: {exc}")
    if len(co["c_amp"]) != n:
        res.errors.append(f"coeffs.c_amp: expected {n} components, got {len(co['c_amp'])}")
    data = cfg["data"]
    if data["family"] not in ("gaussian", "offcenter", "random", "dipole"):
        res.errors.append(f"data.family: unknown family {data['family']!r}")
    if data["epsilon"] <= 0:
        res.errors.append("data.epsilon: must be positive")
    if data["width"] <= 0:
        res.errors.append("data.width: must be positive")
    tm = cfg["time"]
    for key in ("s_end", "ds_out", "dt_max", "cfl", "ceiling"):
        if tm[key] <= 0:
            res.errors.append(f"time.{key}: must be positive")
    if tm["ds_out"] > 0 and tm["s_end"] > 0:
        steps = tm["s_end"] / tm["ds_out"]
        if abs(steps - round(steps)) > 1e-9 * steps:
            res.errors.append("time.s_end: must be an integer multiple of time.ds_out")
    an = cfg["analysis"]
    if not 0 < an["delta"] < 1:
        res.errors.append(f"analysis.delta: must lie in (0,1), got {an['delta']}")
    if an["eta"] <= 0:
        res.errors.append("analysis.eta: must be positive")
    if an["C0"] <= 0 or an["C1"] <= 0:
        res.errors.append("analysis.C0/C1: must be positive")
    elif not (an["C1"] > 8 and an["C0"] > 2 * an["C1"]):
        res.warnings.append("analysis.C0/C1: expected C1 > 8 and C0 > 2 C1")
    win = an["fit_window"]
    if not (isinstance(win, list) and len(win) == 2 and 0 < win[0] < win[1]):
        res.errors.append(f"analysis.fit_window: expected [lo, hi] with 0 < lo < hi, got {win}")
    if res.errors:
        return res

    damping = DampingModel(co["beta"], co["mu"])
    pert = perturbation(cfg)
    for problem in pert.validate(damping):
        res.errors.append(f"coeffs: {problem}")
    nl = NonlinearityModel.from_config(n, cfg["nonlinearity"])
    for check in validate_nonlinearity(nl, damping, n, m).failures:
        res.warnings.append(f"nonlinearity: {check.name} violated ({check.detail})")

    t_end = float(damping.t_of_s(tm["s_end"]))
    need = 8.0 * math.sqrt(float(damping.B(t_end)) + 1.0)
    if cfg["grid"]["L"] < need:
        res.warnings.append(f"grid.L: {cfg['grid']['L']} is below 8*sqrt(B(t_end)+1) = {need:.3g}")
    return res


def perturbation(cfg: dict) -> PerturbationModel:
    co = cfg["coeffs"]
    return PerturbationModel(c_amp=tuple(float(a) for a in co["c_amp"]), gamma=float(co["gamma"]),
                             d_amp=float(co["d_amp"]), nu=float(co["nu"]))


def build_model(cfg: dict) -> Model:
    n = cfg["n"]
    damping = DampingModel(float(cfg["coeffs"]["beta"]), float(cfg["coeffs"]["mu"]))
    return Model(n=n, damping=damping, pert=perturbation(cfg),
                 nl=NonlinearityModel.from_config(n, cfg["nonlinearity"]))


def grids(cfg: dict) -> tuple[Grid, Grid]:
    n = cfg["n"]
    gx, gy = cfg["grid"], cfg["scaled_grid"]
    return Grid(n, float(gx["L"]), int(gx["N"])), Grid(n, float(gy["L"]), int(gy["N"]))


def rates_for(cfg: dict):
    model = build_model(cfg)
    return predict_rates(cfg["n"], cfg["data"]["m"], model.damping, model.pert, model.nl,
                         eta=cfg["analysis"]["eta"])
