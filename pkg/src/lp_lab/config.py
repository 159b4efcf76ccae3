"""JSON experiment configuration with defaults and validation."""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError

__all__ = ["ExperimentConfig", "parse_config", "config_from_dict", "DEFAULTS", "KINDS"]

KINDS = ("reference", "evolve", "decompose", "adiabatic", "dispersive", "sweep")

DEFAULTS = {
    "kind": "sweep",
    "grid": {"L": 40.0, "N": 4096},
    "preset": {"poschl_teller": {"a": 1.5, "kick": 0.2}},
    "mass": 1.0,
    "epsilons": [0.1, 0.05, 0.025],
    "T": 1.0,
    "dt_ref": 1e-3,
    "c_psi": 0.02,
    "tolerances": {"ref_tol": 1e-10, "rho_tol": 0.02, "gap_tol": 1e-6},
    "out": "lp_lab_runs",
    "checkpoint_stride": 100,
    "workers": 1,
    "absorb": False,
    "adiabatic": {"depth": 1.5, "amplitude": 0.3, "dt_path": 1e-3},
    "dispersive": {"depth": 1.5, "epsilon": 0.02, "T": 1.0, "L": 320.0, "N": 8192},
}

_SECTIONS = {
    "grid": {"L", "N"},
    "tolerances": {"ref_tol", "rho_tol", "gap_tol"},
    "adiabatic": {"depth", "amplitude", "dt_path"},
    "dispersive": {"depth", "epsilon", "T", "L", "N"},
}
_PRESET_KEYS = {"poschl_teller": {"a", "kick"}, "file": {"phi0", "phi_dot0"}}


@dataclass
class ExperimentConfig:
    kind: str
    grid: dict
    preset: dict
    mass: float
    epsilons: list
    T: float
    dt_ref: float
    c_psi: float
    tolerances: dict
    out: str
    checkpoint_stride: int
    workers: int
    absorb: bool
    adiabatic: dict
    dispersive: dict
    source: str | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        return d

    @property
    def preset_name(self) -> str:
        return next(iter(self.preset))

    @property
    def preset_params(self) -> dict:
        return self.preset[self.preset_name]


def _is_pow2(n) -> bool:
    return isinstance(n, int) and not isinstance(n, bool) and n > 0 and n & (n - 1) == 0


def _num(name, v, positive=True):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{name} must be a number, got {v!r}")
    if positive and not v > 0:
        raise ValidationError(f"{name} must be positive, got {v!r}")
    return float(v)


def config_from_dict(raw: dict, source: str | None = None) -> ExperimentConfig:
    """Merge ``raw`` over the defaults and validate.  Unknown keys raise ParseError."""
    if not isinstance(raw, dict):
        raise ParseError("configuration must be a JSON object")
    for key in raw:
        if key not in DEFAULTS:
            raise ParseError(f"unknown key {key!r}")
    cfg = copy.deepcopy(DEFAULTS)
    for key, val in raw.items():
        if key in _SECTIONS:
            if not isinstance(val, dict):
                raise ParseError(f"{key!r} must be an object")
            for sub in val:
                if sub not in _SECTIONS[key]:
                    raise ParseError(f"unknown key {key + '.' + sub!r}")
            cfg[key].update(val)
        elif key == "preset":
            if not isinstance(val, dict) or len(val) != 1:
                raise ParseError("'preset' must be an object with exactly one preset name")
            (name, params), = val.items()
            if name not in _PRESET_KEYS:
                raise ParseError(f"unknown preset {name!r}")
            params = params or {}
            for sub in params:
                if sub not in _PRESET_KEYS[name]:
                    raise ParseError(f"unknown key {'preset.' + name + '.' + sub!r}")
            if name == "poschl_teller":
                merged = dict(DEFAULTS["preset"]["poschl_teller"])
                merged.update(params)
                params = merged
            cfg["preset"] = {name: params}
        else:
            cfg[key] = val

    if cfg["kind"] not in KINDS:
        raise ValidationError(f"kind must be one of {KINDS}, got {cfg['kind']!r}")
    for sect in ("grid", "dispersive"):
        if not _is_pow2(cfg[sect]["N"]):
            raise ValidationError(f"{sect}.N must be a power of two, got {cfg[sect]['N']!r}")
        if cfg[sect]["N"] < 256:
            raise ValidationError(f"{sect}.N must be at least 256")
        _num(f"{sect}.L", cfg[sect]["L"])
    eps = cfg["epsilons"]
    if not isinstance(eps, list) or not eps:
        raise ValidationError("epsilons must be a nonempty list")
    for e in eps:
        if not 0 < _num("epsilons", e) <= 1:
            raise ValidationError(f"epsilons must lie in (0, 1], got {e!r}")
    if len(set(eps)) != len(eps):
        raise ValidationError("epsilons must be distinct")
    if not 0 < _num("dispersive.epsilon", cfg["dispersive"]["epsilon"]) <= 1:
        raise ValidationError("dispersive.epsilon must lie in (0, 1]")
    for name in ("T", "dt_ref", "c_psi", "mass"):
        _num(name, cfg[name])
    if cfg["c_psi"] > 0.05:
        raise ValidationError("c_psi must not exceed 0.05")
    for name, v in cfg["tolerances"].items():
        _num(f"tolerances.{name}", v)
    for name in ("depth", "dt_path"):
        _num(f"adiabatic.{name}", cfg["adiabatic"][name])
    _num("adiabatic.amplitude", cfg["adiabatic"]["amplitude"], positive=False)
    _num("dispersive.depth", cfg["dispersive"]["depth"])
    _num("dispersive.T", cfg["dispersive"]["T"])
    for name in ("checkpoint_stride", "workers"):
        v = cfg[name]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ValidationError(f"{name} must be a positive integer, got {v!r}")
    if not isinstance(cfg["absorb"], bool):
        raise ValidationError("absorb must be true or false")
    if not isinstance(cfg["out"], str) or not cfg["out"]:
        raise ValidationError("out must be a nonempty string")
    if "poschl_teller" in cfg["preset"]:
        p = cfg["preset"]["poschl_teller"]
        _num("preset.poschl_teller.a", p["a"])
        _num("preset.poschl_teller.kick", p["kick"], positive=False)
    else:
        p = cfg["preset"]["file"]
        for k in ("phi0", "phi_dot0"):
            if not isinstance(p.get(k), str):
                raise ValidationError(f"preset.file.{k} must be a path")
    return ExperimentConfig(**cfg, source=source)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(raw, source=str(path))
