"""Run configuration read from an INI-style file.

Sections: [params], [flow], [grid], [boundary], [run].  Every key is
optional; see ``configs/default.ini`` in the repository for the full list.
The output directory can be overridden with the SUPERSHEAR_OUT environment
variable, and command-line flags override both.
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .domain import BaseFlow, PhysicalParams, make_flow, validate_supersonic
from .errors import ConfigError

OUT_ENV = "SUPERSHEAR_OUT"
SUITES = ("solver-verification", "trivial-flow", "residual-orders", "contraction", "energy",
          "zero-viscosity", "end-to-end")


@dataclass(frozen=True)
class RunConfig:
    params: PhysicalParams = field(default_factory=PhysicalParams)
    flow_kind: str = "quartic"
    flow_kw: dict = field(default_factory=dict)
    n1: int = 64
    n2: int = 128
    grading: str = "stretched"
    max_ratio: float = 1.15
    wall_spacing: float | None = None
    amplitude_scale: float = 1.0
    modes: int = 3
    seed: int = 0
    sweep: tuple = (0.2, 0.1, 0.05, 0.025)
    suites: tuple = SUITES
    out: Path = Path("supershear-out")
    workers: int = 1
    tol: float = 1e-9
    max_outer: int = 50
    linear_method: str = "gmres"
    delta: float | None = None
    a0: float = 0.4
    b: float = 0.5
    layer_Y_max: float = 12.0
    layer_dY: float = 0.02
    layer_substeps: int = 8

    def flow(self) -> BaseFlow:
        try:
            return make_flow(self.flow_kind, **self.flow_kw)
        except TypeError as exc:
            raise ConfigError(f"[flow] {self.flow_kind}: {exc}") from None

    def at_eps(self, eps: float) -> PhysicalParams:
        return dataclasses.replace(self.params, eps=eps)

    def validate(self, need_sweep: bool = False) -> "RunConfig":
        if self.n1 < 8 or self.n2 < 8:
            raise ConfigError("grid counts n1, n2 must be at least 8")
        bad = [s for s in self.suites if s not in SUITES]
        if bad:
            raise ConfigError(f"unknown suites {bad}; choose from {list(SUITES)}")
        if self.linear_method not in ("gmres", "picard"):
            raise ConfigError("linear_method must be gmres or picard")
        if self.amplitude_scale < 0:
            raise ConfigError("amplitude_scale must be non-negative")
        if any(e <= 0 or e > 1 for e in self.sweep):
            raise ConfigError("sweep values must lie in (0, 1]")
        if need_sweep:
            if len(self.sweep) < 3:
                raise ConfigError("a slope fit needs at least three sweep values")
            if any(a <= b for a, b in zip(self.sweep, self.sweep[1:])):
                raise ConfigError("sweep values must be strictly decreasing")
        validate_supersonic(self.flow(), self.params)
        return self

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["out"] = str(self.out)
        d["sweep"] = list(self.sweep)
        d["suites"] = list(self.suites)
        return d


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


_PARAM_KEYS = {f.name for f in dataclasses.fields(PhysicalParams)}
_GRID_KEYS = {"n1": int, "n2": int, "grading": str, "max_ratio": float, "wall_spacing": float}
_BOUNDARY_KEYS = {"amplitude_scale": float, "modes": int, "seed": int}
_RUN_KEYS = {"sweep": _floats, "suites": lambda s: tuple(t for t in s.replace(",", " ").split()),
             "out": Path, "workers": int, "tol": float, "max_outer": int, "linear_method": str,
             "delta": float, "a0": float, "b": float, "layer_Y_max": float, "layer_dY": float,
             "layer_substeps": int, "seed": int}


def _convert(section: str, key: str, raw: str, table: dict):
    if key not in table:
        raise ConfigError(f"unknown key [{section}] {key}")
    if raw.strip().lower() in ("", "none", "default"):
        return None
    try:
        return table[key](raw.strip())
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None


def load_config(path=None, overrides: dict | None = None, env=None) -> RunConfig:
    """Read a config file (optional), then the environment, then explicit overrides."""
    env = os.environ if env is None else env
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str     # keys such as L and layer_Y_max are case-sensitive
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
    unknown = set(cp.sections()) - {"params", "flow", "grid", "boundary", "run"}
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")

    kw: dict = {}
    params_kw = {}
    if cp.has_section("params"):
        for key, raw in cp.items("params"):
            if key not in _PARAM_KEYS:
                raise ConfigError(f"unknown key [params] {key}")
            try:
                params_kw[key] = float(raw)
            except ValueError:
                raise ConfigError(f"[params] {key} = {raw!r} is not a number") from None
    flow_kw = {}
    if cp.has_section("flow"):
        for key, raw in cp.items("flow"):
            if key == "kind":
                kw["flow_kind"] = raw.strip()
            elif key in ("x2", "mu"):
                flow_kw[key] = list(_floats(raw))
            else:
                try:
                    flow_kw[key] = float(raw)
                except ValueError:
                    raise ConfigError(f"[flow] {key} = {raw!r} is not a number") from None
    kw["flow_kw"] = flow_kw
    for section, table in (("grid", _GRID_KEYS), ("boundary", _BOUNDARY_KEYS), ("run", _RUN_KEYS)):
        if cp.has_section(section):
            for key, raw in cp.items(section):
                val = _convert(section, key, raw, table)
                if val is not None or key in ("wall_spacing", "delta"):
                    kw[key] = val

    if env.get(OUT_ENV):
        kw["out"] = Path(env[OUT_ENV])
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key in _PARAM_KEYS:
            params_kw[key] = float(val)
        else:
            kw[key] = val
    try:
        kw["params"] = PhysicalParams(**params_kw)
        cfg = RunConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    except ConfigError:
        raise
    return cfg
