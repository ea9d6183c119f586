"""Scenario configuration: a single TOML file, parse-then-validate.

Every validation failure names the offending field path.  All numerics are
explicit; there are no defaults for dt or grid sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .boundary import BoundaryConditionSpec, classify_conditions
from .fields import PiecewiseField
from .interface_ops import InterfaceSpec
from .profiles import CoefficientProfile, SideProfile
from .simulate import MovingPath, Scenario


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class LoadedConfig:
    profile: CoefficientProfile
    bc: BoundaryConditionSpec
    interface: InterfaceSpec
    initial: PiecewiseField
    dt: float
    t_end: float
    N_minus: int
    N_plus: int
    path: MovingPath | None
    seed: int
    spectrum_region: tuple | None
    spectrum_max_seeds: int
    raw: dict

    def scenario(self) -> Scenario:
        """Build the simulation scenario (requires a valid classification)."""
        return Scenario(self.profile, self.bc, self.interface, self.initial,
                        dt=self.dt, t_end=self.t_end, N_minus=self.N_minus,
                        N_plus=self.N_plus, path=self.path, seed=self.seed)


def _need(table: dict, key: str, path: str):
    if key not in table:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return table[key]


def _number(table, key, path, positive=False, nonnegative=False):
    v = _need(table, key, path)
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        raise ConfigError(f"{path}.{key}", "expected a finite number")
    if positive and v <= 0:
        raise ConfigError(f"{path}.{key}", "must be positive")
    if nonnegative and v < 0:
        raise ConfigError(f"{path}.{key}", "must be nonnegative")
    return float(v)


def _coeff_list(table, key, path):
    v = _need(table, key, path)
    if not isinstance(v, list) or not v or not all(
            isinstance(c, (int, float)) and not isinstance(c, bool) for c in v):
        raise ConfigError(f"{path}.{key}", "expected a nonempty list of numbers")
    return [float(c) for c in v]


def _side_profile(table: dict, path: str) -> SideProfile:
    kind = _need(table, "kind", path)
    if kind == "constant-diagonal":
        return SideProfile.constant(_number(table, "q11", path, positive=True),
                                    _number(table, "q22", path, positive=True))
    if kind == "constant-full":
        q11 = _number(table, "q11", path, positive=True)
        q22 = _number(table, "q22", path, positive=True)
        q12 = _number(table, "q12", path)
        if q11 * q22 - q12 * q12 <= 0:
            raise ConfigError(path, "constant-full entries are not positive definite")
        return SideProfile.constant(q11, q22, q12)
    if kind == "polynomial-diagonal":
        return SideProfile.diagonal_poly(_coeff_list(table, "q11", path),
                                         _coeff_list(table, "q22", path))
    raise ConfigError(f"{path}.kind", f"unknown profile kind {kind!r}")


def load_config(data: dict) -> LoadedConfig:
    dom = _need(data, "domain", "")
    a = _number(dom, "a", "domain")
    b = _number(dom, "b", "domain")
    if not a < b:
        raise ConfigError("domain", "need a < b")

    prof_tab = _need(data, "profile", "")
    minus = _side_profile(_need(prof_tab, "minus", "profile"), "profile.minus")
    plus = _side_profile(_need(prof_tab, "plus", "profile"), "profile.plus")
    reference = float(prof_tab.get("reference", 0.0))
    try:
        profile = CoefficientProfile.build(minus, plus, a, b, reference)
    except ValueError as exc:
        raise ConfigError("profile", str(exc)) from exc

    btab = _need(data, "boundary", "")
    wb_rows = _need(btab, "wb", "boundary")
    try:
        WB = np.asarray(wb_rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError("boundary.wb", "expected a 2x4 numeric array") from exc
    if WB.shape != (2, 4):
        raise ConfigError("boundary.wb", f"expected shape (2, 4), got {WB.shape}")

    itab = _need(data, "interface", "")
    r = _number(itab, "r", "interface", nonnegative=True)
    path = None
    if "path" in itab:
        kind = itab["path"]
        if kind not in ("fixed", "linear", "sinusoidal"):
            raise ConfigError("interface.path", f"unknown path kind {kind!r}")
        l0 = _number(itab, "l0", "interface")
        if kind == "linear":
            path = MovingPath("linear", l0=l0, rate=_number(itab, "rate", "interface"))
        elif kind == "sinusoidal":
            path = MovingPath("sinusoidal", l0=l0,
                              amplitude=_number(itab, "amplitude", "interface"),
                              frequency=_number(itab, "frequency", "interface"))
        else:
            path = MovingPath("fixed", l0=l0)
        l_init = path(0.0)
    else:
        l_init = _number(itab, "l0", "interface")
    if not a < l_init < b:
        raise ConfigError("interface.l0", "interface must start inside (a, b)")

    bc = classify_conditions(WB, r)

    init_tab = _need(data, "initial", "")
    coords = init_tab.get("coordinates", "z")
    if coords not in ("z", "z-l", "z-a"):
        raise ConfigError("initial.coordinates", f"unknown coordinates {coords!r}")
    try:
        initial = PiecewiseField.from_coeff_lists(
            a, l_init, b,
            [_coeff_list(init_tab, "minus1", "initial"),
             _coeff_list(init_tab, "minus2", "initial")],
            [_coeff_list(init_tab, "plus1", "initial"),
             _coeff_list(init_tab, "plus2", "initial")],
            coordinates=coords)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("initial", str(exc)) from exc

    ntab = _need(data, "numerics", "")
    n_minus = int(_number(ntab, "n_minus", "numerics", positive=True))
    n_plus = int(_number(ntab, "n_plus", "numerics", positive=True))
    dt = _number(ntab, "dt", "numerics", positive=True)
    t_end = _number(ntab, "t_end", "numerics", positive=True)

    seed = int(data.get("seeds", {}).get("seed", 0))

    region = None
    max_seeds = 40
    if "spectrum" in data:
        stab = data["spectrum"]
        region = (_number(stab, "re_min", "spectrum"),
                  _number(stab, "re_max", "spectrum"),
                  _number(stab, "im_min", "spectrum"),
                  _number(stab, "im_max", "spectrum"))
        if region[0] >= region[1] or region[2] >= region[3]:
            raise ConfigError("spectrum", "empty scan region")
        max_seeds = int(stab.get("max_seeds", 40))

    return LoadedConfig(profile, bc, InterfaceSpec(l_init, r), initial,
                        dt, t_end, n_minus, n_plus, path, seed, region,
                        max_seeds, data)


def load_config_file(path) -> LoadedConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"TOML parse error: {exc}") from exc
    return load_config(data)
