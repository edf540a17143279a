"""Scenario files (TOML or JSON) with field-path validation.

A scenario bundles the mass system, the potential declaration, initial data,
Graf and surface parameters and run settings.  Indices in files are 1-based.
"""
from __future__ import annotations

import json
import sys as _sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import CollisionLabError
from .graf import GrafParams, SurfaceParams, x_max
from .mass_geometry import MassSystem, PhasePoint
from .partitions import SetPartition
from .potentials import PairPotentialSpec, PotentialSet

if _sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FAMILIES = ("gravity", "coulomb", "homogeneous", "yukawa", "free", "pairs")


class ConfigError(CollisionLabError, ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _get(d: dict, key: str, path: str, kind, default=..., check=None):
    full = f"{path}.{key}" if path else key
    if key not in d:
        if default is ...:
            raise ConfigError(full, "missing required field")
        return default
    val = d[key]
    try:
        if kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise TypeError
            val = float(val)
        elif kind is int:
            if isinstance(val, bool) or not isinstance(val, int):
                raise TypeError
        elif kind is str:
            if not isinstance(val, str):
                raise TypeError
    except TypeError:
        raise ConfigError(full, f"expected {kind.__name__}, got {type(val).__name__}") from None
    if check is not None:
        msg = check(val)
        if msg:
            raise ConfigError(full, msg)
    return val


def _float_list(d: dict, key: str, path: str, default=...):
    full = f"{path}.{key}"
    if key not in d:
        if default is ...:
            raise ConfigError(full, "missing required field")
        return default
    val = d[key]
    if not isinstance(val, list):
        raise ConfigError(full, "expected a list of numbers")
    out = []
    for i, v in enumerate(val):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{full}[{i}]", f"expected number, got {type(v).__name__}")
        out.append(float(v))
    return out


def _matrix(d: dict, key: str, path: str, n: int, dim: int):
    full = f"{path}.{key}"
    rows = d.get(key)
    if not isinstance(rows, list) or len(rows) != n:
        raise ConfigError(full, f"expected {n} rows of length {dim}")
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != dim:
            raise ConfigError(f"{full}[{i}]", f"expected a list of {dim} numbers")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
                raise ConfigError(f"{full}[{i}][{j}]", "expected a finite number")
    return np.array(rows, dtype=float)


def _positive(v):
    return None if v > 0 else "must be positive"


@dataclass(frozen=True)
class RunSettings:
    horizon: float = 10.0
    eps_stop: float = 1e-6
    rtol: float = 3e-14
    atol: float = 1e-14
    seed: int = 0
    samples: int = 100_000
    eps_grid: tuple = ()
    t_grid: tuple = ()
    n: int = 4
    energy: float | None = None
    box: float = 1.0


@dataclass(frozen=True)
class Scenario:
    system: MassSystem
    potential: dict  # normalized declaration, see FAMILIES
    initial: PhasePoint | None
    graf: GrafParams
    surface: SurfaceParams
    run: RunSettings
    surface_m: tuple[int, int] = (1, 6)
    partition: SetPartition | None = None

    def potential_set(self) -> PotentialSet:
        return build_potential(self.system, self.potential)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "system": {"masses": list(self.system.masses), "d": self.system.d},
            "potential": self.potential,
            "graf": {"delta": self.graf.delta, "k": self.graf.k},
            "surface": {"x": self.surface.x, "beta": self.surface.beta, "energy": self.surface.energy,
                        "m_min": self.surface_m[0], "m_max": self.surface_m[1]},
            "run": {"horizon": self.run.horizon, "eps_stop": self.run.eps_stop, "rtol": self.run.rtol,
                    "atol": self.run.atol, "seed": self.run.seed, "samples": self.run.samples,
                    "eps_grid": list(self.run.eps_grid), "t_grid": list(self.run.t_grid), "n": self.run.n,
                    "box": self.run.box},
        }
        if self.run.energy is not None:
            out["run"]["energy"] = self.run.energy
        if self.initial is not None:
            out["initial"] = {"q": np.asarray(self.initial.q).tolist(), "p": np.asarray(self.initial.p).tolist()}
        if self.partition is not None:
            out["surface"]["partition"] = json.loads(self.partition.to_json())
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _parse_potential(raw: dict, system: MassSystem) -> dict:
    path = "potential"
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a table")
    fam = _get(raw, "family", path, str, "gravity",
               lambda v: None if v in FAMILIES else f"unknown family {v!r}; expected one of {FAMILIES}")
    out: dict[str, Any] = {"family": fam}
    if fam == "coulomb":
        ch = _float_list(raw, "charges", path)
        if len(ch) != system.n:
            raise ConfigError(f"{path}.charges", f"expected {system.n} charges")
        out["charges"] = ch
    elif fam == "homogeneous":
        out["Z"] = _get(raw, "Z", path, float)
        out["alpha"] = _get(raw, "alpha", path, float, 1.0, _positive)
    elif fam == "yukawa":
        out["Z"] = _get(raw, "Z", path, float)
        out["yukawa_mass"] = _get(raw, "yukawa_mass", path, float, check=_positive)
    elif fam == "pairs":
        pairs = raw.get("pairs")
        if not isinstance(pairs, list) or not pairs:
            raise ConfigError(f"{path}.pairs", "expected a non-empty list of pair tables")
        clean = []
        for i, item in enumerate(pairs):
            ip = f"{path}.pairs[{i}]"
            if not isinstance(item, dict):
                raise ConfigError(ip, "expected a table")
            pr = item.get("pair")
            if (not isinstance(pr, list) or len(pr) != 2 or not all(isinstance(v, int) for v in pr)
                    or not all(1 <= v <= system.n for v in pr) or pr[0] == pr[1]):
                raise ConfigError(f"{ip}.pair", f"expected two distinct indices in 1..{system.n}")
            entry = {k: v for k, v in item.items() if k != "pair"}
            try:
                spec = PairPotentialSpec.from_dict(entry)
            except (KeyError, TypeError) as exc:
                raise ConfigError(ip, f"incomplete pair specification ({exc})") from None
            except CollisionLabError as exc:
                raise ConfigError(ip, str(exc)) from None
            clean.append({"pair": [int(pr[0]), int(pr[1])], **spec.to_dict()})
        out["pairs"] = clean
    return out


def build_potential(system: MassSystem, decl: dict) -> PotentialSet:
    fam = decl["family"]
    if fam == "gravity":
        return PotentialSet.gravity(system)
    if fam == "coulomb":
        return PotentialSet.coulomb(decl["charges"])
    if fam == "free":
        return PotentialSet.free(system.n)
    if fam == "homogeneous":
        return PotentialSet.uniform(system.n, PairPotentialSpec("homogeneous", decl["Z"], decl["alpha"]))
    if fam == "yukawa":
        return PotentialSet.uniform(system.n, PairPotentialSpec("yukawa", decl["Z"], 1.0, decl["yukawa_mass"]))
    specs = {}
    for item in decl["pairs"]:
        i, j = item["pair"]
        specs[(i - 1, j - 1)] = PairPotentialSpec.from_dict(item)
    return PotentialSet(system.n, specs)


def parse_scenario(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a table")
    sysraw = data.get("system")
    if not isinstance(sysraw, dict):
        raise ConfigError("system", "missing required table")
    masses = _float_list(sysraw, "masses", "system")
    for i, m in enumerate(masses):
        if not (m > 0 and np.isfinite(m)):
            raise ConfigError(f"system.masses[{i}]", "must be positive and finite")
    if len(masses) < 2:
        raise ConfigError("system.masses", "need at least two particles")
    d = _get(sysraw, "d", "system", int, 2, lambda v: None if v >= 1 else "must be >= 1")
    system = MassSystem(tuple(masses), d)
    potential = _parse_potential(data.get("potential", {"family": "gravity"}), system)

    initial = None
    if "initial" in data:
        ini = data["initial"]
        if not isinstance(ini, dict):
            raise ConfigError("initial", "expected a table")
        q = _matrix(ini, "q", "initial", system.n, d)
        p = _matrix(ini, "p", "initial", system.n, d) if "p" in ini else np.zeros((system.n, d))
        initial = PhasePoint(q, p)

    g = data.get("graf", {})
    delta = _get(g, "delta", "graf", float, 0.05, lambda v: None if 0 < v < 1 else "must lie in (0, 1)")
    k = _get(g, "k", "graf", float, 1.0, _positive)

    s = data.get("surface", {})
    run_raw = data.get("run", {})
    alpha = build_potential(system, potential).alpha
    xm = x_max(d, system.n)
    x = _get(s, "x", "surface", float, 0.1 * xm,
             lambda v: None if (d == 1 and v >= 0) or 0 < v < xm else f"must lie in (0, {xm:.6g})")
    beta_default = 0.1 * max(1 - alpha / 2, 0.0) * (d - 1) / (d * (system.n - 1))
    if d >= 2 and beta_default <= 0:
        beta_default = 0.01  # alpha >= 2: no admissible default, keep the field valid
    beta = _get(s, "beta", "surface", float, beta_default,
                lambda v: None if v >= 0 and (d == 1 or v > 0) else "must be positive")
    energy = _get(s, "energy", "surface", float, 0.0)
    m_min = _get(s, "m_min", "surface", int, 1, lambda v: None if v >= 1 else "must be >= 1")
    m_max = _get(s, "m_max", "surface", int, 6, lambda v: None if v >= m_min + 3 else "need at least 4 surfaces")
    partition = None
    if "partition" in s:
        try:
            partition = SetPartition.from_json(json.dumps(s["partition"]))
        except (CollisionLabError, TypeError, ValueError) as exc:
            raise ConfigError("surface.partition", str(exc)) from None
        if partition.n != system.n or partition.is_finest:
            raise ConfigError("surface.partition", f"expected a non-finest partition of 1..{system.n}")

    run = RunSettings(
        horizon=_get(run_raw, "horizon", "run", float, 10.0, _positive),
        eps_stop=_get(run_raw, "eps_stop", "run", float, 1e-6, _positive),
        rtol=_get(run_raw, "rtol", "run", float, 3e-14, _positive),
        atol=_get(run_raw, "atol", "run", float, 1e-14, _positive),
        seed=_get(run_raw, "seed", "run", int, 0, lambda v: None if 0 <= v < 2**64 else "must be an unsigned 64-bit integer"),
        samples=_get(run_raw, "samples", "run", int, 100_000, _positive),
        eps_grid=tuple(_float_list(run_raw, "eps_grid", "run", [])),
        t_grid=tuple(_float_list(run_raw, "t_grid", "run", [])),
        n=_get(run_raw, "n", "run", int, 4, _positive),
        energy=_get(run_raw, "energy", "run", float, None),
        box=_get(run_raw, "box", "run", float, 1.0, _positive),
    )
    return Scenario(system, potential, initial, GrafParams(delta, k), SurfaceParams(m_min, x, beta, energy),
                    run, (m_min, m_max), partition)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file ({exc.strerror})") from None
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw)
        else:
            data = tomllib.loads(raw.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(str(path), f"parse error: {exc}") from None
    return parse_scenario(data)


def loads_scenario(text: str) -> Scenario:
    return parse_scenario(json.loads(text))
