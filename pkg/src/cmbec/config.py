"""Scenario schema: one YAML file, every key optional, defaults reproduce the reference runs.

::

    mode: compare               # gpe | meanfield | positivep | compare | oracle-check
    physics:
      n_atoms: 100
      g1dN: [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0]   # sweep grid of g1d * N
      kappa_tilde: [1.0, 5.0]
    lattice:
      dx: 0.33
      half_width: null          # null -> sized from the widest cloud of the sweep
      odd: true
    simulation:
      dt: 1.0e-4
      n_trajectories: 20000
      t_final: 1.5707963267948966   # quarter trap period
      seed: 0
      implicit_iterations: 4
      scheme: midpoint          # or euler (Ito Euler-Maruyama)
      chunk_size: 256
      threads: 1
      divergence_threshold: null
      snapshots: null           # extra snapshot times, t_final always included
      checkpoint: false
    meanfield:
      dt: 1.0e-4
      closure: verbatim         # or consistent
    gpe:
      dtau: 1.0e-3
      tol: 1.0e-10
    oracle:
      trajectories: 100000
      dt: 1.0e-4
      n_max: 12
      z_max: 3.0
    output:
      dir: out
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .core import QUARTER_PERIOD

MODES = ("gpe", "meanfield", "positivep", "compare", "oracle-check")

DEFAULTS = {
    "mode": "compare",
    "physics": {
        "n_atoms": 100.0,
        "g1dN": [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0],
        "kappa_tilde": [1.0, 5.0],
    },
    "lattice": {"dx": 0.33, "half_width": None, "odd": True},
    "simulation": {
        "dt": 1e-4,
        "n_trajectories": 20000,
        "t_final": QUARTER_PERIOD,
        "seed": 0,
        "implicit_iterations": 4,
        "scheme": "midpoint",
        "chunk_size": 256,
        "threads": 1,
        "divergence_threshold": None,
        "snapshots": None,
        "checkpoint": False,
    },
    "meanfield": {"dt": 1e-4, "closure": "verbatim"},
    "gpe": {"dtau": 1e-3, "tol": 1e-10},
    "oracle": {"trajectories": 100000, "dt": 1e-4, "n_max": 12, "z_max": 3.0},
    "output": {"dir": "out"},
}


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    mode: str
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def out_dir(self) -> Path:
        return Path(self.data["output"]["dir"])

    @property
    def g_values(self) -> list[float]:
        return self.data["physics"]["g1dN"]

    @property
    def kappa_values(self) -> list[float]:
        return self.data["physics"]["kappa_tilde"]


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise SchemaError(f"unknown key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise SchemaError(f"'{where}' must be a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def _number(val, where, lo=None, strict=False, integer=False, allow_none=False):
    if val is None and allow_none:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise SchemaError(f"'{where}' must be a number")
    if integer and (not float(val).is_integer()):
        raise SchemaError(f"'{where}' must be an integer")
    if not math.isfinite(val):
        raise SchemaError(f"'{where}' must be finite")
    if lo is not None and (val <= lo if strict else val < lo):
        raise SchemaError(f"'{where}' must be {'>' if strict else '>='} {lo}")
    return int(val) if integer else float(val)


def _grid(val, where):
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        val = [val]
    if not isinstance(val, list) or not val:
        raise SchemaError(f"'{where}' must be a number or a non-empty list")
    return [_number(v, where, lo=0.0) for v in val]


def validate(raw: dict) -> Scenario:
    """Fill defaults and check every field before anything is computed."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise SchemaError("config must be a mapping")
    d = _merge(DEFAULTS, raw)
    if d["mode"] not in MODES:
        raise SchemaError(f"mode must be one of {', '.join(MODES)}")
    ph, lat, sim = d["physics"], d["lattice"], d["simulation"]
    ph["n_atoms"] = _number(ph["n_atoms"], "physics.n_atoms", 0.0, strict=True)
    ph["g1dN"] = _grid(ph["g1dN"], "physics.g1dN")
    ph["kappa_tilde"] = _grid(ph["kappa_tilde"], "physics.kappa_tilde")
    lat["dx"] = _number(lat["dx"], "lattice.dx", 0.0, strict=True)
    lat["half_width"] = _number(lat["half_width"], "lattice.half_width", 0.0, strict=True,
                                allow_none=True)
    if not isinstance(lat["odd"], bool):
        raise SchemaError("'lattice.odd' must be true or false")
    sim["dt"] = _number(sim["dt"], "simulation.dt", 0.0, strict=True)
    if sim["dt"] > 1e-2:
        raise SchemaError("'simulation.dt' must be <= 1e-2")
    sim["n_trajectories"] = _number(sim["n_trajectories"], "simulation.n_trajectories", 1,
                                    integer=True)
    sim["t_final"] = _number(sim["t_final"], "simulation.t_final", 0.0, strict=True)
    sim["seed"] = _number(sim["seed"], "simulation.seed", 0, integer=True)
    sim["implicit_iterations"] = _number(sim["implicit_iterations"],
                                         "simulation.implicit_iterations", 1, integer=True)
    if sim["scheme"] not in ("midpoint", "euler"):
        raise SchemaError("'simulation.scheme' must be midpoint or euler")
    sim["chunk_size"] = _number(sim["chunk_size"], "simulation.chunk_size", 1, integer=True)
    sim["threads"] = _number(sim["threads"], "simulation.threads", 1, integer=True)
    sim["divergence_threshold"] = _number(sim["divergence_threshold"],
                                          "simulation.divergence_threshold", 0.0, strict=True,
                                          allow_none=True)
    if sim["snapshots"] is not None:
        snaps = sorted(set(_grid(sim["snapshots"], "simulation.snapshots")))
        if snaps[-1] > sim["t_final"]:
            raise SchemaError("'simulation.snapshots' must lie within [0, t_final]")
        sim["snapshots"] = snaps
    if not isinstance(sim["checkpoint"], bool):
        raise SchemaError("'simulation.checkpoint' must be true or false")
    mf = d["meanfield"]
    mf["dt"] = _number(mf["dt"], "meanfield.dt", 0.0, strict=True)
    if mf["closure"] not in ("verbatim", "consistent"):
        raise SchemaError("'meanfield.closure' must be verbatim or consistent")
    d["gpe"]["dtau"] = _number(d["gpe"]["dtau"], "gpe.dtau", 0.0, strict=True)
    d["gpe"]["tol"] = _number(d["gpe"]["tol"], "gpe.tol", 0.0, strict=True)
    orc = d["oracle"]
    orc["trajectories"] = _number(orc["trajectories"], "oracle.trajectories", 2, integer=True)
    orc["dt"] = _number(orc["dt"], "oracle.dt", 0.0, strict=True)
    orc["n_max"] = _number(orc["n_max"], "oracle.n_max", 1, integer=True)
    orc["z_max"] = _number(orc["z_max"], "oracle.z_max", 0.0, strict=True)
    if not isinstance(d["output"]["dir"], str):
        raise SchemaError("'output.dir' must be a path string")
    return Scenario(d["mode"], d)


def load(path=None, overrides: dict | None = None) -> Scenario:
    """Read a YAML file (or nothing), apply overrides, validate."""
    raw = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise SchemaError(f"cannot read config: {exc}") from exc
        except yaml.YAMLError as exc:
            raise SchemaError(f"invalid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise SchemaError("config must be a mapping")
    for dotted, val in (overrides or {}).items():
        node = raw
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise SchemaError(f"'{key}' must be a mapping")
        node[leaf] = val
    return validate(raw)
