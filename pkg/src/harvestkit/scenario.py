"""Scenario files: one JSON document describing a full solver run.

Schema (unknown keys are rejected at every level):

    {
      "preset":   "logistic_1d" | "competition_2d" | "predator_prey_2d",
      "params":   { ... preset parameter overrides ... },
      "grid":     {"h": 0.1, "U": 10.0},
      "solver":   {"tolerance": 1e-8, "max_iters": 1000000, "sweep": "jacobi"},
      "simulate": {"paths": 10000, "T": 200.0, "dt": 0.001, "seed": 0},
      "output":   "out/run1"
    }

"solver" and "simulate" are optional and default as shown. A scenario
round-trips losslessly through to_dict()/from_dict().
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .grid import Grid, build_grid
from .model import Model, make_preset

_TOP_KEYS = {"preset", "params", "grid", "solver", "simulate", "output"}
_GRID_KEYS = {"h", "U"}
_SOLVER_KEYS = {"tolerance", "max_iters", "sweep"}
_SIM_KEYS = {"paths", "T", "dt", "seed"}


class ScenarioError(ValueError):
    pass


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    extra = set(section) - allowed
    if extra:
        raise ScenarioError(f"unknown keys in {where}: {sorted(extra)}")


@dataclass(frozen=True)
class GridSpec:
    h: float
    bound: float


@dataclass(frozen=True)
class SolverSpec:
    tolerance: float = 1e-8
    max_iters: int = 1_000_000
    sweep: str = "jacobi"


@dataclass(frozen=True)
class SimulateSpec:
    paths: int = 10_000
    horizon: float = 200.0
    dt: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class Scenario:
    preset: str
    params: dict = field(default_factory=dict)
    grid: GridSpec = GridSpec(h=0.1, bound=10.0)
    solver: SolverSpec = SolverSpec()
    simulate: SimulateSpec = SimulateSpec()
    output: str = "out"

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if not isinstance(doc, dict):
            raise ScenarioError("scenario document must be a JSON object")
        _reject_unknown(doc, _TOP_KEYS, "scenario")
        for key in ("preset", "grid", "output"):
            if key not in doc:
                raise ScenarioError(f"scenario is missing required key {key!r}")
        gsec = doc["grid"]
        if not isinstance(gsec, dict):
            raise ScenarioError("'grid' must be an object")
        _reject_unknown(gsec, _GRID_KEYS, "grid")
        if not _GRID_KEYS <= set(gsec):
            raise ScenarioError("'grid' needs both 'h' and 'U'")
        grid = GridSpec(h=float(gsec["h"]), bound=float(gsec["U"]))

        ssec = doc.get("solver", {})
        if not isinstance(ssec, dict):
            raise ScenarioError("'solver' must be an object")
        _reject_unknown(ssec, _SOLVER_KEYS, "solver")
        solver = SolverSpec(
            tolerance=float(ssec.get("tolerance", 1e-8)),
            max_iters=int(ssec.get("max_iters", 1_000_000)),
            sweep=str(ssec.get("sweep", "jacobi")),
        )
        if solver.sweep not in ("jacobi", "gauss-seidel"):
            raise ScenarioError(f"unknown sweep mode {solver.sweep!r}")
        if solver.tolerance <= 0:
            raise ScenarioError("solver.tolerance must be positive")

        msec = doc.get("simulate", {})
        if not isinstance(msec, dict):
            raise ScenarioError("'simulate' must be an object")
        _reject_unknown(msec, _SIM_KEYS, "simulate")
        sim = SimulateSpec(
            paths=int(msec.get("paths", 10_000)),
            horizon=float(msec.get("T", 200.0)),
            dt=float(msec.get("dt", 1e-3)),
            seed=int(msec.get("seed", 0)),
        )
        if sim.paths < 1 or sim.dt <= 0 or sim.horizon <= 0:
            raise ScenarioError("simulate needs paths >= 1, T > 0, dt > 0")

        params = doc.get("params", {})
        if not isinstance(params, dict):
            raise ScenarioError("'params' must be an object")
        return cls(
            preset=str(doc["preset"]),
            params=params,
            grid=grid,
            solver=solver,
            simulate=sim,
            output=str(doc["output"]),
        )

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "params": self.params,
            "grid": {"h": self.grid.h, "U": self.grid.bound},
            "solver": {
                "tolerance": self.solver.tolerance,
                "max_iters": self.solver.max_iters,
                "sweep": self.solver.sweep,
            },
            "simulate": {
                "paths": self.simulate.paths,
                "T": self.simulate.horizon,
                "dt": self.simulate.dt,
                "seed": self.simulate.seed,
            },
            "output": self.output,
        }

    @classmethod
    def load(cls, path) -> "Scenario":
        raw = Path(path).read_text(encoding="utf-8")
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as err:
            raise ScenarioError(f"invalid JSON in {path}: {err}") from None
        return cls.from_dict(doc)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def build(self) -> tuple[Model, Grid]:
        model = make_preset(self.preset, self.params)
        grid = build_grid(self.grid.h, self.grid.bound, model.dim)
        return model, grid

    def output_dir(self) -> Path:
        return Path(self.output)
