"""Solution containers for the DC and AC solvers, with JSON round-trip."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SchemaMismatch

SOLUTION_SCHEMA = 1


@dataclass
class RegionResult:
    """Primal values of one region (or of the whole network for a centralized solve).

    Powers are MW/MVAr, angles radians, magnitudes pu. Generator arrays
    follow the region case's generator rows; out-of-service units hold 0.
    """

    pg: np.ndarray
    theta: np.ndarray
    virtual_theta: dict = field(default_factory=dict)  # global bus id -> rad
    cost: float = 0.0
    qg: np.ndarray | None = None
    v: np.ndarray | None = None
    virtual_v: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "pg": [float(x) for x in self.pg],
            "theta": [float(x) for x in self.theta],
            "virtual_theta": {str(k): float(v) for k, v in sorted(self.virtual_theta.items())},
            "cost": float(self.cost),
        }
        if self.v is not None:
            out["qg"] = [float(x) for x in self.qg]
            out["v"] = [float(x) for x in self.v]
            out["virtual_v"] = {str(k): float(v) for k, v in sorted(self.virtual_v.items())}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RegionResult":
        ac = "v" in d
        return cls(
            np.asarray(d["pg"], dtype=float),
            np.asarray(d["theta"], dtype=float),
            {int(k): float(v) for k, v in d.get("virtual_theta", {}).items()},
            float(d.get("cost", 0.0)),
            np.asarray(d["qg"], dtype=float) if ac else None,
            np.asarray(d["v"], dtype=float) if ac else None,
            {int(k): float(v) for k, v in d["virtual_v"].items()} if ac else None,
        )


@dataclass
class OpfSolution:
    mode: str                      # "dc" or "ac"
    regions: dict                  # region id -> RegionResult
    tie_flows: tuple = ()          # per tie: (MW leaving from-bus per region A, MW leaving to-bus per region B)
    total_cost: float = 0.0
    converged: bool = True
    iterations: int = 0
    residual: float = 0.0

    @property
    def total_generation_mw(self) -> float:
        return float(sum(r.pg.sum() for r in self.regions.values()))

    def to_dict(self) -> dict:
        return {
            "schema_version": SOLUTION_SCHEMA,
            "mode": self.mode,
            "total_cost": float(self.total_cost),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "residual": float(self.residual),
            "tie_flows": [[float(a), float(b)] for a, b in self.tie_flows],
            "regions": {str(k): r.to_dict() for k, r in sorted(self.regions.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OpfSolution":
        if d.get("schema_version") != SOLUTION_SCHEMA or d.get("mode") not in ("dc", "ac"):
            raise SchemaMismatch("unrecognized solution file")
        return cls(
            d["mode"],
            {int(k): RegionResult.from_dict(r) for k, r in d["regions"].items()},
            tuple((a, b) for a, b in d.get("tie_flows", [])),
            d["total_cost"],
            d["converged"],
            d["iterations"],
            d["residual"],
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "OpfSolution":
        return cls.from_dict(json.loads(Path(path).read_text()))


# Names used by the solver interfaces
DcSolution = OpfSolution
AcSolution = OpfSolution
