"""Consensus ADMM bookkeeping shared by the DC and AC solvers.

Each boundary quantity (the angle, and for AC also the magnitude, of a bus
at the end of a tie-line) is seen twice: as a real variable in the bus's
home region and as a virtual copy in the neighboring region. A
:class:`SharedVariable` carries both views, the consensus value ``z`` and
one multiplier per view.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

from .errors import InvalidState, SubproblemFailure

log = logging.getLogger(__name__)

ANGLE = "va"
MAGNITUDE = "vm"


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1000.0
    tolerance: float = 1e-4
    max_iters: int = 2000
    centralized_cost: float | None = None
    workers: int = 1
    progress_every: int = 0  # 0 disables periodic progress logging

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class SharedVariable:
    id: int
    global_bus: int
    owner_regions: tuple          # (home region, neighbor region holding the virtual copy)
    z: float
    lambda_per_region: tuple      # aligned with owner_regions
    views: tuple = (math.nan, math.nan)
    quantity: str = ANGLE

    @property
    def home(self) -> int:
        return self.owner_regions[0]

    @property
    def neighbor(self) -> int:
        return self.owner_regions[1]


@dataclass(frozen=True)
class AdmmState:
    iteration: int
    shared_variables: tuple
    regions: dict = field(default_factory=dict)   # region id -> last subproblem solution
    residual_history: tuple = ()
    cost_history: tuple = ()
    gap_history: tuple | None = None

    def __post_init__(self):
        if len(self.residual_history) != self.iteration:
            raise InvalidState("residual history length must equal the iteration count")


def initial_value(quantity: str) -> float:
    # cold start: flat angles, 1 pu magnitudes
    return 0.0 if quantity == ANGLE else 1.0


def build_shared_variables(mrc, quantities=(ANGLE,)) -> tuple:
    """One shared variable per (tie endpoint bus, neighbor region, quantity).

    Order follows the tie-line table, from-end before to-end, which fixes
    the order of every dual update.
    """
    seen = set()
    out = []
    for t in mrc.tie_lines:
        for bus, home, other in ((t.global_from_bus, t.from_region, t.to_region),
                                 (t.global_to_bus, t.to_region, t.from_region)):
            if (bus, other) in seen:
                continue
            seen.add((bus, other))
            for q in quantities:
                out.append(SharedVariable(len(out), bus, (home, other), initial_value(q),
                                          (1.0, 1.0), quantity=q))
    return tuple(out)


def views_for_region(shared, region_id: int) -> list:
    """Shared variables that appear in ``region_id``'s subproblem."""
    return [s for s in shared if region_id in s.owner_regions]


def penalty_terms(sv: SharedVariable, region_id: int, rho: float):
    """Quadratic ``a/2 x^2 + b x + c`` equal to ``lam (x - z) + rho/2 (x - z)^2``."""
    lam = sv.lambda_per_region[sv.owner_regions.index(region_id)]
    return rho, lam - rho * sv.z, 0.5 * rho * sv.z ** 2 - lam * sv.z


def update_duals(state: AdmmState, rho: float) -> AdmmState:
    """Average the two views into ``z``, then step each multiplier by ``rho (view - z)``."""
    updated = []
    for sv in state.shared_variables:
        a, b = sv.views
        z = 0.5 * (a + b)
        la, lb = sv.lambda_per_region
        updated.append(replace(sv, z=z, lambda_per_region=(la + rho * (a - z), lb + rho * (b - z))))
    return replace(state, shared_variables=tuple(updated))


def worst_primal_residual(state: AdmmState) -> float:
    if state.iteration < 1:
        raise InvalidState("no ADMM iteration has been run")
    return _max_deviation(state.shared_variables)


def _max_deviation(shared) -> float:
    return max((abs(v - sv.z) for sv in shared for v in sv.views), default=0.0)


def optimality_gap(distributed_cost: float, centralized_cost: float) -> float:
    if not centralized_cost > 0:
        raise ValueError("centralized cost must be positive")
    return abs(distributed_cost - centralized_cost) / centralized_cost


@dataclass
class RegionOutcome:
    """What one regional solve hands back to the coordinator."""

    solution: object
    views: dict       # shared variable id -> value of this region's view
    cost: float       # generation cost only, penalty terms excluded


def run_admm(region_ids, solve_region: Callable, shared: tuple, cfg: AdmmConfig):
    """Iterate solve -> dual update -> residual check.

    ``solve_region(region_id, shared, iteration)`` returns a
    :class:`RegionOutcome` or raises. Returns ``(state, converged)``.
    Region solves may run in a thread pool; everything after the barrier
    is sequential in shared-variable order.
    """
    region_ids = list(region_ids)
    state = AdmmState(0, tuple(shared), {}, (), (), () if cfg.centralized_cost else None)
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    converged = False
    try:
        for it in range(1, cfg.max_iters + 1):
            current = state.shared_variables
            try:
                if pool is not None:
                    outcomes = list(pool.map(lambda r: solve_region(r, current, it), region_ids))
                else:
                    outcomes = [solve_region(r, current, it) for r in region_ids]
            except SubproblemFailure as exc:
                exc.state = state
                raise
            by_region = dict(zip(region_ids, outcomes))
            with_views = []
            for sv in current:
                a = by_region[sv.home].views[sv.id]
                b = by_region[sv.neighbor].views[sv.id]
                with_views.append(replace(sv, views=(a, b)))
            cost = sum(o.cost for o in outcomes)
            stepped = update_duals(replace(state, shared_variables=tuple(with_views)), cfg.rho)
            residual = _max_deviation(stepped.shared_variables)
            gaps = state.gap_history
            if cfg.centralized_cost:
                gaps = gaps + (optimality_gap(cost, cfg.centralized_cost),)
            state = AdmmState(it, stepped.shared_variables,
                              {r: o.solution for r, o in by_region.items()},
                              state.residual_history + (residual,),
                              state.cost_history + (cost,), gaps)
            if cfg.progress_every and (it % cfg.progress_every == 0 or it == 1):
                log.info("iteration %d: worst residual %.3e, cost %.6g", it, residual, cost)
            if residual <= cfg.tolerance:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return state, converged
