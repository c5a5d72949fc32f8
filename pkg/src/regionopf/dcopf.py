"""Linearized (DC) optimal power flow: regional QPs coordinated by consensus ADMM.

Internally powers are per unit on the case base and angles are radians;
generator costs are evaluated in MW so objectives are in cost units.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp

from .admm import (ANGLE, AdmmConfig, RegionOutcome, build_shared_variables, penalty_terms,
                   run_admm)
from .case import BusType, CaseData, CostModel
from .errors import (Infeasible, MaxIterations, NonconvexCost, NotConverged,
                     PiecewiseCostUnsupported, SubproblemFailure, ZeroReactanceBranch)
from .numerics.qp import DENSE_KKT_LIMIT, QpProblem, SolverStatus, solve_qp
from .solution import OpfSolution, RegionResult

log = logging.getLogger(__name__)


def generator_costs(case: CaseData) -> list[tuple[float, float, float]]:
    """``(c2, c1, c0)`` per generator row, cost in $ with output in MW."""
    if case.generators and not case.gencosts:
        raise ValueError(f"case {case.name!r} has no gencost table")
    out = []
    for i, c in enumerate(case.gencosts):
        if c.model == CostModel.PIECEWISE:
            raise PiecewiseCostUnsupported(i + 1)
        try:
            c2, c1, c0 = c.quadratic()
        except ValueError:
            raise NonconvexCost(i + 1) from None
        if c2 < 0:
            raise NonconvexCost(i + 1)
        out.append((c2, c1, c0))
    return out


def reference_position(case: CaseData) -> int:
    """Row of the first REF bus, falling back to the first bus."""
    for i, b in enumerate(case.buses):
        if b.bus_type == BusType.REF:
            return i
    return 0


class DcRegionModel:
    """Static structure of one region's DC subproblem.

    Variables are ``[pg (in-service units), theta (local buses), virtual theta]``.
    ``ties`` are the region's incident tie-lines; the far end of each one
    becomes a virtual angle. With no ties and ``is_slack`` set this is the
    centralized DC-OPF of ``region_case``.
    """

    def __init__(self, region_case: CaseData, region_id: int = 1, ties=(), is_slack: bool = True,
                 global_ids=None):
        self.case = region_case
        ids = global_ids if global_ids is not None else [b.id for b in region_case.buses]
        self.position_of_global = {g: i for i, g in enumerate(ids)}
        self.region_id = region_id
        self.ties = tuple(ties)
        base = region_case.base_mva
        self.base = base
        costs = generator_costs(region_case)
        self.gen_rows = [i for i, g in enumerate(region_case.generators) if g.in_service]
        ng, nb = len(self.gen_rows), region_case.n_buses
        index = region_case.bus_index()

        # far ends of the ties, in tie order; keyed by global bus id
        self.virtual = {}
        tie_arcs = []  # (local position, virtual key, x, rate_a); flow leaves the local end
        for t in self.ties:
            br = t.branch
            if br.x == 0:
                raise ZeroReactanceBranch(br.from_bus, br.to_bus)
            if t.from_region == region_id:
                here, there = t.local_from_bus, t.global_to_bus
            else:
                here, there = t.local_to_bus, t.global_from_bus
            self.virtual.setdefault(there, len(self.virtual))
            tie_arcs.append((index[here], there, br.x, br.rate_a))
        nv = len(self.virtual)
        n = ng + nb + nv
        self.ng, self.nb, self.nv, self.n = ng, nb, nv, n
        th = lambda i: ng + i  # noqa: E731
        vt = lambda key: ng + nb + self.virtual[key]  # noqa: E731

        H = np.zeros(n)
        c = np.zeros(n)
        const = 0.0
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        for j, row in enumerate(self.gen_rows):
            g = region_case.generators[row]
            c2, c1, c0 = costs[row]
            H[j] = 2 * c2 * base ** 2
            c[j] = c1 * base
            const += c0
            lo[j], hi[j] = g.pmin / base, g.pmax / base
        if is_slack:
            ref = reference_position(region_case)
            lo[th(ref)] = hi[th(ref)] = 0.0

        eq_r, eq_c, eq_v = [], [], []
        for j, row in enumerate(self.gen_rows):
            eq_r.append(index[region_case.generators[row].bus])
            eq_c.append(j)
            eq_v.append(1.0)
        b_eq = np.array([b.pd / base for b in region_case.buses])

        in_r, in_c, in_v, b_in = [], [], [], []
        nrow = 0

        def add_arc(i_pos, col_i, col_j, x, rate):
            # flow (theta_i - theta_j)/x leaves bus i
            nonlocal nrow
            eq_r.extend([i_pos, i_pos])
            eq_c.extend([col_i, col_j])
            eq_v.extend([-1.0 / x, 1.0 / x])
            if rate > 0:
                for sign in (1.0, -1.0):
                    in_r.extend([nrow, nrow])
                    in_c.extend([col_i, col_j])
                    in_v.extend([sign / x, -sign / x])
                    b_in.append(rate / base)
                    nrow += 1

        for br in region_case.branches:
            if not br.in_service:
                continue
            if br.x == 0:
                raise ZeroReactanceBranch(br.from_bus, br.to_bus)
            f, t = index[br.from_bus], index[br.to_bus]
            add_arc(f, th(f), th(t), br.x, br.rate_a)
            # to-end balance only; the limit row is already in place
            eq_r.extend([t, t])
            eq_c.extend([th(f), th(t)])
            eq_v.extend([1.0 / br.x, -1.0 / br.x])
        for pos, key, x, rate in tie_arcs:
            add_arc(pos, th(pos), vt(key), x, rate)

        self.A_eq = sp.csr_matrix((eq_v, (eq_r, eq_c)), shape=(nb, n))
        self.b_eq = b_eq
        self.A_in = sp.csr_matrix((in_v, (in_r, in_c)), shape=(nrow, n))
        self.dense = n + nb <= DENSE_KKT_LIMIT
        if self.dense:
            self.A_eq, self.A_in = self.A_eq.toarray(), self.A_in.toarray()
        self.b_in = np.asarray(b_in, dtype=float)
        self.H_diag, self.c, self.const = H, c, const
        self.lo, self.hi = lo, hi
        self.tie_arcs = tie_arcs

    def column_of(self, sv) -> int:
        """QP column holding this region's view of shared variable ``sv``."""
        if sv.home == self.region_id:
            return self.ng + self.position_of_global[sv.global_bus]
        return self.ng + self.nb + self.virtual[sv.global_bus]

    def qp(self, shared=(), rho: float = 0.0) -> QpProblem:
        H = self.H_diag.copy()
        c = self.c.copy()
        const = self.const
        for sv in shared:
            if self.region_id not in sv.owner_regions:
                continue
            a, b, k = penalty_terms(sv, self.region_id, rho)
            col = self.column_of(sv)
            H[col] += a
            c[col] += b
            const += k
        return QpProblem(np.diag(H) if self.dense else sp.diags(H).tocsr(), c, self.A_eq, self.b_eq, self.A_in, self.b_in,
                         self.lo, self.hi, const)

    def generation_cost(self, x) -> float:
        pg = x[: self.ng]
        return float(0.5 * pg @ (self.H_diag[: self.ng] * pg) + self.c[: self.ng] @ pg + self.const)

    def result(self, x) -> RegionResult:
        pg = np.zeros(len(self.case.generators))
        pg[self.gen_rows] = x[: self.ng] * self.base
        theta = np.array(x[self.ng: self.ng + self.nb])
        virtual = {key: float(x[self.ng + self.nb + j]) for key, j in self.virtual.items()}
        return RegionResult(pg, theta, virtual, self.generation_cost(x))


def _region_model(mrc, region_id: int) -> DcRegionModel:
    reg = mrc.region(region_id)
    ties = [mrc.tie_lines[i] for i in mrc.ties_of(region_id)]
    return DcRegionModel(reg.case, region_id, ties, region_id == mrc.slack_region,
                         reg.local_to_global)


def build_dc_subproblem(region, ties, shared, rho: float, *, is_slack: bool = False) -> QpProblem:
    """QP for one region: generation cost plus consensus penalties on its shared views."""
    model = DcRegionModel(region.case, region.region_id, ties, is_slack, region.local_to_global)
    return model.qp(shared, rho)


def dc_tie_flows(mrc, regions: dict) -> tuple:
    """Per tie: (MW leaving the from-bus per its region, MW leaving the to-bus per its region)."""
    flows = []
    for t in mrc.tie_lines:
        ra, rb = regions[t.from_region], regions[t.to_region]
        x = t.branch.x
        fa = (ra.theta[t.local_from_bus - 1] - ra.virtual_theta[t.global_to_bus]) / x
        fb = (rb.theta[t.local_to_bus - 1] - rb.virtual_theta[t.global_from_bus]) / x
        flows.append((fa * mrc.base_mva, fb * mrc.base_mva))
    return tuple(flows)


def _check_costs(mrc):
    for reg in mrc.regions:
        generator_costs(reg.case)


def solve_dc_distributed(mrc, cfg: AdmmConfig | None = None, *, qp_tol: float = 1e-9):
    """Consensus ADMM over the regions of ``mrc``.

    Returns ``(solution, state)``. Raises :class:`NotConverged` (carrying
    both) when the iteration limit is hit first.
    """
    cfg = cfg or AdmmConfig()
    _check_costs(mrc)
    models = {reg.region_id: _region_model(mrc, reg.region_id) for reg in mrc.regions}
    shared = build_shared_variables(mrc, (ANGLE,))

    def solve_region(r, current, it):
        model = models[r]
        res = solve_qp(model.qp(current, cfg.rho), tol=qp_tol)
        if res.status != SolverStatus.OPTIMAL:
            raise SubproblemFailure(r, it, res.status.value)
        views = {sv.id: float(res.x[model.column_of(sv)])
                 for sv in current if r in sv.owner_regions}
        return RegionOutcome(model.result(res.x), views, model.generation_cost(res.x))

    state, converged = run_admm(sorted(models), solve_region, shared, cfg)
    regions = dict(state.regions)
    solution = OpfSolution("dc", regions, dc_tie_flows(mrc, regions),
                           float(state.cost_history[-1]), converged, state.iteration,
                           float(state.residual_history[-1]))
    if not converged:
        raise NotConverged(state.iteration, solution.residual, solution, state)
    return solution, state


def solve_dc_centralized(case: CaseData, *, tol: float = 1e-9) -> OpfSolution:
    """Single QP over the whole network with the same constraint set, no virtual angles."""
    model = DcRegionModel(case, 1, (), is_slack=True)
    res = solve_qp(model.qp(), tol=tol)
    if res.status == SolverStatus.MAX_ITERATIONS:
        raise MaxIterations(res.status, res.message)
    if res.status != SolverStatus.OPTIMAL:
        raise Infeasible(res.status, res.message)
    return OpfSolution("dc", {1: model.result(res.x)}, (), model.generation_cost(res.x), True,
                       res.iterations, 0.0)
