"""Full AC optimal power flow: regional NLPs coordinated by consensus ADMM.

Branch flows use the pi model with off-nominal tap and phase shift. The
conductance/susceptance coefficients are laid out so that

    p_f = g1 v_i^2 + v_i v_j (g2 cos d + b2 sin d)
    q_f = -b1 v_i^2 - v_i v_j (b2 cos d - g2 sin d)
    p_t = g4 v_j^2 + v_i v_j (g3 cos d' + b3 sin d')
    q_t = -b4 v_j^2 - v_i v_j (b3 cos d' - g3 sin d')

with d = theta_i - theta_j and d' = -d, which reproduces
S_f = V_f (Y_ff V_f + Y_ft V_t)* and S_t = V_t (Y_tf V_f + Y_tt V_t)*.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .admm import (ANGLE, MAGNITUDE, AdmmConfig, RegionOutcome, build_shared_variables,
                   penalty_terms, run_admm)
from .case import Branch, CaseData
from .dcopf import generator_costs, reference_position
from .errors import (DegenerateBranch, Infeasible, MaxIterations, NotConverged,
                     SubproblemFailure)
from .numerics.nlp import NlpProblem, solve_nlp
from .numerics.qp import SolverStatus
from .solution import OpfSolution, RegionResult

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BranchAdmittance:
    g1: float
    g2: float
    g3: float
    g4: float
    b1: float
    b2: float
    b3: float
    b4: float


def branch_admittance(br: Branch) -> BranchAdmittance:
    if br.r == 0 and br.x == 0:
        raise DegenerateBranch(br.from_bus, br.to_bus)
    ys = 1.0 / complex(br.r, br.x)
    tap = br.ratio * complex(math.cos(math.radians(br.shift)), math.sin(math.radians(br.shift)))
    ytt = ys + 0.5j * br.b
    yff = ytt / (br.ratio ** 2)
    yft = -ys / tap.conjugate()
    ytf = -ys / tap
    return BranchAdmittance(yff.real, yft.real, ytf.real, ytt.real,
                            yff.imag, yft.imag, ytf.imag, ytt.imag)


def ac_branch_flows(adm, v_i, v_j, theta_i, theta_j):
    """``(p_f, q_f, p_t, q_t)`` in per unit; accepts scalars or equal-length arrays."""
    d = np.asarray(theta_i) - np.asarray(theta_j)
    cos, sin = np.cos(d), np.sin(d)
    vv = np.asarray(v_i) * np.asarray(v_j)
    p_f = adm.g1 * v_i ** 2 + vv * (adm.g2 * cos + adm.b2 * sin)
    q_f = -adm.b1 * v_i ** 2 - vv * (adm.b2 * cos - adm.g2 * sin)
    p_t = adm.g4 * v_j ** 2 + vv * (adm.g3 * cos - adm.b3 * sin)
    q_t = -adm.b4 * v_j ** 2 - vv * (adm.b3 * cos + adm.g3 * sin)
    return p_f, q_f, p_t, q_t


def _flows_with_jacobian(coef, th_f, v_f, th_t, v_t):
    """Vectorized flows and their partials with respect to (theta_f, v_f, theta_t, v_t)."""
    g1, g2, g3, g4, b1, b2, b3, b4 = coef
    d = th_f - th_t
    cos, sin = np.cos(d), np.sin(d)
    vv = v_f * v_t
    a_pf = g2 * cos + b2 * sin
    a_qf = -b2 * cos + g2 * sin
    a_pt = g3 * cos - b3 * sin
    a_qt = -(b3 * cos + g3 * sin)
    flows = np.array([
        g1 * v_f ** 2 + vv * a_pf,
        -b1 * v_f ** 2 + vv * a_qf,
        g4 * v_t ** 2 + vv * a_pt,
        -b4 * v_t ** 2 + vv * a_qt,
    ])
    # d/d(theta_f) of each bracket; d/d(theta_t) is its negative
    dth = np.array([
        vv * (-g2 * sin + b2 * cos),
        vv * (b2 * sin + g2 * cos),
        vv * (-g3 * sin - b3 * cos),
        vv * (b3 * sin - g3 * cos),
    ])
    dvf = np.array([2 * g1 * v_f + v_t * a_pf, -2 * b1 * v_f + v_t * a_qf,
                    v_t * a_pt, v_t * a_qt])
    dvt = np.array([v_f * a_pf, v_f * a_qf, 2 * g4 * v_t + v_f * a_pt,
                    -2 * b4 * v_t + v_f * a_qt])
    return flows, dth, dvf, dvt


def _angle_limit_active(value: float) -> bool:
    # MATPOWER convention: 0 or |angle| >= 360 means no limit
    return value != 0 and -360 < value < 360


class AcRegionModel:
    """One region's AC subproblem with variables
    ``[pg, qg, theta, v, virtual theta, virtual v]`` (generators in service only).
    """

    def __init__(self, region_case: CaseData, region_id: int = 1, ties=(), is_slack=True,
                 global_ids=None, neighbor_vbox=None, conventional_mva_limit=False):
        self.case = region_case
        self.region_id = region_id
        ids = global_ids if global_ids is not None else [b.id for b in region_case.buses]
        self.position_of_global = {g: i for i, g in enumerate(ids)}
        self.base = base = region_case.base_mva
        self.costs = generator_costs(region_case)
        self.gen_rows = [i for i, g in enumerate(region_case.generators) if g.in_service]
        index = region_case.bus_index()
        ng, nb = len(self.gen_rows), region_case.n_buses

        self.virtual = {}
        arcs = []  # (branch, from slot, to slot); slot = ("bus", pos) or ("virtual", global id)
        for br in region_case.branches:
            if br.in_service:
                arcs.append((br, ("bus", index[br.from_bus]), ("bus", index[br.to_bus])))
        for t in ties:
            if t.from_region == region_id:
                self.virtual.setdefault(t.global_to_bus, len(self.virtual))
                arcs.append((t.branch, ("bus", index[t.local_from_bus]), ("virtual", t.global_to_bus)))
            else:
                self.virtual.setdefault(t.global_from_bus, len(self.virtual))
                arcs.append((t.branch, ("virtual", t.global_from_bus), ("bus", index[t.local_to_bus])))
        nv = len(self.virtual)
        self.ng, self.nb, self.nv = ng, nb, nv
        self.n = n = 2 * ng + 2 * nb + 2 * nv
        self.off_q, self.off_th, self.off_v = ng, 2 * ng, 2 * ng + nb
        self.off_vth, self.off_vv = 2 * ng + 2 * nb, 2 * ng + 2 * nb + nv

        def cols(slot):
            kind, key = slot
            if kind == "bus":
                return self.off_th + key, self.off_v + key, key
            j = self.virtual[key]
            return self.off_vth + j, self.off_vv + j, -1

        na = len(arcs)
        self.arc_th_f, self.arc_v_f, self.arc_bus_f = np.zeros(na, int), np.zeros(na, int), np.zeros(na, int)
        self.arc_th_t, self.arc_v_t, self.arc_bus_t = np.zeros(na, int), np.zeros(na, int), np.zeros(na, int)
        coef = np.zeros((8, na))
        limit = np.zeros(na)
        angmin, angmax = np.full(na, -np.inf), np.full(na, np.inf)
        for a, (br, fs, ts) in enumerate(arcs):
            adm = branch_admittance(br)
            coef[:, a] = (adm.g1, adm.g2, adm.g3, adm.g4, adm.b1, adm.b2, adm.b3, adm.b4)
            self.arc_th_f[a], self.arc_v_f[a], self.arc_bus_f[a] = cols(fs)
            self.arc_th_t[a], self.arc_v_t[a], self.arc_bus_t[a] = cols(ts)
            if br.rate_a > 0:
                r = br.rate_a / base
                limit[a] = r * r if conventional_mva_limit else 2 * r * r
            if _angle_limit_active(br.angmin):
                angmin[a] = math.radians(br.angmin)
            if _angle_limit_active(br.angmax):
                angmax[a] = math.radians(br.angmax)
        self.arcs = arcs
        self.coef = coef
        self.limited = np.flatnonzero(limit > 0)
        self.limit = limit[self.limited]
        self.ang_lo = np.flatnonzero(np.isfinite(angmin))
        self.ang_hi = np.flatnonzero(np.isfinite(angmax))
        self.angmin, self.angmax = angmin[self.ang_lo], angmax[self.ang_hi]

        buses = region_case.buses
        self.pd = np.array([b.pd for b in buses]) / base
        self.qd = np.array([b.qd for b in buses]) / base
        self.gs = np.array([b.gs for b in buses]) / base
        self.bs = np.array([b.bs for b in buses]) / base
        self.gen_bus = np.array([index[region_case.generators[r].bus] for r in self.gen_rows], int)

        lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
        for j, row in enumerate(self.gen_rows):
            g = region_case.generators[row]
            lo[j], hi[j] = g.pmin / base, g.pmax / base
            lo[ng + j], hi[ng + j] = g.qmin / base, g.qmax / base
        for i, b in enumerate(buses):
            lo[self.off_v + i], hi[self.off_v + i] = b.vmin, b.vmax
        neighbor_vbox = neighbor_vbox or {}
        for key, j in self.virtual.items():
            lo[self.off_vv + j], hi[self.off_vv + j] = neighbor_vbox.get(key, (0.0, np.inf))
        if is_slack:
            ref = reference_position(region_case)
            lo[self.off_th + ref] = hi[self.off_th + ref] = 0.0
        self.lo, self.hi = lo, hi

        c2 = np.array([self.costs[r][0] for r in self.gen_rows]) * base ** 2
        c1 = np.array([self.costs[r][1] for r in self.gen_rows]) * base
        self.c2, self.c1 = c2, c1
        self.c0 = float(sum(self.costs[r][2] for r in self.gen_rows))

    # --- initial point -------------------------------------------------
    def flat_start(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.off_v: self.off_v + self.nb] = 1.0
        x[self.off_vv: self.off_vv + self.nv] = 1.0
        return np.clip(x, self.lo, np.where(np.isfinite(self.hi), self.hi, np.inf))

    # --- callbacks -----------------------------------------------------
    def generation_cost(self, x) -> float:
        pg = x[: self.ng]
        return float(self.c2 @ pg ** 2 + self.c1 @ pg + self.c0)

    def _arc_state(self, x):
        return (x[self.arc_th_f], x[self.arc_v_f], x[self.arc_th_t], x[self.arc_v_t])

    def constraints_eq(self, x):
        ng, nb, n = self.ng, self.nb, self.n
        v = x[self.off_v: self.off_v + nb]
        flows, dth, dvf, dvt = _flows_with_jacobian(self.coef, *self._arc_state(x))
        c = np.zeros(2 * nb)
        J = np.zeros((2 * nb, n))
        np.add.at(c, self.gen_bus, x[:ng])
        np.add.at(c, nb + self.gen_bus, x[ng: 2 * ng])
        J[self.gen_bus, np.arange(ng)] += 1.0
        J[nb + self.gen_bus, ng + np.arange(ng)] += 1.0
        c[:nb] -= self.pd + self.gs * v ** 2
        c[nb:] -= self.qd - self.bs * v ** 2
        idx = np.arange(nb)
        J[idx, self.off_v + idx] -= 2 * self.gs * v
        J[nb + idx, self.off_v + idx] += 2 * self.bs * v
        for end, rows_p, rows_q in (("f", 0, 1), ("t", 2, 3)):
            bus = self.arc_bus_f if end == "f" else self.arc_bus_t
            on = np.flatnonzero(bus >= 0)
            if on.size == 0:
                continue
            b = bus[on]
            for row_off, k in ((0, rows_p), (nb, rows_q)):
                np.add.at(c, row_off + b, -flows[k, on])
                np.add.at(J, (row_off + b, self.arc_th_f[on]), -dth[k, on])
                np.add.at(J, (row_off + b, self.arc_th_t[on]), dth[k, on])
                np.add.at(J, (row_off + b, self.arc_v_f[on]), -dvf[k, on])
                np.add.at(J, (row_off + b, self.arc_v_t[on]), -dvt[k, on])
        return c, J

    def constraints_ineq(self, x):
        n = self.n
        rows, jac = [], []
        if self.limited.size:
            lim = self.limited
            flows, dth, dvf, dvt = _flows_with_jacobian(self.coef[:, lim], *(s[lim] for s in self._arc_state(x)))
            for kp, kq in ((0, 1), (2, 3)):
                s2 = flows[kp] ** 2 + flows[kq] ** 2
                # scaled by the limit so every row is O(1)
                rows.append(s2 / self.limit - 1.0)
                J = np.zeros((lim.size, n))
                r = np.arange(lim.size)
                for col, d in ((self.arc_th_f[lim], dth), (self.arc_th_t[lim], -dth),
                               (self.arc_v_f[lim], dvf), (self.arc_v_t[lim], dvt)):
                    np.add.at(J, (r, col), 2 * (flows[kp] * d[kp] + flows[kq] * d[kq]) / self.limit)
                jac.append(J)
        for sel, bound, sign in ((self.ang_lo, self.angmin, -1.0), (self.ang_hi, self.angmax, 1.0)):
            if sel.size == 0:
                continue
            diff = x[self.arc_th_f[sel]] - x[self.arc_th_t[sel]]
            rows.append(sign * (diff - bound))
            J = np.zeros((sel.size, n))
            r = np.arange(sel.size)
            np.add.at(J, (r, self.arc_th_f[sel]), sign)
            np.add.at(J, (r, self.arc_th_t[sel]), -sign)
            jac.append(J)
        if not rows:
            return np.zeros(0), np.zeros((0, n))
        return np.concatenate(rows), np.vstack(jac)

    def column_of(self, sv) -> int:
        home = sv.home == self.region_id
        if sv.quantity == ANGLE:
            return (self.off_th + self.position_of_global[sv.global_bus] if home
                    else self.off_vth + self.virtual[sv.global_bus])
        return (self.off_v + self.position_of_global[sv.global_bus] if home
                else self.off_vv + self.virtual[sv.global_bus])

    def nlp(self, shared=(), rho: float = 0.0, x0=None) -> NlpProblem:
        cols, quad, lin, const = [], [], [], 0.0
        for sv in shared:
            if self.region_id not in sv.owner_regions:
                continue
            a, b, k = penalty_terms(sv, self.region_id, rho)
            cols.append(self.column_of(sv))
            quad.append(a)
            lin.append(b)
            const += k
        cols, quad, lin = np.array(cols, int), np.array(quad), np.array(lin)
        ng, n = self.ng, self.n

        def objective(x):
            pg = x[:ng]
            f = self.c2 @ pg ** 2 + self.c1 @ pg + self.c0
            g = np.zeros(n)
            g[:ng] = 2 * self.c2 * pg + self.c1
            if cols.size:
                xs = x[cols]
                f += 0.5 * quad @ xs ** 2 + lin @ xs + const
                np.add.at(g, cols, quad * xs + lin)
            return float(f), g

        return NlpProblem(objective, self.flat_start() if x0 is None else np.asarray(x0, float),
                          self.lo, self.hi, self.constraints_eq, self.constraints_ineq)

    def result(self, x) -> RegionResult:
        ng, nb = self.ng, self.nb
        pg = np.zeros(len(self.case.generators))
        qg = np.zeros(len(self.case.generators))
        pg[self.gen_rows] = x[:ng] * self.base
        qg[self.gen_rows] = x[ng: 2 * ng] * self.base
        theta = np.array(x[self.off_th: self.off_th + nb])
        v = np.array(x[self.off_v: self.off_v + nb])
        vth = {key: float(x[self.off_vth + j]) for key, j in self.virtual.items()}
        vv = {key: float(x[self.off_vv + j]) for key, j in self.virtual.items()}
        return RegionResult(pg, theta, vth, self.generation_cost(x), qg, v, vv)


def _neighbor_vbox(mrc) -> dict:
    box = {}
    for reg in mrc.regions:
        for g, bus in zip(reg.local_to_global, reg.case.buses):
            box[g] = (bus.vmin, bus.vmax)
    return box


def _region_model(mrc, region_id, conventional_mva_limit):
    reg = mrc.region(region_id)
    ties = [mrc.tie_lines[i] for i in mrc.ties_of(region_id)]
    return AcRegionModel(reg.case, region_id, ties, region_id == mrc.slack_region,
                         reg.local_to_global, _neighbor_vbox(mrc), conventional_mva_limit)


def build_ac_subproblem(region, ties, shared, rho: float, *, is_slack: bool = False,
                        neighbor_vbox=None, conventional_mva_limit: bool = False) -> NlpProblem:
    """NLP for one region: generation cost plus penalties on its angle and magnitude views."""
    model = AcRegionModel(region.case, region.region_id, ties, is_slack, region.local_to_global,
                          neighbor_vbox, conventional_mva_limit)
    return model.nlp(shared, rho)


def ac_tie_flows(mrc, regions: dict) -> tuple:
    """Per tie: (MW leaving the from-bus per its region, MW leaving the to-bus per its region)."""
    out = []
    for t in mrc.tie_lines:
        adm = branch_admittance(t.branch)
        ra, rb = regions[t.from_region], regions[t.to_region]
        i, j = t.local_from_bus - 1, t.local_to_bus - 1
        pf, _, _, _ = ac_branch_flows(adm, ra.v[i], ra.virtual_v[t.global_to_bus],
                                      ra.theta[i], ra.virtual_theta[t.global_to_bus])
        _, _, pt, _ = ac_branch_flows(adm, rb.virtual_v[t.global_from_bus], rb.v[j],
                                      rb.virtual_theta[t.global_from_bus], rb.theta[j])
        out.append((float(pf) * mrc.base_mva, float(pt) * mrc.base_mva))
    return tuple(out)


def solve_ac_distributed(mrc, cfg: AdmmConfig | None = None, *, nlp_tol: float = 1e-8,
                         conventional_mva_limit: bool = False):
    """Consensus ADMM on boundary angles and magnitudes.

    Every region starts flat (theta 0, v 1) and is warm-started from its
    previous iterate afterwards. Returns ``(solution, state)``; raises
    :class:`NotConverged` carrying both at the iteration limit.
    """
    cfg = cfg or AdmmConfig(max_iters=3000)
    models = {reg.region_id: _region_model(mrc, reg.region_id, conventional_mva_limit)
              for reg in mrc.regions}
    last = {r: None for r in models}
    shared = build_shared_variables(mrc, (ANGLE, MAGNITUDE))

    def solve_region(r, current, it):
        model = models[r]
        res = solve_nlp(model.nlp(current, cfg.rho, last[r]), tol=nlp_tol)
        if res.status != SolverStatus.OPTIMAL:
            raise SubproblemFailure(r, it, f"{res.status.value} {res.message}".strip())
        last[r] = res.x
        views = {sv.id: float(res.x[model.column_of(sv)])
                 for sv in current if r in sv.owner_regions}
        return RegionOutcome(model.result(res.x), views, model.generation_cost(res.x))

    state, converged = run_admm(sorted(models), solve_region, shared, cfg)
    regions = dict(state.regions)
    solution = OpfSolution("ac", regions, ac_tie_flows(mrc, regions),
                           float(state.cost_history[-1]), converged, state.iteration,
                           float(state.residual_history[-1]))
    if not converged:
        raise NotConverged(state.iteration, solution.residual, solution, state)
    return solution, state


def solve_ac_centralized(case: CaseData, *, tol: float = 1e-6,
                         conventional_mva_limit: bool = False) -> OpfSolution:
    """Whole-network AC-OPF from a flat start; a local optimum with KKT residual <= ``tol``."""
    model = AcRegionModel(case, 1, (), True, None, None, conventional_mva_limit)
    res = solve_nlp(model.nlp(), tol=tol)
    if res.status == SolverStatus.MAX_ITERATIONS:
        raise MaxIterations(res.status, res.message)
    if res.status != SolverStatus.OPTIMAL:
        raise Infeasible(res.status, res.message)
    return OpfSolution("ac", {1: model.result(res.x)}, (), model.generation_cost(res.x), True,
                       res.iterations, 0.0)
