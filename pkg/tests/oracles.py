"""Reference computations written independently of the package internals.

Nothing here imports solver code; the only package types touched are the
plain data records read from case files.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import minimize


def complex_branch_flows(r, x, b, tap, shift_deg, vf, thf, vt, tht):
    """(Pf, Qf, Pt, Qt) in pu from the complex pi-model with an ideal phase-shifting transformer."""
    y = 1.0 / complex(r, x)
    a = (tap if tap else 1.0) * np.exp(1j * math.radians(shift_deg))
    Vf = vf * np.exp(1j * thf)
    Vt = vt * np.exp(1j * tht)
    # currents from first principles: the transformer sits at the from end
    If = (y + 0.5j * b) / abs(a) ** 2 * Vf - y / np.conj(a) * Vt
    It = -y / a * Vf + (y + 0.5j * b) * Vt
    Sf = Vf * np.conj(If)
    St = Vt * np.conj(It)
    return Sf.real, Sf.imag, St.real, St.imag


def path_laplacian_eigs(n):
    return np.array([2 - 2 * math.cos(math.pi * k / n) for k in range(1, n)])


def brute_force_min_cut(n, edges, generator_nodes):
    """Minimum number of crossing edges over 2-way splits with a generator on each side."""
    gens = set(generator_nodes)
    best = None
    for mask in range(1, 2 ** (n - 1)):
        side = [(mask >> i) & 1 for i in range(n)]
        if not any(side[g] for g in gens) or all(side[g] for g in gens):
            continue
        cut = sum(1 for u, v in edges if side[u] != side[v])
        best = cut if best is None else min(best, cut)
    return best


def qp_by_active_sets(H, c, A, b):
    """min 1/2 x'Hx + c'x s.t. A x <= b by enumerating active sets (H positive definite)."""
    n = len(c)
    m = len(b)
    best = math.inf
    best_x = None
    for size in range(0, min(n, m) + 1):
        for act in itertools.combinations(range(m), size):
            act = list(act)
            K = np.zeros((n + size, n + size))
            K[:n, :n] = H
            K[:n, n:] = A[act].T
            K[n:, :n] = A[act]
            rhs = np.concatenate([-c, b[act]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x = sol[:n]
            if np.all(A @ x <= b + 1e-9) and np.all(sol[n:] >= -1e-9):
                val = 0.5 * x @ H @ x + c @ x
                if val < best:
                    best, best_x = val, x
    return best, best_x


# ---------------------------------------------------------------------------
# AC oracle for two regions joined by one tie


def _ybus(nb, branches):
    """branches: list of (i, j, r, x, b, tap, shift) with 0-based positions."""
    Y = np.zeros((nb, nb), dtype=complex)
    for i, j, r, x, b, tap, shift in branches:
        y = 1.0 / complex(r, x)
        a = (tap if tap else 1.0) * np.exp(1j * math.radians(shift))
        Y[i, i] += (y + 0.5j * b) / abs(a) ** 2
        Y[i, j] += -y / np.conj(a)
        Y[j, i] += -y / a
        Y[j, j] += y + 0.5j * b
    return Y


class AreaProblem:
    """Economic dispatch of one area with its boundary voltage magnitude pinned.

    The boundary bus also exports a fixed complex power into the tie. The
    boundary angle stays free so only the tie's angle difference matters.
    """

    def __init__(self, case, boundary_bus=None, slack_bus=None):
        base = case.base_mva
        self.base = base
        self.ids = [bb.id for bb in case.buses]
        pos = {bid: k for k, bid in enumerate(self.ids)}
        self.nb = len(self.ids)
        # without a boundary bus this is the whole-network problem
        self.kb = pos[boundary_bus] if boundary_bus is not None else None
        self.kref = pos[slack_bus] if slack_bus is not None else self.kb
        br = [(pos[x.from_bus], pos[x.to_bus], x.r, x.x, x.b, x.tap, x.shift)
              for x in case.branches if x.status > 0]
        self.Y = _ybus(self.nb, br)
        self.sd = np.array([complex(bb.pd, bb.qd) for bb in case.buses]) / base
        self.ysh = np.array([complex(bb.gs, bb.bs) for bb in case.buses]) / base
        gens = [g for g in case.generators if g.status > 0]
        costs = [c for g, c in zip(case.generators, case.gencosts) if g.status > 0]
        self.gbus = [pos[g.bus] for g in gens]
        self.glims = [(g.pmin / base, g.pmax / base, g.qmin / base, g.qmax / base) for g in gens]
        self.cost = [tuple((0.0,) * (3 - len(c.coefficients)) + tuple(c.coefficients))[-3:] for c in costs]
        self.vlims = [(bb.vmin, bb.vmax) for bb in case.buses]
        self.ng = len(gens)
        self._warm = None

    def _unpack(self, z, vb):
        ng, nb = self.ng, self.nb
        pg, qg = z[:ng], z[ng:2 * ng]
        th = np.insert(z[2 * ng: 2 * ng + nb - 1], self.kref, 0.0)
        v = z[2 * ng + nb - 1:]
        if self.kb is not None:
            v = np.insert(v, self.kb, vb)
        return pg, qg, th, v

    def solve(self, vb=None, export=0.0):
        """Minimum cost ($) with bus-voltage ``vb`` and complex export (pu) at the boundary."""
        ng, nb = self.ng, self.nb
        base = self.base
        scale = 1e-3

        def cost(z):
            pg = z[:ng] * base
            return sum(c2 * p * p + c1 * p + c0 for (c2, c1, c0), p in zip(self.cost, pg))

        def scaled(z):
            g = np.zeros_like(z)
            g[:ng] = [(2 * c2 * p * base + c1) * base * scale
                      for (c2, c1, _), p in zip(self.cost, z[:ng])]
            return cost(z) * scale, g

        def balance(z):
            pg, qg, th, v = self._unpack(z, vb)
            V = v * np.exp(1j * th)
            s_inj = V * np.conj(self.Y @ V) + np.conj(self.ysh) * v ** 2
            gen = np.zeros(nb, dtype=complex)
            for k, bus in enumerate(self.gbus):
                gen[bus] += complex(pg[k], qg[k])
            mis = gen - self.sd - s_inj
            if self.kb is not None:
                mis[self.kb] -= export
            return np.concatenate([mis.real, mis.imag])

        vl = [lim for k, lim in enumerate(self.vlims) if k != self.kb]
        nv = len(vl)
        bounds = [(lo, hi) for lo, hi, _, _ in self.glims] + [(lo, hi) for _, _, lo, hi in self.glims]
        bounds += [(-math.pi / 2, math.pi / 2)] * (nb - 1) + vl
        if self._warm is None:
            z0 = np.concatenate([[0.5 * (lo + hi) for lo, hi, _, _ in self.glims], np.zeros(ng),
                                 np.zeros(nb - 1), np.ones(nv)])
        else:
            z0 = self._warm.copy()
        res = minimize(scaled, z0, jac=True, method="SLSQP", bounds=bounds,
                       constraints=[{"type": "eq", "fun": balance}],
                       options={"ftol": 1e-12, "maxiter": 150})
        if not res.success or np.abs(balance(res.x)).max() > 1e-7:
            return math.inf
        self._warm = res.x
        self.last = self._unpack(res.x, vb)
        return cost(res.x)


def tie_export(tie, v_from, v_to, delta):
    """(export at from end, export at to end) of the tie, pu complex."""
    pf, qf, pt, qt = complex_branch_flows(tie.r, tie.x, tie.b, tie.tap, tie.shift,
                                          v_from, delta, v_to, 0.0)
    return complex(pf, qf), complex(pt, qt)


def two_area_grid_oracle(area_a, area_b, tie, start, steps=(0.004, 0.002, 0.001), span=1):
    """Coarse-to-fine grid over the boundary variables (angle difference, v_from, v_to).

    At each level a (2*span+1)^3 grid is laid around the incumbent and
    re-centred until no grid point improves; the spacing then shrinks
    through ``steps`` down to the final resolution. All points lie on the
    lattice of the last step. Returns (best cost, (delta, v_from, v_to)).
    """
    h_min = steps[-1]
    seen = {}

    def total(point):
        key = tuple(int(round(c / h_min)) for c in point)
        if key not in seen:
            d, va, vb = (k * h_min for k in key)
            ea, eb = tie_export(tie, va, vb, d)
            ca = area_a.solve(va, ea)
            seen[key] = ca + area_b.solve(vb, eb) if math.isfinite(ca) else math.inf
        return seen[key]

    best_pt = tuple(round(c / h_min) * h_min for c in start)
    best = total(best_pt)
    offsets = range(-span, span + 1)
    for h in steps:
        moved = True
        while moved:
            moved = False
            centre = best_pt
            for i, j, k in itertools.product(offsets, offsets, offsets):
                pt = (centre[0] + i * h, centre[1] + j * h, centre[2] + k * h)
                val = total(pt)
                if val < best - 1e-9:
                    best, best_pt, moved = val, pt, True
    return best, best_pt


def two_bus_grid_oracle(load_mw, load_mvar, x, vmin, vmax, c1, qlim, base=100.0, h=1e-3):
    """Feasible (theta2, v2) grid points for the lossless 2-bus case and the resulting cost.

    Bus 1 voltage is solved from the active balance; the point is feasible
    when v1 is in its box, bus 2 reactive balance holds to grid accuracy and
    the generator's reactive output is in limits.
    """
    p = load_mw / base
    q = load_mvar / base
    best = math.inf
    n_feasible = 0
    for v2 in np.arange(vmin, vmax + 1e-12, h):
        for th2 in np.arange(-0.5, 0.0, h):
            s = math.sin(-th2)
            v1 = p * x / (v2 * s)
            if not vmin <= v1 <= vmax:
                continue
            # reactive power arriving at bus 2 over a lossless line
            q_recv = (v1 * v2 * math.cos(th2) - v2 ** 2) / x
            # tolerance from the grid spacing: dq/dv2 * h/2
            if abs(q_recv - q) > (abs(v1 - 2 * v2) / x + 1) * h:
                continue
            q_gen = (v1 ** 2 - v1 * v2 * math.cos(th2)) / x
            if not -qlim <= q_gen <= qlim:
                continue
            n_feasible += 1
            best = min(best, c1 * p * base)
    return best, n_feasible
