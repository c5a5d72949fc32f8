"""Physical consistency checks on a solved multi-region case, plus convergence artifacts."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .acopf import ac_branch_flows, branch_admittance
from .admm import AdmmState
from .errors import InvalidState, IoError
from .report import Check, Report

BALANCE_PER_BUS = 1e-3   # pu per bus
TIE_TOLERANCE = 1e-3     # pu per tie


def _total_buses(mrc) -> int:
    return sum(reg.case.n_buses for reg in mrc.regions)


def _ac_region_losses(reg, res) -> float:
    """Active losses on in-service internal branches plus shunt draw, pu."""
    case = reg.case
    index = case.bus_index()
    total = 0.0
    for br in case.branches:
        if not br.in_service:
            continue
        i, j = index[br.from_bus], index[br.to_bus]
        pf, _, pt, _ = ac_branch_flows(branch_admittance(br), res.v[i], res.v[j],
                                       res.theta[i], res.theta[j])
        total += pf + pt
    for pos, b in enumerate(case.buses):
        total += b.gs / case.base_mva * res.v[pos] ** 2
    return total


def _ac_tie_ends(t, ra, rb):
    """Tie flows seen by both regions: ((pf, qf, pt, qt) per region A, same per region B)."""
    adm = branch_admittance(t.branch)
    i, j = t.local_from_bus - 1, t.local_to_bus - 1
    a = ac_branch_flows(adm, ra.v[i], ra.virtual_v[t.global_to_bus],
                        ra.theta[i], ra.virtual_theta[t.global_to_bus])
    b = ac_branch_flows(adm, rb.virtual_v[t.global_from_bus], rb.v[j],
                        rb.virtual_theta[t.global_from_bus], rb.theta[j])
    return a, b


def check_power_balance(solution, mrc, mode: str | None = None,
                        threshold: float | None = None) -> Check:
    """Generation minus demand (minus losses for AC) across all regions, in pu."""
    mode = mode or solution.mode
    base = mrc.base_mva
    threshold = BALANCE_PER_BUS * _total_buses(mrc) if threshold is None else threshold
    gen = sum(float(np.sum(r.pg)) for r in solution.regions.values()) / base
    demand = sum(b.pd for reg in mrc.regions for b in reg.case.buses) / base
    mismatch = gen - demand
    if mode == "ac":
        losses = 0.0
        for reg in mrc.regions:
            losses += _ac_region_losses(reg, solution.regions[reg.region_id])
        for t in mrc.tie_lines:
            a, b = _ac_tie_ends(t, solution.regions[t.from_region], solution.regions[t.to_region])
            # each end as seen by the region that owns it
            losses += a[0] + b[2]
        mismatch -= losses
    measured = abs(mismatch)
    return Check("power_balance", measured <= threshold, measured, threshold,
                 detail=f"{mode.upper()} generation - demand" + (" - losses" if mode == "ac" else ""))


def check_tieline_consistency(solution, mrc, threshold: float = TIE_TOLERANCE) -> list:
    """One check per tie comparing the two regions' own evaluation of its active flow.

    DC compares the from-end flow of region A with the negated to-end flow of
    region B. AC compares each end's active flow as computed by both regions;
    the reactive disagreement is reported as a warning only.
    """
    out = []
    for n, t in enumerate(mrc.tie_lines, start=1):
        ra, rb = solution.regions[t.from_region], solution.regions[t.to_region]
        name = f"tie_{n}_{t.global_from_bus}-{t.global_to_bus}"
        if solution.mode == "ac":
            a, b = _ac_tie_ends(t, ra, rb)
            measured = max(abs(a[0] - b[0]), abs(a[2] - b[2]))
            out.append(Check(name, measured <= threshold, float(measured), threshold))
            q = max(abs(a[1] - b[1]), abs(a[3] - b[3]))
            out.append(Check(name + "_reactive", q <= threshold, float(q), threshold,
                             level="warning"))
        else:
            x = t.branch.x
            fa = (ra.theta[t.local_from_bus - 1] - ra.virtual_theta[t.global_to_bus]) / x
            fb = (rb.theta[t.local_to_bus - 1] - rb.virtual_theta[t.global_from_bus]) / x
            measured = abs(fa + fb)
            out.append(Check(name, measured <= threshold, float(measured), threshold))
    return out


def validate_solution(solution, mrc) -> Report:
    """Balance plus per-tie checks. Pure: the same inputs always give the same report."""
    checks = [check_power_balance(solution, mrc)]
    checks.extend(check_tieline_consistency(solution, mrc))
    checks.append(Check("admm_converged", bool(solution.converged), float(solution.residual),
                        math.nan, level="warning", detail=f"{solution.iterations} iterations"))
    return Report(checks)


def emit_convergence_artifacts(state: AdmmState, directory, stem: str = "convergence") -> list:
    """Write ``<stem>.csv`` and a log-scale residual chart ``<stem>.svg``."""
    if state.iteration < 1:
        raise InvalidState("no ADMM iteration to report")
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        csv_path = d / f"{stem}.csv"
        gaps = state.gap_history
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "worst_primal_residual", "total_cost", "optimality_gap"])
            for k in range(state.iteration):
                gap = "" if gaps is None else repr(float(gaps[k]))
                w.writerow([k + 1, repr(float(state.residual_history[k])),
                            repr(float(state.cost_history[k])), gap])
        svg_path = d / f"{stem}.svg"
        _residual_chart(state, svg_path)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return [csv_path, svg_path]


def _residual_chart(state: AdmmState, path: Path) -> None:
    from matplotlib.figure import Figure

    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    its = np.arange(1, state.iteration + 1)
    res = np.maximum(np.asarray(state.residual_history, dtype=float), 1e-16)
    ax.semilogy(its, res, lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("worst primal residual")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
