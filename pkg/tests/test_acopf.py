import math
from dataclasses import replace

import numpy as np
import pytest

from builders import make_case
from oracles import complex_branch_flows
from regionopf.acopf import (AcRegionModel, ac_branch_flows, branch_admittance,
                             build_ac_subproblem, solve_ac_centralized, solve_ac_distributed)
from regionopf.admm import ANGLE, MAGNITUDE, AdmmConfig, build_shared_variables
from regionopf.case import Branch, read_case
from regionopf.errors import DegenerateBranch, Infeasible, MaxIterations, SubproblemFailure
from regionopf.numerics.nlp import check_derivatives
from regionopf.partition import Partition, partition_case, tie_line_indices
from regionopf.regions import extract_regions


def branch(r=0.0, x=0.1, b=0.0, tap=0.0, shift=0.0):
    return Branch(1, 2, r, x, b, 0, 0, 0, tap, shift, 1, -360, 360)


def test_lossless_coefficients():
    a = branch_admittance(branch())
    assert (a.g1, a.g2, a.g3, a.g4) == (0, 0, 0, 0)
    assert abs(a.b2) == pytest.approx(10) and abs(a.b3) == pytest.approx(10)


def test_degenerate_branch():
    with pytest.raises(DegenerateBranch):
        branch_admittance(branch(r=0, x=0))


def test_flat_flows_zero():
    assert np.allclose(ac_branch_flows(branch_admittance(branch()), 1.0, 1.0, 0.0, 0.0), 0)


def test_lossless_angle_difference():
    pf, qf, pt, qt = ac_branch_flows(branch_admittance(branch()), 1.0, 1.0, 0.1, 0.0)
    assert pf == pytest.approx(10 * math.sin(0.1), abs=1e-12)
    assert pf == pytest.approx(0.99833, abs=1e-5)
    assert pf + pt == pytest.approx(0, abs=1e-12)
    ref = complex_branch_flows(0, 0.1, 0, 0, 0, 1.0, 0.1, 1.0, 0.0)
    assert np.allclose((pf, qf, pt, qt), ref, atol=1e-12)


def test_lossy_branch_matches_oracle():
    br = branch(r=0.01, x=0.1, b=0.02)
    for vi, vj, ti, tj in [(1.0, 1.0, 0.0, 0.0), (1.05, 0.97, 0.2, -0.1), (0.9, 1.1, -0.3, 0.4)]:
        got = ac_branch_flows(branch_admittance(br), vi, vj, ti, tj)
        assert np.allclose(got, complex_branch_flows(0.01, 0.1, 0.02, 0, 0, vi, ti, vj, tj),
                           atol=1e-12)


@pytest.mark.parametrize("d", [-0.5, -0.01, 0.01, 0.3])
def test_lossy_positive_losses(d):
    pf, _, pt, _ = ac_branch_flows(branch_admittance(branch(r=0.01)), 1.0, 1.0, d, 0.0)
    assert pf + pt > 0
    # I^2 r with |I| = |V_f - V_t| / |z|
    i2 = abs(1 - np.exp(-1j * d)) ** 2 / abs(complex(0.01, 0.1)) ** 2
    assert pf + pt == pytest.approx(i2 * 0.01, rel=1e-10)


def test_tap_and_shift_oracle():
    br = branch(r=0.02, x=0.08, b=0.05, tap=0.95, shift=-7.5)
    got = ac_branch_flows(branch_admittance(br), 1.02, 0.98, 0.05, -0.12)
    assert np.allclose(got, complex_branch_flows(0.02, 0.08, 0.05, 0.95, -7.5, 1.02, 0.05, 0.98, -0.12),
                       atol=1e-12)


def test_vectorized_flows():
    a = branch_admittance(branch(r=0.01, b=0.02))
    v = np.array([1.0, 1.05])
    out = ac_branch_flows(a, v, v[::-1], np.array([0.1, 0.0]), np.zeros(2))
    single = ac_branch_flows(a, 1.05, 1.0, 0.0, 0.0)
    assert np.allclose([o[1] for o in out], single)


def one_bus_case(pd=100.0, qd=20.0):
    case = make_case(1, [], [0])
    bus = replace(case.buses[0], pd=pd, qd=qd)
    gen = replace(case.generators[0], pmax=200.0, pmin=0.0, qmax=100.0, qmin=0.0)
    from regionopf.case import CostModel, GenCost
    return replace(case, buses=(bus,), generators=(gen,),
                   gencosts=(GenCost(CostModel.POLYNOMIAL, 0, 0, (10.0, 0.0)),))


def test_one_bus_region():
    sol = solve_ac_centralized(one_bus_case())
    r = sol.regions[1]
    assert r.pg[0] == pytest.approx(100, abs=1e-5)
    assert r.qg[0] == pytest.approx(20, abs=1e-5)
    assert 0.9 - 1e-9 <= r.v[0] <= 1.1 + 1e-9
    assert sol.total_cost == pytest.approx(1000, abs=1e-3)


def test_zero_load_zero_cost():
    sol = solve_ac_centralized(one_bus_case(0.0, 0.0))
    assert sol.regions[1].pg[0] == pytest.approx(0, abs=1e-6)
    assert sol.total_cost == pytest.approx(0, abs=1e-4)


def test_undeliverable_load(hand_dir):
    case = read_case(hand_dir / "two_bus.case")
    weak = replace(case, branches=(replace(case.branches[0], x=5.0),))
    with pytest.raises((Infeasible, MaxIterations)):
        solve_ac_centralized(weak)


def test_two_bus_centralized(hand_dir):
    sol = solve_ac_centralized(read_case(hand_dir / "two_bus.case"))
    assert sol.regions[1].pg[0] == pytest.approx(100, abs=1e-4)
    assert sol.total_cost == pytest.approx(1000, abs=1e-2)


@pytest.mark.parametrize("name,cost", [("case9", 5296.69), ("case30", 576.89), ("case14", 8081.53)])
def test_reference_optima(data_dir, name, cost):
    sol = solve_ac_centralized(read_case(data_dir / f"{name}.case"), conventional_mva_limit=True)
    assert sol.total_cost == pytest.approx(cost, rel=2e-5)


def test_squared_limit_forms():
    case = make_case(2, [(0, 1)], [0, 1])
    case = replace(case, branches=(replace(case.branches[0], rate_a=100.0),))
    lit = AcRegionModel(case)
    conv = AcRegionModel(case, conventional_mva_limit=True)
    assert lit.limit[0] == pytest.approx(2.0)
    assert conv.limit[0] == pytest.approx(1.0)


def test_rate_zero_unlimited():
    model = AcRegionModel(make_case(2, [(0, 1)], [0, 1]))
    assert model.limited.size == 0


def two_region_toy(hand_dir, name="toy6", asg=(1, 1, 1, 2, 2, 2), require=True):
    case = read_case(hand_dir / f"{name}.case")
    p = Partition(2, asg, tuple(tie_line_indices(case, asg)), 0, 1)
    return case, extract_regions(case, p, require_generator=require)


def test_penalty_vanishes(hand_dir):
    _, mrc = two_region_toy(hand_dir)
    shared = [replace(s, lambda_per_region=(0.0, 0.0))
              for s in build_shared_variables(mrc, (ANGLE, MAGNITUDE))]
    reg = mrc.region(2)
    ties = [mrc.tie_lines[i] for i in mrc.ties_of(2)]
    p = build_ac_subproblem(reg, ties, shared, 0.0)
    x = p.x0.copy()
    x[0] = 1.1
    c2, c1, c0 = reg.case.gencosts[0].quadratic()
    assert p.objective(x)[0] == pytest.approx(c2 * 110 ** 2 + c1 * 110 + c0)


@pytest.mark.parametrize("name", ["case9", "case14", "case30"])
def test_centralized_derivatives(data_dir, name):
    model = AcRegionModel(read_case(data_dir / f"{name}.case"))
    rng = np.random.default_rng(0)
    x = model.flat_start() + rng.normal(scale=0.05, size=model.n)
    err, where = check_derivatives(model.nlp(), x)
    assert err < 1e-4, where


def test_subproblem_derivatives_with_virtual_buses(hand_dir):
    _, mrc = two_region_toy(hand_dir, "tap5", (1, 1, 2, 2, 2), require=False)
    shared = build_shared_variables(mrc, (ANGLE, MAGNITUDE))
    rng = np.random.default_rng(1)
    for r in (1, 2):
        ties = [mrc.tie_lines[i] for i in mrc.ties_of(r)]
        p = build_ac_subproblem(mrc.region(r), ties, shared, 500.0, is_slack=(r == 1))
        x = p.x0 + rng.normal(scale=0.05, size=p.n)
        err, where = check_derivatives(p, x)
        assert err < 1e-4, where


def test_empty_voltage_box_fails_first_iteration(hand_dir):
    case, _ = two_region_toy(hand_dir)
    buses = tuple(replace(b, vmin=1.1, vmax=0.9) if b.id == 5 else b for b in case.buses)
    case = replace(case, buses=buses)
    asg = (1, 1, 1, 2, 2, 2)
    mrc = extract_regions(case, Partition(2, asg, tuple(tie_line_indices(case, asg)), 0, 1))
    with pytest.raises(SubproblemFailure) as e:
        solve_ac_distributed(mrc, AdmmConfig(rho=1e5, max_iters=10))
    assert e.value.iteration == 1
    assert e.value.region == 2


def test_two_bus_distributed(hand_dir):
    _, mrc = two_region_toy(hand_dir, "two_bus", (1, 2), require=False)
    sol, state = solve_ac_distributed(mrc, AdmmConfig(rho=1e5, tolerance=1e-4, max_iters=3000))
    assert sol.converged and sol.residual <= 1e-4
    assert sol.total_generation_mw == pytest.approx(100, rel=5e-3)


def test_toy6_matches_centralized(hand_dir):
    case, mrc = two_region_toy(hand_dir)
    central = solve_ac_centralized(case).total_cost
    sol, _ = solve_ac_distributed(mrc, AdmmConfig(rho=1e5, tolerance=1e-5))
    assert abs(sol.total_cost - central) / central < 1e-3


def test_solutions_respect_bounds(data_dir):
    case = read_case(data_dir / "case9.case")
    r = solve_ac_centralized(case).regions[1]
    for g, p, q in zip(case.generators, r.pg, r.qg):
        assert g.pmin - 1e-5 <= p <= g.pmax + 1e-5
        assert g.qmin - 1e-5 <= q <= g.qmax + 1e-5
    for b, v in zip(case.buses, r.v):
        assert b.vmin - 1e-7 <= v <= b.vmax + 1e-7


def test_partitioned_case9_distributed(data_dir):
    case = read_case(data_dir / "case9.case")
    mrc = extract_regions(case, partition_case(case, 2, seed=0))
    central = solve_ac_centralized(case).total_cost
    sol, _ = solve_ac_distributed(mrc, AdmmConfig(rho=1e5, tolerance=1e-4))
    assert abs(sol.total_cost - central) / central < 5e-3
