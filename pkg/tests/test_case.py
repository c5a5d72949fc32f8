import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regionopf.case import (BusType, CaseData, CostModel, parse_case, read_case, renumber_buses,
                            write_case)
from regionopf.errors import DanglingReference, DuplicateBusId, MalformedRow, MissingSection

TWO_BUS = """
function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;
  2 1 100 20 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 100 -100 1 100 1 200 0;
];
mpc.branch = [
  1 2 0 0.1 0 200 200 200 0 0 1 -360 360;
];
"""


def test_minimal_two_bus():
    c = parse_case(TWO_BUS)
    assert (c.n_buses, len(c.branches), len(c.generators)) == (2, 1, 1)
    assert c.name == "tiny"
    assert c.base_mva == 100
    assert c.buses[0].bus_type == BusType.REF
    assert c.buses[1].pd == 100 and c.buses[1].qd == 20
    assert c.gencosts == ()


def test_missing_branch_section():
    text = TWO_BUS.split("mpc.branch")[0]
    with pytest.raises(MissingSection) as e:
        parse_case(text)
    assert e.value.name == "branch"


def test_sparse_ids_preserved():
    text = TWO_BUS.replace("  2 1 100", "  9 1 100").replace("  1 2 0 0.1", "  1 9 0 0.1")
    text = text.replace("mpc.bus = [\n", "mpc.bus = [\n  5 1 0 0 0 0 1 1 0 230 1 1.1 0.9;\n")
    c = parse_case(text)
    assert sorted(b.id for b in c.buses) == [1, 5, 9]


def test_malformed_row_reports_line():
    text = TWO_BUS.replace("2 1 100 20 0 0 1 1 0 230 1 1.1 0.9", "2 1 100 20 0 0 1")
    with pytest.raises(MalformedRow) as e:
        parse_case(text)
    assert e.value.expected == 13
    assert e.value.line == 6


def test_duplicate_bus():
    text = TWO_BUS.replace("  2 1 100", "  1 1 100")
    with pytest.raises(DuplicateBusId):
        parse_case(text)


def test_dangling_branch():
    text = TWO_BUS.replace("  1 2 0 0.1", "  1 7 0 0.1")
    with pytest.raises(DanglingReference) as e:
        parse_case(text)
    assert e.value.bus_id == 7


def test_comments_and_separators(hand_dir):
    c = read_case(hand_dir / "shunt12.case")
    assert c.n_buses == 12
    assert len(c.generators[0].extra) == 11
    assert c.gencosts[1].coefficients == (0.25, 20, 0)


def test_piecewise_cost_parsed(hand_dir):
    c = read_case(hand_dir / "multigen8.case")
    pw = c.gencosts[1]
    assert pw.model == CostModel.PIECEWISE
    assert pw.ncost == 3
    assert pw.coefficients == (0, 0, 30, 420, 60, 960)
    with pytest.raises(ValueError):
        pw.quadratic()
    assert c.gencosts[3].quadratic() == (0.0, 18.0, 0.0)


def test_out_of_service_retained(hand_dir):
    c = read_case(hand_dir / "multigen8.case")
    assert not c.generators[4].in_service
    assert not c.branches[-1].in_service
    assert len(c.branches) == 10


def test_write_without_gencost_omits_section():
    c = parse_case(TWO_BUS)
    text = write_case(c)
    assert "gencost" not in text
    assert parse_case(text) == c


@pytest.mark.parametrize("name", ["two_bus", "toy6", "tap5", "multigen8", "shunt12"])
def test_round_trip_hand_cases(hand_dir, name):
    c = read_case(hand_dir / f"{name}.case")
    assert parse_case(write_case(c)) == c


def test_round_trip_case300(data_dir):
    c = read_case(data_dir / "case300.case")
    again = parse_case(write_case(c))
    assert (again.n_buses, len(again.branches), len(again.generators)) == (300, 411, 69)
    assert again == c


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=6, max_size=6))
def test_round_trip_arbitrary_numbers(values):
    c = parse_case(TWO_BUS)
    b = replace(c.buses[1], pd=values[0], qd=values[1], gs=values[2], bs=values[3])
    br = replace(c.branches[0], r=abs(values[4]), b=values[5])
    c2 = replace(c, buses=(c.buses[0], b), branches=(br,))
    assert parse_case(write_case(c2)) == c2


def test_infinite_limits_round_trip():
    text = TWO_BUS.replace("100 -100 1 100 1 200 0", "Inf -Inf 1 100 1 200 0")
    c = parse_case(text)
    assert math.isinf(c.generators[0].qmax)
    assert parse_case(write_case(c)) == c


def test_renumber_sparse():
    text = """mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 1 1 1.1 0.9;
 5 1 0 0 0 0 1 1 0 1 1 1.1 0.9;
 9 1 0 0 0 0 1 1 0 1 1 1.1 0.9;
];
mpc.gen = [ 9 0 0 0 0 1 100 1 10 0; ];
mpc.branch = [
 1 9 0 0.1 0 0 0 0 0 0 1 -360 360;
 5 9 0 0.1 0 0 0 0 0 0 1 -360 360;
];
"""
    c = parse_case(text)
    new, mapping = renumber_buses(c)
    assert mapping == {1: 1, 5: 2, 9: 3}
    assert (new.branches[0].from_bus, new.branches[0].to_bus) == (1, 3)
    assert new.generators[0].bus == 3
    assert max(b.id for b in new.buses) == new.n_buses


def test_renumber_file_order():
    text = """mpc.baseMVA = 100;
mpc.bus = [
 10 3 0 0 0 0 1 1 0 1 1 1.1 0.9;
 2 1 0 0 0 0 1 1 0 1 1 1.1 0.9;
 7 1 0 0 0 0 1 1 0 1 1 1.1 0.9;
];
mpc.gen = [ 10 0 0 0 0 1 100 1 10 0; ];
mpc.branch = [ 10 2 0 0.1 0 0 0 0 0 0 1 -360 360; 2 7 0 0.1 0 0 0 0 0 0 1 -360 360; ];
"""
    new, mapping = renumber_buses(parse_case(text))
    assert mapping == {10: 1, 2: 2, 7: 3}
    edges = sorted(tuple(sorted((br.from_bus, br.to_bus))) for br in new.branches)
    assert edges == [(1, 2), (2, 3)]


def test_renumber_identity(data_dir):
    c = read_case(data_dir / "case9.case")
    new, mapping = renumber_buses(c)
    assert new == c
    assert all(k == v for k, v in mapping.items())


def test_renumber_preserves_edge_multiset(hand_dir):
    c = read_case(hand_dir / "shunt12.case")
    new, mapping = renumber_buses(c)
    old_edges = sorted((mapping[b.from_bus], mapping[b.to_bus]) for b in c.branches)
    assert old_edges == sorted((b.from_bus, b.to_bus) for b in new.branches)
    assert (new.n_buses, len(new.branches), len(new.generators)) == (12, 16, 3)
