"""Power network data model and the MATPOWER case text format.

Only the numeric core of a MATPOWER case is handled: ``baseMVA`` and the
``bus``, ``gen``, ``branch`` and ``gencost`` matrices. Anything else in the
file (``areas``, ``bus_name`` cell arrays, ``version``) is skipped on read.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable

from .errors import (
    CaseFormatError,
    DanglingReference,
    DuplicateBusId,
    MalformedRow,
    MissingSection,
)

BUS_COLUMNS = 13
GEN_COLUMNS = 10
BRANCH_COLUMNS = 13


class BusType(enum.IntEnum):
    PQ = 1
    PV = 2
    REF = 3
    ISOLATED = 4


class CostModel(enum.IntEnum):
    PIECEWISE = 1
    POLYNOMIAL = 2


@dataclass(frozen=True)
class Bus:
    id: int
    bus_type: BusType
    pd: float
    qd: float
    gs: float
    bs: float
    area: int
    vm: float
    va: float
    base_kv: float
    zone: int
    vmax: float
    vmin: float
    extra: tuple = ()


@dataclass(frozen=True)
class Generator:
    bus: int
    pg: float
    qg: float
    qmax: float
    qmin: float
    vg: float
    mbase: float
    status: int
    pmax: float
    pmin: float
    extra: tuple = ()

    @property
    def in_service(self) -> bool:
        return self.status > 0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float
    rate_a: float
    rate_b: float
    rate_c: float
    tap: float
    shift: float
    status: int
    angmin: float
    angmax: float
    extra: tuple = ()

    @property
    def in_service(self) -> bool:
        return self.status > 0

    @property
    def ratio(self) -> float:
        # MATPOWER stores tap = 0 for plain lines
        return self.tap if self.tap != 0 else 1.0


@dataclass(frozen=True)
class GenCost:
    model: CostModel
    startup: float
    shutdown: float
    coefficients: tuple

    @property
    def ncost(self) -> int:
        if self.model == CostModel.PIECEWISE:
            return len(self.coefficients) // 2
        return len(self.coefficients)

    def quadratic(self) -> tuple[float, float, float]:
        """Return ``(c2, c1, c0)`` for a polynomial cost of degree at most 2."""
        if self.model != CostModel.POLYNOMIAL:
            raise ValueError("piecewise-linear cost has no polynomial coefficients")
        coeffs = tuple(float(c) for c in self.coefficients)
        if len(coeffs) > 3:
            high = coeffs[: len(coeffs) - 3]
            if any(c != 0 for c in high):
                raise ValueError("polynomial cost of degree > 2 is not supported")
            coeffs = coeffs[-3:]
        coeffs = (0.0,) * (3 - len(coeffs)) + coeffs
        return coeffs[0], coeffs[1], coeffs[2]


@dataclass(frozen=True)
class CaseData:
    name: str
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    gencosts: tuple[GenCost, ...] = field(default=())

    def bus_index(self) -> dict[int, int]:
        """Map bus id to its row position."""
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    def ref_buses(self) -> list[int]:
        return [b.id for b in self.buses if b.bus_type == BusType.REF]

    def in_service_branches(self) -> list[int]:
        return [i for i, br in enumerate(self.branches) if br.in_service]


# ---------------------------------------------------------------------------
# parsing

_NAME_RE = re.compile(r"^\s*function\s+\w+\s*=\s*([A-Za-z_]\w*)")
_SCALAR_RE = re.compile(r"^\s*(?:\w+\.)?baseMVA\s*=\s*([^;]+);?")
_MATRIX_RE = re.compile(r"^\s*(?:\w+\.)?([A-Za-z_]\w*)\s*=\s*\[(.*)$")
_TOKEN_SPLIT = re.compile(r"[\s,]+")


def _to_float(token: str) -> float:
    t = token.strip()
    low = t.lower()
    if low in ("inf", "+inf"):
        return math.inf
    if low == "-inf":
        return -math.inf
    if low == "nan":
        return math.nan
    return float(t)


def _scan_matrices(text: str):
    """Yield (name, [(line_no, [floats])]) for every ``name = [ ... ]`` block."""
    name = None
    rows = []
    pending = []
    pending_line = 0

    def flush_row():
        nonlocal pending
        if pending:
            rows.append((pending_line, pending))
        pending = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0]
        if name is None:
            m = _MATRIX_RE.match(line)
            if not m:
                continue
            name = m.group(1)
            rows = []
            pending = []
            line = m.group(2)
        closed = "]" in line
        body = line.split("]", 1)[0] if closed else line
        for chunk_i, chunk in enumerate(body.split(";")):
            if chunk_i > 0:
                flush_row()
            tokens = [t for t in _TOKEN_SPLIT.split(chunk.strip()) if t]
            if tokens:
                if not pending:
                    pending_line = line_no
                try:
                    pending.extend(_to_float(t) for t in tokens)
                except ValueError as exc:
                    raise CaseFormatError(f"line {line_no}: non-numeric entry in '{name}'") from exc
        # a newline ends a row just like ';'
        flush_row()
        if closed:
            yield name, rows
            name = None
    if name is not None:
        raise CaseFormatError(f"matrix '{name}' is not terminated with ']'")


def _as_int(value: float, line: int, section: str) -> int:
    if not math.isfinite(value) or value != int(value):
        raise CaseFormatError(f"line {line} in '{section}': expected an integer, got {value!r}")
    return int(value)


def _bus_from_row(line: int, row: list[float]) -> Bus:
    if len(row) < BUS_COLUMNS:
        raise MalformedRow(line, BUS_COLUMNS, "bus", len(row))
    try:
        bus_type = BusType(_as_int(row[1], line, "bus"))
    except ValueError as exc:
        raise CaseFormatError(f"line {line}: unknown bus type {row[1]!r}") from exc
    return Bus(
        id=_as_int(row[0], line, "bus"),
        bus_type=bus_type,
        pd=row[2], qd=row[3], gs=row[4], bs=row[5],
        area=_as_int(row[6], line, "bus"),
        vm=row[7], va=row[8], base_kv=row[9],
        zone=_as_int(row[10], line, "bus"),
        vmax=row[11], vmin=row[12],
        extra=tuple(row[BUS_COLUMNS:]),
    )


def _gen_from_row(line: int, row: list[float]) -> Generator:
    if len(row) < GEN_COLUMNS:
        raise MalformedRow(line, GEN_COLUMNS, "gen", len(row))
    return Generator(
        bus=_as_int(row[0], line, "gen"),
        pg=row[1], qg=row[2], qmax=row[3], qmin=row[4], vg=row[5], mbase=row[6],
        status=_as_int(row[7], line, "gen"),
        pmax=row[8], pmin=row[9],
        extra=tuple(row[GEN_COLUMNS:]),
    )


def _branch_from_row(line: int, row: list[float]) -> Branch:
    if len(row) < BRANCH_COLUMNS:
        raise MalformedRow(line, BRANCH_COLUMNS, "branch", len(row))
    return Branch(
        from_bus=_as_int(row[0], line, "branch"),
        to_bus=_as_int(row[1], line, "branch"),
        r=row[2], x=row[3], b=row[4],
        rate_a=row[5], rate_b=row[6], rate_c=row[7],
        tap=row[8], shift=row[9],
        status=_as_int(row[10], line, "branch"),
        angmin=row[11], angmax=row[12],
        extra=tuple(row[BRANCH_COLUMNS:]),
    )


def _gencost_from_row(line: int, row: list[float]) -> GenCost:
    if len(row) < 4:
        raise MalformedRow(line, 4, "gencost", len(row))
    try:
        model = CostModel(_as_int(row[0], line, "gencost"))
    except ValueError as exc:
        raise CaseFormatError(f"line {line}: unknown cost model {row[0]!r}") from exc
    n = _as_int(row[3], line, "gencost")
    width = 2 * n if model == CostModel.PIECEWISE else n
    coeffs = row[4:]
    if len(coeffs) < width:
        raise MalformedRow(line, 4 + width, "gencost", len(row))
    # MATPOWER pads short rows with zeros when models of different length are mixed
    if any(c != 0 for c in coeffs[width:]):
        raise MalformedRow(line, 4 + width, "gencost", len(row))
    return GenCost(model=model, startup=row[1], shutdown=row[2], coefficients=tuple(coeffs[:width]))


def parse_case(text: str) -> CaseData:
    """Parse MATPOWER case text into a :class:`CaseData`.

    Bus ids are kept as written; see :func:`renumber_buses`.
    """
    name = "case"
    base_mva = None
    for raw in text.splitlines():
        line = raw.split("%", 1)[0]
        m = _NAME_RE.match(line)
        if m and name == "case":
            name = m.group(1)
            continue
        m = _SCALAR_RE.match(line)
        if m and base_mva is None:
            try:
                base_mva = _to_float(m.group(1))
            except ValueError as exc:
                raise CaseFormatError(f"bad baseMVA value {m.group(1)!r}") from exc

    matrices = {}
    for mat_name, rows in _scan_matrices(text):
        if mat_name in ("bus", "gen", "branch", "gencost") and mat_name not in matrices:
            matrices[mat_name] = rows

    if base_mva is None:
        raise MissingSection("baseMVA")
    for required in ("bus", "gen", "branch"):
        if required not in matrices:
            raise MissingSection(required)

    buses = tuple(_bus_from_row(ln, row) for ln, row in matrices["bus"])
    generators = tuple(_gen_from_row(ln, row) for ln, row in matrices["gen"])
    branches = tuple(_branch_from_row(ln, row) for ln, row in matrices["branch"])
    gencosts = tuple(_gencost_from_row(ln, row) for ln, row in matrices.get("gencost", []))

    case = CaseData(name, base_mva, buses, branches, generators, gencosts)
    check_references(case)
    return case


def check_references(case: CaseData) -> None:
    """Raise if bus ids repeat or a branch/generator points at a missing bus."""
    seen = set()
    for bus in case.buses:
        if bus.id in seen:
            raise DuplicateBusId(bus.id)
        seen.add(bus.id)
    for i, br in enumerate(case.branches):
        for end in (br.from_bus, br.to_bus):
            if end not in seen:
                raise DanglingReference("branch", i + 1, end)
        if br.from_bus == br.to_bus:
            raise CaseFormatError(f"branch row {i + 1} connects bus {br.from_bus} to itself")
    for i, gen in enumerate(case.generators):
        if gen.bus not in seen:
            raise DanglingReference("gen", i + 1, gen.bus)
    if case.gencosts and len(case.gencosts) != len(case.generators):
        raise CaseFormatError(
            f"{len(case.gencosts)} gencost rows for {len(case.generators)} generators"
        )


# ---------------------------------------------------------------------------
# writing


def format_number(value) -> str:
    """Shortest text that parses back to exactly ``value``."""
    if isinstance(value, (int, enum.IntEnum)) and not isinstance(value, bool):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _bus_row(b: Bus) -> list:
    return [b.id, int(b.bus_type), b.pd, b.qd, b.gs, b.bs, b.area, b.vm, b.va,
            b.base_kv, b.zone, b.vmax, b.vmin, *b.extra]


def _gen_row(g: Generator) -> list:
    return [g.bus, g.pg, g.qg, g.qmax, g.qmin, g.vg, g.mbase, g.status, g.pmax, g.pmin, *g.extra]


def _branch_row(br: Branch) -> list:
    return [br.from_bus, br.to_bus, br.r, br.x, br.b, br.rate_a, br.rate_b, br.rate_c,
            br.tap, br.shift, br.status, br.angmin, br.angmax, *br.extra]


def _gencost_row(c: GenCost) -> list:
    return [int(c.model), c.startup, c.shutdown, c.ncost, *c.coefficients]


def _matrix_block(name: str, header: str, rows: Iterable[list]) -> list[str]:
    out = [f"%% {header}", f"mpc.{name} = ["]
    for row in rows:
        out.append("\t" + "\t".join(format_number(v) for v in row) + ";")
    out.append("];")
    out.append("")
    return out


def write_case(case: CaseData) -> str:
    """Render ``case`` as MATPOWER case text.

    The ``gencost`` block is omitted when the case carries no cost rows.
    """
    lines = [
        f"function mpc = {case.name}",
        "",
        "%% MATPOWER Case Format : Version 2",
        "mpc.version = '2';",
        "",
        "%%-----  Power Flow Data  -----%%",
        "%% system MVA base",
        f"mpc.baseMVA = {format_number(case.base_mva)};",
        "",
    ]
    lines += _matrix_block(
        "bus", "bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
        (_bus_row(b) for b in case.buses),
    )
    lines += _matrix_block(
        "gen", "generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin",
        (_gen_row(g) for g in case.generators),
    )
    lines += _matrix_block(
        "branch",
        "branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax",
        (_branch_row(br) for br in case.branches),
    )
    if case.gencosts:
        lines += _matrix_block(
            "gencost", "generator cost data\n%\t1\tstartup\tshutdown\tn\tx1\ty1\t...\n%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0",
            (_gencost_row(c) for c in case.gencosts),
        )
    return "\n".join(lines)


def read_case(path) -> CaseData:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_case(fh.read())


def save_case(case: CaseData, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_case(case))


# ---------------------------------------------------------------------------
# renumbering


def renumber_buses(case: CaseData) -> tuple[CaseData, dict[int, int]]:
    """Relabel buses 1..n in file order and rewrite all references.

    Returns the new case and the old-id -> new-id mapping. Cases that are
    already numbered 1..n in file order come back unchanged.
    """
    mapping = {bus.id: i + 1 for i, bus in enumerate(case.buses)}
    if all(old == new for old, new in mapping.items()):
        return case, mapping
    buses = tuple(replace(b, id=mapping[b.id]) for b in case.buses)
    branches = tuple(
        replace(br, from_bus=mapping[br.from_bus], to_bus=mapping[br.to_bus]) for br in case.branches
    )
    gens = tuple(replace(g, bus=mapping[g.bus]) for g in case.generators)
    return replace(case, buses=buses, branches=branches, generators=gens), mapping
