"""Per-region sub-cases, the tie-line table, and their on-disk layout.

A partition directory ``<case>_<k>regions/`` holds::

    region_R<i>.case   MATPOWER text, buses numbered 1..n_r
    tielines.csv       one row per inter-regional branch
    manifest.json      provenance plus the local -> global bus maps
    topology.dot       region-level graph (one node per region)
"""

from __future__ import annotations

import csv
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .case import Branch, BusType, CaseData, format_number, parse_case, write_case
from .errors import RegionWithoutGenerator, SchemaMismatch
from .partition import Graph, Partition, connected_components
from .report import Check, Report

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TIELINE_HEADER = [
    "from_region", "to_region", "global_from_bus", "global_to_bus",
    "local_from_bus", "local_to_bus",
    "r", "x", "b", "rate_a", "tap", "shift", "angmin", "angmax",
]


@dataclass(frozen=True)
class TieLine:
    from_region: int
    to_region: int
    global_from_bus: int
    global_to_bus: int
    local_from_bus: int
    local_to_bus: int
    branch: Branch  # endpoints carry the global bus ids


@dataclass(frozen=True)
class RegionCase:
    region_id: int
    case: CaseData
    local_to_global: tuple
    boundary_buses: tuple = ()

    def global_to_local(self) -> dict[int, int]:
        return {g: i + 1 for i, g in enumerate(self.local_to_global)}

    def has_generator(self) -> bool:
        return any(g.in_service for g in self.case.generators)


@dataclass(frozen=True)
class MultiRegionCase:
    source_name: str
    k: int
    base_mva: float
    regions: tuple
    tie_lines: tuple
    slack_region: int
    provenance: dict = field(default_factory=dict)

    def region(self, region_id: int) -> RegionCase:
        return self.regions[region_id - 1]

    def ties_of(self, region_id: int) -> list[int]:
        return [i for i, t in enumerate(self.tie_lines)
                if region_id in (t.from_region, t.to_region)]

    def bus_lookup(self) -> dict[int, tuple[int, int]]:
        """Global bus id -> (region id, local id)."""
        out = {}
        for reg in self.regions:
            for local, g in enumerate(reg.local_to_global, start=1):
                out[g] = (reg.region_id, local)
        return out

    @property
    def directory_name(self) -> str:
        return f"{self.source_name}_{self.k}regions"


def extract_regions(case: CaseData, p: Partition, *, source_name: str | None = None,
                    require_generator: bool = True) -> MultiRegionCase:
    """Split ``case`` along ``p`` into locally numbered region cases.

    ``p.assignment`` is read by bus row position. Out-of-service branches
    that would cross regions are dropped (they carry no flow and are not
    tie-lines).
    """
    if len(p.assignment) != case.n_buses:
        raise ValueError("partition does not match the case's bus count")
    region_of = {bus.id: r for bus, r in zip(case.buses, p.assignment)}
    members = {r: sorted(b for b, rr in region_of.items() if rr == r) for r in range(1, p.k + 1)}
    local = {}
    for r, ids in members.items():
        for i, g in enumerate(ids, start=1):
            local[g] = i

    costs = case.gencosts if case.gencosts else (None,) * len(case.generators)
    regions = []
    for r in range(1, p.k + 1):
        ids = set(members[r])
        buses = tuple(replace(b, id=local[b.id]) for b in sorted(case.buses, key=lambda b: b.id)
                      if b.id in ids)
        branches = tuple(
            replace(br, from_bus=local[br.from_bus], to_bus=local[br.to_bus])
            for br in case.branches if br.from_bus in ids and br.to_bus in ids
        )
        gens, gcost = [], []
        for g, c in zip(case.generators, costs):
            if g.bus in ids:
                gens.append(replace(g, bus=local[g.bus]))
                gcost.append(c)
        sub = CaseData(f"{source_name or case.name}_R{r}", case.base_mva, buses, branches,
                       tuple(gens), tuple(gcost) if case.gencosts else ())
        regions.append(RegionCase(r, sub, tuple(members[r])))

    ties = []
    dropped = 0
    for br in case.branches:
        ra, rb = region_of[br.from_bus], region_of[br.to_bus]
        if ra == rb:
            continue
        if not br.in_service:
            dropped += 1
            continue
        ties.append(TieLine(ra, rb, br.from_bus, br.to_bus, local[br.from_bus], local[br.to_bus], br))
    if dropped:
        log.warning("%d out-of-service branches between regions were dropped", dropped)

    boundary = {r: set() for r in range(1, p.k + 1)}
    for t in ties:
        boundary[t.from_region].add(t.local_from_bus)
        boundary[t.to_region].add(t.local_to_bus)
    regions = [replace(reg, boundary_buses=tuple(sorted(boundary[reg.region_id]))) for reg in regions]

    if require_generator:
        for reg in regions:
            if not reg.has_generator():
                raise RegionWithoutGenerator(reg.region_id)

    refs = [b.id for b in case.buses if b.bus_type == BusType.REF]
    if refs:
        slack = region_of[refs[0]]
    else:
        log.warning("case has no reference bus; region 1 is used as the slack region")
        slack = 1
    provenance = {"seed": p.restart_seed, "restarts": p.restarts_used, "strategy": p.strategy}
    return MultiRegionCase(source_name or case.name, p.k, case.base_mva, tuple(regions),
                           tuple(ties), slack, provenance)


def merge_regions(mrc: MultiRegionCase) -> CaseData:
    """Reassemble the full network (global bus ids) from regions and tie-lines."""
    buses, branches, gens, costs = [], [], [], []
    for reg in mrc.regions:
        l2g = reg.local_to_global
        buses += [replace(b, id=l2g[b.id - 1]) for b in reg.case.buses]
        branches += [replace(br, from_bus=l2g[br.from_bus - 1], to_bus=l2g[br.to_bus - 1])
                     for br in reg.case.branches]
        gens += [replace(g, bus=l2g[g.bus - 1]) for g in reg.case.generators]
        costs += list(reg.case.gencosts)
    branches += [t.branch for t in mrc.tie_lines]
    buses.sort(key=lambda b: b.id)
    return CaseData(mrc.source_name, mrc.base_mva, tuple(buses), tuple(branches), tuple(gens),
                    tuple(costs))


def _region_components(reg: RegionCase) -> int:
    import numpy as np
    import scipy.sparse as sp

    n = reg.case.n_buses
    rows, cols = [], []
    for br in reg.case.branches:
        if br.in_service:
            rows += [br.from_bus - 1, br.to_bus - 1]
            cols += [br.to_bus - 1, br.from_bus - 1]
    A = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    return len(connected_components(Graph(n, A, np.asarray(A.sum(axis=1)).ravel().astype(int))))


def verify_integrity(original: CaseData, mrc: MultiRegionCase) -> Report:
    """Conservation and sanity checks of a partition against its source case."""
    report = Report()
    n_bus = sum(reg.case.n_buses for reg in mrc.regions)
    ids = Counter(g for reg in mrc.regions for g in reg.local_to_global)
    same_ids = set(ids) == {b.id for b in original.buses} and all(v == 1 for v in ids.values())
    report.checks.append(Check(
        "bus_conservation", n_bus == original.n_buses and same_ids, n_bus, original.n_buses,
        detail="" if same_ids else "bus id sets differ"))

    total_branches = sum(1 for br in original.branches if br.in_service)
    internal = sum(1 for reg in mrc.regions for br in reg.case.branches if br.in_service)
    kept = internal + len(mrc.tie_lines)
    report.checks.append(Check(
        "branch_conservation", kept == total_branches, kept, total_branches,
        detail=f"deficit {total_branches - kept}" if kept != total_branches else
        f"{internal} internal + {len(mrc.tie_lines)} tie-lines"))

    n_gen = sum(len(reg.case.generators) for reg in mrc.regions)
    report.checks.append(Check(
        "generator_conservation", n_gen == len(original.generators), n_gen, len(original.generators)))

    n_ref = sum(1 for reg in mrc.regions for b in reg.case.buses if b.bus_type == BusType.REF)
    report.checks.append(Check("single_reference_bus", n_ref == 1, n_ref, 1))

    lacking = [reg.region_id for reg in mrc.regions if not reg.has_generator()]
    report.checks.append(Check(
        "generator_in_every_region", not lacking, len(lacking), 0,
        detail=f"regions without generation: {lacking}" if lacking else ""))

    split = {reg.region_id: c for reg in mrc.regions if (c := _region_components(reg)) > 1}
    report.checks.append(Check(
        "region_internal_connectivity", not split, len(split), 0, level="warning",
        detail=f"disconnected regions: {split}" if split else ""))
    return report


# ---------------------------------------------------------------------------
# files


def _tie_row(t: TieLine) -> list[str]:
    br = t.branch
    vals = [t.from_region, t.to_region, t.global_from_bus, t.global_to_bus,
            t.local_from_bus, t.local_to_bus,
            br.r, br.x, br.b, br.rate_a, br.tap, br.shift, br.angmin, br.angmax]
    return [format_number(v) for v in vals]


def _topology_dot(mrc: MultiRegionCase) -> str:
    pairs = Counter()
    for t in mrc.tie_lines:
        a, b = sorted((t.from_region, t.to_region))
        pairs[(a, b)] += 1
    lines = [f'graph "{mrc.directory_name}" {{', "  layout=circo;", "  node [shape=circle];"]
    for reg in mrc.regions:
        lines.append(f'  R{reg.region_id} [label="R{reg.region_id} ({reg.case.n_buses} buses)"];')
    for (a, b), count in sorted(pairs.items()):
        lines.append(f'  R{a} -- R{b} [label="{count}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def manifest_dict(mrc: MultiRegionCase) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "toolkit_version": __version__,
        "source_name": mrc.source_name,
        "k": mrc.k,
        "base_mva": mrc.base_mva,
        "slack_region": mrc.slack_region,
        "seed": mrc.provenance.get("seed"),
        "restarts": mrc.provenance.get("restarts"),
        "strategy": mrc.provenance.get("strategy"),
        "regions": [
            {"id": reg.region_id, "file": f"region_R{reg.region_id}.case",
             "n_buses": reg.case.n_buses, "buses": list(reg.local_to_global)}
            for reg in mrc.regions
        ],
        "tie_lines": {
            "file": "tielines.csv",
            "count": len(mrc.tie_lines),
            # columns the CSV does not carry, kept so import is lossless
            "aux": [{"rate_b": t.branch.rate_b, "rate_c": t.branch.rate_c,
                     "status": t.branch.status, "extra": list(t.branch.extra)}
                    for t in mrc.tie_lines],
        },
    }


def export_regions(mrc: MultiRegionCase, out_dir) -> list[Path]:
    """Write the partition directory under ``out_dir``; returns the written paths."""
    target = Path(out_dir) / mrc.directory_name
    target.mkdir(parents=True, exist_ok=True)
    written = []
    for reg in mrc.regions:
        path = target / f"region_R{reg.region_id}.case"
        path.write_text(write_case(reg.case), encoding="utf-8")
        written.append(path)

    path = target / "tielines.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIELINE_HEADER)
        for t in mrc.tie_lines:
            w.writerow(_tie_row(t))
    written.append(path)

    path = target / "manifest.json"
    path.write_text(json.dumps(manifest_dict(mrc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)

    path = target / "topology.dot"
    path.write_text(_topology_dot(mrc), encoding="utf-8")
    written.append(path)
    return written


def _num(text: str) -> float:
    return float(text.replace("Inf", "inf"))


def import_regions(directory) -> MultiRegionCase:
    """Load a directory written by :func:`export_regions`."""
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.is_file():
        raise SchemaMismatch(f"{d}: manifest.json not found")
    try:
        man = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{mpath}: not valid JSON ({exc})") from exc
    version = man.get("schema_version")
    if not isinstance(version, int) or version > SCHEMA_VERSION or version < 1:
        raise SchemaMismatch(
            f"{mpath}: schema_version {version!r} not supported (this build reads <= {SCHEMA_VERSION})")
    tie_info = man.get("tie_lines", {})
    tpath = d / tie_info.get("file", "tielines.csv")
    if not tpath.is_file():
        raise SchemaMismatch(f"{d}: {tpath.name} not found")

    regions = []
    for entry in man["regions"]:
        rpath = d / entry["file"]
        if not rpath.is_file():
            raise SchemaMismatch(f"{d}: {entry['file']} not found")
        sub = parse_case(rpath.read_text(encoding="utf-8"))
        l2g = tuple(int(b) for b in entry["buses"])
        if len(l2g) != sub.n_buses:
            raise SchemaMismatch(f"{rpath.name}: manifest lists {len(l2g)} buses, file has {sub.n_buses}")
        regions.append(RegionCase(int(entry["id"]), sub, l2g))

    with open(tpath, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TIELINE_HEADER:
        raise SchemaMismatch(f"{tpath.name}: unexpected header")
    aux = tie_info.get("aux") or [{} for _ in rows[1:]]
    if len(aux) != len(rows) - 1:
        raise SchemaMismatch(f"{tpath.name}: {len(rows) - 1} rows but manifest expects {len(aux)}")
    ties = []
    for row, extra in zip(rows[1:], aux):
        vals = dict(zip(TIELINE_HEADER, row))
        rate_a = _num(vals["rate_a"])
        br = Branch(
            int(vals["global_from_bus"]), int(vals["global_to_bus"]),
            _num(vals["r"]), _num(vals["x"]), _num(vals["b"]), rate_a,
            float(extra.get("rate_b", rate_a)), float(extra.get("rate_c", rate_a)),
            _num(vals["tap"]), _num(vals["shift"]), int(extra.get("status", 1)),
            _num(vals["angmin"]), _num(vals["angmax"]), tuple(extra.get("extra", ())),
        )
        ties.append(TieLine(int(vals["from_region"]), int(vals["to_region"]),
                            br.from_bus, br.to_bus,
                            int(vals["local_from_bus"]), int(vals["local_to_bus"]), br))

    boundary = {reg.region_id: set() for reg in regions}
    for t in ties:
        boundary[t.from_region].add(t.local_from_bus)
        boundary[t.to_region].add(t.local_to_bus)
    regions = [replace(reg, boundary_buses=tuple(sorted(boundary[reg.region_id]))) for reg in regions]
    provenance = {key: man.get(key) for key in ("seed", "restarts", "strategy")}
    return MultiRegionCase(man["source_name"], int(man["k"]), float(man["base_mva"]),
                           tuple(regions), tuple(ties), int(man["slack_region"]), provenance)


def partition_directory(out_dir, source_name: str, k: int) -> str:
    return os.path.join(out_dir, f"{source_name}_{k}regions")
