"""Spectral partitioning of a bus-connectivity graph into k regions."""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .case import CaseData, renumber_buses
from .errors import DisconnectedGraph, NoFeasiblePartition
from .numerics.eigen import smallest_eigenpairs

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Graph:
    """Undirected binary graph; node ``i`` (0-based) is the ``i``-th bus row."""

    n: int
    adjacency: sp.csr_matrix
    degree: np.ndarray

    def laplacian(self) -> sp.csr_matrix:
        return (sp.diags(self.degree.astype(float)) - self.adjacency).tocsr()


@dataclass(frozen=True)
class SpectralEmbedding:
    U: np.ndarray
    eigenvalues: np.ndarray

    @property
    def k(self) -> int:
        return self.U.shape[1]


@dataclass(frozen=True)
class Partition:
    k: int
    assignment: tuple  # region id (1..k) per bus, in case bus order
    tie_lines: tuple   # branch row indices crossing regions
    restart_seed: int
    restarts_used: int
    strategy: str = "kmeans"

    @property
    def n_tie_lines(self) -> int:
        return len(self.tie_lines)

    def region_of(self, case: CaseData) -> dict[int, int]:
        return {bus.id: r for bus, r in zip(case.buses, self.assignment)}


def build_graph(case: CaseData) -> Graph:
    """Binary adjacency over in-service branches; parallel circuits collapse to one edge."""
    n = case.n_buses
    index = case.bus_index()
    rows, cols = [], []
    for br in case.branches:
        if not br.in_service:
            continue
        i, j = index[br.from_bus], index[br.to_bus]
        rows += [i, j]
        cols += [j, i]
    A = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    A.data[:] = 1.0
    A.eliminate_zeros()
    degree = np.asarray(A.sum(axis=1)).ravel().astype(int)
    return Graph(n, A, degree)


def connected_components(g: Graph) -> list[list[int]]:
    """Breadth-first components, as sorted lists of 1-based node numbers."""
    seen = np.zeros(g.n, dtype=bool)
    comps = []
    indptr, indices = g.adjacency.indptr, g.adjacency.indices
    for start in range(g.n):
        if seen[start]:
            continue
        seen[start] = True
        queue = deque([start])
        comp = []
        while queue:
            i = queue.popleft()
            comp.append(i + 1)
            for j in indices[indptr[i]:indptr[i + 1]]:
                if not seen[j]:
                    seen[j] = True
                    queue.append(j)
        comps.append(sorted(comp))
    return comps


def spectral_embedding(g: Graph, k: int) -> SpectralEmbedding:
    if not 2 <= k < g.n:
        raise ValueError(f"need 2 <= k < n, got k={k}, n={g.n}")
    comps = connected_components(g)
    if len(comps) > 1:
        raise DisconnectedGraph(len(comps))
    vals, vecs = smallest_eigenpairs(g.laplacian(), k)
    return SpectralEmbedding(np.asarray(vecs), np.asarray(vals))


def _kmeans_pp(points, k, rng):
    n = len(points)
    centers = [int(rng.integers(n))]
    d2 = np.sum((points - points[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            free = np.setdiff1d(np.arange(n), centers)
            nxt = int(rng.choice(free))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[centers].copy()


def kmeans(points, k: int, seed: int, max_iters: int = 300) -> np.ndarray:
    """Lloyd's k-means with k-means++ seeding; returns labels 0..k-1.

    Every cluster is kept nonempty: an emptied cluster takes over the point
    farthest from its current centroid.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(X, k, rng)
    labels = np.full(n, -1)
    for _ in range(max_iters):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        for c in range(k):
            if not np.any(new == c):
                own = d2[np.arange(n), new]
                # only donate from clusters that keep at least one member
                sizes = np.bincount(new, minlength=k)
                own = np.where(sizes[new] > 1, own, -1.0)
                far = int(np.argmax(own))
                new[far] = c
        if np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            centers[c] = X[labels == c].mean(axis=0)
    return labels


def anchored_kmeans(points, k: int, candidates, seed: int, max_iters: int = 300) -> np.ndarray:
    """k-means where each cluster keeps one pinned point drawn from ``candidates``.

    Anchors are picked by k-means++ sampling restricted to the candidate
    rows, then stay in their own cluster through every Lloyd step.
    """
    X = np.asarray(points, dtype=float)
    cand = np.asarray(sorted(set(int(c) for c in candidates)))
    if len(cand) < k:
        raise ValueError("fewer candidate anchors than clusters")
    rng = np.random.default_rng(seed)
    picked = [int(rng.choice(cand))]
    d2 = np.sum((X[cand] - X[picked[0]]) ** 2, axis=1)
    for _ in range(1, k):
        d2[np.isin(cand, picked)] = 0.0
        total = d2.sum()
        if total <= 0:
            nxt = int(rng.choice(np.setdiff1d(cand, picked)))
        else:
            nxt = int(cand[rng.choice(len(cand), p=d2 / total)])
        picked.append(nxt)
        d2 = np.minimum(d2, np.sum((X[cand] - X[nxt]) ** 2, axis=1))
    anchors = np.asarray(picked)
    centers = X[anchors].copy()
    labels = np.full(len(X), -1)
    for _ in range(max_iters):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        new[anchors] = np.arange(k)
        if np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            centers[c] = X[labels == c].mean(axis=0)
    return labels


def _canonical(labels) -> np.ndarray:
    """Renumber clusters 1..k by first appearance in bus order."""
    order = {}
    out = np.empty(len(labels), dtype=int)
    for i, lab in enumerate(labels):
        if lab not in order:
            order[lab] = len(order) + 1
        out[i] = order[lab]
    return out


def tie_line_indices(case: CaseData, assignment) -> list[int]:
    index = case.bus_index()
    return [
        i for i, br in enumerate(case.branches)
        if br.in_service and assignment[index[br.from_bus]] != assignment[index[br.to_bus]]
    ]


def count_tielines(case: CaseData, assignment) -> int:
    """In-service branches whose ends sit in different regions; parallel rows count separately."""
    return len(tie_line_indices(case, assignment))


def _has_generator_everywhere(case: CaseData, assignment, k) -> bool:
    index = case.bus_index()
    covered = {assignment[index[g.bus]] for g in case.generators if g.in_service}
    return all(r in covered for r in range(1, k + 1))


def partition_case(case: CaseData, k: int, restarts: int = 10, seed: int = 0,
                   workers: int = 1) -> Partition:
    """Spectral k-way partition minimizing tie-lines over ``restarts`` k-means runs.

    Restart ``r`` uses seed ``seed + r``. Only partitions with an in-service
    generator in every region are eligible; ties go to the lowest restart.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if restarts < 1:
        raise ValueError("restarts must be positive")
    work, _ = renumber_buses(case)
    if k > work.n_buses:
        raise ValueError(f"cannot form {k} regions from {work.n_buses} buses")
    graph = build_graph(work)
    comps = connected_components(graph)
    if len(comps) > 1:
        raise DisconnectedGraph(len(comps))
    n_gen_buses = len({g.bus for g in work.generators if g.in_service})
    if n_gen_buses < k:
        raise NoFeasiblePartition(f"only {n_gen_buses} buses with in-service generators for {k} regions")
    # an n-bus graph has only n - 1 nonzero eigenvectors
    emb = spectral_embedding(graph, min(k, work.n_buses - 1)) if work.n_buses > 2 else None
    if emb is None:
        emb = SpectralEmbedding(np.array([[-1.0], [1.0]]) / np.sqrt(2), np.array([2.0]))

    def run(r):
        labels = _canonical(kmeans(emb.U, k, seed + r))
        feasible = len(set(labels)) == k and _has_generator_everywhere(work, labels, k)
        return labels, feasible, count_tielines(work, labels)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(restarts)))
    else:
        results = [run(r) for r in range(restarts)]

    strategy = "kmeans"
    best = _select(results, seed)
    if best is None:
        # every plain restart left a region without generation; retry with
        # clusters anchored on distinct generator buses
        index = work.bus_index()
        gen_rows = sorted({index[g.bus] for g in work.generators if g.in_service})
        if len(gen_rows) < k:
            raise NoFeasiblePartition(
                f"only {len(gen_rows)} buses with in-service generators for {k} regions"
            )
        log.info("no generator-feasible k-means restart; using generator-anchored restarts")

        def run_anchored(r):
            labels = _canonical(anchored_kmeans(emb.U, k, gen_rows, seed + r))
            return labels, _has_generator_everywhere(work, labels, k), count_tielines(work, labels)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_anchored, range(restarts)))
        else:
            results = [run_anchored(r) for r in range(restarts)]
        strategy = "anchored"
        best = _select(results, seed)
        if best is None:
            raise NoFeasiblePartition(
                f"none of {restarts} restarts placed a generator in each of {k} regions"
            )
    r, labels = best
    assignment = tuple(int(v) for v in labels)
    part = Partition(k, assignment, tuple(tie_line_indices(work, assignment)), seed + r, restarts,
                     strategy)
    for region, comps in disconnected_regions(work, part).items():
        log.warning("region %d is internally disconnected (%d pieces)", region, comps)
    return part


def _select(results, seed):
    best = None
    for r, (labels, feasible, ties) in enumerate(results):
        log.debug("restart %d (seed %d): %d tie-lines, generator-feasible=%s", r, seed + r, ties, feasible)
        if feasible and (best is None or ties < best[2]):
            best = (r, labels, ties)
    return None if best is None else best[:2]


def disconnected_regions(case: CaseData, part: Partition) -> dict[int, int]:
    """Regions whose induced subgraph has more than one component."""
    graph = build_graph(case)
    labels = np.asarray(part.assignment)
    out = {}
    for region in range(1, part.k + 1):
        idx = np.flatnonzero(labels == region)
        sub = graph.adjacency[idx][:, idx]
        g = Graph(len(idx), sub.tocsr(), np.asarray(sub.sum(axis=1)).ravel().astype(int))
        n_comp = len(connected_components(g))
        if n_comp > 1:
            out[region] = n_comp
    return out
