"""Distance matrices, cutoff-induced interaction graphs, radius schedules.

Edges use the inclusive rule d(i,j) <= r, so growing the radius yields a
nested family of graphs (a filtration). All operations are pure functions
of immutable inputs and are trivially parallel across molecules; distances
are exact double-precision Euclidean values with no spatial acceleration
structure (the documented contract is O(n^2) at desk scale).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ScheduleError
from .molecule import PointCloud

LATTICE_TOL = 1e-9


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric pairwise Euclidean distances with zero diagonal."""

    n: int
    d: np.ndarray  # (n, n) float64


@dataclass(frozen=True)
class InteractionGraph:
    """Undirected, self-loop-free edge set induced at one radius.

    Edges are (i, j) index pairs with i < j, sorted lexicographically.
    """

    n: int
    radius: float
    edges: np.ndarray  # (m, 2) int64

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        if len(self.edges):
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.edges}


@dataclass(frozen=True)
class FiltrationSchedule:
    """Expert cutoffs plus the dense radius lattice that contains them.

    dense_radii[t] = (c_1 - w/2) + t*dr for t = 0..T-1, with
    T = floor((w + (c_K - c_1))/dr) + 1, and every expert cutoff sits
    exactly on the lattice (cutoff_indices maps cutoffs into dense_radii).
    """

    expert_cutoffs: np.ndarray  # (K,) float64, strictly increasing
    dense_radii: np.ndarray  # (T,) float64, strictly increasing
    window_w: float
    step_dr: float
    cutoff_indices: np.ndarray  # (K,) int64 with dense_radii[idx] == cutoff

    @property
    def n_experts(self) -> int:
        return len(self.expert_cutoffs)

    @property
    def n_radii(self) -> int:
        return len(self.dense_radii)

    def content_hash(self) -> str:
        """Stable hash of the schedule geometry, used as the cache key part."""
        payload = repr(
            (
                [float(c) for c in self.expert_cutoffs],
                [float(r) for r in self.dense_radii],
                float(self.window_w),
                float(self.step_dr),
            )
        ).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def pairwise_distances(cloud: PointCloud) -> DistanceMatrix:
    """Exact Euclidean distance matrix of a point cloud."""
    r = cloud.coords
    diff = r[:, None, :] - r[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    d = 0.5 * (d + d.T)  # exact symmetry regardless of summation order
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(cloud.n_atoms, d)


def build_cutoff_graph(
    dm: DistanceMatrix, radius: float, max_neighbors: int = 0
) -> InteractionGraph:
    """Edges {(i, j): i < j, d[i,j] <= radius}; the boundary is inclusive.

    With max_neighbors = m > 0, each atom keeps only its m nearest
    neighbors inside the cutoff (ties broken toward the smaller index) and
    the kept directed pairs are symmetrized by union.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    iu, ju = np.triu_indices(dm.n, k=1)
    keep = dm.d[iu, ju] <= radius
    edges = np.column_stack([iu[keep], ju[keep]]).astype(np.int64)
    if max_neighbors > 0 and len(edges):
        edges = _apply_neighbor_cap(dm, edges, max_neighbors)
    return InteractionGraph(dm.n, float(radius), edges)


def _apply_neighbor_cap(dm: DistanceMatrix, edges: np.ndarray, cap: int) -> np.ndarray:
    kept: set[tuple[int, int]] = set()
    neighbors: list[list[tuple[float, int]]] = [[] for _ in range(dm.n)]
    for i, j in edges:
        neighbors[i].append((dm.d[i, j], int(j)))
        neighbors[j].append((dm.d[j, i], int(i)))
    for i, cand in enumerate(neighbors):
        cand.sort()  # by (distance, neighbor index): ties go to the smaller index
        for _, j in cand[:cap]:
            kept.add((min(i, j), max(i, j)))
    if not kept:
        return np.empty((0, 2), dtype=np.int64)
    return np.array(sorted(kept), dtype=np.int64)


def build_schedule(cutoffs, window_w: float, step_dr: float) -> FiltrationSchedule:
    """Dense radius lattice spanning [c_1 - w/2, c_K + w/2] in steps of dr.

    Every cutoff must lie on the lattice (within 1e-9) so that the expert
    radii are a subset of the dense radii; otherwise a ScheduleError is
    raised. Cutoffs are snapped onto the computed lattice values so expert
    graphs and their matching dense graphs coincide bitwise.
    """
    c = np.asarray(cutoffs, dtype=np.float64)
    if c.ndim != 1 or len(c) < 1:
        raise ScheduleError("need at least one cutoff")
    if np.any(np.diff(c) <= 0):
        raise ScheduleError(f"cutoffs must be strictly increasing, got {list(c)}")
    if window_w <= 0 or step_dr <= 0:
        raise ScheduleError("window_w and step_dr must be positive")
    start = c[0] - window_w / 2.0
    if start <= 0:
        raise ScheduleError(
            f"smallest dense radius {start} is not positive; shrink window_w or grow c_1"
        )
    span = window_w + (c[-1] - c[0])
    # +1e-9 absorbs binary-float dust so exact multiples are not truncated
    n_radii = int(np.floor(span / step_dr + LATTICE_TOL)) + 1
    radii = start + step_dr * np.arange(n_radii, dtype=np.float64)
    indices = np.empty(len(c), dtype=np.int64)
    for k, ck in enumerate(c):
        m = (ck - start) / step_dr
        m_int = int(round(m))
        if abs(m - m_int) > LATTICE_TOL or not 0 <= m_int < n_radii:
            raise ScheduleError(
                f"cutoff {ck} is not on the dense lattice (start {start}, step {step_dr})"
            )
        indices[k] = m_int
    snapped = radii[indices].copy()
    return FiltrationSchedule(snapped, radii, float(window_w), float(step_dr), indices)


def build_filtration(
    cloud: PointCloud, sched: FiltrationSchedule, max_neighbors: int = 0
) -> tuple[list[InteractionGraph], list[InteractionGraph]]:
    """Expert graphs at the K cutoffs and dense graphs at the T radii.

    Dense graphs form a nested sequence (inclusive thresholding is
    monotone) and are never neighbor-capped; the optional cap applies to
    expert graphs only.
    """
    dm = pairwise_distances(cloud)
    expert_graphs = [
        build_cutoff_graph(dm, c, max_neighbors=max_neighbors) for c in sched.expert_cutoffs
    ]
    dense_graphs = [build_cutoff_graph(dm, r) for r in sched.dense_radii]
    return expert_graphs, dense_graphs


def to_csr(graph: InteractionGraph) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric CSR adjacency (indptr, indices) for the BFS kernels."""
    n = graph.n
    deg = graph.degrees().astype(np.int32)
    indptr = np.zeros(n + 1, dtype=np.int32)
    np.cumsum(deg, out=indptr[1:])
    indices = np.empty(int(indptr[-1]), dtype=np.int32)
    cursor = indptr[:-1].copy()
    for i, j in graph.edges:
        indices[cursor[i]] = j
        cursor[i] += 1
        indices[cursor[j]] = i
        cursor[j] += 1
    return indptr, indices
