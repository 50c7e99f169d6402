"""Normalized topological descriptors and the per-molecule trajectory.

Five descriptors per dense radius, columns ordered
(randic, wiener, efficiency, betti0, betti1), every value in [0, 1]:

* normalized Randic index: sum over edges of 1/sqrt(deg u * deg v), over n/2;
* normalized Wiener index: per-component shortest-path sum, min-max scaled
  between the complete-graph and path-graph extremes, clamped to [0, 1]
  (disconnected graphs can undershoot), 0 when n <= 2;
* global efficiency: mean inverse shortest-path distance over ordered
  pairs, disconnected pairs contributing zero;
* normalized Betti curves for dims 0 and 1: the weighted count of
  persistence pairs alive at the radius (birth <= r < death), weights
  normalized over the whole diagram, essential features included.

Betti curves are evaluated from diagrams computed over the continuous
distance filtration, so they do not depend on the radius step.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .filtration import (
    FiltrationSchedule,
    InteractionGraph,
    build_cutoff_graph,
    pairwise_distances,
    to_csr,
)
from .molecule import PointCloud
from .persistence import PersistenceDiagram, flag_persistence

DESCRIPTOR_COLUMNS = ("randic", "wiener", "efficiency", "betti0", "betti1")


@dataclass(frozen=True)
class TopoTrajectory:
    """T x 5 matrix of descriptors along the dense radii."""

    radii: np.ndarray  # (T,)
    values: np.ndarray  # (T, 5)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (len(self.radii), 5):
            raise ValueError(f"values must be ({len(self.radii)}, 5), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("trajectory entries must be finite")

    @property
    def n_radii(self) -> int:
        return len(self.radii)

    def flat(self) -> np.ndarray:
        """Row-major flattening, the gating-encoder input layout."""
        return self.values.reshape(-1)


def randic_normalized(g: InteractionGraph) -> float:
    if g.n_edges == 0:
        return 0.0
    deg = g.degrees()
    r = float(np.sum(1.0 / np.sqrt(deg[g.edges[:, 0]] * deg[g.edges[:, 1]])))
    return r / (g.n / 2.0)


def shortest_path_matrix(g: InteractionGraph) -> np.ndarray:
    """Hop distances between all node pairs; -1 where disconnected."""
    indptr, indices = to_csr(g)
    return kernels.all_pairs_bfs(g.n, indptr, indices)


def wiener_normalized(g: InteractionGraph) -> float:
    return _wiener_from_sp(shortest_path_matrix(g), g.n)


def _wiener_from_sp(sp: np.ndarray, n: int) -> float:
    if n <= 2:
        return 0.0
    iu, ju = np.triu_indices(n, k=1)
    d = sp[iu, ju]
    w = float(d[d > 0].sum())
    w_min = n * (n - 1) / 2.0
    w_max = (n**3 - n) / 6.0
    return float(np.clip((w - w_min) / (w_max - w_min), 0.0, 1.0))


def global_efficiency(g: InteractionGraph) -> float:
    return _efficiency_from_sp(shortest_path_matrix(g), g.n)


def _efficiency_from_sp(sp: np.ndarray, n: int) -> float:
    if n <= 1:
        return 0.0
    iu, ju = np.triu_indices(n, k=1)
    d = sp[iu, ju].astype(np.float64)
    reachable = d > 0
    total = float((1.0 / d[reachable]).sum()) * 2.0  # ordered pairs
    return total / (n * (n - 1))


def persistence_diagrams(dm) -> tuple[PersistenceDiagram, PersistenceDiagram]:
    """Dim-0/dim-1 diagrams of the flag complex over the distance filtration.

    Computed from the continuous edge-appearance values, so the result is
    independent of any radius schedule.
    """
    return flag_persistence(dm)


def betti_curve_value(diag: PersistenceDiagram, r: float, weighting=None) -> float:
    """Weighted count of features alive at radius r (birth <= r < death).

    `weighting` maps (birth, death) to a weight; weights are normalized by
    the sum of their absolute values over the whole diagram (essential
    features included). Default weighting is constant 1.
    """
    if len(diag) == 0:
        return 0.0
    if weighting is None:
        phi = np.ones(len(diag))
    else:
        phi = np.array([weighting(b, d) for b, d in diag.pairs], dtype=np.float64)
    denom = float(np.abs(phi).sum())
    if denom == 0.0:
        return 0.0
    alive = (diag.births <= r) & (r < diag.deaths)
    return float(phi[alive].sum() / denom)


def build_trajectory(
    cloud: PointCloud, sched: FiltrationSchedule, cache: "TrajectoryCache | None" = None
) -> TopoTrajectory:
    """Descriptor matrix along the dense radii, served from cache when possible."""
    if cache is not None:
        hit = cache.get(cloud.id, sched)
        if hit is not None:
            return TopoTrajectory(sched.dense_radii, hit)
    dm = pairwise_distances(cloud)
    diag0, diag1 = flag_persistence(dm)
    rows = np.empty((sched.n_radii, 5), dtype=np.float64)
    for t, r in enumerate(sched.dense_radii):
        g = build_cutoff_graph(dm, r)
        sp = shortest_path_matrix(g)
        rows[t, 0] = randic_normalized(g)
        rows[t, 1] = _wiener_from_sp(sp, g.n)
        rows[t, 2] = _efficiency_from_sp(sp, g.n)
        rows[t, 3] = betti_curve_value(diag0, r)
        rows[t, 4] = betti_curve_value(diag1, r)
    if cache is not None:
        cache.put(cloud.id, sched, rows)
    return TopoTrajectory(sched.dense_radii, rows)


def alive_feature_counts(diag: PersistenceDiagram, r: float) -> int:
    """Unnormalized count of features alive at r (equals the Betti number)."""
    if len(diag) == 0:
        return 0
    return int(np.count_nonzero((diag.births <= r) & (r < diag.deaths)))


class TrajectoryCache:
    """Per-(molecule id, schedule) trajectory store.

    In-memory dict fronting an optional directory of .npy sidecar files.
    Disk writes go through a temp file + atomic rename, so concurrent
    writers of the same key settle on last-write-wins with identical
    content and readers never observe partial files.
    """

    def __init__(self, directory=None):
        self._mem: dict[tuple[str, str], np.ndarray] = {}
        self.directory = None
        if directory is not None:
            self.directory = Path(directory)
            self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def _key(mol_id: str, sched: FiltrationSchedule) -> tuple[str, str]:
        return (mol_id, sched.content_hash())

    def _path(self, key: tuple[str, str]) -> Path:
        digest = hashlib.sha1(key[0].encode()).hexdigest()[:20]
        return self.directory / f"{digest}_{key[1]}.npy"

    def get(self, mol_id: str, sched: FiltrationSchedule):
        key = self._key(mol_id, sched)
        if key in self._mem:
            return self._mem[key]
        if self.directory is not None:
            path = self._path(key)
            if path.exists():
                values = np.load(path)
                self._mem[key] = values
                return values
        return None

    def put(self, mol_id: str, sched: FiltrationSchedule, values: np.ndarray) -> None:
        key = self._key(mol_id, sched)
        self._mem[key] = values
        if self.directory is not None:
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            try:
                with os.fdopen(fd, "wb") as fh:
                    np.save(fh, values)
                os.replace(tmp, self._path(key))
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
