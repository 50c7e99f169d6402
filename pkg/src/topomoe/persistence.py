"""Persistent homology of the distance filtration's flag complex (dim <= 2).

Filtration values are the exact pairwise distances (continuous), not the
sampled radii: vertices enter at 0, an edge at its length, a triangle at
its longest edge. Dimension 0 is single-linkage merging with the elder
rule; dimension 1 pairs come from GF(2) reduction of the triangle boundary
columns, so loops die when triangles fill them. Essential classes carry
death = +inf; zero-persistence pairs are discarded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .filtration import DistanceMatrix


@dataclass(frozen=True)
class PersistenceDiagram:
    dim: int
    pairs: np.ndarray  # (m, 2) float64, death may be +inf

    def __post_init__(self):
        p = np.asarray(self.pairs, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "pairs", p)
        if len(p) and not np.all(p[:, 0] < p[:, 1]):
            raise ValueError("every pair needs birth < death (zero persistence is dropped)")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def births(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def deaths(self) -> np.ndarray:
        return self.pairs[:, 1]


def _sorted_edges(dm: DistanceMatrix):
    """Edges (i<j) sorted by (length, i, j); ties resolved lexicographically."""
    iu, ju = np.triu_indices(dm.n, k=1)
    w = dm.d[iu, ju]
    order = np.lexsort((ju, iu, w))
    return iu[order].astype(np.int64), ju[order].astype(np.int64), w[order]


def flag_persistence(dm: DistanceMatrix) -> tuple[PersistenceDiagram, PersistenceDiagram]:
    """Dim-0 and dim-1 persistence diagrams of the full distance filtration."""
    n = dm.n
    if n == 1:
        return (
            PersistenceDiagram(0, np.array([[0.0, np.inf]])),
            PersistenceDiagram(1, np.empty((0, 2))),
        )
    eu, ev, ew = _sorted_edges(dm)
    positive = kernels.merge_positive_mask(
        n, np.ascontiguousarray(eu), np.ascontiguousarray(ev)
    ).astype(bool)

    # dim 0: all births at 0; each merging edge kills one component (elder
    # rule is value-free here since every component is born at 0), and the
    # final complex is complete, leaving exactly one essential class.
    deaths0 = ew[~positive]
    pairs0 = np.column_stack([np.zeros(len(deaths0)), deaths0])
    n_essential = n - len(deaths0)
    pairs0 = np.vstack([pairs0, np.column_stack([np.zeros(n_essential), np.full(n_essential, np.inf)])])

    pairs1 = _dim1_pairs(dm, eu, ev, ew, positive)
    return PersistenceDiagram(0, pairs0), PersistenceDiagram(1, pairs1)


def _dim1_pairs(dm, eu, ev, ew, positive) -> np.ndarray:
    n = dm.n
    if n < 3:
        return np.empty((0, 2))
    edge_rank = np.full((n, n), -1, dtype=np.int64)
    edge_rank[eu, ev] = np.arange(len(eu))
    edge_rank[ev, eu] = np.arange(len(eu))

    ar = np.arange(n)
    ti, tj, tk = np.where(
        (ar[:, None, None] < ar[None, :, None]) & (ar[None, :, None] < ar[None, None, :])
    )
    tri_filt = np.maximum(np.maximum(dm.d[ti, tj], dm.d[ti, tk]), dm.d[tj, tk])
    order = np.lexsort((tk, tj, ti, tri_filt))
    ti, tj, tk, tri_filt = ti[order], tj[order], tk[order], tri_filt[order]

    cols = np.ascontiguousarray(
        np.column_stack([edge_rank[ti, tj], edge_rank[ti, tk], edge_rank[tj, tk]]).astype(np.int64)
    )
    paired = kernels.reduce_columns(len(ew), cols)

    pairs = []
    killed = set()
    for col, row in enumerate(paired):
        if row < 0:
            continue
        killed.add(int(row))
        birth = ew[row]
        death = tri_filt[col]
        if death > birth:
            pairs.append((birth, death))
    for e in np.nonzero(positive)[0]:
        if int(e) not in killed:
            pairs.append((ew[e], np.inf))
    if not pairs:
        return np.empty((0, 2))
    return np.array(sorted(pairs), dtype=np.float64)
