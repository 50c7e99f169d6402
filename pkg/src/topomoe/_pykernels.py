"""Pure-Python kernels; same contracts as the compiled module `_ckernels`.

Selected by `topomoe.kernels` when the extension is missing or when
TOPOMOE_PURE_PYTHON=1. Outputs are exactly identical to the compiled
versions (all three kernels are integer/combinatorial).
"""

from collections import deque

import numpy as np


def all_pairs_bfs(n, indptr, indices):
    """Hop distances between all node pairs of an undirected graph in CSR
    form; -1 marks unreachable pairs."""
    dist = np.full((n, n), -1, dtype=np.int32)
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    for s in range(n):
        row = dist[s]
        row[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            du = row[u] + 1
            for v in indices[indptr[u] : indptr[u + 1]]:
                if row[v] < 0:
                    row[v] = du
                    queue.append(v)
    return dist


def merge_positive_mask(n, edge_u, edge_v):
    """Union-find over edges in filtration order.

    Returns a uint8 array with 0 where the edge merged two components
    (negative edge) and 1 where it closed a cycle (positive edge).
    """
    parent = list(range(n))

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    m = len(edge_u)
    positive = np.zeros(m, dtype=np.uint8)
    for e in range(m):
        ru = find(edge_u[e])
        rv = find(edge_v[e])
        if ru == rv:
            positive[e] = 1
        else:
            parent[rv] = ru
    return positive


def reduce_columns(n_rows, cols):
    """Left-to-right GF(2) column reduction.

    `cols` is an (n_cols, 3) array of row indices (three faces per column),
    columns already in filtration order. Returns the pivot row per column
    after reduction, -1 for columns that reduce to zero. Python integers
    act as arbitrary-width bitsets.
    """
    n_cols = len(cols)
    paired = np.full(n_cols, -1, dtype=np.int64)
    pivot_col = {}
    reduced = [0] * n_cols
    for j in range(n_cols):
        a, b, c = cols[j]
        col = (1 << int(a)) | (1 << int(b)) | (1 << int(c))
        low = col.bit_length() - 1
        while low >= 0 and low in pivot_col:
            col ^= reduced[pivot_col[low]]
            low = col.bit_length() - 1
        reduced[j] = col
        if low >= 0:
            pivot_col[low] = j
            paired[j] = low
    return paired
