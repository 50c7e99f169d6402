# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the descriptor/persistence hot loops.

Contracts mirror `_pykernels`; outputs are bit-identical.
"""

import numpy as np

from libc.stdlib cimport free, malloc


def all_pairs_bfs(int n, int[::1] indptr, int[::1] indices):
    dist_arr = np.full((n, n), -1, dtype=np.int32)
    cdef int[:, ::1] dist = dist_arr
    cdef int* queue = <int*> malloc(n * sizeof(int))
    if queue == NULL:
        raise MemoryError()
    cdef int s, u, v, j, head, tail, du
    try:
        for s in range(n):
            dist[s, s] = 0
            queue[0] = s
            head = 0
            tail = 1
            while head < tail:
                u = queue[head]
                head += 1
                du = dist[s, u] + 1
                for j in range(indptr[u], indptr[u + 1]):
                    v = indices[j]
                    if dist[s, v] < 0:
                        dist[s, v] = du
                        queue[tail] = v
                        tail += 1
    finally:
        free(queue)
    return dist_arr


cdef int _find(long* parent, int x) noexcept:
    cdef int root = x
    cdef int nxt
    while parent[root] != root:
        root = <int> parent[root]
    while parent[x] != root:
        nxt = <int> parent[x]
        parent[x] = root
        x = nxt
    return root


def merge_positive_mask(int n, long[::1] edge_u, long[::1] edge_v):
    cdef Py_ssize_t m = edge_u.shape[0]
    out = np.zeros(m, dtype=np.uint8)
    cdef unsigned char[::1] positive = out
    cdef long* parent = <long*> malloc(n * sizeof(long))
    if parent == NULL:
        raise MemoryError()
    cdef Py_ssize_t e
    cdef int i, ru, rv
    try:
        for i in range(n):
            parent[i] = i
        for e in range(m):
            ru = _find(parent, <int> edge_u[e])
            rv = _find(parent, <int> edge_v[e])
            if ru == rv:
                positive[e] = 1
            else:
                parent[rv] = ru
    finally:
        free(parent)
    return out


cdef inline long _low_of(unsigned long long* col, long words) noexcept:
    cdef long w = words - 1
    cdef unsigned long long x
    cdef long bit
    while w >= 0:
        x = col[w]
        if x != 0:
            bit = 0
            while x > 1:
                x >>= 1
                bit += 1
            return 64 * w + bit
        w -= 1
    return -1


def reduce_columns(long n_rows, long[:, ::1] cols):
    cdef Py_ssize_t n_cols = cols.shape[0]
    paired_arr = np.full(n_cols, -1, dtype=np.int64)
    cdef long[::1] paired = paired_arr
    cdef long words = (n_rows + 63) >> 6
    if n_cols == 0:
        return paired_arr
    # dense bit matrix: one row of `words` 64-bit words per column
    cdef unsigned long long* mat = <unsigned long long*> malloc(
        n_cols * words * sizeof(unsigned long long))
    cdef long* pivot_col = <long*> malloc(n_rows * sizeof(long))
    if mat == NULL or pivot_col == NULL:
        free(mat)
        free(pivot_col)
        raise MemoryError()
    cdef Py_ssize_t j
    cdef long i, low, other, w, r
    try:
        for i in range(n_rows):
            pivot_col[i] = -1
        for j in range(n_cols):
            for w in range(words):
                mat[j * words + w] = 0
            for i in range(3):
                r = cols[j, i]
                mat[j * words + (r >> 6)] ^= (<unsigned long long> 1) << (r & 63)
            low = _low_of(mat + j * words, words)
            while low >= 0 and pivot_col[low] >= 0:
                other = pivot_col[low]
                for w in range(words):
                    mat[j * words + w] ^= mat[other * words + w]
                low = _low_of(mat + j * words, words)
            if low >= 0:
                pivot_col[low] = j
                paired[j] = low
    finally:
        free(mat)
        free(pivot_col)
    return paired_arr
