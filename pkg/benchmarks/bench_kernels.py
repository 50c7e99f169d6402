"""Benchmark: compiled extension vs pure-Python kernel fallback.

Times the three hot kernels (all-pairs BFS, union-find merge mask, GF(2)
boundary reduction) and the end-to-end trajectory build on random point
clouds, then prints a speedup table.

Usage: python benchmarks/bench_kernels.py [--atoms N] [--molecules M]
"""

import argparse
import time

import numpy as np

from topomoe import kernels
from topomoe.filtration import build_cutoff_graph, build_schedule, pairwise_distances, to_csr
from topomoe.molecule import PointCloud


def make_clouds(n_molecules, n_atoms, seed=0):
    rng = np.random.default_rng(seed)
    clouds = []
    box = max(6.0, n_atoms ** (1 / 3) * 2.5)
    while len(clouds) < n_molecules:
        coords = rng.uniform(0, box, size=(n_atoms, 3))
        diff = coords[:, None, :] - coords[None, :, :]
        d2 = (diff**2).sum(-1)
        np.fill_diagonal(d2, np.inf)
        if d2.min() > 1e-4:
            clouds.append(PointCloud(rng.choice([1, 6, 7, 8], n_atoms), coords))
    return clouds


def bench_bfs(impl, clouds, radius=4.0):
    graphs = [build_cutoff_graph(pairwise_distances(c), radius) for c in clouds]
    csrs = [to_csr(g) for g in graphs]
    start = time.perf_counter()
    for g, (indptr, indices) in zip(graphs, csrs):
        impl.all_pairs_bfs(g.n, indptr, indices)
    return time.perf_counter() - start


def bench_merge(impl, clouds):
    inputs = []
    for c in clouds:
        dm = pairwise_distances(c)
        iu, ju = np.triu_indices(dm.n, k=1)
        order = np.lexsort((ju, iu, dm.d[iu, ju]))
        inputs.append(
            (dm.n, np.ascontiguousarray(iu[order].astype(np.int64)),
             np.ascontiguousarray(ju[order].astype(np.int64)))
        )
    start = time.perf_counter()
    for n, eu, ev in inputs:
        impl.merge_positive_mask(n, eu, ev)
    return time.perf_counter() - start


def bench_reduce(impl, clouds):
    from topomoe.persistence import _sorted_edges

    inputs = []
    for c in clouds:
        dm = pairwise_distances(c)
        n = dm.n
        eu, ev, ew = _sorted_edges(dm)
        edge_rank = np.full((n, n), -1, dtype=np.int64)
        edge_rank[eu, ev] = np.arange(len(eu))
        edge_rank[ev, eu] = np.arange(len(eu))
        ar = np.arange(n)
        ti, tj, tk = np.where(
            (ar[:, None, None] < ar[None, :, None])
            & (ar[None, :, None] < ar[None, None, :])
        )
        filt = np.maximum(np.maximum(dm.d[ti, tj], dm.d[ti, tk]), dm.d[tj, tk])
        order = np.lexsort((tk, tj, ti, filt))
        cols = np.ascontiguousarray(
            np.column_stack(
                [edge_rank[ti, tj], edge_rank[ti, tk], edge_rank[tj, tk]]
            )[order].astype(np.int64)
        )
        inputs.append((len(ew), cols))
    start = time.perf_counter()
    for n_rows, cols in inputs:
        impl.reduce_columns(n_rows, cols)
    return time.perf_counter() - start


def bench_trajectory(backend_name, clouds):
    """Time the full descriptor pipeline with one backend swapped in.

    `persistence` and `descriptors` resolve kernel functions through the
    `kernels` module at call time, so patching its attributes redirects
    the whole stack.
    """
    import topomoe.descriptors as descriptors_mod

    impl = kernels.available_backends()[backend_name]
    originals = {
        name: getattr(kernels, name)
        for name in ("all_pairs_bfs", "merge_positive_mask", "reduce_columns")
    }
    sched = build_schedule([2.0, 2.5, 3.0, 3.5, 4.0], 1.0, 0.25)
    try:
        for name in originals:
            setattr(kernels, name, getattr(impl, name))
        start = time.perf_counter()
        for c in clouds:
            descriptors_mod.build_trajectory(c, sched)
        return time.perf_counter() - start
    finally:
        for name, fn in originals.items():
            setattr(kernels, name, fn)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--atoms", type=int, default=40)
    parser.add_argument("--molecules", type=int, default=50)
    args = parser.parse_args()

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; timing the pure backend only")
    clouds = make_clouds(args.molecules, args.atoms)
    print(f"{args.molecules} molecules x {args.atoms} atoms\n")
    print(f"{'kernel':<22}" + "".join(f"{name:>16}" for name in backends) + f"{'speedup':>10}")
    rows = [
        ("all_pairs_bfs", bench_bfs),
        ("merge_positive_mask", bench_merge),
        ("reduce_columns", bench_reduce),
    ]
    for label, fn in rows:
        times = {name: fn(impl, clouds) for name, impl in backends.items()}
        line = f"{label:<22}" + "".join(f"{times[n]:>14.3f} s" for n in times)
        if len(times) == 2:
            line += f"{times['pure-python'] / times['compiled']:>9.1f}x"
        print(line)
    traj_times = {name: bench_trajectory(name, clouds) for name in backends}
    line = f"{'build_trajectory':<22}" + "".join(f"{traj_times[n]:>14.3f} s" for n in traj_times)
    if len(traj_times) == 2:
        line += f"{traj_times['pure-python'] / traj_times['compiled']:>9.1f}x"
    print(line)


if __name__ == "__main__":
    main()
