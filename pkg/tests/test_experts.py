import numpy as np
import pytest

from topomoe.autodiff import ParamStore, Tape, Tensor
from topomoe.errors import ShapeError
from topomoe.experts import (
    ExpertParams,
    expand_edge_features,
    expert_forward,
    expert_forward_batch,
    moe_aggregate,
    predict,
)
from topomoe.filtration import InteractionGraph, build_cutoff_graph, pairwise_distances
from topomoe.gating import RoutingWeights
from topomoe.molecule import PointCloud

from .conftest import make_cloud, rigid_motion
from .oracles import matmul_oracle


def make_expert(width=6, depth=2, n_rbf=8, z_max=8, cutoff=3.0, span=4.0, seed=0):
    store = ParamStore(seed=seed)
    ep = ExpertParams(store, "e0", width, depth, n_rbf, z_max, cutoff, span)
    return store, ep


class TestEdgeFeatures:
    def test_peak_at_center(self):
        span, n_rbf = 4.0, 16
        centers = np.linspace(0, span, n_rbf)
        feats = expand_edge_features(centers[5], span, n_rbf)
        assert feats[5] == pytest.approx(1.0, abs=1e-15)

    def test_even_around_center(self):
        span, n_rbf = 4.0, 16
        centers = np.linspace(0, span, n_rbf)
        delta = 0.07
        up = expand_edge_features(centers[8] + delta, span, n_rbf)
        down = expand_edge_features(centers[8] - delta, span, n_rbf)
        assert up[8] == pytest.approx(down[8], abs=1e-12)

    def test_matches_scalar_formula(self):
        span, n_rbf, d = 4.0, 16, 3.0
        feats = expand_edge_features(d, span, n_rbf)
        gamma = (n_rbf / span) ** 2
        centers = np.linspace(0, span, n_rbf)
        expected = np.exp(-gamma * (d - centers) ** 2)
        assert np.allclose(feats, expected, atol=1e-15)
        assert np.all(feats > 0) and np.all(feats <= 1)

    def test_nonpositive_distance_rejected(self):
        with pytest.raises(ValueError):
            expand_edge_features(0.0, 4.0, 8)


class TestExpertForward:
    def test_edgeless_graph_keeps_embeddings(self, rng):
        store, ep = make_expert()
        cloud = make_cloud(rng, 4, box=40.0)  # far apart: no edges at 3 A
        g = build_cutoff_graph(pairwise_distances(cloud), 3.0)
        assert g.n_edges == 0
        tape = Tape()
        out = expert_forward(g, cloud, ep, tape)
        # zero biases: updates of zero messages vanish, so pooling sees raw embeddings
        pooled = ep.embed.value[cloud.atom_numbers].sum(axis=0)
        expected = pooled @ ep.readout_w.value + ep.readout_b.value
        assert np.allclose(out.value, expected, atol=1e-12)

    def test_permutation_invariance(self, rng):
        store, ep = make_expert(depth=3)
        cloud = make_cloud(rng, 7)
        g = build_cutoff_graph(pairwise_distances(cloud), 3.0)
        base = expert_forward(g, cloud, ep, Tape()).value
        perm = rng.permutation(7)
        permuted = PointCloud(cloud.atom_numbers[perm], cloud.coords[perm], id="p")
        gp = build_cutoff_graph(pairwise_distances(permuted), 3.0)
        out = expert_forward(gp, permuted, ep, Tape()).value
        assert np.allclose(out, base, atol=1e-12)

    def test_rigid_motion_invariance(self, rng):
        store, ep = make_expert(depth=3)
        cloud = make_cloud(rng, 6)
        g = build_cutoff_graph(pairwise_distances(cloud), 3.0)
        base = expert_forward(g, cloud, ep, Tape()).value
        for _ in range(20):
            moved = rigid_motion(cloud, rng)
            gm = build_cutoff_graph(pairwise_distances(moved), 3.0)
            out = expert_forward(gm, moved, ep, Tape()).value
            assert np.allclose(out, base, atol=1e-9)

    def test_two_atom_unrolled_oracle(self):
        width, n_rbf = 2, 3
        store, ep = make_expert(width=width, depth=1, n_rbf=n_rbf, span=4.0, seed=11)
        cloud = PointCloud([1, 6], [[0, 0, 0], [0, 0, 1.1]], id="pair")
        g = build_cutoff_graph(pairwise_distances(cloud), 3.0)
        got = expert_forward(g, cloud, ep, Tape()).value

        def ssp(x):
            return np.logaddexp(0, x) - np.log(2.0)

        h = ep.embed.value[[1, 6]]
        gamma = (n_rbf / 4.0) ** 2
        centers = np.linspace(0, 4.0, n_rbf)
        e = np.exp(-gamma * (1.1 - centers) ** 2)
        filt = ssp(e @ ep.filter_w.value + ep.filter_b.value)
        blk = ep.blocks[0]
        # directed messages: 1 -> 0 then 0 -> 1
        m = np.zeros((2, width))
        for dst, src in ((0, 1), (1, 0)):
            pre = h[src] * filt
            mm = ssp(pre @ blk["msg_w1"].value + blk["msg_b1"].value)
            m[dst] += mm @ blk["msg_w2"].value + blk["msg_b2"].value
        upd = ssp(m @ blk["upd_w1"].value + blk["upd_b1"].value)
        h = h + (upd @ blk["upd_w2"].value + blk["upd_b2"].value)
        expected = h.sum(axis=0) @ ep.readout_w.value + ep.readout_b.value
        assert np.allclose(got, expected, atol=1e-12)

    def test_atom_count_mismatch(self, rng):
        store, ep = make_expert()
        cloud = make_cloud(rng, 4)
        wrong = InteractionGraph(5, 3.0, np.empty((0, 2), dtype=np.int64))
        with pytest.raises(ShapeError):
            expert_forward(wrong, cloud, ep, Tape())

    def test_batched_equals_single(self, rng):
        store, ep = make_expert(depth=2)
        clouds = [make_cloud(rng, n) for n in (3, 5, 4)]
        graphs = [build_cutoff_graph(pairwise_distances(c), 3.0) for c in clouds]
        batched = expert_forward_batch(graphs, clouds, ep, Tape()).value
        for b, (g, c) in enumerate(zip(graphs, clouds)):
            single = expert_forward(g, c, ep, Tape()).value
            assert np.allclose(batched[b], single, atol=1e-12)

    def test_smaller_cutoff_sees_subset_edges(self, rng):
        cloud = make_cloud(rng, 10)
        dm = pairwise_distances(cloud)
        cutoffs = [2.0, 2.5, 3.0, 3.5, 4.0]
        graphs = [build_cutoff_graph(dm, c) for c in cutoffs]
        for a, b in zip(graphs, graphs[1:]):
            assert a.edge_set() <= b.edge_set()


class TestMoEAggregate:
    def _embeddings(self, tape, values):
        return [Tensor(np.asarray(v, dtype=np.float64)) for v in values]

    def test_one_hot_selects_exactly(self):
        tape = Tape()
        embs = self._embeddings(tape, [[1.0, 2], [3, 4], [5, 6], [7, 8]])
        rw = RoutingWeights(np.array([0.0, 0, 1, 0]), (2,))
        out = moe_aggregate(embs, rw, tape)
        assert np.array_equal(out.value, [5.0, 6.0])

    def test_uniform_is_mean(self):
        tape = Tape()
        embs = self._embeddings(tape, [[2.0, 0], [0, 2.0]])
        rw = RoutingWeights(np.array([0.5, 0.5]), (0, 1))
        assert np.array_equal(moe_aggregate(embs, rw, tape).value, [1.0, 1.0])

    def test_weighted_sum_against_oracle(self):
        tape = Tape()
        alpha = np.array([0.0, 0, 0, 1 / (1 + np.e), np.e / (1 + np.e)])
        basis = np.eye(5)
        embs = self._embeddings(tape, basis)
        rw = RoutingWeights(alpha, (3, 4))
        out = moe_aggregate(embs, rw, tape)
        expected = sum(alpha[k] * basis[k] for k in (3, 4))
        assert np.allclose(out.value, expected, atol=1e-15)

    def test_lazy_equals_dense_bitwise(self, rng):
        store, ep = make_expert()
        tape = Tape()
        values = rng.standard_normal((4, 6))
        alpha = np.array([0.0, 0.3, 0.0, 0.7])
        embs_all = self._embeddings(tape, values)
        lazy = moe_aggregate(embs_all, RoutingWeights(alpha, (1, 3)), tape)
        dense = alpha[1] * values[1]
        dense = dense + alpha[3] * values[3]
        padded = 0.0 * values[0] + alpha[1] * values[1]
        padded = padded + 0.0 * values[2] + alpha[3] * values[3]
        assert np.array_equal(lazy.value, dense)
        assert np.array_equal(padded, dense)

    def test_width_mismatch(self):
        tape = Tape()
        embs = [Tensor(np.zeros(3)), Tensor(np.zeros(4))]
        with pytest.raises(ShapeError):
            moe_aggregate(embs, RoutingWeights(np.array([0.5, 0.5]), (0, 1)), tape)


class TestPredict:
    def test_zero_head(self):
        tape = Tape()
        out = predict(Tensor(np.ones(4)), Tensor(np.zeros((4, 2))), Tensor(np.zeros(2)), tape)
        assert np.array_equal(out.value, [0.0, 0.0])

    def test_coordinate_pick(self):
        tape = Tape()
        h = Tensor(np.array([3.0, -1.0, 2.0]))
        w = np.zeros((3, 1))
        w[0, 0] = 1.0
        out = predict(h, Tensor(w), Tensor(np.zeros(1)), tape)
        assert np.array_equal(out.value, [3.0])

    def test_random_head_matches_matmul_oracle(self, rng):
        tape = Tape()
        h = rng.standard_normal((3, 4))
        w = rng.standard_normal((4, 2))
        b = rng.standard_normal(2)
        out = predict(Tensor(h), Tensor(w), Tensor(b), tape)
        assert np.allclose(out.value, matmul_oracle(h, w) + b, atol=1e-12)
