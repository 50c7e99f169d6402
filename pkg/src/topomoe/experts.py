"""Cutoff-specific invariant message-passing experts and MoE aggregation.

Every expert shares one architecture with separate parameters: an
atom-type embedding, L interaction blocks (continuous-filter style message
network over radial-basis edge features, residual update network), and a
sum-pooling readout with a linear projection. Coordinates enter only
through pairwise distances, so outputs are invariant to rigid motions, and
sum aggregation/pooling gives exact permutation invariance.
"""

from __future__ import annotations

import numpy as np

from .autodiff import ParamStore, Tape, Tensor
from .errors import ShapeError
from .filtration import InteractionGraph
from .gating import RoutingWeights
from .molecule import PointCloud


class ExpertParams:
    """Parameters of one expert bound to one interaction cutoff."""

    def __init__(
        self,
        store: ParamStore,
        prefix: str,
        width: int,
        depth: int,
        n_rbf: int,
        max_atomic_number: int,
        cutoff: float,
        rbf_span: float,
    ):
        self.prefix = prefix
        self.width = width
        self.depth = depth
        self.n_rbf = n_rbf
        self.max_atomic_number = max_atomic_number
        self.cutoff = float(cutoff)
        self.rbf_span = float(rbf_span)
        self.embed = store.add(f"{prefix}/embed", (max_atomic_number + 1, width), init="glorot")
        self.filter_w = store.add(f"{prefix}/filter_w", (n_rbf, width))
        self.filter_b = store.add(f"{prefix}/filter_b", (width,))
        self.blocks = []
        for layer in range(depth):
            block = {
                name: store.add(f"{prefix}/l{layer}/{name}", shape)
                for name, shape in (
                    ("msg_w1", (width, width)),
                    ("msg_b1", (width,)),
                    ("msg_w2", (width, width)),
                    ("msg_b2", (width,)),
                    ("upd_w1", (width, width)),
                    ("upd_b1", (width,)),
                    ("upd_w2", (width, width)),
                    ("upd_b2", (width,)),
                )
            }
            self.blocks.append(block)
        self.readout_w = store.add(f"{prefix}/readout_w", (width, width))
        self.readout_b = store.add(f"{prefix}/readout_b", (width,))


def expand_edge_features(distance: float, span: float, n_rbf: int) -> np.ndarray:
    """Gaussian radial basis of one distance: centers uniform on [0, span],
    width set so neighboring Gaussians overlap (gamma = (n_rbf/span)^2)."""
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    return _edge_feature_matrix(np.asarray([distance], dtype=np.float64), span, n_rbf)[0]


def _edge_feature_matrix(distances: np.ndarray, span: float, n_rbf: int) -> np.ndarray:
    centers = np.linspace(0.0, span, n_rbf)
    gamma = (n_rbf / span) ** 2
    return np.exp(-gamma * (distances[:, None] - centers[None, :]) ** 2)


def expert_forward_batch(
    graphs: list[InteractionGraph],
    clouds: list[PointCloud],
    ep: ExpertParams,
    tape: Tape,
) -> Tensor:
    """Embeddings for a list of molecules as one disjoint-union graph.

    Returns a (B, width) tensor; row b is the readout of molecule b.
    """
    if len(graphs) != len(clouds):
        raise ShapeError(f"{len(graphs)} graphs vs {len(clouds)} clouds")
    z_all, src, dst, dist, mol_index = _assemble_batch(graphs, clouds, ep)
    h = tape.gather_rows(ep.embed, z_all)
    edge_feat = _edge_feature_matrix(dist, ep.rbf_span, ep.n_rbf)
    filt = tape.shifted_softplus(tape.linear(edge_feat, ep.filter_w, ep.filter_b))
    n_total = len(z_all)
    for block in ep.blocks:
        hj = tape.gather_rows(h, src)
        pre = tape.mul(hj, filt)
        m = tape.linear(
            tape.shifted_softplus(tape.linear(pre, block["msg_w1"], block["msg_b1"])),
            block["msg_w2"],
            block["msg_b2"],
        )
        agg = tape.scatter_sum(m, dst, n_total)
        upd = tape.linear(
            tape.shifted_softplus(tape.linear(agg, block["upd_w1"], block["upd_b1"])),
            block["upd_w2"],
            block["upd_b2"],
        )
        h = tape.add(h, upd)
    pooled = tape.scatter_sum(h, mol_index, len(clouds))
    return tape.linear(pooled, ep.readout_w, ep.readout_b)


def _assemble_batch(graphs, clouds, ep):
    z_parts, src_parts, dst_parts, dist_parts, mol_parts = [], [], [], [], []
    offset = 0
    for b, (g, cloud) in enumerate(zip(graphs, clouds)):
        if g.n != cloud.n_atoms:
            raise ShapeError(f"graph has {g.n} nodes but cloud has {cloud.n_atoms} atoms")
        if np.any(cloud.atom_numbers > ep.max_atomic_number):
            raise ValueError(
                f"atomic number exceeds the embedding table "
                f"(max {ep.max_atomic_number}); raise max_atomic_number"
            )
        z_parts.append(cloud.atom_numbers)
        mol_parts.append(np.full(g.n, b, dtype=np.int64))
        if len(g.edges):
            i, j = g.edges[:, 0], g.edges[:, 1]
            d = np.sqrt(np.sum((cloud.coords[i] - cloud.coords[j]) ** 2, axis=1))
            # both message directions share the symmetric edge feature
            src_parts.append(np.concatenate([j, i]) + offset)
            dst_parts.append(np.concatenate([i, j]) + offset)
            dist_parts.append(np.concatenate([d, d]))
        offset += g.n
    empty = np.empty(0, dtype=np.int64)
    return (
        np.concatenate(z_parts),
        np.concatenate(src_parts) if src_parts else empty,
        np.concatenate(dst_parts) if dst_parts else empty,
        np.concatenate(dist_parts) if dist_parts else np.empty(0, dtype=np.float64),
        np.concatenate(mol_parts),
    )


def expert_forward(
    g: InteractionGraph, cloud: PointCloud, ep: ExpertParams, tape: Tape
) -> Tensor:
    """Embedding (width,) of one molecule through one expert."""
    return tape.reshape(expert_forward_batch([g], [cloud], ep, tape), (-1,))


def moe_aggregate(embeddings, routing: RoutingWeights, tape: Tape) -> Tensor:
    """Convex combination of the selected experts' embeddings.

    `embeddings` is a length-K list; entries for unselected experts may be
    None (they were never executed) and contribute exactly zero.
    """
    alpha = routing.tensor if routing.tensor is not None else Tensor(routing.alpha)
    out = None
    width = None
    for k in routing.selected:
        if embeddings[k] is None:
            raise ValueError(f"expert {k} is selected but has no embedding")
        emb = embeddings[k]
        if width is None:
            width = emb.value.shape
        elif emb.value.shape != width:
            raise ShapeError(f"embedding widths differ: {width} vs {emb.value.shape}")
        term = tape.mul(tape.take(alpha, k), emb)
        out = term if out is None else tape.add(out, term)
    return out


def predict(h: Tensor, head_w: Tensor, head_b: Tensor, tape: Tape) -> Tensor:
    """Linear head: raw values for regression, logits for classification."""
    return tape.linear(h, head_w, head_b)
