"""Trajectory-to-expert routing: MLP encoder, Top-k sparsification, softmax.

The encoder maps the flattened T x 5 descriptor matrix to one logit per
expert. Top-k keeps the k largest logits (ties toward the smaller expert
index), suppresses the rest to -inf, and softmax turns the survivors into
convex weights; gradients flow only into the kept logits. An
attention-based encoder is a declared configuration stub.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ParamStore, Tape, Tensor
from .descriptors import TopoTrajectory
from .errors import ShapeError


class GateParams:
    """Two-layer MLP: 5T -> hidden (tanh) -> K logits."""

    def __init__(self, store: ParamStore, n_radii: int, n_experts: int, hidden: int,
                 prefix: str = "gate"):
        self.n_radii = n_radii
        self.n_experts = n_experts
        self.w1 = store.add(f"{prefix}/w1", (5 * n_radii, hidden))
        self.b1 = store.add(f"{prefix}/b1", (hidden,))
        self.w2 = store.add(f"{prefix}/w2", (hidden, n_experts))
        self.b2 = store.add(f"{prefix}/b2", (n_experts,))


@dataclass(frozen=True)
class RoutingWeights:
    """Convex weights over experts with at most k nonzeros."""

    alpha: np.ndarray  # (K,) float64, sums to 1
    selected: tuple[int, ...]  # ascending expert indices with alpha > 0
    tensor: Tensor | None = None  # differentiable alpha when built on a tape

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        object.__setattr__(self, "alpha", a)
        if np.any(a < 0):
            raise ValueError("routing weights must be nonnegative")
        if abs(a.sum() - 1.0) > 1e-12:
            raise ValueError(f"routing weights sum to {a.sum()}, expected 1")


def encode_trajectory(traj: TopoTrajectory, gp: GateParams, tape: Tape) -> Tensor:
    """Routing logits (length K) for a single molecule's trajectory."""
    if traj.n_radii != gp.n_radii:
        raise ShapeError(
            f"trajectory has {traj.n_radii} radii, gate expects {gp.n_radii}"
        )
    return tape.reshape(encode_flat(traj.flat()[None, :], gp, tape), (-1,))


def encode_flat(x_flat: np.ndarray, gp: GateParams, tape: Tape) -> Tensor:
    """Batched encoder: rows of flattened trajectories -> (B, K) logits."""
    x = np.asarray(x_flat, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 5 * gp.n_radii:
        raise ShapeError(f"encoder input {x.shape}, expected (B, {5 * gp.n_radii})")
    h = tape.tanh(tape.linear(x, gp.w1, gp.b1))
    return tape.linear(h, gp.w2, gp.b2)


def topk_select(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries, ties to the smaller index,
    returned in ascending index order."""
    values = np.asarray(values)
    n = len(values)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    order = np.lexsort((np.arange(n), -values))
    return np.sort(order[:k])


def topk_mask(logits, k: int, tape: Tape | None = None):
    """Keep the k largest logits, set the rest to -inf.

    Accepts a plain vector (returns a vector) or a Tensor on a tape
    (returns a masked Tensor whose gradient only reaches kept entries).
    """
    if isinstance(logits, Tensor):
        if tape is None:
            raise ValueError("a Tensor logits argument needs the recording tape")
        keep = np.zeros(logits.value.shape, dtype=bool)
        if logits.value.ndim == 1:
            keep[topk_select(logits.value, k)] = True
        else:
            for r in range(logits.value.shape[0]):
                keep[r, topk_select(logits.value[r], k)] = True
        return tape.mask_keep(logits, keep)
    values = np.asarray(logits, dtype=np.float64)
    masked = np.full_like(values, -np.inf)
    idx = topk_select(values, k)
    masked[idx] = values[idx]
    return masked


def routing_weights(masked, tape: Tape | None = None) -> RoutingWeights:
    """Softmax over the unmasked logits of one molecule."""
    if isinstance(masked, Tensor):
        alpha = tape.softmax(masked)
        selected = tuple(int(i) for i in np.nonzero(np.isfinite(masked.value))[0])
        return RoutingWeights(alpha.value.copy(), selected, tensor=alpha)
    local = Tape()
    alpha = local.softmax(Tensor(np.asarray(masked, dtype=np.float64)))
    selected = tuple(int(i) for i in np.nonzero(np.isfinite(np.asarray(masked)))[0])
    return RoutingWeights(alpha.value, selected)
