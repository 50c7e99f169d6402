"""End-to-end orchestration: configuration, forward pass, training loop,
evaluation, checkpoints.

The forward pass follows a fixed seven-step order per molecule: build
graphs, descriptor trajectory, gate logits, Top-k + softmax, selected
expert embeddings, weighted aggregation, prediction head. Training is
mini-batch Adam on the total objective with a cosine-annealed, warmed-up
learning rate and early stopping on the validation metric. Every random
choice is derived from the config seed, so a fixed seed reproduces the
checkpoint bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import checkpoint as ckpt_io
from .autodiff import ParamStore, Tape, Tensor
from .descriptors import TrajectoryCache, build_trajectory
from .errors import DatasetError, LossError, NumericError
from .experts import ExpertParams, expert_forward, expert_forward_batch, moe_aggregate, predict
from .filtration import build_cutoff_graph, build_schedule, pairwise_distances
from .gating import GateParams, encode_flat, encode_trajectory, routing_weights, topk_mask, topk_select
from .losses import BatchRouting, LossConfig, load_balance_loss, score_balance_loss, task_loss, total_loss
from .metrics import auc_per_task, mean_over_valid, rmse_per_task
from .molecule import Dataset, PointCloud
from .optim import Adam, CosineWarmupSchedule

ROUTING_MODES = ("sparse", "dense", "one_expert")
FORWARD_STEPS = (
    "build_graphs",
    "compute_trajectory",
    "gate_logits",
    "topk_softmax",
    "expert_embeddings",
    "moe_aggregate",
    "predict_head",
)


@dataclass
class TrainConfig:
    """Every knob of the pipeline; JSON-serializable."""

    cutoffs: tuple = (2.0, 2.5, 3.0, 3.5, 4.0)
    window_w: float = 1.0
    step_dr: float = 0.25
    max_neighbors: int = 0
    top_k: int = 2
    hidden_width: int = 32
    expert_depth: int = 3
    n_rbf: int = 16
    gate_hidden: int = 64
    gate_kind: str = "mlp"
    max_atomic_number: int = 86
    lambda_balance: float = 0.01
    epsilon: float = 1e-8
    batch_size: int = 32
    learning_rate: float = 1e-3
    max_epochs: int = 120
    early_stop_patience: int = 30
    seed: int = 0
    task_kind: str = "regression"
    split_fractions: tuple = (0.8, 0.1, 0.1)
    routing_mode: str = "sparse"
    load_uses_indicator: bool = False

    def __post_init__(self):
        self.cutoffs = tuple(float(c) for c in self.cutoffs)
        self.split_fractions = tuple(float(f) for f in self.split_fractions)
        k = len(self.cutoffs)
        if self.routing_mode not in ROUTING_MODES:
            raise ValueError(f"routing_mode must be one of {ROUTING_MODES}")
        if self.routing_mode == "dense":
            self.top_k = k
        if self.routing_mode == "one_expert":
            if k != 1:
                raise ValueError("one_expert mode needs exactly one cutoff")
            self.top_k = 1
        if not 1 <= self.top_k <= k:
            raise ValueError(f"top_k must be in [1, {k}], got {self.top_k}")
        if self.task_kind not in ("regression", "binary-classification"):
            raise ValueError(f"unknown task_kind {self.task_kind!r}")
        if len(self.split_fractions) != 3 or any(f < 0 for f in self.split_fractions):
            raise ValueError("split_fractions must be three nonnegative numbers")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError(f"split_fractions sum to {sum(self.split_fractions)}, expected 1")
        for name in ("hidden_width", "expert_depth", "n_rbf", "gate_hidden", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.max_epochs < 0 or self.early_stop_patience < 1:
            raise ValueError("max_epochs must be >= 0 and early_stop_patience >= 1")
        if self.learning_rate <= 0 or self.epsilon <= 0 or self.lambda_balance < 0:
            raise ValueError("learning_rate/epsilon must be positive, lambda nonnegative")
        if self.max_neighbors < 0:
            raise ValueError("max_neighbors must be >= 0 (0 disables the cap)")

    @property
    def n_experts(self) -> int:
        return len(self.cutoffs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"_notes"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in data.items() if k in known})

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class MoEModel:
    """Gate + K experts + head over one filtration schedule."""

    def __init__(self, cfg: TrainConfig, task_count: int, rng_seed=None):
        if cfg.gate_kind == "transformer":
            raise NotImplementedError("transformer gate is a declared stub; use gate_kind='mlp'")
        if cfg.gate_kind != "mlp":
            raise ValueError(f"unknown gate_kind {cfg.gate_kind!r}")
        self.cfg = cfg
        self.task_count = task_count
        self.schedule = build_schedule(cfg.cutoffs, cfg.window_w, cfg.step_dr)
        self.store = ParamStore(cfg.seed if rng_seed is None else rng_seed)
        self.gate = GateParams(
            self.store, self.schedule.n_radii, cfg.n_experts, cfg.gate_hidden
        )
        span = float(self.schedule.expert_cutoffs[-1])
        self.experts = [
            ExpertParams(
                self.store,
                f"expert{k}",
                cfg.hidden_width,
                cfg.expert_depth,
                cfg.n_rbf,
                cfg.max_atomic_number,
                cutoff=float(c),
                rbf_span=span,
            )
            for k, c in enumerate(self.schedule.expert_cutoffs)
        ]
        self.head_w = self.store.add("head/w", (cfg.hidden_width, task_count))
        self.head_b = self.store.add("head/b", (task_count,))

    def expert_graphs(self, cloud: PointCloud):
        dm = pairwise_distances(cloud)
        return [
            build_cutoff_graph(dm, c, max_neighbors=self.cfg.max_neighbors)
            for c in self.schedule.expert_cutoffs
        ]

    def trajectories(self, clouds, cache: TrajectoryCache | None) -> np.ndarray:
        rows = np.empty((len(clouds), 5 * self.schedule.n_radii))
        for b, cloud in enumerate(clouds):
            rows[b] = build_trajectory(cloud, self.schedule, cache).flat()
        return rows

    def forward_batch(
        self, clouds, cache: TrajectoryCache | None, tape: Tape
    ) -> tuple[Tensor, BatchRouting]:
        """Predictions (B, tasks) and batch routing for a list of molecules."""
        n_batch = len(clouds)
        k_eff = self.cfg.top_k
        x_flat = self.trajectories(clouds, cache)
        logits = encode_flat(x_flat, self.gate, tape)
        keep = np.zeros_like(logits.value, dtype=bool)
        selected: list[tuple[int, ...]] = []
        for b in range(n_batch):
            idx = topk_select(logits.value[b], k_eff)
            keep[b, idx] = True
            selected.append(tuple(int(i) for i in idx))
        alpha = tape.softmax(tape.mask_keep(logits, keep))
        routing = BatchRouting(alpha, selected)

        graphs_per_cloud = [self.expert_graphs(c) for c in clouds]
        combined = None
        for k in range(self.cfg.n_experts):
            rows = [b for b in range(n_batch) if keep[b, k]]
            if not rows:
                continue
            emb = expert_forward_batch(
                [graphs_per_cloud[b][k] for b in rows],
                [clouds[b] for b in rows],
                self.experts[k],
                tape,
            )
            weights = tape.gather_rows(tape.column(alpha, k), rows)
            contrib = tape.scatter_sum(tape.mul(emb, weights), rows, n_batch)
            combined = contrib if combined is None else tape.add(combined, contrib)
        preds = predict(combined, self.head_w, self.head_b, tape)
        return preds, routing


def forward_pass(
    model: MoEModel,
    cloud: PointCloud,
    cache: TrajectoryCache | None = None,
    trace: list | None = None,
):
    """Single-molecule forward pass in the fixed seven-step order.

    Returns the prediction vector (task_count,). With `trace` a list, the
    step names are appended as they execute.
    """

    def mark(step):
        if trace is not None:
            trace.append(step)

    tape = Tape()
    mark("build_graphs")
    graphs = model.expert_graphs(cloud)
    mark("compute_trajectory")
    traj = build_trajectory(cloud, model.schedule, cache)
    mark("gate_logits")
    logits = encode_trajectory(traj, model.gate, tape)
    mark("topk_softmax")
    masked = topk_mask(logits, model.cfg.top_k, tape)
    routing = routing_weights(masked, tape)
    mark("expert_embeddings")
    embeddings = [None] * model.cfg.n_experts
    for k in routing.selected:
        embeddings[k] = expert_forward(graphs[k], cloud, model.experts[k], tape)
    mark("moe_aggregate")
    h = moe_aggregate(embeddings, routing, tape)
    mark("predict_head")
    pred = predict(h, model.head_w, model.head_b, tape)
    return pred.value.copy()


@dataclass
class Checkpoint:
    """Best parameters plus everything needed to rebuild and re-evaluate."""

    params: dict
    config: TrainConfig
    schedule_hash: str
    best_metric: float
    epoch: int
    task_kind: str
    task_count: int

    def save(self, path) -> None:
        meta = {
            "config": self.config.to_dict(),
            "schedule_hash": self.schedule_hash,
            "best_metric": self.best_metric,
            "epoch": self.epoch,
            "task_kind": self.task_kind,
            "task_count": self.task_count,
        }
        ckpt_io.save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        arrays, meta = ckpt_io.load_checkpoint(path)
        return cls(
            params=arrays,
            config=TrainConfig.from_dict(meta["config"]),
            schedule_hash=meta["schedule_hash"],
            best_metric=meta["best_metric"],
            epoch=meta["epoch"],
            task_kind=meta["task_kind"],
            task_count=meta["task_count"],
        )

    def build_model(self) -> MoEModel:
        model = MoEModel(self.config, self.task_count)
        model.store.load_state_arrays(self.params)
        return model


def split_dataset(dataset: Dataset, fractions, seed: int):
    """Deterministic shuffled index split (train, val, test)."""
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(fractions[0] * n))
    n_val = int(np.floor(fractions[1] * n))
    if n_train == 0:
        raise DatasetError(f"dataset of {n} samples leaves an empty training split")
    return (
        order[:n_train],
        order[n_train : n_train + n_val],
        order[n_train + n_val :],
    )


def _config_seeds(seed: int):
    """Derive the (init, split, shuffle) random streams from one seed."""
    init_ss, split_ss, shuffle_ss = np.random.SeedSequence(seed).spawn(3)
    return init_ss, int(split_ss.generate_state(1)[0]), shuffle_ss


def config_splits(cfg: TrainConfig, dataset: Dataset):
    """The (train, val, test) index split that `train` uses for this config."""
    _, split_seed, _ = _config_seeds(cfg.seed)
    return split_dataset(dataset, cfg.split_fractions, seed=split_seed)


def _metric_on(model: MoEModel, dataset: Dataset, indices, cache, batch_size=128):
    preds, targets, masks = _predict_many(model, dataset, indices, cache, batch_size)
    if model.cfg.task_kind == "regression":
        return mean_over_valid(rmse_per_task(preds, targets, masks))
    return mean_over_valid(auc_per_task(preds, targets, masks))


def _predict_many(model, dataset, indices, cache, batch_size=128):
    preds = np.empty((len(indices), model.task_count))
    targets = np.empty_like(preds)
    masks = np.empty_like(preds)
    for start in range(0, len(indices), batch_size):
        chunk = [int(i) for i in indices[start : start + batch_size]]
        clouds = [dataset.samples[i].cloud for i in chunk]
        out, _ = model.forward_batch(clouds, cache, Tape())
        preds[start : start + len(chunk)] = out.value
        targets[start : start + len(chunk)] = [dataset.samples[i].targets for i in chunk]
        masks[start : start + len(chunk)] = [dataset.samples[i].mask for i in chunk]
    return preds, targets, masks


def _improved(candidate: float, best: float, task_kind: str) -> bool:
    if np.isnan(candidate):
        return False
    if np.isnan(best):
        return True
    if task_kind == "regression":
        return candidate < best
    return candidate > best


def train(
    cfg: TrainConfig,
    dataset: Dataset,
    cache: TrajectoryCache | None = None,
    log_stream=None,
) -> tuple[Checkpoint, list[dict]]:
    """Mini-batch training per the total objective; returns the best
    checkpoint (by validation metric) and the per-epoch history."""
    if len(dataset) == 0:
        raise DatasetError("cannot train on an empty dataset")
    if dataset.task_kind != cfg.task_kind:
        raise DatasetError(
            f"config task_kind {cfg.task_kind!r} != dataset {dataset.task_kind!r}"
        )
    if cache is None:
        cache = TrajectoryCache()
    init_ss, split_seed, shuffle_ss = _config_seeds(cfg.seed)
    model = MoEModel(cfg, dataset.task_count, rng_seed=np.random.default_rng(init_ss))
    train_idx, val_idx, _ = split_dataset(dataset, cfg.split_fractions, seed=split_seed)
    monitor_idx = val_idx if len(val_idx) else train_idx
    shuffle_rng = np.random.default_rng(shuffle_ss)
    loss_cfg = LossConfig(cfg.lambda_balance, cfg.epsilon)
    optimizer = Adam(model.store)
    steps_per_epoch = max(1, (len(train_idx) + cfg.batch_size - 1) // cfg.batch_size)
    schedule = CosineWarmupSchedule(cfg.learning_rate, cfg.max_epochs * steps_per_epoch)

    if log_stream is not None:
        log_stream.write("epoch,lr,task,score,load,total,val_metric\n")
    history: list[dict] = []
    best_state = model.store.state_arrays()
    best_metric = float("nan")
    best_epoch = -1
    if cfg.max_epochs == 0:
        best_metric = _metric_on(model, dataset, monitor_idx, cache)
        best_epoch = 0
    step = 0
    epochs_since_best = 0
    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(train_idx)
        sums = {"task": 0.0, "score": 0.0, "load": 0.0, "total": 0.0}
        lr = schedule.lr(step)
        for start in range(0, len(order), cfg.batch_size):
            chunk = [int(i) for i in order[start : start + cfg.batch_size]]
            clouds = [dataset.samples[i].cloud for i in chunk]
            targets = np.array([dataset.samples[i].targets for i in chunk])
            masks = np.array([dataset.samples[i].mask for i in chunk])
            tape = Tape()
            preds, routing = model.forward_batch(clouds, cache, tape)
            try:
                l_task = task_loss(preds, targets, masks, cfg.task_kind, tape)
                l_score = score_balance_loss(routing, cfg.epsilon, tape)
                l_load = load_balance_loss(
                    routing, cfg.epsilon, tape, use_indicator=cfg.load_uses_indicator
                )
                l_total = total_loss(l_task, l_score, l_load, loss_cfg, tape)
            except LossError as exc:
                raise NumericError(
                    f"epoch {epoch}, batch {start // cfg.batch_size}: {exc}"
                ) from exc
            if not np.isfinite(l_total.value):
                raise NumericError(
                    f"diverged at epoch {epoch}, batch {start // cfg.batch_size}: "
                    f"task={l_task.value} score={l_score.value} load={l_load.value}"
                )
            model.store.zero_grad()
            tape.backward(l_total)
            lr = schedule.lr(step)
            optimizer.step(lr)
            step += 1
            sums["task"] += float(l_task.value)
            sums["score"] += float(l_score.value)
            sums["load"] += float(l_load.value)
            sums["total"] += float(l_total.value)
        n_batches = steps_per_epoch
        val_metric = _metric_on(model, dataset, monitor_idx, cache)
        record = {
            "epoch": epoch,
            "lr": lr,
            "task": sums["task"] / n_batches,
            "score": sums["score"] / n_batches,
            "load": sums["load"] / n_batches,
            "total": sums["total"] / n_batches,
            "val_metric": val_metric,
        }
        history.append(record)
        if log_stream is not None:
            log_stream.write(
                f"{epoch},{lr:.10g},{record['task']:.10g},{record['score']:.10g},"
                f"{record['load']:.10g},{record['total']:.10g},{val_metric:.10g}\n"
            )
        if _improved(val_metric, best_metric, cfg.task_kind):
            best_metric = val_metric
            best_epoch = epoch
            best_state = model.store.state_arrays()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.early_stop_patience:
                break
    ckpt = Checkpoint(
        params=best_state,
        config=cfg,
        schedule_hash=model.schedule.content_hash(),
        best_metric=float(best_metric),
        epoch=best_epoch,
        task_kind=cfg.task_kind,
        task_count=dataset.task_count,
    )
    return ckpt, history


def evaluate(ckpt: Checkpoint, dataset: Dataset, cache: TrajectoryCache | None = None) -> dict:
    """Metrics of a checkpoint on a dataset: per-task plus mean."""
    if dataset.task_kind != ckpt.task_kind:
        raise DatasetError(
            f"checkpoint task_kind {ckpt.task_kind!r} != dataset {dataset.task_kind!r}"
        )
    if dataset.task_count != ckpt.task_count:
        raise DatasetError(
            f"checkpoint has {ckpt.task_count} tasks, dataset {dataset.task_count}"
        )
    model = ckpt.build_model()
    if cache is None:
        cache = TrajectoryCache()
    indices = np.arange(len(dataset))
    preds, targets, masks = _predict_many(model, dataset, indices, cache)
    if ckpt.task_kind == "regression":
        per_task = rmse_per_task(preds, targets, masks)
        metric_name = "rmse"
    else:
        per_task = auc_per_task(preds, targets, masks)
        metric_name = "roc_auc"
    return {
        "metric": metric_name,
        "task_kind": ckpt.task_kind,
        "per_task": per_task,
        "mean": mean_over_valid(per_task),
        "n_samples": len(dataset),
    }
