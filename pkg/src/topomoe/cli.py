"""Command-line interface: train, evaluate, featurize, route.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

from .autodiff import Tape
from .descriptors import DESCRIPTOR_COLUMNS, TrajectoryCache, build_trajectory
from .errors import DataError, LossError, NumericError
from .filtration import build_schedule
from .molecule import parse_dataset
from .training import Checkpoint, TrainConfig, evaluate, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topomoe",
        description="Topology-gated mixture of cutoff-specific experts "
        "for molecular property prediction.",
    )
    sub = parser.add_subparsers(dest="command", metavar="{train,evaluate,featurize,route}")
    for name, needs in (
        ("train", ("dataset", "out")),
        ("evaluate", ("dataset", "checkpoint")),
        ("featurize", ("dataset", "out")),
        ("route", ("dataset", "checkpoint", "out")),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (defaults used when omitted)")
        p.add_argument("--dataset", required="dataset" in needs, help="JSONL dataset path")
        p.add_argument("--checkpoint", required="checkpoint" in needs, help="checkpoint path")
        p.add_argument("--out", required="out" in needs, help="output path")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--cache-dir", default=None, help="trajectory cache directory")
    return parser


def _load_config(args) -> TrainConfig:
    if args.config:
        cfg = TrainConfig.from_json(args.config)
    else:
        cfg = TrainConfig()
    if args.seed is not None:
        data = cfg.to_dict()
        data["seed"] = args.seed
        cfg = TrainConfig.from_dict(data)
    return cfg


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"no such file: {path}")
    return p


def _cache(args) -> TrajectoryCache:
    return TrajectoryCache(args.cache_dir) if args.cache_dir else TrajectoryCache()


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    dataset = parse_dataset(_require_file(args.dataset))
    ckpt, _ = train(cfg, dataset, cache=_cache(args), log_stream=sys.stdout)
    ckpt.save(args.out)
    print(f"checkpoint written to {args.out} (best {ckpt.best_metric:.6g} "
          f"at epoch {ckpt.epoch})", file=sys.stderr)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    ckpt = Checkpoint.load(_require_file(args.checkpoint))
    dataset = parse_dataset(_require_file(args.dataset))
    metrics = evaluate(ckpt, dataset, cache=_cache(args))
    blob = json.dumps(metrics, indent=2)
    if args.out:
        Path(args.out).write_text(blob + "\n", encoding="utf-8")
    print(blob)
    return EXIT_OK


def _safe_name(mol_id: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9_.-]", "_", mol_id)
    return cleaned or "molecule"


def _cmd_featurize(args) -> int:
    cfg = _load_config(args)
    dataset = parse_dataset(_require_file(args.dataset))
    sched = build_schedule(cfg.cutoffs, cfg.window_w, cfg.step_dr)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = _cache(args)
    for sample in dataset:
        traj = build_trajectory(sample.cloud, sched, cache)
        path = out_dir / f"{_safe_name(sample.cloud.id)}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("r," + ",".join(DESCRIPTOR_COLUMNS) + "\n")
            for r, row in zip(traj.radii, traj.values):
                fh.write(f"{r:.12g}," + ",".join(f"{v:.12g}" for v in row) + "\n")
    print(f"wrote {len(dataset)} trajectory files to {out_dir}", file=sys.stderr)
    return EXIT_OK


def _cmd_route(args) -> int:
    ckpt = Checkpoint.load(_require_file(args.checkpoint))
    dataset = parse_dataset(_require_file(args.dataset))
    model = ckpt.build_model()
    cache = _cache(args)
    k_names = ",".join(f"alpha_{k + 1}" for k in range(model.cfg.n_experts))
    lines = [f"id,{k_names},selected"]
    for sample in dataset:
        _, routing = model.forward_batch([sample.cloud], cache, Tape())
        alpha = routing.alpha.value[0]
        sel = "|".join(str(i) for i in routing.selected[0])
        lines.append(
            f"{sample.cloud.id}," + ",".join(f"{a:.12g}" for a in alpha) + f",{sel}"
        )
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "featurize": _cmd_featurize,
    "route": _cmd_route,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; the documented usage code is 1
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.command not in _COMMANDS:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, LossError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
