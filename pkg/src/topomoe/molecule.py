"""Molecular point-cloud datasets: types, validation, XYZ and JSONL parsing.

A molecule is a point cloud: atomic numbers plus Cartesian coordinates in
angstroms. Whatever atoms appear in the input are taken as the full vertex
set (no implicit-hydrogen handling). Coordinates are used as-is; no unit
inference.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError, ParseError

# Z = 1 (H) through 86 (Rn)
_SYMBOLS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe "
    "Co Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In "
    "Sn Sb Te I Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf "
    "Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn"
).split()

SYMBOL_TO_Z = {s: i + 1 for i, s in enumerate(_SYMBOLS)}
Z_TO_SYMBOL = {i + 1: s for i, s in enumerate(_SYMBOLS)}

MIN_ATOM_SEPARATION = 1e-6  # angstroms

REGRESSION = "regression"
BINARY_CLASSIFICATION = "binary-classification"
TASK_KINDS = (REGRESSION, BINARY_CLASSIFICATION)


@dataclass(frozen=True)
class PointCloud:
    """One molecule: atomic numbers and n×3 coordinates (angstroms)."""

    atom_numbers: np.ndarray  # (n,) positive ints
    coords: np.ndarray  # (n, 3) float64
    id: str = ""

    def __post_init__(self):
        z = np.ascontiguousarray(np.asarray(self.atom_numbers, dtype=np.int64))
        r = np.ascontiguousarray(np.asarray(self.coords, dtype=np.float64))
        object.__setattr__(self, "atom_numbers", z)
        object.__setattr__(self, "coords", r)
        if z.ndim != 1 or z.size < 1:
            raise ValueError(f"atom_numbers must be a non-empty vector, got shape {z.shape}")
        if np.any(z < 1):
            raise ValueError("atomic numbers must be positive integers")
        if r.ndim != 2 or r.shape[1] != 3:
            raise ValueError(f"coords must be (n, 3), got shape {r.shape}")
        if len(z) != len(r):
            raise ValueError(f"{len(z)} atomic numbers but {len(r)} coordinate rows")
        if not np.all(np.isfinite(r)):
            raise ValueError("coordinates must be finite")
        _check_separation(r)

    @property
    def n_atoms(self) -> int:
        return len(self.atom_numbers)


def _check_separation(r: np.ndarray) -> None:
    diff = r[:, None, :] - r[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    if d2.min() <= MIN_ATOM_SEPARATION**2:
        i, j = np.unravel_index(int(d2.argmin()), d2.shape)
        raise ValueError(f"atoms {min(i, j)} and {max(i, j)} share coordinates")


@dataclass(frozen=True)
class LabeledSample:
    """A point cloud plus target vector and per-target presence mask."""

    cloud: PointCloud
    targets: np.ndarray  # (task_count,) float64; 0.0 where masked out
    mask: np.ndarray  # (task_count,) float64 in {0, 1}

    def __post_init__(self):
        t = np.ascontiguousarray(np.asarray(self.targets, dtype=np.float64))
        m = np.ascontiguousarray(np.asarray(self.mask, dtype=np.float64))
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "mask", m)
        if t.shape != m.shape or t.ndim != 1:
            raise ValueError(f"targets {t.shape} and mask {m.shape} must be equal-length vectors")
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ValueError("mask entries must be 0 or 1")
        if not np.all(np.isfinite(t[m == 1.0])):
            raise ValueError("present targets must be finite")


@dataclass
class Dataset:
    """Ordered samples sharing one task layout."""

    samples: list[LabeledSample]
    task_kind: str
    task_count: int
    ids: set[str] = field(init=False, repr=False)

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise DatasetError(f"unknown task_kind {self.task_kind!r}")
        if self.task_count < 1:
            raise DatasetError("task_count must be positive")
        self.ids = set()
        for s in self.samples:
            if len(s.targets) != self.task_count:
                raise DatasetError(
                    f"sample {s.cloud.id!r} has {len(s.targets)} targets, "
                    f"dataset declares {self.task_count}"
                )
            if self.task_kind == REGRESSION and not np.all(s.mask == 1.0):
                raise DatasetError(f"regression sample {s.cloud.id!r} has masked targets")
            if s.cloud.id in self.ids:
                raise DatasetError(f"duplicate molecule id {s.cloud.id!r}")
            self.ids.add(s.cloud.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def parse_xyz(text: str) -> PointCloud:
    """Parse one molecule in standard XYZ layout.

    Line 1 is the atom count, line 2 a comment (used as the molecule id),
    then one "Symbol x y z" line per atom. Raises ParseError naming the
    offending line.
    """
    lines = text.splitlines()
    if len(lines) < 2:
        raise ParseError("line 1: XYZ input needs a count line and a comment line")
    try:
        count = int(lines[0].strip())
    except ValueError:
        raise ParseError(f"line 1: expected an atom count, got {lines[0]!r}") from None
    if count < 1:
        raise ParseError("line 1: atom count must be at least 1")
    atom_lines = [(no, ln) for no, ln in enumerate(lines[2:], start=3) if ln.strip()]
    if len(atom_lines) != count:
        raise ParseError(
            f"line 1: declared {count} atoms but file has {len(atom_lines)} atom lines"
        )
    numbers = np.empty(count, dtype=np.int64)
    coords = np.empty((count, 3), dtype=np.float64)
    for i, (lineno, line) in enumerate(atom_lines):
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"line {lineno}: expected 'Symbol x y z', got {line!r}")
        sym = parts[0]
        if sym not in SYMBOL_TO_Z:
            raise ParseError(f"line {lineno}: unknown element symbol {sym!r}")
        numbers[i] = SYMBOL_TO_Z[sym]
        try:
            xyz = [float(p) for p in parts[1:]]
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric coordinate in {line!r}") from None
        if not all(math.isfinite(v) for v in xyz):
            raise ParseError(f"line {lineno}: non-finite coordinate in {line!r}")
        coords[i] = xyz
        for j in range(i):
            if np.sum((coords[i] - coords[j]) ** 2) <= MIN_ATOM_SEPARATION**2:
                raise ParseError(f"line {lineno}: atom duplicates coordinates of atom {j}")
    return PointCloud(numbers, coords, id=lines[1].strip())


def _atom_from_record(rec: dict, lineno: int, index: int) -> tuple[int, list[float]]:
    where = f"line {lineno}: atom {index}"
    if not isinstance(rec, dict):
        raise ParseError(f"{where}: expected an object")
    if "symbol" in rec:
        sym = rec["symbol"]
        if sym not in SYMBOL_TO_Z:
            raise ParseError(f"{where}: unknown element symbol {sym!r}")
        z = SYMBOL_TO_Z[sym]
    elif "Z" in rec:
        z = rec["Z"]
        if not isinstance(z, int) or not 1 <= z <= len(_SYMBOLS):
            raise ParseError(f"{where}: atomic number Z={z!r} outside the element table")
    else:
        raise ParseError(f"{where}: needs 'symbol' or 'Z'")
    try:
        xyz = [float(rec[k]) for k in ("x", "y", "z")]
    except (KeyError, TypeError, ValueError):
        raise ParseError(f"{where}: needs numeric 'x', 'y', 'z'") from None
    if not all(math.isfinite(v) for v in xyz):
        raise ParseError(f"{where}: non-finite coordinate")
    return z, xyz


def _sample_from_record(rec: dict, lineno: int, task_count: int) -> LabeledSample:
    atoms = rec.get("atoms")
    if not isinstance(atoms, list) or not atoms:
        raise ParseError(f"line {lineno}: 'atoms' must be a non-empty list")
    numbers = np.empty(len(atoms), dtype=np.int64)
    coords = np.empty((len(atoms), 3), dtype=np.float64)
    for i, a in enumerate(atoms):
        numbers[i], coords[i] = _atom_from_record(a, lineno, i)
    raw_targets = rec.get("targets")
    if not isinstance(raw_targets, list):
        raise ParseError(f"line {lineno}: 'targets' must be a list")
    if len(raw_targets) != task_count:
        raise DatasetError(
            f"line {lineno}: {len(raw_targets)} targets, dataset declares {task_count}"
        )
    raw_mask = rec.get("mask", [1] * task_count)
    if not isinstance(raw_mask, list) or len(raw_mask) != task_count:
        raise ParseError(f"line {lineno}: 'mask' must list one flag per target")
    targets = np.zeros(task_count, dtype=np.float64)
    mask = np.zeros(task_count, dtype=np.float64)
    for i, (t, m) in enumerate(zip(raw_targets, raw_mask)):
        if m not in (0, 1):
            raise ParseError(f"line {lineno}: mask entries must be 0 or 1")
        if t is None:
            continue  # missing label, mask stays 0
        if m == 0:
            continue
        targets[i] = float(t)
        mask[i] = 1.0
    try:
        cloud = PointCloud(numbers, coords, id=str(rec.get("id", f"line{lineno}")))
        return LabeledSample(cloud, targets, mask)
    except ValueError as exc:
        raise ParseError(f"line {lineno}: {exc}") from None


def parse_dataset(path) -> Dataset:
    """Parse a JSON-lines dataset.

    The first line must be a header object
    ``{"task_kind": "regression"|"binary-classification", "task_count": N}``;
    each following line is a sample
    ``{"id", "atoms": [{"symbol"|"Z", "x", "y", "z"}, ...], "targets", "mask"?}``.
    Sample order equals file order.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not records:
        raise DatasetError(f"{path}: empty dataset file (missing header record)")
    head_line, head = records[0]
    if "atoms" in head or "task_kind" not in head:
        raise DatasetError(f"line {head_line}: first record must be the dataset header")
    task_kind = head.get("task_kind")
    task_count = head.get("task_count")
    if task_kind not in TASK_KINDS:
        raise DatasetError(f"line {head_line}: unknown task_kind {task_kind!r}")
    if not isinstance(task_count, int) or task_count < 1:
        raise DatasetError(f"line {head_line}: task_count must be a positive integer")
    samples = [_sample_from_record(rec, lineno, task_count) for lineno, rec in records[1:]]
    return Dataset(samples, task_kind, task_count)


def serialize_dataset(dataset: Dataset, path) -> None:
    """Write a Dataset back to JSONL; parse(serialize(d)) reproduces d
    exactly (floats are emitted with full round-trip precision)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps({"task_kind": dataset.task_kind, "task_count": dataset.task_count}) + "\n"
        )
        for s in dataset.samples:
            atoms = [
                {
                    "Z": int(z),
                    "x": float(xyz[0]),
                    "y": float(xyz[1]),
                    "z": float(xyz[2]),
                }
                for z, xyz in zip(s.cloud.atom_numbers, s.cloud.coords)
            ]
            targets = [
                float(t) if m == 1.0 else None for t, m in zip(s.targets, s.mask)
            ]
            rec = {
                "id": s.cloud.id,
                "atoms": atoms,
                "targets": targets,
                "mask": [int(m) for m in s.mask],
            }
            fh.write(json.dumps(rec) + "\n")
