"""Regenerate the bundled 100-molecule sample dataset.

Synthetic point clouds (8-16 atoms, H/C/N/O, 6 A box) with a geometric
regression target: the number of atom pairs separated by 3-4 A. Output is
deterministic for a fixed seed.
"""

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "topomoe" / "data" / "sample100.jsonl"
SEED = 7
N_MOLECULES = 100
SYMBOLS = {1: "H", 6: "C", 7: "N", 8: "O"}


def make_cloud(rng, n, box=6.0):
    while True:
        coords = rng.uniform(0.0, box, size=(n, 3))
        diff = coords[:, None, :] - coords[None, :, :]
        d2 = (diff**2).sum(-1)
        np.fill_diagonal(d2, np.inf)
        if d2.min() > 1e-4:
            return coords


def pair_count_target(coords, lo=3.0, hi=4.0):
    diff = coords[:, None, :] - coords[None, :, :]
    d = np.sqrt((diff**2).sum(-1))
    iu, ju = np.triu_indices(len(coords), k=1)
    pd = d[iu, ju]
    return int(((pd > lo) & (pd <= hi)).sum())


def main():
    rng = np.random.default_rng(SEED)
    lines = [json.dumps({"task_kind": "regression", "task_count": 1})]
    for i in range(N_MOLECULES):
        n = int(rng.integers(8, 17))
        coords = make_cloud(rng, n)
        numbers = rng.choice([1, 6, 7, 8], size=n)
        atoms = [
            {
                "symbol": SYMBOLS[int(z)],
                "x": round(float(x), 6),
                "y": round(float(y), 6),
                "z": round(float(zc), 6),
            }
            for z, (x, y, zc) in zip(numbers, coords)
        ]
        target = pair_count_target(np.array([[a["x"], a["y"], a["z"]] for a in atoms]))
        lines.append(
            json.dumps(
                {"id": f"sample{i:03d}", "atoms": atoms, "targets": [float(target)]}
            )
        )
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {N_MOLECULES} molecules to {OUT}")


if __name__ == "__main__":
    main()
