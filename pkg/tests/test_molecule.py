import json

import numpy as np
import pytest

from topomoe.errors import DatasetError, ParseError
from topomoe.molecule import (
    Dataset,
    LabeledSample,
    PointCloud,
    parse_dataset,
    parse_xyz,
    serialize_dataset,
)


class TestPointCloud:
    def test_minimal(self):
        c = PointCloud([1], [[0.0, 0.0, 0.0]])
        assert c.n_atoms == 1

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            PointCloud([1, 6], [[0, 0, 0], [np.nan, 0, 0]])

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError, match="share coordinates"):
            PointCloud([6, 6], [[0, 0, 0], [0, 0, 0]])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            PointCloud([1, 6, 8], [[0, 0, 0], [1, 0, 0]])


class TestParseXyz:
    def test_single_atom(self):
        c = parse_xyz("1\nmol\nH 0 0 0")
        assert c.n_atoms == 1
        assert list(c.atom_numbers) == [1]
        assert c.id == "mol"

    def test_two_carbons_distance(self):
        c = parse_xyz("2\nm\nC 0 0 0\nC 0 0 1.2")
        assert list(c.atom_numbers) == [6, 6]
        d = np.linalg.norm(c.coords[0] - c.coords[1])
        assert d == pytest.approx(1.2, abs=1e-12)

    def test_duplicate_coordinates(self):
        with pytest.raises(ParseError, match="line 4"):
            parse_xyz("2\nm\nC 0 0 0\nC 0 0 0")

    def test_count_mismatch(self):
        with pytest.raises(ParseError, match="declared 3"):
            parse_xyz("3\nm\nC 0 0 0\nC 0 0 1.2")

    def test_unknown_symbol(self):
        with pytest.raises(ParseError, match="Xx"):
            parse_xyz("1\nm\nXx 0 0 0")

    def test_nonfinite_coordinate(self):
        with pytest.raises(ParseError, match="line 3"):
            parse_xyz("1\nm\nC nan 0 0")

    def test_element_table_spans_h_to_rn(self):
        assert parse_xyz("1\nm\nRn 0 0 0").atom_numbers[0] == 86


def _write_jsonl(path, lines):
    path.write_text("\n".join(json.dumps(rec) for rec in lines) + "\n")


HEADER = {"task_kind": "regression", "task_count": 1}


def _sample(i, target=1.0):
    return {
        "id": f"mol{i}",
        "atoms": [
            {"symbol": "C", "x": 0.0, "y": 0.0, "z": 0.0},
            {"symbol": "O", "x": 1.2, "y": 0.0, "z": float(i) / 7.0},
        ],
        "targets": [target],
    }


class TestParseDataset:
    def test_two_samples(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_jsonl(path, [HEADER, _sample(0), _sample(1)])
        ds = parse_dataset(path)
        assert len(ds) == 2
        assert ds.task_count == 1
        assert [s.cloud.id for s in ds] == ["mol0", "mol1"]

    def test_header_only_is_empty_dataset(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_jsonl(path, [HEADER])
        assert len(parse_dataset(path)) == 0

    def test_empty_file_errors(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("")
        with pytest.raises(DatasetError, match="header"):
            parse_dataset(path)

    def test_task_count_mismatch(self, tmp_path):
        path = tmp_path / "d.jsonl"
        bad = _sample(0)
        bad["targets"] = [1.0, 2.0]
        _write_jsonl(path, [HEADER, bad])
        with pytest.raises(DatasetError, match="line 2"):
            parse_dataset(path)

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(json.dumps(HEADER) + "\n{not json\n")
        with pytest.raises(ParseError, match="line 2"):
            parse_dataset(path)

    def test_atomic_number_key(self, tmp_path):
        path = tmp_path / "d.jsonl"
        rec = _sample(0)
        rec["atoms"][0] = {"Z": 6, "x": 0.0, "y": 0.0, "z": 0.0}
        _write_jsonl(path, [HEADER, rec])
        assert parse_dataset(path).samples[0].cloud.atom_numbers[0] == 6

    def test_null_target_masks_out(self, tmp_path):
        path = tmp_path / "d.jsonl"
        head = {"task_kind": "binary-classification", "task_count": 2}
        rec = _sample(0)
        rec["targets"] = [1, None]
        _write_jsonl(path, [head, rec])
        s = parse_dataset(path).samples[0]
        assert list(s.mask) == [1.0, 0.0]

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        _write_jsonl(path, [HEADER, _sample(0), _sample(0)])
        with pytest.raises(DatasetError, match="duplicate"):
            parse_dataset(path)

    def test_regression_requires_full_mask(self, tmp_path):
        path = tmp_path / "d.jsonl"
        rec = _sample(0)
        rec["targets"] = [None]
        _write_jsonl(path, [HEADER, rec])
        with pytest.raises(DatasetError, match="masked"):
            parse_dataset(path)


class TestRoundTrip:
    def test_parse_serialize_identity(self, tmp_path, rng):
        samples = []
        for i in range(5):
            coords = rng.uniform(-3, 3, size=(4, 3))
            cloud = PointCloud(rng.choice([1, 6, 7, 8], size=4), coords, id=f"m{i}")
            samples.append(LabeledSample(cloud, [rng.normal()], [1.0]))
        ds = Dataset(samples, "regression", 1)
        p1 = tmp_path / "a.jsonl"
        p2 = tmp_path / "b.jsonl"
        serialize_dataset(ds, p1)
        again = parse_dataset(p1)
        serialize_dataset(again, p2)
        assert p1.read_text() == p2.read_text()
        for s1, s2 in zip(ds, again):
            assert np.array_equal(s1.cloud.coords, s2.cloud.coords)
            assert np.array_equal(s1.targets, s2.targets)
