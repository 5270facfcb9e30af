"""Matrix file format and manifest validation."""

import json
import struct

import numpy as np
import pytest

from voxelenc.errors import ManifestError, MatrixFormatError, ValidationError
from voxelenc.matio import (
    HEADER_SIZE,
    read_manifest,
    read_matrix,
    read_matrix_header,
    write_matrix,
)


def test_header_is_28_bytes():
    assert HEADER_SIZE == 28


def test_exact_bytes_of_minimal_file(tmp_path):
    # independent layout oracle: magic, u32 version, u8 dtype, 3 pad,
    # u64 rows, u64 cols, then row-major little-endian payload
    p = tmp_path / "one.vemf"
    write_matrix(np.array([[1.0]]), p)
    raw = p.read_bytes()
    assert len(raw) == 36
    assert raw == struct.pack("<4sIB3xQQ", b"VEMF", 1, 1, 1, 1) + struct.pack("<d", 1.0)


def test_exact_bytes_float32(tmp_path):
    p = tmp_path / "f32.vemf"
    m = np.arange(6, dtype=np.float32).reshape(2, 3)
    write_matrix(m, p)
    raw = p.read_bytes()
    assert len(raw) == 28 + 24
    assert raw[:28] == struct.pack("<4sIB3xQQ", b"VEMF", 1, 0, 2, 3)
    assert raw[28:] == m.tobytes()


def test_round_trip_both_dtypes(tmp_path):
    for dtype in (np.float32, np.float64):
        m = np.asarray(np.arange(12).reshape(3, 4) * 0.5, dtype=dtype)
        p = tmp_path / f"m_{np.dtype(dtype).name}.vemf"
        write_matrix(m, p)
        back = read_matrix(p)
        assert back.dtype == m.dtype
        assert back.tobytes() == m.tobytes()


def test_header_read_without_payload_scan(tmp_path):
    p = tmp_path / "m.vemf"
    write_matrix(np.zeros((5, 7), dtype=np.float32), p)
    assert read_matrix_header(p) == (5, 7, "float32")


def test_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.vemf"
    write_matrix(np.zeros((1, 1)), p)
    raw = bytearray(p.read_bytes())
    raw[:4] = b"XXXX"
    p.write_bytes(bytes(raw))
    with pytest.raises(MatrixFormatError):
        read_matrix(p)


def test_rejects_unknown_version_and_dtype(tmp_path):
    p = tmp_path / "bad.vemf"
    write_matrix(np.zeros((1, 1)), p)
    raw = bytearray(p.read_bytes())
    raw[4:8] = struct.pack("<I", 9)
    p.write_bytes(bytes(raw))
    with pytest.raises(MatrixFormatError, match="version"):
        read_matrix(p)
    raw[4:8] = struct.pack("<I", 1)
    raw[8] = 7
    p.write_bytes(bytes(raw))
    with pytest.raises(MatrixFormatError, match="dtype"):
        read_matrix(p)


def test_rejects_truncated_and_trailing(tmp_path):
    p = tmp_path / "bad.vemf"
    write_matrix(np.zeros((2, 2)), p)
    raw = p.read_bytes()
    p.write_bytes(raw[:-1])
    with pytest.raises(MatrixFormatError, match="truncated"):
        read_matrix(p)
    p.write_bytes(raw + b"\x00")
    with pytest.raises(MatrixFormatError, match="trailing"):
        read_matrix(p)


def test_rejects_zero_dims(tmp_path):
    with pytest.raises(ValidationError):
        write_matrix(np.zeros((0, 3)), tmp_path / "z.vemf")
    p = tmp_path / "zz.vemf"
    p.write_bytes(struct.pack("<4sIB3xQQ", b"VEMF", 1, 1, 0, 3))
    with pytest.raises(MatrixFormatError):
        read_matrix_header(p)


def test_nonfinite_strict_and_permissive(tmp_path):
    p = tmp_path / "nan.vemf"
    m = np.array([[1.0, np.nan], [np.inf, 4.0]])
    with pytest.raises(ValidationError):
        write_matrix(m, p)
    write_matrix(m, p, strict=False)
    with pytest.raises(MatrixFormatError):
        read_matrix(p)
    got = read_matrix(p, permissive=True)
    assert got.tolist() == [[1.0, 0.0], [0.0, 4.0]]


def test_csv_matrix(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1.5,2\n3,4.25\n")
    got = read_matrix(p)
    assert got.tolist() == [[1.5, 2.0], [3.0, 4.25]]
    assert read_matrix_header(p) == (2, 2, "float64")


def test_csv_ragged_rows_error(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(MatrixFormatError, match="ragged"):
        read_matrix(p)


def test_int_input_upcast(tmp_path):
    p = tmp_path / "i.vemf"
    write_matrix(np.array([[1, 2], [3, 4]]), p)
    got = read_matrix(p)
    assert got.dtype == np.float64
    assert got.tolist() == [[1.0, 2.0], [3.0, 4.0]]


# ------------------------------------------------------------- manifests


def _write_manifest(tmp_path, mutate=None):
    write_matrix(np.arange(40, dtype=np.float64).reshape(10, 4), tmp_path / "resp.vemf")
    write_matrix(np.arange(30, dtype=np.float64).reshape(10, 3), tmp_path / "x1.vemf")
    write_matrix(np.arange(30, dtype=np.float64).reshape(10, 3) * 2, tmp_path / "x2.vemf")
    (tmp_path / "idx.json").write_text(json.dumps([0, 2, 4, 6]))
    (tmp_path / "groups.json").write_text(json.dumps([f"g{i // 2}" for i in range(10)]))
    doc = {
        "subjects": [
            {
                "name": "s1",
                "n_stimuli": 10,
                "response_path": "resp.vemf",
                "rois": [
                    {"name": "a", "start": 0, "count": 2},
                    {"name": "b", "start": 2, "count": 2},
                ],
                "features": [
                    {"model": "m", "layer": "L1", "path": "x1.vemf", "param_count": 120},
                    {"model": "m", "layer": "L2", "path": "x2.vemf"},
                ],
                "sub_datasets": [
                    {"name": "even", "indices_path": "idx.json"},
                    {"name": "tail", "start": 7, "count": 3},
                ],
                "groups_path": "groups.json",
            }
        ]
    }
    if mutate:
        mutate(doc)
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps(doc))
    return p


def test_manifest_happy_path(tmp_path):
    man = read_manifest(_write_manifest(tmp_path))
    s = man.subject("s1")
    assert s.n_stimuli == 10
    assert s.n_voxels == 4
    assert [r.name for r in s.rois] == ["a", "b"]
    assert s.roi("b").stop == 4
    assert s.sub_dataset("even").indices.tolist() == [0, 2, 4, 6]
    assert s.sub_dataset("tail").indices.tolist() == [7, 8, 9]
    assert s.feature("m", "L2").path.name == "x2.vemf"
    assert s.feature(None, "L1").param_count == 120
    assert s.groups[:4] == ["g0", "g0", "g1", "g1"]
    assert "s1" in man.summary()


def test_manifest_ambiguous_feature(tmp_path):
    man = read_manifest(_write_manifest(tmp_path))
    with pytest.raises(ValidationError, match="specify layer"):
        man.subject("s1").feature("m", None)


@pytest.mark.parametrize(
    "mutate, msg",
    [
        (lambda d: d["subjects"].clear(), "subject"),
        (lambda d: d["subjects"][0].update(n_stimuli=9), "rows"),
        (lambda d: d["subjects"][0]["rois"].clear(), "ROI"),
        (lambda d: d["subjects"][0]["rois"][1].update(start=1), "overlap"),
        (lambda d: d["subjects"][0]["rois"][1].update(count=3), "exceeds"),
        (lambda d: d["subjects"][0]["rois"][1].update(name="a"), "duplicate"),
        (lambda d: d["subjects"][0]["features"][1].update(layer="L1"), "duplicate"),
        (lambda d: d["subjects"][0]["sub_datasets"][1].update(start=9), "out of range"),
        (lambda d: d["subjects"][0]["sub_datasets"][1].update(name="even"), "duplicate"),
        (lambda d: d["subjects"][0]["features"][0].update(path="nope.vemf"), "missing"),
    ],
)
def test_manifest_validation_errors(tmp_path, mutate, msg):
    path = _write_manifest(tmp_path, mutate)
    with pytest.raises(ManifestError, match=msg):
        read_manifest(path)


def test_manifest_groups_length_checked(tmp_path):
    def mutate(d):
        pass

    path = _write_manifest(tmp_path, mutate)
    (tmp_path / "groups.json").write_text(json.dumps(["g0"] * 9))
    with pytest.raises(ManifestError, match="group"):
        read_manifest(path)


def test_manifest_duplicate_subject_names(tmp_path):
    def mutate(d):
        d["subjects"].append(dict(d["subjects"][0]))

    path = _write_manifest(tmp_path, mutate)
    with pytest.raises(ManifestError, match="duplicate"):
        read_manifest(path)
