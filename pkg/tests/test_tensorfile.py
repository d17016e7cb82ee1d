import struct

import numpy as np
import pytest

from gestureflow.errors import DataError
from gestureflow.tensorfile import read_tensors, write_tensors


def test_round_trip(tmp_path):
    path = tmp_path / "t.mgt"
    arrays = {
        "a": np.arange(12, dtype=np.float32).reshape(3, 4),
        "b/nested": np.linspace(-1, 1, 5, dtype=np.float64),
        "c": np.array([1, -2, 3], dtype=np.int64),
        "scalar": np.float64(3.5) * np.ones((), dtype=np.float64),
        "empty": np.zeros((0, 2), dtype=np.float32),
    }
    meta = {"step": 7, "configs": {"x": [1, 2]}, "name": "run"}
    write_tensors(path, arrays, meta)
    out, meta2 = read_tensors(path)
    assert meta2 == meta
    assert set(out) == set(arrays)
    for name in arrays:
        assert out[name].dtype == arrays[name].dtype
        np.testing.assert_array_equal(out[name], arrays[name])


def test_header_layout(tmp_path):
    path = tmp_path / "t.mgt"
    write_tensors(path, {"x": np.array([1.0, 2.0], dtype=np.float32)}, {})
    blob = path.read_bytes()
    assert blob[:4] == b"MGT1"
    assert struct.unpack_from("<I", blob, 4)[0] == 1
    name_len = struct.unpack_from("<H", blob, 8)[0]
    assert name_len == 1 and blob[10:11] == b"x"
    dtype_tag, rank = struct.unpack_from("<BB", blob, 11)
    assert dtype_tag == 0 and rank == 1
    assert struct.unpack_from("<Q", blob, 13)[0] == 2
    assert struct.unpack_from("<f", blob, 21)[0] == 1.0


def test_deterministic_bytes(tmp_path):
    a = {"x": np.ones(3, dtype=np.float64), "y": np.zeros(2, dtype=np.int64)}
    p1, p2 = tmp_path / "1.mgt", tmp_path / "2.mgt"
    write_tensors(p1, a, {"k": 1})
    write_tensors(p2, a, {"k": 1})
    assert p1.read_bytes() == p2.read_bytes()


def test_rejects_unsupported_dtype(tmp_path):
    with pytest.raises(ValueError, match="unsupported dtype"):
        write_tensors(tmp_path / "t.mgt", {"x": np.arange(3, dtype=np.int32)}, {})


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.mgt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(DataError, match="magic"):
        read_tensors(path)


def test_rejects_truncated(tmp_path):
    path = tmp_path / "t.mgt"
    write_tensors(path, {"x": np.ones(100, dtype=np.float64)}, {"k": 1})
    (tmp_path / "cut.mgt").write_bytes(path.read_bytes()[:40])
    with pytest.raises(DataError):
        read_tensors(tmp_path / "cut.mgt")
