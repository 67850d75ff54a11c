import json
import zipfile

import numpy as np
import pytest

from posevid import containers


def test_round_trip(tmp_path):
    path = tmp_path / "box.npz"
    arrays = {
        "a": np.arange(12, dtype=np.float64).reshape(3, 4),
        "b": np.array([1, 2, 3], dtype=np.int64),
    }
    containers.save_arrays(path, arrays, kind="test", meta={"note": "x"})
    loaded, meta = containers.load_arrays(path, kind="test")
    assert set(loaded) == {"a", "b"}
    assert np.array_equal(loaded["a"], arrays["a"])
    assert np.array_equal(loaded["b"], arrays["b"])
    assert meta["format_version"] == containers.FORMAT_VERSION
    assert meta["note"] == "x"


def test_kind_mismatch_rejected(tmp_path):
    path = tmp_path / "box.npz"
    containers.save_arrays(path, {"a": np.zeros(2)}, kind="alpha")
    with pytest.raises(ValueError, match="expected kind"):
        containers.load_arrays(path, kind="beta")


def test_empty_rejected(tmp_path):
    with pytest.raises(ValueError, match="at least one array"):
        containers.save_arrays(tmp_path / "box.npz", {}, kind="x")


def test_future_version_rejected(tmp_path):
    path = tmp_path / "box.npz"
    containers.save_arrays(path, {"a": np.zeros(2)}, kind="x")
    # rewrite the meta entry with a bumped version
    with zipfile.ZipFile(path) as zf:
        payload = {n: zf.read(n) for n in zf.namelist()}
    meta = json.loads(payload["__meta__.json"])
    meta["format_version"] = containers.FORMAT_VERSION + 1
    payload["__meta__.json"] = json.dumps(meta).encode()
    with zipfile.ZipFile(path, "w") as zf:
        for name, data in payload.items():
            zf.writestr(name, data)
    with pytest.raises(ValueError, match="unsupported format version"):
        containers.load_arrays(path)


def test_identical_content_identical_bytes(tmp_path):
    arrays = {"w": np.linspace(0, 1, 100).reshape(10, 10)}
    p1 = containers.save_arrays(tmp_path / "one.npz", arrays, kind="x")
    p2 = containers.save_arrays(tmp_path / "two.npz", arrays, kind="x")
    assert p1.read_bytes() == p2.read_bytes()


def test_readable_by_numpy(tmp_path):
    path = tmp_path / "box.npz"
    containers.save_arrays(path, {"a": np.ones(3)}, kind="x")
    with np.load(path) as data:
        assert np.array_equal(data["a"], np.ones(3))
