import numpy as np
import pytest

from lltn.checkpoint import CheckpointError, export_tensors, import_tensors, validate_tensors


def _tensors(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "a.weight": rng.normal(size=(4, 7)).astype(np.float32),
        "a.bias": rng.normal(size=(7,)).astype(np.float32),
        "scalar": np.float32(3.25).reshape(()),
        "deep.block.0.conv": rng.normal(size=(2, 3, 5)).astype(np.float32),
    }


def test_round_trip_bitwise(tmp_path):
    tensors = _tensors()
    path = tmp_path / "model.lltn"
    export_tensors(path, tensors)
    back = import_tensors(path)
    assert set(back) == set(tensors)
    for name in tensors:
        assert back[name].dtype == np.float32
        assert back[name].shape == tensors[name].shape
        assert back[name].tobytes() == np.ascontiguousarray(tensors[name]).tobytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.lltn"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        import_tensors(path)


def test_truncated_rejected(tmp_path):
    path = tmp_path / "model.lltn"
    export_tensors(path, _tensors())
    blob = path.read_bytes()
    for cut in (6, len(blob) // 3, len(blob) - 5):
        trunc = tmp_path / f"trunc{cut}.lltn"
        trunc.write_bytes(blob[:cut])
        with pytest.raises(CheckpointError):
            import_tensors(trunc)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "model.lltn"
    export_tensors(path, _tensors())
    path.write_bytes(path.read_bytes() + b"garbage")
    with pytest.raises(CheckpointError, match="trailing"):
        import_tensors(path)


def test_validate_unknown_name_named():
    tensors = _tensors()
    expected = {k: v.shape for k, v in tensors.items() if k != "scalar"}
    with pytest.raises(CheckpointError, match="'scalar'"):
        validate_tensors(tensors, expected)


def test_validate_missing_and_shape():
    tensors = _tensors()
    expected = {k: v.shape for k, v in tensors.items()}
    expected["extra.tensor"] = (2, 2)
    with pytest.raises(CheckpointError, match="'extra.tensor'"):
        validate_tensors(tensors, expected)
    expected.pop("extra.tensor")
    expected["a.bias"] = (8,)
    with pytest.raises(CheckpointError, match="'a.bias'"):
        validate_tensors(tensors, expected)


def test_fuzzed_archives_raise_cleanly(tmp_path):
    rng = np.random.default_rng(11)
    path = tmp_path / "model.lltn"
    export_tensors(path, _tensors())
    blob = bytearray(path.read_bytes())
    for trial in range(50):
        corrupted = bytearray(blob)
        n_flips = int(rng.integers(1, 6))
        for _ in range(n_flips):
            pos = int(rng.integers(4, len(corrupted)))
            corrupted[pos] = int(rng.integers(0, 256))
        target = tmp_path / f"fuzz{trial}.lltn"
        target.write_bytes(bytes(corrupted))
        try:
            back = import_tensors(target)
            for arr in back.values():  # if it parses, data must be well-formed
                assert arr.dtype == np.float32
        except CheckpointError:
            pass
