import numpy as np
import pytest

from focuscode import checkpoint, icdclf, selftest
from focuscode.errors import ConfigError, ParseError


@pytest.fixture
def ckpt(tmp_path):
    path = tmp_path / "m.ckpt"
    checkpoint.write_checkpoint(path, "tagger", {"note": "x"},
                                {"a": np.arange(6, dtype=np.float64).reshape(2, 3), "b": np.ones(2)})
    return path


def test_round_trip(ckpt):
    meta, arrays = checkpoint.read_checkpoint(ckpt, expect_kind="tagger")
    assert meta["note"] == "x" and meta["kind"] == "tagger"
    assert arrays["a"].dtype == np.float32 and arrays["a"].tolist() == [[0, 1, 2], [3, 4, 5]]
    assert ckpt.read_bytes().startswith(checkpoint.MAGIC)


def test_wrong_kind(ckpt):
    with pytest.raises(ConfigError):
        checkpoint.read_checkpoint(ckpt, expect_kind="classifier")
    with pytest.raises(ConfigError):
        checkpoint.write_checkpoint(ckpt, "mystery", {}, {})


@pytest.mark.parametrize("damage", [
    lambda b: b"NOTACKPT" + b[8:],
    lambda b: b[:-3],
    lambda b: b + b"\x00\x00\x00\x00",
    lambda b: b[:16] + b"\xff" + b[17:],
])
def test_corrupt_files(ckpt, damage):
    ckpt.write_bytes(damage(ckpt.read_bytes()))
    with pytest.raises(ParseError):
        checkpoint.read_checkpoint(ckpt)


def test_selftest_catches_broken_backward(monkeypatch):
    real = icdclf.attend_backward

    def broken(dalpha, cache):
        dhs, dw, db = real(dalpha, cache)
        return dhs, 1.1 * dw, db

    monkeypatch.setattr(icdclf, "attend_backward", broken)
    results = {r.name: r for r in selftest.run_selftest(seeds=1)}
    assert not results["grad:classifier[supervised+r4v]"].ok
    assert not results["grad:classifier[vanilla]"].ok
    assert results["grad:classifier[pooling]"].ok
    assert results["grad:tagger"].ok
