import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shotline.autodiff import Tensor
from shotline.binio import FormatError
from shotline.checkpoint import load_checkpoint, save_checkpoint


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    params = {
        "layer.weights": Tensor(rng.normal(0, 1, (5, 3)).astype(np.float32), requires_grad=True),
        "layer.bias": rng.normal(0, 1, 3).astype(np.float32),
    }
    path = tmp_path / "model.stln"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert list(loaded) == ["layer.weights", "layer.bias"]
    assert np.array_equal(loaded["layer.weights"], params["layer.weights"].data)
    assert np.array_equal(loaded["layer.bias"], params["layer.bias"])


def test_two_saves_are_byte_identical(tmp_path):
    params = {"w": np.arange(6, dtype=np.float32).reshape(2, 3)}
    a, b = tmp_path / "a.stln", tmp_path / "b.stln"
    save_checkpoint(a, params)
    save_checkpoint(b, params)
    assert a.read_bytes() == b.read_bytes()


@given(st.lists(
    st.tuples(st.text(alphabet=st.characters(codec="utf-8", exclude_categories=("Cs",)),
                      min_size=1, max_size=20),
              st.lists(st.integers(1, 5), min_size=0, max_size=3)),
    min_size=0, max_size=6, unique_by=lambda pair: pair[0],
))
@settings(max_examples=40, deadline=None)
def test_round_trip_random_stores(tmp_path_factory, specs):
    rng = np.random.default_rng(abs(hash(tuple(name for name, _ in specs))) % 2**32)
    params = {name: rng.normal(0, 10, size=shape).astype(np.float32) for name, shape in specs}
    path = tmp_path_factory.mktemp("ckpt") / "p.stln"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert list(loaded) == list(params)
    for name in params:
        assert np.array_equal(loaded[name], params[name])
        assert loaded[name].shape == params[name].shape


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.stln"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FormatError, match="magic"):
        load_checkpoint(path)


def test_truncated_reports_offset(tmp_path):
    path = tmp_path / "model.stln"
    save_checkpoint(path, {"w": np.ones((4, 4), dtype=np.float32)})
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(FormatError, match="byte"):
        load_checkpoint(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "model.stln"
    save_checkpoint(path, {"w": np.ones(2, dtype=np.float32)})
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(FormatError, match="trailing"):
        load_checkpoint(path)
