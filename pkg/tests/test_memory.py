import numpy as np
import pytest

from engine.memory import LazyState, StateFormatError
from shared.validation import ValidationError


def test_gather_unwritten_rows():
    state = LazyState(5, 3)
    rows, initialized = state.gather("fea", [0, 4])
    assert rows.shape == (2, 3)
    assert not rows.any()
    assert not initialized.any()


def test_scatter_then_gather():
    state = LazyState(4, 2)
    state.scatter("grad", [2, 0], np.array([[1.0, 2.0], [3.0, 4.0]]), iteration=5)
    rows, initialized = state.gather("grad", [0, 1, 2])
    np.testing.assert_array_equal(rows, [[3.0, 4.0], [0.0, 0.0], [1.0, 2.0]])
    assert list(initialized) == [True, False, True]
    fea_rows, _ = state.gather("fea", [0])
    assert not fea_rows.any()


def test_gather_returns_copy():
    state = LazyState(2, 1)
    rows, _ = state.gather("fea", [0])
    rows[:] = 9.0
    assert state.m_fea[0, 0] == 0.0


def test_last_write_wins():
    state = LazyState(3, 1)
    state.scatter("fea", [1, 1], np.array([[1.0], [2.0]]))
    assert state.m_fea[1, 0] == 2.0


def test_store_bytes_is_two_n_c():
    assert LazyState(10, 4).store_bytes == 2 * 10 * 4 * 8
    assert LazyState(10, 4, dtype="float32").store_bytes == 2 * 10 * 4 * 4


def test_id_and_shape_errors():
    state = LazyState(3, 2)
    with pytest.raises(ValidationError):
        state.gather("fea", [3])
    with pytest.raises(ValidationError):
        state.scatter("fea", [0], np.ones((1, 3)))
    with pytest.raises(ValidationError):
        state.gather("hidden", [0])
    with pytest.raises(ValidationError):
        LazyState(0, 2)


def test_staleness():
    state = LazyState(3, 1)
    state.scatter("fea", [0], np.ones((1, 1)), iteration=2)
    state.scatter("fea", [1], np.ones((1, 1)), iteration=6)
    np.testing.assert_array_equal(state.staleness("fea", [0, 1, 2], now=7), [5, 1, -1])


def test_dump_and_load(tmp_path, rng):
    state = LazyState(6, 2)
    state.scatter("fea", [1, 3], rng.standard_normal((2, 2)))
    state.scatter("grad", [5], rng.standard_normal((1, 2)))
    path = tmp_path / "state.lzst"
    state.dump(path)

    loaded = LazyState.load(path)
    np.testing.assert_array_equal(loaded.m_fea, state.m_fea)
    np.testing.assert_array_equal(loaded.m_grad, state.m_grad)
    np.testing.assert_array_equal(loaded.fea_initialized, state.fea_initialized)
    np.testing.assert_array_equal(loaded.grad_initialized, state.grad_initialized)


def test_load_rejects_bad_files(tmp_path):
    state = LazyState(2, 2)
    path = tmp_path / "state.lzst"
    state.dump(path)
    blob = path.read_bytes()

    (tmp_path / "magic.lzst").write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(StateFormatError):
        LazyState.load(tmp_path / "magic.lzst")

    (tmp_path / "short.lzst").write_bytes(blob[:-3])
    with pytest.raises(StateFormatError):
        LazyState.load(tmp_path / "short.lzst")
