import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specrecon.errors import DataError
from specrecon.matrixio import read_matrix, write_matrix


@pytest.mark.parametrize("ext", [".csv", ".f64"])
def test_round_trip_is_bit_exact(tmp_path, ext):
    rng = np.random.default_rng(0)
    mat = rng.normal(size=(7, 5)) * np.logspace(-200, 200, 5)
    path = tmp_path / f"m{ext}"
    write_matrix(path, mat)
    back = read_matrix(path)
    assert back.shape == mat.shape
    assert np.array_equal(back, mat)  # exact, not approximate


@pytest.mark.parametrize("ext", [".csv", ".f64"])
def test_awkward_values_round_trip(tmp_path, ext):
    mat = np.array([[0.1, -0.0, 1e-300], [np.pi, 2**-1074, 1.7976931348623157e308]])
    path = tmp_path / f"m{ext}"
    write_matrix(path, mat)
    assert np.array_equal(read_matrix(path), mat)


@settings(max_examples=30, deadline=None)
@given(
    rows=st.integers(1, 6),
    cols=st.integers(1, 6),
    seed=st.integers(0, 2**31),
    ext=st.sampled_from([".csv", ".f64"]),
)
def test_round_trip_property(tmp_path_factory, rows, cols, seed, ext):
    mat = np.random.default_rng(seed).normal(size=(rows, cols))
    path = tmp_path_factory.mktemp("mats") / f"m{ext}"
    write_matrix(path, mat)
    assert np.array_equal(read_matrix(path), mat)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="does not exist"):
        read_matrix(tmp_path / "nope.csv")


def test_unsupported_extension(tmp_path):
    with pytest.raises(DataError, match="unsupported matrix extension"):
        write_matrix(tmp_path / "m.npy", np.ones((2, 2)))
    (tmp_path / "m.bin").write_bytes(b"")
    with pytest.raises(DataError, match="unsupported matrix extension"):
        read_matrix(tmp_path / "m.bin")


def test_csv_value_count_mismatch(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("2,3\n1.0,2.0,3.0\n4.0,5.0\n")
    with pytest.raises(DataError, match="promises 2x3"):
        read_matrix(path)


def test_f64_truncated(tmp_path):
    path = tmp_path / "m.f64"
    write_matrix(path, np.ones((2, 2)))
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(DataError, match="size mismatch|bytes"):
        read_matrix(path)


def test_non_2d_rejected(tmp_path):
    with pytest.raises(DataError, match="2-D"):
        write_matrix(tmp_path / "m.csv", np.ones(3))
