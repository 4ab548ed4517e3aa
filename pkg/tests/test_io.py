import json
import math

import numpy as np
import pytest

from blockcert.errors import DimensionMismatch
from blockcert.io import read_matrix, read_vector, to_json, write_matrix, write_vector


def test_matrix_roundtrip(tmp_path):
    A = np.random.default_rng(0).standard_normal((5, 6))
    write_matrix(tmp_path / "A.csv", A, 3)
    B, n = read_matrix(tmp_path / "A.csv")
    assert n == 3
    np.testing.assert_array_equal(A, B)
    assert json.loads((tmp_path / "A.json").read_text()) == {"m": 5, "n": 3, "p": 2}


def test_descriptor_mismatch(tmp_path):
    write_matrix(tmp_path / "A.csv", np.ones((2, 4)), 2)
    (tmp_path / "A.json").write_text('{"m": 2, "n": 3, "p": 2}')
    with pytest.raises(DimensionMismatch):
        read_matrix(tmp_path / "A.csv")


def test_missing_descriptor(tmp_path):
    np.savetxt(tmp_path / "B.csv", np.ones((2, 4)), delimiter=",")
    with pytest.raises(FileNotFoundError):
        read_matrix(tmp_path / "B.csv")
    A, n = read_matrix(tmp_path / "B.csv", n=2)
    assert A.shape == (2, 4) and n == 2


def test_vector_roundtrip(tmp_path):
    v = np.array([1.5, -2.0, 1e-300])
    write_vector(tmp_path / "v.csv", v)
    np.testing.assert_array_equal(read_vector(tmp_path / "v.csv"), v)


def test_json_special_values():
    out = json.loads(to_json({"a": math.inf, "b": math.nan, "c": np.int64(3), "d": np.arange(2)}))
    assert out == {"a": "inf", "b": None, "c": 3, "d": [0, 1]}
