import numpy as np
import pytest

from tcemu.io import (
    FileFormatError,
    dumps_matrix,
    dumps_sparse,
    loads_matrix,
    loads_sparse,
    parse_key_values,
    read_matrix,
    write_csv,
    write_matrix,
)
from tcemu.oracle import DenseMatrix, Layout
from tcemu.sparse24 import compress_24, prune_24


def test_matrix_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    m = DenseMatrix(rng.standard_normal((3, 5)) * 1e-30)
    m.elements[0, 0] = -0.0
    m.elements[1, 1] = np.inf
    path = tmp_path / "m.csv"
    write_matrix(path, m)
    assert read_matrix(path).bitwise_equal(m)


def test_col_major_storage_order():
    m = DenseMatrix(np.arange(6.0).reshape(2, 3), Layout.COL_MAJOR)
    text = dumps_matrix(m)
    assert text.splitlines()[:3] == ["rows,cols,layout", "2,3,ColMajor", "0.0,3.0"]
    back = loads_matrix(text)
    assert back.layout is Layout.COL_MAJOR and back.bitwise_equal(m)


@pytest.mark.parametrize("text", [
    "",
    "a,b,c\n1,1,RowMajor\n1\n",
    "rows,cols,layout\n2,2\n1,2\n3,4\n",
    "rows,cols,layout\n2,2,Diagonal\n1,2\n3,4\n",
    "rows,cols,layout\n2,2,RowMajor\n1,2\n3\n",
    "rows,cols,layout\n1,2,RowMajor\n1,x\n",
    "rows,cols,layout\n-1,2,RowMajor\n",
])
def test_malformed_matrix(text):
    with pytest.raises(FileFormatError):
        loads_matrix(text)


def test_sparse_file_round_trip():
    a = prune_24(np.random.default_rng(1).standard_normal((4, 16)))
    s = compress_24(a)
    text = dumps_sparse(s)
    assert "metadata" in text.splitlines()
    back = loads_sparse(text)
    assert back.values.bitwise_equal(s.values) and np.array_equal(back.indices, s.indices)


@pytest.mark.parametrize("mutate", [
    lambda t: t.replace("metadata\n", ""),
    lambda t: t.rsplit("\n", 2)[0] + "\n",
    lambda t: t.rstrip("\n")[:-1] + "g\n",
])
def test_malformed_sparse(mutate):
    s = compress_24(prune_24(np.random.default_rng(2).standard_normal((2, 8))))
    with pytest.raises(ValueError):
        loads_sparse(mutate(dumps_sparse(s)))


def test_key_values():
    assert parse_key_values("a = 1\n# x\n\nb=two # trailing\n") == {"a": "1", "b": "two"}
    for bad in ("a\n", " = 1\n", "a = 1\na = 2\n"):
        with pytest.raises(FileFormatError):
            parse_key_values(bad)


def test_write_csv(tmp_path):
    text = write_csv(None, ("x", "y"), [(1, "a"), (2, "b")])
    assert text == "x,y\n1,a\n2,b\n"
    path = tmp_path / "t.csv"
    assert write_csv(path, ("x",), [(1,)]) == path.read_text()
