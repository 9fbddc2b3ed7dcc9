import numpy as np
import pytest

from tcemu.formats import FP16, FP32, round_to_format
from tcemu.mma_emu import M16N8K16, M16N8K32, NumericPipelineConfig, ShapeError, mma_emulate
from tcemu.oracle import DenseMatrix
from tcemu.sparse24 import (
    Sparse24Matrix,
    SparsityError,
    check_24,
    compress_24,
    decompress_24,
    is_valid_24,
    mma_sp_emulate,
    prune_24,
)


def _row(*vals):
    return np.array([vals], dtype=float)


def test_check_examples():
    assert check_24(_row(1, 0, 2, 0)) is None
    assert check_24(np.zeros((4, 8))) is None
    assert check_24(np.hstack([_row(1, 0, 0, 0), _row(1, 2, 3, 0)])) == (0, 1)
    with pytest.raises(ValueError):
        check_24(np.zeros((2, 6)))


def test_compress_examples():
    s = compress_24(_row(1, 0, 2, 0))
    assert list(s.values.elements[0]) == [1, 2]
    assert list(s.indices[0]) == [0, 2]
    assert s.packed_metadata() == [0b1000]
    z = compress_24(_row(0, 0, 0, 0))
    assert list(z.values.elements[0]) == [0, 0] and list(z.indices[0]) == [0, 1]
    one = compress_24(_row(0, 0, 0, 5))
    assert list(one.indices[0]) == [0, 3]


def test_compress_rejects_invalid():
    with pytest.raises(SparsityError) as info:
        compress_24(np.vstack([np.zeros((1, 8)), np.hstack([_row(0, 0, 0, 0), _row(1, 2, 3, 0)])]))
    assert (info.value.row, info.value.group) == (1, 1)


def test_prune_examples():
    assert list(prune_24(_row(4, -5, 1, 2)).elements[0]) == [4, -5, 0, 0]
    assert list(prune_24(_row(1, 1, 1, 1)).elements[0]) == [1, 1, 0, 0]


def test_prune_output_is_valid():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = rng.standard_normal((8, 16))
        a[rng.random(a.shape) < 0.2] = 0
        assert is_valid_24(prune_24(a))


def _random_valid(rng, m=16, k=16):
    a = prune_24(rng.standard_normal((m, k))).elements
    a[rng.random(a.shape) < 0.2] = 0.0
    return a


def test_round_trip_1000():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        a = _random_valid(rng)
        assert decompress_24(compress_24(a)).bitwise_equal(DenseMatrix(a))


def test_metadata_hex_round_trip():
    rng = np.random.default_rng(2)
    s = compress_24(_random_valid(rng, 4, 32))
    hexes = s.metadata_hex()
    assert all(len(h) == 8 for h in hexes)
    back = Sparse24Matrix.from_hex(s.values, hexes)
    assert np.array_equal(back.indices, s.indices)


@pytest.mark.parametrize("indices", [[[1, 1]], [[2, 0]], [[0, 4]]])
def test_malformed_metadata(indices):
    with pytest.raises(SparsityError):
        Sparse24Matrix(DenseMatrix(np.zeros((1, 2))), indices)


def test_metadata_extra_bits_rejected():
    with pytest.raises(SparsityError):
        Sparse24Matrix.from_packed(DenseMatrix(np.zeros((1, 2))), [0b100100])
    with pytest.raises(SparsityError):
        Sparse24Matrix.from_hex(DenseMatrix(np.zeros((1, 2))), ["zz"])


@pytest.mark.parametrize("shape", [M16N8K32, M16N8K16], ids=str)
def test_sparse_equals_dense_1000(shape):
    rng = np.random.default_rng(3)
    cfg = NumericPipelineConfig()
    for _ in range(500):
        a = round_to_format(_random_valid(rng, shape.m, shape.k), FP16)
        b = rng.standard_normal((shape.k, shape.n))
        c = rng.standard_normal((shape.m, shape.n))
        sparse = mma_sp_emulate(compress_24(a), b, c, shape, cfg)
        dense = mma_emulate(a, b, c, None, cfg)
        assert sparse.bitwise_equal(dense)


def test_all_zero_sparse_gives_c():
    c = np.random.default_rng(4).standard_normal((16, 8))
    s = compress_24(np.zeros((16, 32)))
    d = mma_sp_emulate(s, np.ones((32, 8)), c, M16N8K32, NumericPipelineConfig())
    assert np.array_equal(d.elements, round_to_format(c, FP32))


def test_single_nonzero_selects_b_row():
    a = np.zeros((16, 32))
    a[0, 6] = 1.5
    b = np.arange(32 * 8, dtype=float).reshape(32, 8) / 64
    c = np.zeros((16, 8))
    c[0, 0] = 0.25
    d = mma_sp_emulate(compress_24(a), b, c, M16N8K32, NumericPipelineConfig()).elements
    assert d[0, 0] == 1.5 * b[6, 0] + 0.25


def test_sparse_shape_checks():
    s = compress_24(np.zeros((16, 16)))
    with pytest.raises(ShapeError):
        mma_sp_emulate(s, np.zeros((16, 8)), np.zeros((16, 8)), M16N8K32, NumericPipelineConfig())
    with pytest.raises(ShapeError):
        mma_sp_emulate(s, np.zeros((32, 8)), np.zeros((16, 8)), None, NumericPipelineConfig())
