import itertools
from fractions import Fraction

import numpy as np
import pytest

from tcemu.oracle import (
    DenseMatrix,
    Layout,
    OverflowDetected,
    UndefinedRelativeError,
    matmul_ref,
    matmul_ref_arrays,
    relative_l2_error,
    relative_l2_error_batched,
)


def _single(m, n, i, j, v):
    x = np.zeros((m, n))
    x[i, j] = v
    return x


def test_single_product_probe():
    a = _single(16, 8, 0, 0, 1.5)
    b = _single(8, 8, 0, 0, 2.5)
    d = matmul_ref(a, b, np.zeros((16, 8))).elements
    assert d[0, 0] == 3.75
    assert np.count_nonzero(d) == 1


@pytest.mark.parametrize("precision", ["binary32", "binary64"])
def test_identity(precision):
    b = np.random.default_rng(0).standard_normal((8, 8)).astype(np.float32).astype(np.float64)
    d = matmul_ref(np.eye(8), b, np.zeros((8, 8)), precision).elements
    assert np.array_equal(d, b)


def test_all_ones():
    d = matmul_ref(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2))).elements
    assert np.array_equal(d, np.full((2, 2), 2.0))


def test_shape_mismatch():
    with pytest.raises(ValueError):
        matmul_ref(np.ones((2, 3)), np.ones((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        matmul_ref_arrays(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2)), precision="binary16")


def test_binary32_is_sequential_and_unfused():
    # ascending order: (2^24 + 1) rounds away, then -2^24 cancels to 0; C added last
    a = np.array([[2.0**24, 1.0, -(2.0**24)]])
    b = np.ones((3, 1))
    d = matmul_ref(a, b, np.array([[1.0]])).elements
    assert d[0, 0] == 1.0
    d64 = matmul_ref(a, b, np.array([[1.0]]), "binary64").elements
    assert d64[0, 0] == 2.0


def test_fused_flag_changes_product_rounding():
    x = 1.0 + 2.0**-12
    a = np.array([[-1.0, x]])
    b = np.array([[1.0 + 2.0**-11], [x]])
    # unfused: x*x rounds to 1 + 2^-11 (tie to even drops 2^-24) and cancels
    assert matmul_ref(a, b, np.zeros((1, 1))).elements[0, 0] == 0.0
    assert matmul_ref(a, b, np.zeros((1, 1)), fused=True).elements[0, 0] == 2.0**-24


def test_binary64_fused_matches_exact():
    rng = np.random.default_rng(8)
    a = rng.standard_normal((3, 5))
    b = rng.standard_normal((5, 2))
    c = rng.standard_normal((3, 2))
    d = matmul_ref(a, b, c, "binary64", fused=True).elements
    for i, j in itertools.product(range(3), range(2)):
        s = Fraction(0)
        for l in range(5):
            s = Fraction(float(s + Fraction(a[i, l]) * Fraction(b[l, j])))
        assert d[i, j] == float(s + Fraction(c[i, j]))


def test_binary64_equals_exact_rationals_on_short_significands():
    rng = np.random.default_rng(1)
    for _ in range(200):
        # 12-bit significands, k = 4: every product and partial sum fits in binary64
        a = rng.integers(-2048, 2048, (4, 4)) * np.exp2(rng.integers(-6, 6, (4, 4)))
        b = rng.integers(-2048, 2048, (4, 4)) * np.exp2(rng.integers(-6, 6, (4, 4)))
        c = rng.integers(-2048, 2048, (4, 4)) * 1.0
        d = matmul_ref(a, b, c, "binary64").elements
        for i, j in itertools.product(range(4), range(4)):
            exact = sum(Fraction(a[i, l]) * Fraction(b[l, j]) for l in range(4)) + Fraction(c[i, j])
            assert Fraction(d[i, j]) == exact


def test_batched_matches_single():
    rng = np.random.default_rng(2)
    a, b, c = rng.standard_normal((5, 4, 3)), rng.standard_normal((5, 3, 2)), rng.standard_normal((5, 4, 2))
    batched = matmul_ref_arrays(a, b, c)
    for t in range(5):
        assert np.array_equal(batched[t], matmul_ref(a[t], b[t], c[t]).elements)


def test_relative_error_examples():
    ref = np.ones((4, 3))
    assert relative_l2_error(ref, ref) == 0.0
    assert relative_l2_error(2 * ref, ref) == 0.5
    with pytest.raises(OverflowDetected) as info:
        relative_l2_error(np.array([[np.inf, 1.0]]), np.ones((1, 2)))
    assert info.value.code == "overflow-detected"
    with pytest.raises(UndefinedRelativeError) as info:
        relative_l2_error(np.zeros((2, 2)), ref[:2, :2])
    assert info.value.code == "undefined-relative-error"
    with pytest.raises(ValueError):
        relative_l2_error(ref, ref[:2])


def test_relative_error_uses_low_precision_denominator():
    assert relative_l2_error(np.array([[1.0]]), np.array([[2.0]])) == 1.0


def test_relative_error_permutation_invariant():
    rng = np.random.default_rng(4)
    low = rng.standard_normal((6, 5))
    ref = low + 1e-3 * rng.standard_normal((6, 5))
    perm = rng.permutation(30)
    p_low = low.ravel()[perm].reshape(6, 5)
    p_ref = ref.ravel()[perm].reshape(6, 5)
    assert relative_l2_error(p_low, p_ref) == pytest.approx(relative_l2_error(low, ref), rel=1e-15)


def test_relative_error_batched():
    low = np.stack([np.ones((2, 2)), np.zeros((2, 2)), np.full((2, 2), np.inf)])
    ref = np.ones((3, 2, 2))
    err, overflow = relative_l2_error_batched(low, ref)
    assert err[0] == 0.0 and np.isnan(err[1]) and np.isnan(err[2])
    assert list(overflow) == [False, False, True]


def test_dense_matrix_layouts():
    m = DenseMatrix(np.arange(6.0).reshape(2, 3), Layout.COL_MAJOR)
    assert m.shape == (2, 3)
    assert list(m.storage()) == [0, 3, 1, 4, 2, 5]
    back = DenseMatrix.from_storage(2, 3, m.storage(), Layout.COL_MAJOR)
    assert back.bitwise_equal(m)
    assert Layout.parse("col") is Layout.COL_MAJOR
    assert not DenseMatrix(np.array([[0.0]])).bitwise_equal(DenseMatrix(np.array([[-0.0]])))
