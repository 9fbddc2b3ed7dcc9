"""Reference matrix multiply-accumulate and the relative L2 error metric.

The reference plays the role of a plain CPU GEMM in single precision:
products and sums are rounded in binary32, inner products are accumulated
in ascending ``k`` and ``C`` is added last.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .formats import FP32, NE, FloatFormat, round_to_format
from .wide import round_exact_sum, two_sum

_FP64 = FloatFormat("FP64", 11, 52, 64)


class Layout(enum.Enum):
    ROW_MAJOR = "RowMajor"
    COL_MAJOR = "ColMajor"

    @classmethod
    def parse(cls, text: str) -> "Layout":
        key = text.strip().lower().replace("_", "").replace("-", "")
        if key in ("rowmajor", "row", "r"):
            return cls.ROW_MAJOR
        if key in ("colmajor", "col", "c", "columnmajor"):
            return cls.COL_MAJOR
        raise ValueError(f"unknown layout {text!r}")

    def __str__(self) -> str:
        return self.value


@dataclass
class DenseMatrix:
    """A logical ``rows x cols`` matrix.

    ``elements`` is always indexed ``[row, col]``; ``layout`` only records
    how the operand is stored (and serialized), e.g. ``B`` of ``mma`` is
    column-major.
    """

    elements: np.ndarray
    layout: Layout = Layout.ROW_MAJOR

    def __post_init__(self) -> None:
        self.elements = np.array(self.elements, dtype=np.float64, copy=True)
        if self.elements.ndim != 2:
            raise ValueError(f"matrix must be 2-d, got shape {self.elements.shape}")

    @property
    def rows(self) -> int:
        return self.elements.shape[0]

    @property
    def cols(self) -> int:
        return self.elements.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.elements.shape

    @classmethod
    def zeros(cls, rows: int, cols: int, layout: Layout = Layout.ROW_MAJOR) -> "DenseMatrix":
        return cls(np.zeros((rows, cols)), layout)

    @classmethod
    def from_storage(cls, rows: int, cols: int, flat, layout: Layout = Layout.ROW_MAJOR) -> "DenseMatrix":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != rows * cols:
            raise ValueError(f"expected {rows * cols} elements, got {flat.size}")
        order = "C" if layout is Layout.ROW_MAJOR else "F"
        return cls(flat.reshape((rows, cols), order=order), layout)

    def storage(self) -> np.ndarray:
        """Elements in storage order for the declared layout."""
        order = "C" if self.layout is Layout.ROW_MAJOR else "F"
        return self.elements.ravel(order=order)

    def bitwise_equal(self, other: "DenseMatrix") -> bool:
        a, b = self.elements, other.elements
        return a.shape == b.shape and a.tobytes() == b.tobytes()


def _as_array(x) -> np.ndarray:
    if isinstance(x, DenseMatrix):
        return x.elements
    return np.asarray(x, dtype=np.float64)


class OverflowDetected(ArithmeticError):
    """A matrix handed to the error metric contains a non-finite entry."""

    code = "overflow-detected"


class UndefinedRelativeError(ArithmeticError):
    """The low-precision result is all zeros, so the relative error is undefined."""

    code = "undefined-relative-error"


def _fma32(a, b, s):
    # a*b is exact in binary64 for binary32 inputs; TwoSum keeps the addition
    # exact so the single rounding to binary32 is correct
    hi, lo = two_sum(a * b, s)
    with np.errstate(invalid="ignore"):
        lo = np.where(np.isfinite(hi), lo, 0.0)
    return round_to_format(hi, FP32, NE, residual=lo)


def matmul_ref_arrays(a, b, c, precision: str = "binary32", fused: bool = False) -> np.ndarray:
    """Batched ``a @ b + c`` over the trailing two axes.

    Returns float64 arrays; for ``binary32`` every value is a binary32 number.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    m, k = a.shape[-2:]
    k2, n = b.shape[-2:]
    if k != k2 or c.shape[-2:] != (m, n):
        raise ValueError(f"shape mismatch: A {a.shape[-2:]}, B {b.shape[-2:]}, C {c.shape[-2:]}")
    if precision not in ("binary32", "binary64"):
        raise ValueError(f"unknown precision {precision!r}")

    with np.errstate(over="ignore", invalid="ignore"):
        if precision == "binary64":
            return _matmul64(a, b, c, fused)

        a32 = a.astype(np.float32)
        b32 = b.astype(np.float32)
        c32 = c.astype(np.float32)
        s = None
        for l in range(k):
            if fused:
                av = a32[..., :, l, None].astype(np.float64)
                bv = b32[..., None, l, :].astype(np.float64)
                s = round_to_format(av * bv, FP32, NE) if s is None else _fma32(av, bv, s)
            else:
                p = a32[..., :, l, None] * b32[..., None, l, :]
                s = p if s is None else s + p
        if s is None:
            return c32.astype(np.float64)
        return (np.asarray(s, dtype=np.float32) + c32).astype(np.float64)


def _matmul64(a, b, c, fused):
    s = None
    for l in range(a.shape[-1]):
        av, bv = a[..., :, l, None], b[..., None, l, :]
        p = av * bv
        if s is None:
            s = p
        elif fused:
            # exact product error plus exact sum, rounded once
            terms = np.stack(np.broadcast_arrays(p, _two_prod_err(av, bv, p), s), axis=-1)
            s = round_exact_sum(terms, _FP64, NE)
        else:
            s = s + p
    return c + 0.0 if s is None else s + c


def _two_prod_err(a, b, p):
    # Dekker's exact product error via Veltkamp splitting
    def split(x):
        t = 134217729.0 * x
        hi = t - (t - x)
        return hi, x - hi

    ah, al = split(a)
    bh, bl = split(b)
    return ((ah * bh - p) + ah * bl + al * bh) + al * bl


def matmul_ref(A, B, C, precision: str = "binary32", fused: bool = False) -> DenseMatrix:
    """``D = A x B + C`` with every operation rounded in ``precision``.

    Unfused by default: each product and each addition is rounded
    separately. ``fused=True`` rounds ``a*b + s`` once per step instead.
    """
    a, b, c = _as_array(A), _as_array(B), _as_array(C)
    if a.ndim != 2 or b.ndim != 2 or c.ndim != 2:
        raise ValueError("matmul_ref expects 2-d operands")
    return DenseMatrix(matmul_ref_arrays(a, b, c, precision, fused))


def relative_l2_error(D_low, D_ref) -> float:
    """``||D_low - D_ref||_2 / ||D_low||_2`` (normalized by the low-precision result)."""
    low, ref = _as_array(D_low), _as_array(D_ref)
    if low.shape != ref.shape:
        raise ValueError(f"shape mismatch: {low.shape} vs {ref.shape}")
    if not (np.all(np.isfinite(low)) and np.all(np.isfinite(ref))):
        raise OverflowDetected("overflow-detected")
    num = math.sqrt(math.fsum((low - ref).ravel() ** 2))
    den = math.sqrt(math.fsum(low.ravel() ** 2))
    if den == 0.0:
        raise UndefinedRelativeError("undefined-relative-error")
    return num / den


def relative_l2_error_batched(low, ref) -> tuple[np.ndarray, np.ndarray]:
    """Per-matrix error over the trailing two axes.

    Returns ``(errors, overflow)``; errors are NaN where a matrix overflowed
    or where the denominator vanishes.
    """
    low = np.asarray(low, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if low.shape != ref.shape:
        raise ValueError(f"shape mismatch: {low.shape} vs {ref.shape}")
    axes = (-2, -1)
    overflow = ~(np.all(np.isfinite(low), axis=axes) & np.all(np.isfinite(ref), axis=axes))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        num = np.sqrt(np.sum((low - ref) ** 2, axis=axes))
        den = np.sqrt(np.sum(low**2, axis=axes))
        err = np.where(overflow | (den == 0), np.nan, num / den)
    return err, overflow
