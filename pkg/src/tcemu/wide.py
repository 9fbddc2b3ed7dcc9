"""Exact summation of binary64 terms followed by a single rounding.

The fast path is a TwoSum cascade over the last axis. It keeps every
rounding error and verifies that the errors themselves were summed without
loss; elements where that guard fails (very wide exponent spreads) are
recomputed exactly with Python integers.
"""

from __future__ import annotations

import math

import numpy as np

from .formats import FloatFormat, RoundingMode, round_to_format


def two_sum(a, b):
    s = a + b
    bp = s - a
    ap = s - bp
    return s, (a - ap) + (b - bp)


def exact_sum(terms: np.ndarray):
    """Return ``(hi, lo, exact)`` with ``hi + lo`` the exact sum along the last axis.

    ``exact`` is False where the error terms could not be accumulated
    without loss; ``hi``/``lo`` are unreliable there.
    """
    # term-major copy keeps every slice contiguous
    cols = np.ascontiguousarray(np.moveaxis(np.asarray(terms, dtype=np.float64), -1, 0))
    s = cols[0]
    errs = []
    for j in range(1, cols.shape[0]):
        s, e = two_sum(s, cols[j])
        errs.append(e)
    exact = np.ones(s.shape, dtype=bool)
    if not errs:
        return s, np.zeros_like(s), exact
    lo = errs[0]
    for e in errs[1:]:
        lo, r = two_sum(lo, e)
        exact &= r == 0
    hi, lo = two_sum(s, lo)
    exact &= np.isfinite(hi) & np.isfinite(lo)
    return hi, lo, exact


def _round_scaled_int(num: int, exp: int, fmt: FloatFormat, mode: RoundingMode) -> float:
    """Round the exact value ``num * 2**exp`` to ``fmt``."""
    if num == 0:
        return 0.0
    neg = num < 0
    a = -num if neg else num
    binade = a.bit_length() - 1 + exp
    q_exp = max(binade, fmt.emin) - fmt.mantissa_bits
    shift = q_exp - exp
    if shift <= 0:
        n = a << -shift
    else:
        n, rem = divmod(a, 1 << shift)
        if mode is RoundingMode.NEAREST_EVEN:
            half = 1 << (shift - 1)
            if rem > half or (rem == half and n & 1):
                n += 1
    if n.bit_length() + q_exp > fmt.emax + 2:
        mag = math.inf  # far beyond the format; the overflow rule below applies
    else:
        mag = math.ldexp(float(n), q_exp)
    if mag > fmt.max_finite:
        if mode is RoundingMode.TOWARD_ZERO:
            mag = fmt.max_finite
        elif fmt.supports_inf_nan:
            mag = math.inf
        else:
            return math.nan
    if not fmt.supports_subnormals and mag < fmt.min_normal:
        mag = 0.0
    return -mag if neg else mag


def exact_sum_rounded_scalar(terms, fmt: FloatFormat, mode: RoundingMode) -> float:
    """Integer-arithmetic reference: round the exact sum of finite floats."""
    parts = []
    for t in terms:
        t = float(t)
        if t == 0.0:
            continue
        m, e = math.frexp(t)
        parts.append((int(m * (1 << 53)), e - 53))
    if not parts:
        return _zero_sum_sign(terms)
    lo = min(e for _, e in parts)
    total = sum(m << (e - lo) for m, e in parts)
    if total == 0:
        return 0.0
    return _round_scaled_int(total, lo, fmt, mode)


def _zero_sum_sign(terms) -> float:
    # an exact zero sum is -0 only when every addend is -0
    return -0.0 if all(math.copysign(1.0, float(t)) < 0 for t in terms) else 0.0


_BLOCK = 1 << 14


def round_exact_sum(terms, fmt: FloatFormat, mode: RoundingMode) -> np.ndarray:
    """Round the exact sum of ``terms`` along the last axis to ``fmt``, once."""
    terms = np.asarray(terms, dtype=np.float64)
    lead = terms.shape[:-1]
    flat = terms.reshape(-1, terms.shape[-1])
    out = np.empty(flat.shape[0])
    # cache-sized blocks: the TwoSum cascade is bandwidth bound
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, flat.shape[0], _BLOCK):
            block = flat[start : start + _BLOCK]
            out[start : start + _BLOCK] = _round_exact_block(block, fmt, mode)
    return out.reshape(lead)


def _round_exact_block(terms: np.ndarray, fmt: FloatFormat, mode: RoundingMode) -> np.ndarray:
    hi, lo, exact = exact_sum(terms)
    out = round_to_format(hi, fmt, mode, residual=lo)

    zero = exact & (hi == 0)
    if np.any(zero):
        all_neg_zero = np.all(np.signbit(terms) & (terms == 0), axis=-1)
        out = np.where(zero, np.where(all_neg_zero, -0.0, 0.0), out)

    nonfinite = ~np.isfinite(hi) | ~np.isfinite(lo)
    if np.any(nonfinite):
        nonfinite &= ~np.all(np.isfinite(terms), axis=-1)
    if np.any(nonfinite):
        naive = np.sum(terms, axis=-1)
        out = np.where(nonfinite, round_to_format(naive, fmt, mode), out)

    redo = ~exact & ~nonfinite
    if np.any(redo):
        out = np.array(out, copy=True)
        for i in np.nonzero(redo)[0]:
            out[i] = exact_sum_rounded_scalar(terms[i], fmt, mode)
    return out


def round_sequential(terms, step_fmt: FloatFormat, step_mode: RoundingMode) -> np.ndarray:
    """Sum along the last axis rounding to ``step_fmt`` after every addition."""
    cols = np.ascontiguousarray(np.moveaxis(np.asarray(terms, dtype=np.float64), -1, 0))
    s = round_to_format(cols[0], step_fmt, step_mode)
    for j in range(1, cols.shape[0]):
        hi, lo = two_sum(s, cols[j])
        with np.errstate(invalid="ignore"):
            lo = np.where(np.isfinite(hi), lo, 0.0)
        s = round_to_format(hi, step_fmt, step_mode, residual=lo)
    return s
