"""Parameterized binary floating-point formats with bit-exact rounding.

Every format here embeds losslessly in binary64, so values are carried as
Python floats / float64 arrays and rounding is done by exact power-of-two
scaling followed by integer rounding of the scaled significand.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class RoundingMode(enum.Enum):
    NEAREST_EVEN = "NearestEven"
    TOWARD_ZERO = "TowardZero"

    @classmethod
    def parse(cls, text: str) -> "RoundingMode":
        key = text.strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "nearesteven": cls.NEAREST_EVEN,
            "rne": cls.NEAREST_EVEN,
            "rn": cls.NEAREST_EVEN,
            "towardzero": cls.TOWARD_ZERO,
            "rtz": cls.TOWARD_ZERO,
            "rz": cls.TOWARD_ZERO,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown rounding mode {text!r}") from None

    def __str__(self) -> str:
        return self.value


NE = RoundingMode.NEAREST_EVEN
RTZ = RoundingMode.TOWARD_ZERO


@dataclass(frozen=True)
class FloatFormat:
    """A sign/exponent/mantissa binary format.

    ``supports_inf_nan=False`` follows the OCP FP8 "fn" convention: the
    all-ones exponent is an ordinary binade, only the all-ones pattern is
    NaN, and there is no infinity (overflow under NearestEven gives NaN).
    """

    name: str
    exponent_bits: int
    mantissa_bits: int
    storage_bits: int
    supports_subnormals: bool = True
    supports_inf_nan: bool = True

    def __post_init__(self) -> None:
        if self.exponent_bits < 2 or self.mantissa_bits < 1:
            raise ValueError(f"{self.name}: degenerate field widths")
        if self.value_bits > self.storage_bits:
            raise ValueError(
                f"{self.name}: 1+{self.exponent_bits}+{self.mantissa_bits} bits "
                f"do not fit in {self.storage_bits}-bit storage"
            )
        if self.mantissa_bits > 52 or self.exponent_bits > 11:
            raise ValueError(f"{self.name}: does not embed in binary64")

    @property
    def value_bits(self) -> int:
        return 1 + self.exponent_bits + self.mantissa_bits

    @property
    def pad_bits(self) -> int:
        # unused low-order storage bits (TF32 keeps 13 zero bits)
        return self.storage_bits - self.value_bits

    @property
    def bias(self) -> int:
        return (1 << (self.exponent_bits - 1)) - 1

    @property
    def emin(self) -> int:
        return 1 - self.bias

    @property
    def emax(self) -> int:
        top = (1 << self.exponent_bits) - 1
        return (top - 1 if self.supports_inf_nan else top) - self.bias

    @property
    def precision(self) -> int:
        return self.mantissa_bits + 1

    @property
    def max_finite(self) -> float:
        m = self.mantissa_bits
        if self.supports_inf_nan:
            frac = 2.0 - 2.0 ** -m
        else:
            frac = 2.0 - 2.0 ** -(m - 1)
        return math.ldexp(frac, self.emax)

    @property
    def min_normal(self) -> float:
        return math.ldexp(1.0, self.emin)

    @property
    def min_subnormal(self) -> float:
        return math.ldexp(1.0, self.emin - self.mantissa_bits)

    @property
    def canonical_nan_bits(self) -> int:
        exp_all = (1 << self.exponent_bits) - 1
        if self.supports_inf_nan:
            fields = (exp_all << self.mantissa_bits) | (1 << (self.mantissa_bits - 1))
        else:
            fields = (exp_all << self.mantissa_bits) | ((1 << self.mantissa_bits) - 1)
        return fields << self.pad_bits

    def __str__(self) -> str:
        return self.name


FP32 = FloatFormat("FP32", 8, 23, 32)
TF32 = FloatFormat("TF32", 8, 10, 32)
FP16 = FloatFormat("FP16", 5, 10, 16)
BF16 = FloatFormat("BF16", 8, 7, 16)
FP8_E4M3 = FloatFormat("FP8-E4M3", 4, 3, 8, supports_inf_nan=False)
FP8_E5M2 = FloatFormat("FP8-E5M2", 5, 2, 8)

FORMATS: dict[str, FloatFormat] = {
    f.name: f for f in (FP32, TF32, FP16, BF16, FP8_E4M3, FP8_E5M2)
}

_ALIASES = {
    "fp32": "FP32",
    "f32": "FP32",
    "float": "FP32",
    "tf32": "TF32",
    "fp16": "FP16",
    "f16": "FP16",
    "half": "FP16",
    "bf16": "BF16",
    "bfloat16": "BF16",
    "fp8-e4m3": "FP8-E4M3",
    "fp8e4m3": "FP8-E4M3",
    "e4m3": "FP8-E4M3",
    "fp8-e5m2": "FP8-E5M2",
    "fp8e5m2": "FP8-E5M2",
    "e5m2": "FP8-E5M2",
}


def get_format(name: str | FloatFormat) -> FloatFormat:
    if isinstance(name, FloatFormat):
        return name
    key = name.strip().lower().replace("_", "-")
    try:
        return FORMATS[_ALIASES[key]]
    except KeyError:
        raise ValueError(f"unknown float format {name!r}") from None


def formats_csv(formats: Iterable[FloatFormat] | None = None) -> str:
    """Export the registry as ``name,exponent_bits,mantissa_bits,storage_bits``."""
    lines = ["name,exponent_bits,mantissa_bits,storage_bits"]
    for f in formats if formats is not None else FORMATS.values():
        lines.append(f"{f.name},{f.exponent_bits},{f.mantissa_bits},{f.storage_bits}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# rounding


def round_to_format(
    x,
    fmt: FloatFormat,
    mode: RoundingMode = NE,
    residual=None,
) -> np.ndarray:
    """Round ``x`` (or the exact sum ``x + residual``) to ``fmt``.

    ``residual``, when given, must satisfy ``x == fl64(x + residual)``, i.e.
    the pair is a normalized double-double such as produced by TwoSum. The
    result is then the single correct rounding of the exact pair sum.
    Returns float64 values that are exactly representable in ``fmt``.
    """
    x = np.asarray(x, dtype=np.float64)
    shape = x.shape
    if residual is not None:
        residual = np.broadcast_to(np.asarray(residual, dtype=np.float64), shape).reshape(-1)
    x = x.reshape(-1)
    out = np.array(x, dtype=np.float64, copy=True)
    sel = np.isfinite(x) & (x != 0)
    if np.any(sel):
        xs = x[sel]
        _, e = np.frexp(xs)
        q_exp = np.maximum(e - 1, fmt.emin) - fmt.mantissa_bits
        n = np.ldexp(xs, -q_exp)
        t = np.trunc(n)
        frac = n - t
        sgn = np.sign(n)
        if residual is not None:
            lsgn = np.sign(residual[sel])
        else:
            lsgn = np.zeros_like(n)
        if mode is RoundingMode.NEAREST_EVEN:
            r = np.rint(n)
            tie = (np.abs(frac) == 0.5) & (lsgn != 0)
            r = np.where(tie, np.where(lsgn == sgn, t + sgn, t), r)
        else:
            r = t
            below = (frac == 0) & (lsgn != 0) & (lsgn != sgn)
            # stepping down from the first value of a binade lands on the
            # finer grid of the binade below
            at_binade_start = (np.abs(t) == 2.0 ** fmt.mantissa_bits) & (e - 1 > fmt.emin)
            step = np.where(at_binade_start, 0.5, 1.0)
            r = np.where(below, t - sgn * step, r)
        out[sel] = np.ldexp(r, q_exp)
    return _finish(out, x, fmt, mode).reshape(shape)


def _finish(out: np.ndarray, x: np.ndarray, fmt: FloatFormat, mode: RoundingMode) -> np.ndarray:
    big = np.abs(out) > fmt.max_finite
    if np.any(big):
        overflow = big & np.isfinite(x)
        if mode is RoundingMode.TOWARD_ZERO:
            out[overflow] = np.copysign(fmt.max_finite, out[overflow])
        elif fmt.supports_inf_nan:
            out[overflow] = np.copysign(np.inf, out[overflow])
        else:
            out[overflow] = np.nan
        if not fmt.supports_inf_nan:
            out[np.isinf(x)] = np.nan
    if not fmt.supports_subnormals:
        tiny = (np.abs(out) < fmt.min_normal) & (out != 0)
        out[tiny] = np.copysign(0.0, out[tiny])
    return out


def round_scalar(x: float, fmt: FloatFormat, mode: RoundingMode = NE) -> float:
    return float(round_to_format(np.float64(x), fmt, mode))


def ulp(x: float, fmt: FloatFormat) -> float:
    """Spacing of ``fmt`` values in the binade containing ``x``."""
    if x == 0 or not math.isfinite(x):
        raise ValueError("ulp is undefined for zero and non-finite values")
    _, e = math.frexp(abs(x))
    return math.ldexp(1.0, max(e - 1, fmt.emin) - fmt.mantissa_bits)


# ---------------------------------------------------------------------------
# encode / decode


def encode_array(values, fmt: FloatFormat) -> np.ndarray:
    """Encode representable values into storage bit patterns (uint64 array).

    Values must already be representable in ``fmt``; use ``round_to_format``
    first. NaNs encode to the canonical quiet NaN.
    """
    v = np.asarray(values, dtype=np.float64)
    shape = v.shape
    v = v.reshape(-1)
    if not np.array_equal(round_to_format(v, fmt), v, equal_nan=True):
        raise ValueError(f"values not representable in {fmt.name}")
    m, eb = fmt.mantissa_bits, fmt.exponent_bits
    sign = np.signbit(v).astype(np.uint64)
    a = np.abs(v)
    exp_field = np.zeros(v.shape, dtype=np.uint64)
    man_field = np.zeros(v.shape, dtype=np.uint64)

    fin = np.isfinite(a) & (a != 0)
    if np.any(fin):
        af = a[fin]
        _, e = np.frexp(af)
        e = e - 1
        normal = e >= fmt.emin
        ef = np.where(normal, e + fmt.bias, 0)
        mf = np.where(
            normal,
            np.ldexp(af, m - e) - 2.0 ** m,
            np.ldexp(af, m - fmt.emin),
        )
        exp_field[fin] = ef.astype(np.uint64)
        man_field[fin] = mf.astype(np.uint64)

    inf = np.isinf(a)
    exp_field[inf] = (1 << eb) - 1
    fields = (sign << np.uint64(eb + m)) | (exp_field << np.uint64(m)) | man_field
    bits = fields << np.uint64(fmt.pad_bits)
    bits[np.isnan(v)] = fmt.canonical_nan_bits
    return bits.reshape(shape)


def decode_array(bits, fmt: FloatFormat) -> np.ndarray:
    """Decode storage bit patterns (any integer array) into float64 values."""
    b = np.asarray(bits, dtype=np.uint64) >> np.uint64(fmt.pad_bits)
    m, eb = fmt.mantissa_bits, fmt.exponent_bits
    man = (b & np.uint64((1 << m) - 1)).astype(np.float64)
    ef = ((b >> np.uint64(m)) & np.uint64((1 << eb) - 1)).astype(np.int64)
    neg = ((b >> np.uint64(eb + m)) & np.uint64(1)).astype(bool)
    exp_all = (1 << eb) - 1

    mag = np.where(
        ef == 0,
        np.ldexp(man, fmt.emin - m),
        np.ldexp(man + 2.0 ** m, ef - fmt.bias - m),
    )
    if fmt.supports_inf_nan:
        top = ef == exp_all
        mag = np.where(top & (man == 0), np.inf, mag)
        mag = np.where(top & (man != 0), np.nan, mag)
    else:
        mag = np.where((ef == exp_all) & (man == (1 << m) - 1), np.nan, mag)
    if not fmt.supports_subnormals:
        mag = np.where(ef == 0, 0.0, mag)
    return np.where(neg, -mag, mag)


@dataclass(frozen=True)
class QuantizedValue:
    bits: int
    format: FloatFormat

    def __post_init__(self) -> None:
        if not 0 <= self.bits < (1 << self.format.storage_bits):
            raise ValueError(f"bits out of range for {self.format.name}")
        if self.bits & ((1 << self.format.pad_bits) - 1):
            raise ValueError(f"{self.format.name}: unused low-order bits must be zero")

    @property
    def value(self) -> float:
        return decode(self)

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        width = (self.format.storage_bits + 3) // 4
        return f"QuantizedValue({self.format.name}, 0x{self.bits:0{width}x} = {self.value!r})"


def quantize(x: float, fmt: FloatFormat, mode: RoundingMode = NE) -> QuantizedValue:
    """Round a binary64 value to ``fmt`` and return its encoding."""
    r = round_to_format(np.float64(x), fmt, mode)
    return QuantizedValue(int(encode_array(r, fmt)), fmt)


def decode(v: QuantizedValue) -> float:
    return float(decode_array(np.uint64(v.bits), v.format))


def all_values(fmt: FloatFormat) -> np.ndarray:
    """Decode every storage pattern of a format with at most 16 value bits."""
    if fmt.value_bits > 16:
        raise ValueError("exhaustive enumeration is limited to 16-bit formats")
    codes = np.arange(1 << fmt.value_bits, dtype=np.uint64) << np.uint64(fmt.pad_bits)
    return decode_array(codes, fmt)
