"""Software emulation of the dense ``mma`` instruction numerics.

Pipeline per output element ``(i, j)``:

1. quantize A and B to ``ab_format`` (``input_rounding``), C to ``cd_format``
2. form the k products exactly in binary64
3. combine them per ``inner_sum_policy``
4. add C and round once to FP32 with ``accumulate_rounding``
5. for FP16 C/D, convert that FP32 value with ``output_conversion``
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

from .formats import FP16, FP32, FloatFormat, RoundingMode, get_format, round_to_format
from .oracle import DenseMatrix, _as_array
from .wide import round_exact_sum, round_sequential


@dataclass(frozen=True, order=True)
class MmaShape:
    m: int
    n: int
    k: int

    _PATTERN = re.compile(r"^m(\d+)n(\d+)k(\d+)$")

    @classmethod
    def parse(cls, text: "str | MmaShape") -> "MmaShape":
        if isinstance(text, MmaShape):
            return text
        match = cls._PATTERN.match(text.strip().lower())
        if not match:
            raise ValueError(f"malformed mma shape {text!r}, expected e.g. m16n8k16")
        return cls(*(int(g) for g in match.groups()))

    def __str__(self) -> str:
        return f"m{self.m}n{self.n}k{self.k}"

    @property
    def fma_count(self) -> int:
        return self.m * self.n * self.k


M16N8K16 = MmaShape(16, 8, 16)
M16N8K8 = MmaShape(16, 8, 8)
M16N8K4 = MmaShape(16, 8, 4)
M16N8K32 = MmaShape(16, 8, 32)
M8N8K16 = MmaShape(8, 8, 16)

DENSE_SHAPES: dict[str, tuple[MmaShape, ...]] = {
    "FP16": (M16N8K16, M16N8K8),
    "BF16": (M16N8K16, M16N8K8),
    "TF32": (M16N8K8, M16N8K4),
    "INT8": (M8N8K16, M16N8K32, M16N8K16),
}

SPARSE_SHAPES: dict[str, tuple[MmaShape, ...]] = {
    "FP16": (M16N8K32, M16N8K16),
    "BF16": (M16N8K32, M16N8K16),
    "TF32": (M16N8K16, M16N8K8),
    "INT8": (MmaShape(16, 8, 64), M16N8K32),
}


class ShapeError(ValueError):
    pass


def check_shape(shape: MmaShape, type_name: str, sparse: bool = False) -> None:
    table = SPARSE_SHAPES if sparse else DENSE_SHAPES
    allowed = table.get(type_name)
    if allowed is None:
        raise ShapeError(f"no {'sparse ' if sparse else ''}mma shapes for type {type_name}")
    if shape not in allowed:
        names = ", ".join(str(s) for s in allowed)
        raise ShapeError(f"{shape} is not a {'sparse ' if sparse else ''}{type_name} shape (allowed: {names})")


# ---------------------------------------------------------------------------
# pipeline configuration


@dataclass(frozen=True)
class ExactWide:
    """Sum all products without intermediate rounding."""

    def __str__(self) -> str:
        return "ExactWide"


@dataclass(frozen=True)
class RoundEachStep:
    """Round the running inner sum to ``fmt`` after every addition."""

    fmt: FloatFormat
    mode: RoundingMode

    def __str__(self) -> str:
        return f"RoundEachStep({self.fmt.name}, {self.mode})"


InnerSumPolicy = Union[ExactWide, RoundEachStep]

_AB_FORMATS = ("FP16", "BF16", "TF32")
_CD_FORMATS = ("FP32", "FP16")


@dataclass(frozen=True)
class NumericPipelineConfig:
    ab_format: FloatFormat = FP16
    cd_format: FloatFormat = FP32
    product_policy: str = "Exact"
    inner_sum_policy: InnerSumPolicy = field(default_factory=ExactWide)
    accumulate_rounding: RoundingMode = RoundingMode.NEAREST_EVEN
    output_conversion: RoundingMode = RoundingMode.NEAREST_EVEN
    input_rounding: RoundingMode = RoundingMode.NEAREST_EVEN

    def __post_init__(self) -> None:
        if self.ab_format.name not in _AB_FORMATS:
            raise ValueError(f"ab_format must be one of {_AB_FORMATS}, got {self.ab_format.name}")
        if self.cd_format.name not in _CD_FORMATS:
            raise ValueError(f"cd_format must be one of {_CD_FORMATS}, got {self.cd_format.name}")
        if self.cd_format.name == "FP16" and self.ab_format.name != "FP16":
            raise ValueError("FP16 C/D is only available with FP16 A/B")
        if self.product_policy != "Exact":
            raise ValueError(f"product_policy must be Exact, got {self.product_policy!r}")
        if not isinstance(self.inner_sum_policy, (ExactWide, RoundEachStep)):
            raise ValueError(f"bad inner_sum_policy {self.inner_sum_policy!r}")

    @classmethod
    def for_formats(cls, ab: "str | FloatFormat", cd: "str | FloatFormat" = FP32, **kw) -> "NumericPipelineConfig":
        return cls(ab_format=get_format(ab), cd_format=get_format(cd), **kw)

    def with_(self, **kw) -> "NumericPipelineConfig":
        return replace(self, **kw)

    def to_text(self) -> str:
        lines = [
            f"ab_format = {self.ab_format.name}",
            f"cd_format = {self.cd_format.name}",
            f"product_policy = {self.product_policy}",
            f"inner_sum_policy = {self.inner_sum_policy}",
            f"accumulate_rounding = {self.accumulate_rounding}",
            f"output_conversion = {self.output_conversion}",
            f"input_rounding = {self.input_rounding}",
        ]
        return "\n".join(lines) + "\n"


_ROUND_EACH = re.compile(r"^RoundEachStep\s*\(\s*([\w-]+)\s*,\s*(\w+)\s*\)$", re.IGNORECASE)


def parse_inner_sum_policy(text: str):
    text = text.strip()
    if text.lower() == "exactwide":
        return ExactWide()
    match = _ROUND_EACH.match(text)
    if match:
        return RoundEachStep(get_format(match.group(1)), RoundingMode.parse(match.group(2)))
    raise ValueError(f"unknown inner_sum_policy {text!r}")


def parse_pipeline_config(text: str, base: NumericPipelineConfig | None = None) -> NumericPipelineConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    from .io import parse_key_values

    values = parse_key_values(text)
    kw: dict = {}
    for key, raw in values.items():
        if key in ("ab_format", "cd_format"):
            kw[key] = get_format(raw)
        elif key == "product_policy":
            kw[key] = raw
        elif key == "inner_sum_policy":
            kw[key] = parse_inner_sum_policy(raw)
        elif key in ("accumulate_rounding", "output_conversion", "input_rounding"):
            kw[key] = RoundingMode.parse(raw)
        else:
            raise ValueError(f"unknown pipeline config field {key!r}")
    return replace(base or NumericPipelineConfig(), **kw)


def load_pipeline_config(path: "str | Path", base: NumericPipelineConfig | None = None) -> NumericPipelineConfig:
    return parse_pipeline_config(Path(path).read_text(), base)


# ---------------------------------------------------------------------------
# emulation


def quantize_operands(a, b, c, cfg: NumericPipelineConfig):
    qa = round_to_format(a, cfg.ab_format, cfg.input_rounding)
    qb = round_to_format(b, cfg.ab_format, cfg.input_rounding)
    qc = round_to_format(c, cfg.cd_format, cfg.input_rounding)
    return qa, qb, qc


def accumulate(products: np.ndarray, c: np.ndarray, cfg: NumericPipelineConfig) -> np.ndarray:
    """Stages 3-5 on a product tensor ``(..., m, n, k)`` and quantized ``c``."""
    with np.errstate(invalid="ignore", over="ignore"):
        policy = cfg.inner_sum_policy
        if isinstance(policy, ExactWide):
            terms = np.concatenate([products, c[..., None]], axis=-1)
        else:
            partial = round_sequential(products, policy.fmt, policy.mode)
            terms = np.stack([partial, c], axis=-1)
        d = round_exact_sum(terms, FP32, cfg.accumulate_rounding)
        if cfg.cd_format.name == "FP16":
            d = round_to_format(d, FP16, cfg.output_conversion)
    return d


def mma_emulate_arrays(a, b, c, cfg: NumericPipelineConfig, quantize_inputs: bool = True) -> np.ndarray:
    """Batched emulation over the trailing two axes of float64 arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    m, k = a.shape[-2:]
    k2, n = b.shape[-2:]
    if k != k2 or c.shape[-2:] != (m, n):
        raise ShapeError(f"shape mismatch: A {a.shape[-2:]}, B {b.shape[-2:]}, C {c.shape[-2:]}")
    if quantize_inputs:
        a, b, c = quantize_operands(a, b, c, cfg)
    with np.errstate(invalid="ignore", over="ignore"):
        # products of <=11-bit significands are exact in binary64
        products = a[..., :, None, :] * np.swapaxes(b, -1, -2)[..., None, :, :]
    return accumulate(products, c, cfg)


def mma_emulate(A, B, C, shape: "MmaShape | str | None", cfg: NumericPipelineConfig) -> DenseMatrix:
    """Emulate ``D = A x B + C`` for one warp-level ``mma``."""
    a, b, c = _as_array(A), _as_array(B), _as_array(C)
    if shape is not None:
        shape = MmaShape.parse(shape)
        check_shape(shape, cfg.ab_format.name)
        expect = {"A": (shape.m, shape.k), "B": (shape.k, shape.n), "C": (shape.m, shape.n)}
        for name, arr in (("A", a), ("B", b), ("C", c)):
            if arr.shape != expect[name]:
                raise ShapeError(f"operand {name} has shape {arr.shape}, {shape} needs {expect[name]}")
    if np.any(np.isnan(a)) or np.any(np.isnan(b)) or np.any(np.isnan(c)):
        raise ValueError("operands must be finite or infinite, not NaN")
    return DenseMatrix(mma_emulate_arrays(a, b, c, cfg))
