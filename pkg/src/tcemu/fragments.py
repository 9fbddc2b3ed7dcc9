"""Per-lane register fragment layouts of the ``mma`` operands.

The tables follow the PTX ISA fragment figures for ``mma.m16n8k{4,8,16}``.
With ``g = lane >> 2`` (group id) and ``t = lane % 4`` (thread in group),
every four consecutive lanes hold one contiguous 16-byte piece of a row
(A, C/D) or column (B).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .formats import FloatFormat, decode_array, encode_array, get_format
from .mma_emu import MmaShape, ShapeError
from .oracle import DenseMatrix, _as_array

WARP_SIZE = 32


class Operand(enum.Enum):
    A = "A"
    B = "B"
    C_OR_D = "C_or_D"

    @classmethod
    def parse(cls, text: "str | Operand") -> "Operand":
        if isinstance(text, Operand):
            return text
        key = text.strip().upper()
        if key in ("C", "D", "CD", "C_OR_D"):
            return cls.C_OR_D
        return cls(key)


@dataclass(frozen=True)
class FragmentLayout:
    """``table[lane, reg, half]`` holds the ``(row, col)`` of that register element."""

    operand: Operand
    shape: MmaShape
    element_format: FloatFormat
    table: np.ndarray

    @property
    def n_regs(self) -> int:
        return self.table.shape[1]

    @property
    def per_reg(self) -> int:
        return self.table.shape[2]

    @property
    def matrix_shape(self) -> tuple[int, int]:
        s = self.shape
        return {Operand.A: (s.m, s.k), Operand.B: (s.k, s.n), Operand.C_OR_D: (s.m, s.n)}[self.operand]

    def mapping(self, lane: int, reg: int, half: int = 0) -> tuple[int, int]:
        row, col = self.table[lane, reg, half]
        return int(row), int(col)


def _elements_per_reg(fmt: FloatFormat) -> int:
    return 32 // fmt.storage_bits


def _a_coords(shape: MmaShape, fmt: FloatFormat, lane: int, i: int) -> tuple[int, int]:
    g, t = lane >> 2, lane % 4
    if fmt.storage_bits == 16:
        if shape.k == 16:
            return g + 8 * ((i >> 1) & 1), 2 * t + (i & 1) + 8 * (i >= 4)
        return g + 8 * (i >= 2), 2 * t + (i & 1)
    # 32-bit TF32 elements
    if shape.k == 8:
        return g + 8 * (i & 1), t + 4 * (i >= 2)
    return g + 8 * i, t


def _b_coords(shape: MmaShape, fmt: FloatFormat, lane: int, i: int) -> tuple[int, int]:
    g, t = lane >> 2, lane % 4
    if fmt.storage_bits == 16:
        if shape.k == 16:
            return 2 * t + (i & 1) + 8 * (i >= 2), g
        return 2 * t + i, g
    return t + 4 * i, g


def _cd_coords(shape: MmaShape, fmt: FloatFormat, lane: int, i: int) -> tuple[int, int]:
    g, t = lane >> 2, lane % 4
    return g + 8 * (i >= 2), 2 * t + (i & 1)


_AB_SHAPES = {
    "FP16": (MmaShape(16, 8, 16), MmaShape(16, 8, 8)),
    "BF16": (MmaShape(16, 8, 16), MmaShape(16, 8, 8)),
    "TF32": (MmaShape(16, 8, 8), MmaShape(16, 8, 4)),
}


def fragment_layout(operand, shape, fmt) -> FragmentLayout:
    """Build the layout of ``operand`` for ``shape`` with elements of ``fmt``."""
    operand = Operand.parse(operand)
    shape = MmaShape.parse(shape)
    fmt = get_format(fmt)
    if operand is Operand.C_OR_D:
        if fmt.name not in ("FP32", "FP16") or (shape.m, shape.n) != (16, 8) or shape.k not in (4, 8, 16):
            raise ShapeError(f"unsupported C/D fragment: {shape} {fmt.name}")
        coords = _cd_coords
    else:
        if shape not in _AB_SHAPES.get(fmt.name, ()):
            raise ShapeError(f"unsupported {operand.value} fragment: {shape} {fmt.name}")
        coords = _a_coords if operand is Operand.A else _b_coords

    rows, cols = {Operand.A: (shape.m, shape.k), Operand.B: (shape.k, shape.n), Operand.C_OR_D: (shape.m, shape.n)}[
        operand
    ]
    per_reg = _elements_per_reg(fmt)
    n_regs = rows * cols * fmt.storage_bits // (WARP_SIZE * 32)
    table = np.empty((WARP_SIZE, n_regs, per_reg, 2), dtype=np.int64)
    for lane in range(WARP_SIZE):
        for r in range(n_regs):
            for h in range(per_reg):
                table[lane, r, h] = coords(shape, fmt, lane, r * per_reg + h)
    table.setflags(write=False)
    return FragmentLayout(operand, shape, fmt, table)


def scatter_to_fragments(M, layout: FragmentLayout) -> np.ndarray:
    """Register image ``(32, n_regs, per_reg)`` of element values."""
    m = _as_array(M)
    if m.shape != layout.matrix_shape:
        raise ShapeError(f"matrix shape {m.shape} does not match fragment {layout.matrix_shape}")
    return m[layout.table[..., 0], layout.table[..., 1]]


def gather_from_fragments(regs, layout: FragmentLayout) -> DenseMatrix:
    regs = np.asarray(regs, dtype=np.float64)
    if regs.shape != layout.table.shape[:3]:
        raise ShapeError(f"register image shape {regs.shape} does not match {layout.table.shape[:3]}")
    out = np.zeros(layout.matrix_shape)
    out[layout.table[..., 0], layout.table[..., 1]] = regs
    return DenseMatrix(out)


def pack_registers(regs, fmt: FloatFormat) -> np.ndarray:
    """Encode a register image into 32-bit words (first element in the low half)."""
    regs = np.asarray(regs, dtype=np.float64)
    bits = encode_array(regs, fmt).astype(np.uint64)
    words = np.zeros(regs.shape[:2], dtype=np.uint64)
    for h in range(regs.shape[2]):
        words |= bits[..., h] << np.uint64(h * fmt.storage_bits)
    return words.astype(np.uint32)


def unpack_registers(words, fmt: FloatFormat) -> np.ndarray:
    words = np.asarray(words, dtype=np.uint64)
    per_reg = _elements_per_reg(fmt)
    mask = np.uint64((1 << fmt.storage_bits) - 1)
    halves = [(words >> np.uint64(h * fmt.storage_bits)) & mask for h in range(per_reg)]
    return decode_array(np.stack(halves, axis=-1), fmt)
