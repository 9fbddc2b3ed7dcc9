"""2:4 structured sparsity: checking, pruning, compression and ``mma.sp``.

Metadata holds one 2-bit position per kept element. A row's ``k/2``
indices are packed little-endian: the first kept element of the row sits in
bits ``[1:0]``, the second in ``[3:2]``, and so on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mma_emu import MmaShape, NumericPipelineConfig, ShapeError, accumulate, check_shape, quantize_operands
from .oracle import DenseMatrix, _as_array


class SparsityError(ValueError):
    """Raised for a matrix that is not 2:4 sparse or for malformed metadata."""

    def __init__(self, message: str, row: int | None = None, group: int | None = None):
        super().__init__(message)
        self.row = row
        self.group = group


def _groups(a: np.ndarray) -> np.ndarray:
    if a.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if a.shape[1] % 4:
        raise ValueError(f"k = {a.shape[1]} is not divisible by 4")
    return a.reshape(a.shape[0], a.shape[1] // 4, 4)


def _nonzero(a: np.ndarray) -> np.ndarray:
    # NaN compares unequal to zero, so it counts as a nonzero
    return a != 0


def check_24(A) -> tuple[int, int] | None:
    """Return ``None`` if every 4-group has at most two nonzeros, else the first bad ``(row, group)``."""
    counts = _nonzero(_groups(_as_array(A))).sum(axis=-1)
    bad = np.argwhere(counts > 2)
    if bad.size == 0:
        return None
    row, group = bad[0]
    return int(row), int(group)


def is_valid_24(A) -> bool:
    return check_24(A) is None


def prune_24(A) -> DenseMatrix:
    """Keep the two largest magnitudes of every 4-group (ties go to the lower index)."""
    a = _as_array(A)
    g = _groups(a)
    order = np.argsort(-np.abs(g), axis=-1, kind="stable")
    keep = np.zeros(g.shape, dtype=bool)
    np.put_along_axis(keep, order[..., :2], True, axis=-1)
    out = np.where(keep, g, 0.0).reshape(a.shape)
    return DenseMatrix(out)


def _validate_indices(indices: np.ndarray) -> None:
    if indices.ndim != 2 or indices.shape[1] % 2:
        raise SparsityError(f"metadata must be (m, k/2) with even k/2, got {indices.shape}")
    if np.any((indices < 0) | (indices > 3)):
        row, col = np.argwhere((indices < 0) | (indices > 3))[0]
        raise SparsityError(f"metadata index out of range at row {row}", int(row), int(col) // 2)
    pairs = indices.reshape(indices.shape[0], -1, 2)
    bad = np.argwhere(pairs[..., 0] >= pairs[..., 1])
    if bad.size:
        row, group = (int(x) for x in bad[0])
        raise SparsityError(
            f"metadata indices not strictly increasing at row {row}, group {group}", row, group
        )


@dataclass
class Sparse24Matrix:
    """Compressed ``m x k`` operand: ``values`` is ``m x k/2``, ``indices`` the 2-bit positions."""

    values: DenseMatrix
    indices: np.ndarray

    def __post_init__(self) -> None:
        if not isinstance(self.values, DenseMatrix):
            self.values = DenseMatrix(self.values)
        self.indices = np.array(self.indices, dtype=np.int64, copy=True)
        if self.indices.shape != self.values.shape:
            raise SparsityError(f"metadata shape {self.indices.shape} != values shape {self.values.shape}")
        _validate_indices(self.indices)

    @property
    def m(self) -> int:
        return self.values.rows

    @property
    def k(self) -> int:
        return 2 * self.values.cols

    def columns(self) -> np.ndarray:
        """Dense column index of every stored value."""
        j = np.arange(self.values.cols)
        return 4 * (j // 2) + self.indices

    def packed_metadata(self) -> list[int]:
        words = []
        for row in self.indices:
            word = 0
            for j, idx in enumerate(row):
                word |= int(idx) << (2 * j)
            words.append(word)
        return words

    def metadata_hex(self) -> list[str]:
        width = max(1, self.values.cols * 2 // 4)
        return [f"{w:0{width}x}" for w in self.packed_metadata()]

    @classmethod
    def from_packed(cls, values: DenseMatrix, words) -> "Sparse24Matrix":
        half = values.cols
        indices = np.empty((values.rows, half), dtype=np.int64)
        for i, word in enumerate(words):
            if word >> (2 * half):
                raise SparsityError(f"metadata word for row {i} has bits beyond {half} indices", i)
            for j in range(half):
                indices[i, j] = (word >> (2 * j)) & 3
        return cls(values, indices)

    @classmethod
    def from_hex(cls, values: DenseMatrix, lines) -> "Sparse24Matrix":
        words = []
        for i, text in enumerate(lines):
            try:
                words.append(int(text.strip().removeprefix("0x"), 16))
            except ValueError:
                raise SparsityError(f"row {i}: metadata {text!r} is not hexadecimal", i) from None
        return cls.from_packed(values, words)


def compress_24(A) -> Sparse24Matrix:
    """Compress a 2:4-valid matrix. Under-full groups keep extra zeros at the lowest free positions."""
    a = _as_array(A)
    bad = check_24(a)
    if bad is not None:
        row, group = bad
        raise SparsityError(f"not 2:4 sparse: row {row}, group {group} has more than two nonzeros", row, group)
    g = _groups(a)
    # rank positions: nonzeros first, then zeros, each by ascending index
    key = np.where(_nonzero(g), 0, 4) + np.arange(4)
    kept = np.sort(np.argsort(key, axis=-1, kind="stable")[..., :2], axis=-1)
    values = np.take_along_axis(g, kept, axis=-1).reshape(a.shape[0], -1)
    return Sparse24Matrix(DenseMatrix(values), kept.reshape(a.shape[0], -1))


def decompress_24(S: Sparse24Matrix) -> DenseMatrix:
    out = np.zeros((S.m, S.k))
    rows = np.arange(S.m)[:, None]
    out[rows, S.columns()] = S.values.elements
    return DenseMatrix(out)


def mma_sp_emulate(sA: Sparse24Matrix, B, C, shape: "MmaShape | str | None", cfg: NumericPipelineConfig) -> DenseMatrix:
    """Emulate ``D = sA x B + C``: each stored value meets the B row picked by its metadata."""
    b, c = _as_array(B), _as_array(C)
    if shape is not None:
        shape = MmaShape.parse(shape)
        check_shape(shape, cfg.ab_format.name, sparse=True)
        if (sA.m, sA.k) != (shape.m, shape.k):
            raise ShapeError(f"sparse A is {sA.m}x{sA.k}, {shape} needs {shape.m}x{shape.k}")
    if b.shape[0] != sA.k or c.shape != (sA.m, b.shape[1]):
        raise ShapeError(f"shape mismatch: sA {sA.m}x{sA.k}, B {b.shape}, C {c.shape}")
    vals, qb, qc = quantize_operands(sA.values.elements, b, c, cfg)
    selected = qb[sA.columns()]  # (m, k/2, n)
    with np.errstate(invalid="ignore", over="ignore"):
        products = vals[:, None, :] * np.transpose(selected, (0, 2, 1))
    return DenseMatrix(accumulate(products, qc, cfg))
