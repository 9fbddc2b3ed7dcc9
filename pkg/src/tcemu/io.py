"""Text file formats: matrix CSV, sparse matrix files and key=value configs."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .oracle import DenseMatrix, Layout


class FileFormatError(ValueError):
    pass


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines. Blank lines and ``#`` comments are skipped."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FileFormatError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise FileFormatError(f"line {lineno}: empty key")
        if key in out:
            raise FileFormatError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _fmt_value(x: float) -> str:
    # repr round-trips binary64 exactly
    return repr(float(x))


# ---------------------------------------------------------------------------
# dense matrices
#
#   rows,cols,layout
#   16,8,RowMajor
#   <one storage-order line per row (RowMajor) or per column (ColMajor)>


def dumps_matrix(M: DenseMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rows", "cols", "layout"])
    w.writerow([M.rows, M.cols, str(M.layout)])
    lines = M.elements if M.layout is Layout.ROW_MAJOR else M.elements.T
    for line in lines:
        w.writerow([_fmt_value(x) for x in line])
    return buf.getvalue()


def loads_matrix(text: str) -> DenseMatrix:
    rows_ = [r for r in csv.reader(io.StringIO(text)) if r and any(cell.strip() for cell in r)]
    if len(rows_) < 2 or [c.strip().lower() for c in rows_[0]] != ["rows", "cols", "layout"]:
        raise FileFormatError("matrix CSV must start with header 'rows,cols,layout'")
    try:
        nrows, ncols = int(rows_[1][0]), int(rows_[1][1])
        layout = Layout.parse(rows_[1][2])
    except (IndexError, ValueError) as exc:
        raise FileFormatError(f"bad matrix CSV dimensions line: {rows_[1]!r}") from exc
    if nrows < 0 or ncols < 0:
        raise FileFormatError("matrix dimensions must be non-negative")
    try:
        values = [float(cell) for row in rows_[2:] for cell in row]
    except ValueError as exc:
        raise FileFormatError(f"non-numeric matrix entry: {exc}") from exc
    if len(values) != nrows * ncols:
        raise FileFormatError(f"expected {nrows * ncols} entries for {nrows}x{ncols}, got {len(values)}")
    return DenseMatrix.from_storage(nrows, ncols, values, layout)


def read_matrix(path: "str | Path") -> DenseMatrix:
    return loads_matrix(Path(path).read_text())


def write_matrix(path: "str | Path", M: DenseMatrix) -> None:
    Path(path).write_text(dumps_matrix(M))


# ---------------------------------------------------------------------------
# sparse 2:4 matrices
#
#   rows,cols,layout       (header of the m x k/2 values block, RowMajor)
#   m,k/2,RowMajor
#   <m lines of values>
#   metadata
#   <m lines, hex of the packed 2-bit indices per row>


def dumps_sparse(S) -> str:
    text = dumps_matrix(S.values)
    lines = [text.rstrip("\n"), "metadata"]
    lines.extend(S.metadata_hex())
    return "\n".join(lines) + "\n"


def loads_sparse(text: str):
    from .sparse24 import Sparse24Matrix

    lines = text.splitlines()
    try:
        split = next(i for i, line in enumerate(lines) if line.strip().lower() == "metadata")
    except StopIteration:
        raise FileFormatError("sparse file lacks a 'metadata' section") from None
    values = loads_matrix("\n".join(lines[:split]))
    meta = [line.strip() for line in lines[split + 1 :] if line.strip()]
    if len(meta) != values.rows:
        raise FileFormatError(f"expected {values.rows} metadata lines, got {len(meta)}")
    return Sparse24Matrix.from_hex(values, meta)


def read_sparse(path: "str | Path"):
    return loads_sparse(Path(path).read_text())


def write_sparse(path: "str | Path", S) -> None:
    Path(path).write_text(dumps_sparse(S))


def write_csv(path, header, rows) -> str:
    """Write rows to ``path`` (``None`` or ``-`` only returns the text)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    text = buf.getvalue()
    if path not in (None, "-"):
        Path(path).write_text(text)
    return text

