"""Measured latency/throughput records for mma, mma.sp and ldmatrix.

Each record carries the single-warp, ILP=1 completion latency and two
convergence points (4 and 8 warps). Throughput is FMA/clk/SM for
``mma``/``mma_sp`` and bytes/clk/SM for ``ldmatrix``; latencies are cycles.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from ..mma_emu import MmaShape

COLUMNS = ("arch", "kind", "ab", "cd", "shape", "completion", "warps", "ilp", "latency", "throughput")
ARCHS = ("A100", "RTX3070Ti", "RTX2080Ti")
KINDS = ("mma", "mma_sp", "ldmatrix")

# sha256 of the shipped calibration.csv
CALIBRATION_SHA256 = "ba2b7983acbea3334cf9b2af8d259923baa524fa2b84e281362bb91dcbe72ec8"


class UncalibratedError(LookupError):
    """No calibration record for the requested configuration."""

    def __str__(self) -> str:
        return f"uncalibrated: {super().__str__()}"


class CalibrationFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ConvergencePoint:
    warps: int
    ilp: int
    latency: float
    throughput: float


@dataclass(frozen=True)
class CalibrationRecord:
    arch: str
    kind: str
    ab_type: str
    cd_type: str
    shape: str
    completion_latency: float
    convergence_points: tuple

    @property
    def key(self) -> tuple:
        return (self.arch, self.kind, self.ab_type, self.cd_type, self.shape)

    @property
    def is_ldmatrix(self) -> bool:
        return self.kind == "ldmatrix"

    @property
    def mma_shape(self) -> MmaShape:
        if self.is_ldmatrix:
            raise ValueError("ldmatrix records have no mma shape")
        return MmaShape.parse(self.shape)

    @property
    def n_matrices(self) -> int:
        if not self.is_ldmatrix:
            raise ValueError("not an ldmatrix record")
        return int(self.shape[1:])

    def point(self, warps: int, ilp: int | None = None) -> ConvergencePoint:
        for p in self.convergence_points:
            if p.warps == warps and (ilp is None or p.ilp == ilp):
                return p
        raise UncalibratedError(f"{self.describe()} has no point at warps={warps}, ilp={ilp}")

    def describe(self) -> str:
        if self.is_ldmatrix:
            return f"{self.arch} ldmatrix.{self.shape}"
        return f"{self.arch} {self.kind} {self.ab_type}/{self.cd_type} {self.shape}"


def _number(text: str, field: str, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise CalibrationFormatError(f"line {lineno}: {field} {text!r} is not a number") from None


def _count(text: str, field: str, lineno: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise CalibrationFormatError(f"line {lineno}: {field} {text!r} is not an integer") from None
    if value < 1:
        raise CalibrationFormatError(f"line {lineno}: {field} must be >= 1")
    return value


def parse_calibration(text: str) -> tuple[CalibrationRecord, ...]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != COLUMNS:
        raise CalibrationFormatError(f"calibration header must be {','.join(COLUMNS)}")
    grouped: dict[tuple, dict] = {}
    for lineno, row in enumerate(reader, 2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != len(COLUMNS):
            raise CalibrationFormatError(f"line {lineno}: expected {len(COLUMNS)} fields, got {len(row)}")
        f = dict(zip(COLUMNS, (c.strip() for c in row)))
        key = (f["arch"], f["kind"], f["ab"], f["cd"], f["shape"])
        if f["kind"] not in KINDS:
            raise CalibrationFormatError(f"line {lineno}: unknown kind {f['kind']!r}")
        completion = _number(f["completion"], "completion", lineno)
        point = ConvergencePoint(
            _count(f["warps"], "warps", lineno),
            _count(f["ilp"], "ilp", lineno),
            _number(f["latency"], "latency", lineno),
            _number(f["throughput"], "throughput", lineno),
        )
        entry = grouped.setdefault(key, {"completion": completion, "points": []})
        if entry["completion"] != completion:
            raise CalibrationFormatError(f"line {lineno}: inconsistent completion latency for {key}")
        entry["points"].append(point)
    return tuple(
        CalibrationRecord(*key, entry["completion"], tuple(entry["points"])) for key, entry in grouped.items()
    )


def _fmt(x: float) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def dump_calibration(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        for p in r.convergence_points:
            w.writerow(
                [r.arch, r.kind, r.ab_type, r.cd_type, r.shape, _fmt(r.completion_latency), p.warps, p.ilp,
                 _fmt(p.latency), _fmt(p.throughput)]
            )
    return buf.getvalue()


def dump_markdown(records) -> str:
    lines = [
        "| arch | kind | ab | cd | shape | completion (cycles) | warps | ilp | latency (cycles) | throughput |",
        "|---|---|---|---|---|---|---|---|---|---|",
    ]
    for r in records:
        for p in r.convergence_points:
            lines.append(
                f"| {r.arch} | {r.kind} | {r.ab_type} | {r.cd_type} | {r.shape} | {_fmt(r.completion_latency)} "
                f"| {p.warps} | {p.ilp} | {_fmt(p.latency)} | {_fmt(p.throughput)} |"
            )
    return "\n".join(lines) + "\n"


def checksum(records) -> str:
    return hashlib.sha256(dump_calibration(records).encode()).hexdigest()


def default_calibration_text() -> str:
    return resources.files(__package__).joinpath("calibration.csv").read_text()


@lru_cache(maxsize=1)
def default_records() -> tuple[CalibrationRecord, ...]:
    return parse_calibration(default_calibration_text())


def load_calibration(path: "str | Path | None" = None) -> tuple[CalibrationRecord, ...]:
    if path is None:
        return default_records()
    return parse_calibration(Path(path).read_text())


def _norm_shape(kind: str, shape) -> str:
    if kind == "ldmatrix":
        text = str(shape).strip().lower()
        return text if text.startswith("x") else f"x{text}"
    return str(MmaShape.parse(shape))


def lookup(arch: str, kind: str, ab_type: str | None, cd_type: str | None, shape, records=None) -> CalibrationRecord:
    """Exact record for a configuration, or ``UncalibratedError``."""
    records = default_records() if records is None else records
    try:
        shape_key = _norm_shape(kind, shape)
    except ValueError as exc:
        raise UncalibratedError(str(exc)) from None
    if kind == "ldmatrix":
        ab_type = cd_type = "-"
    want = (arch, kind, (ab_type or "").upper(), (cd_type or "").upper(), shape_key)
    for r in records:
        if (r.arch, r.kind, r.ab_type.upper(), r.cd_type.upper(), r.shape) == want:
            return r
    raise UncalibratedError(" ".join(str(x) for x in want))
