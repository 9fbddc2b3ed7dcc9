"""Sub-core pipeline model of latency and throughput versus (#warps, ILP).

Warps are spread round-robin over ``units`` independent issue units (four
Tensor Core sub-cores per SM, two data movement units for ``ldmatrix``).
On one unit, ``w_u`` warps each issuing ``ilp`` independent instructions
need ``w_u * ilp * I`` cycles of issue time plus a fixed overhead ``o``;
a warp's own chain of ``ilp`` instructions cannot finish before
``L + (ilp - 1) * d``. The iteration latency is the larger of the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .calibration import CalibrationRecord, UncalibratedError, default_records, lookup

MAX_WARPS = 16
MAX_ILP = 8

# vendor peaks per SM, keyed by (arch, kind, ab type)
DEVICE_PEAKS = {
    ("A100", "mma", "FP16"): 1024.0,
    ("A100", "mma", "TF32"): 512.0,
    ("A100", "mma", "INT8"): 2048.0,
    ("A100", "mma_sp", "FP16"): 2048.0,
    ("A100", "mma_sp", "TF32"): 1024.0,
    ("A100", "mma_sp", "INT8"): 4096.0,
    ("A100", "ldmatrix", "-"): 128.0,
}

# sparse speedups below this fraction of the ideal 2x are flagged
SPEEDUP_FLAG_FRACTION = 0.9


class OutOfCalibrationError(ValueError):
    """Prediction requested outside the calibrated (#warps, ILP) range."""

    def __str__(self) -> str:
        return f"out-of-calibration: {super().__str__()}"


class InsufficientDataError(ValueError):
    pass


def fma_count(shape) -> int:
    """``m*n*k`` for the full logical shape (sparse shapes count the dense-equivalent work)."""
    from ..mma_emu import MmaShape

    s = MmaShape.parse(shape)
    return s.m * s.n * s.k


def work_per_instruction(record: CalibrationRecord) -> int:
    """FMAs per ``mma``/``mma.sp``, bytes per ``ldmatrix``."""
    if record.is_ldmatrix:
        return 128 * record.n_matrices
    return fma_count(record.shape)


@dataclass(frozen=True)
class PipelineParams:
    """Fitted parameters. Cycles throughout; peak in work units per clock."""

    subcores_per_sm: int
    completion_latency: float
    issue_interval: float
    per_subcore_peak: float
    warp_overhead: float
    ilp_spacing: float
    work: int
    throughput_cap: float
    label: str = ""

    @property
    def device_peak(self) -> float:
        return self.subcores_per_sm * self.per_subcore_peak


@dataclass(frozen=True)
class Prediction:
    latency: float
    throughput: float


def _units(record: CalibrationRecord) -> int:
    return 2 if record.is_ldmatrix else 4


def _effective_latency(point, work: int) -> float:
    # latency implied by throughput = warps*ilp*work/latency
    return point.warps * point.ilp * work / point.throughput


def fit_params(record: CalibrationRecord) -> PipelineParams:
    """Fit the model to one record's completion latency and convergence points."""
    if not record.convergence_points:
        raise InsufficientDataError(f"{record.describe()} has no convergence points")
    units = _units(record)
    work = work_per_instruction(record)
    L = record.completion_latency
    measured = max(p.throughput for p in record.convergence_points)
    peak = DEVICE_PEAKS.get((record.arch, record.kind, record.ab_type), measured)
    per_unit = peak / units
    issue = work / per_unit

    by_warps = sorted(record.convergence_points, key=lambda p: p.warps)
    few = next((p for p in by_warps if p.warps <= units), by_warps[0])
    many = by_warps[-1]

    if few.ilp > 1:
        spacing = (_effective_latency(few, work) - L) / (few.ilp - 1)
    else:
        spacing = issue
    spacing = max(spacing, 0.0)

    w_u = math.ceil(many.warps / units)
    overhead = max(0.0, _effective_latency(many, work) - w_u * many.ilp * issue)

    # a record that stays far below the vendor peak keeps its measured ceiling
    cap = peak if measured >= 0.75 * peak else measured
    return PipelineParams(units, L, issue, per_unit, overhead, spacing, work, cap, record.describe())


def predict(params: PipelineParams, warps: int, ilp: int) -> Prediction:
    """Predicted iteration latency (cycles) and throughput (work units/clk/SM)."""
    if warps < 1 or ilp < 1:
        raise ValueError("warps and ilp must be >= 1")
    if warps > MAX_WARPS or ilp > MAX_ILP:
        raise OutOfCalibrationError(f"warps={warps}, ilp={ilp} beyond warps<={MAX_WARPS}, ilp<={MAX_ILP}")
    w_u = math.ceil(warps / params.subcores_per_sm)
    chain = params.completion_latency + (ilp - 1) * params.ilp_spacing
    issue = w_u * ilp * params.issue_interval + params.warp_overhead
    latency = max(chain, issue)
    throughput = min(warps * ilp * params.work / latency, params.throughput_cap)
    return Prediction(latency, throughput)


def fit_lookup(arch: str, kind: str, ab: str | None, cd: str | None, shape, records=None) -> PipelineParams:
    return fit_params(lookup(arch, kind, ab, cd, shape, records))


@dataclass(frozen=True)
class SparseSpeedup:
    ratio: float
    sparse_completion: float
    dense_completion: float
    flag: str | None

    @property
    def below_expected(self) -> bool:
        return self.flag == "below-expected"


def sparse_speedup(arch: str, ab: str, cd: str, sparse_shape, records=None) -> SparseSpeedup:
    """Sparse over dense (half-k) throughput at the 8-warp convergence point."""
    from ..mma_emu import MmaShape

    shape = MmaShape.parse(sparse_shape)
    if shape.k % 2:
        raise ValueError(f"sparse shape {shape} has odd k")
    sparse = lookup(arch, "mma_sp", ab, cd, shape, records)
    try:
        dense = lookup(arch, "mma", ab, cd, MmaShape(shape.m, shape.n, shape.k // 2), records)
    except UncalibratedError as exc:
        raise UncalibratedError(f"no dense counterpart for {sparse.describe()}: {exc.args[0]}") from None
    gap = abs(sparse.completion_latency - dense.completion_latency)
    if gap > 0.5:
        raise AssertionError(
            f"{sparse.describe()} completion {sparse.completion_latency} differs from dense "
            f"{dense.completion_latency} by more than 0.5 cycles"
        )
    ratio = sparse.point(8).throughput / dense.point(8).throughput
    flag = "below-expected" if ratio < 2.0 * SPEEDUP_FLAG_FRACTION else None
    return SparseSpeedup(ratio, sparse.completion_latency, dense.completion_latency, flag)


SWEEP_WARPS = (1, 2, 4, 6, 8, 12, 16)
SWEEP_ILPS = (1, 2, 3, 4, 5, 6)


def sweep(params: PipelineParams, warps=SWEEP_WARPS, ilps=SWEEP_ILPS) -> list[tuple[int, int, Prediction]]:
    return [(w, i, predict(params, w, i)) for w in warps for i in ilps]


def all_params(records=None) -> dict[tuple, PipelineParams]:
    records = default_records() if records is None else records
    return {r.key: fit_params(r) for r in records}
