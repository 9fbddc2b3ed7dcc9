"""Calibration data and the analytical latency/throughput model."""

from .calibration import (
    CALIBRATION_SHA256,
    CalibrationRecord,
    ConvergencePoint,
    UncalibratedError,
    checksum,
    default_records,
    dump_calibration,
    dump_markdown,
    load_calibration,
    lookup,
)
from .model import (
    OutOfCalibrationError,
    PipelineParams,
    Prediction,
    SparseSpeedup,
    fit_lookup,
    fit_params,
    fma_count,
    predict,
    sparse_speedup,
    sweep,
)

__all__ = [
    "CALIBRATION_SHA256",
    "CalibrationRecord",
    "ConvergencePoint",
    "OutOfCalibrationError",
    "PipelineParams",
    "Prediction",
    "SparseSpeedup",
    "UncalibratedError",
    "checksum",
    "default_records",
    "dump_calibration",
    "dump_markdown",
    "fit_lookup",
    "fit_params",
    "fma_count",
    "load_calibration",
    "lookup",
    "predict",
    "sparse_speedup",
    "sweep",
]
