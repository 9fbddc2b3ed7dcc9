"""Numeric probes and chain matrix multiplication experiments.

Probes place a few random values in otherwise zero m16n8k8 operands:

* Multiplication:   d0 = a0*b0
* InnerProductAdd:  d0 = a0*b0 + a1*b1
* AccumulationAdd:  d0 = a0*b0 + c0

Each trial draws four normals ``v0..v3`` from its own substream:
``a0 = v0``, ``a1 = c0 = v1``, ``b0 = v2``, ``b1 = v3``, so the inner-product
and accumulation probes share ``a0, b0`` and ``a1`` equals ``c0``.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .formats import FP16, FP32, FloatFormat, RoundingMode, get_format, round_to_format
from .mma_emu import M16N8K8, MmaShape, NumericPipelineConfig, mma_emulate_arrays
from .oracle import matmul_ref_arrays, relative_l2_error_batched
from .rng import DEFAULT_SEED, trial_normals

CHUNK = 2048


class Operation(enum.Enum):
    MULTIPLICATION = "Multiplication"
    INNER_PRODUCT_ADD = "InnerProductAdd"
    ACCUMULATION_ADD = "AccumulationAdd"

    @classmethod
    def parse(cls, text: "str | Operation") -> "Operation":
        if isinstance(text, Operation):
            return text
        key = text.strip().lower().replace("_", "").replace("-", "")
        for op in cls:
            if op.value.lower() == key:
                return op
        aliases = {"mul": cls.MULTIPLICATION, "mult": cls.MULTIPLICATION, "inner": cls.INNER_PRODUCT_ADD,
                   "innerproduct": cls.INNER_PRODUCT_ADD, "acc": cls.ACCUMULATION_ADD,
                   "accumulation": cls.ACCUMULATION_ADD, "accumulate": cls.ACCUMULATION_ADD}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown probe operation {text!r}")

    def __str__(self) -> str:
        return self.value


class InitMode(enum.Enum):
    INIT_LOW = "InitLow"
    INIT_FP32 = "InitFP32"

    @classmethod
    def parse(cls, text: "str | InitMode") -> "InitMode":
        if isinstance(text, InitMode):
            return text
        key = text.strip().lower().replace("_", "").replace("-", "")
        if key in ("initlow", "low"):
            return cls.INIT_LOW
        if key in ("initfp32", "fp32"):
            return cls.INIT_FP32
        raise ValueError(f"unknown init mode {text!r}")

    def __str__(self) -> str:
        return self.value


def _label(fmt: FloatFormat, cd: FloatFormat) -> str:
    return fmt.name if cd.name == "FP32" else f"{fmt.name}/{cd.name}"


# ---------------------------------------------------------------------------
# probes


@dataclass(frozen=True)
class ProbeCase:
    operation: Operation
    init_mode: InitMode
    format: FloatFormat
    cd_format: FloatFormat = FP32
    trials: int = 10_000
    seed: int = DEFAULT_SEED
    pipeline: NumericPipelineConfig | None = None

    def config(self) -> NumericPipelineConfig:
        if self.pipeline is not None:
            return self.pipeline
        return NumericPipelineConfig(ab_format=self.format, cd_format=self.cd_format)


@dataclass
class ProbeResult:
    operation: str
    format: str
    cd_format: str
    init_mode: str
    trials: int
    seed: int
    mean_abs_error: float
    # FP16 C/D only: error against the binary32 result converted to FP16
    mean_abs_error_cvt: float | None = None
    nonzero_trials: int = 0


def probe_operands(case: ProbeCase, trials: np.ndarray):
    """Zero-padded m16n8k8 operands for the given trial indices."""
    v = trial_normals(case.seed, trials, 4)
    v = round_to_format(v, FP32, RoundingMode.NEAREST_EVEN)
    if case.init_mode is InitMode.INIT_LOW:
        v = round_to_format(v, case.format, RoundingMode.NEAREST_EVEN)
    t = len(trials)
    s = M16N8K8
    a = np.zeros((t, s.m, s.k))
    b = np.zeros((t, s.k, s.n))
    c = np.zeros((t, s.m, s.n))
    a[:, 0, 0] = v[:, 0]
    b[:, 0, 0] = v[:, 2]
    if case.operation is Operation.INNER_PRODUCT_ADD:
        a[:, 0, 1] = v[:, 1]
        b[:, 1, 0] = v[:, 3]
    elif case.operation is Operation.ACCUMULATION_ADD:
        c[:, 0, 0] = v[:, 1]
    return a, b, c


def _probe_chunk(case: ProbeCase, trials: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    a, b, c = probe_operands(case, trials)
    d = mma_emulate_arrays(a, b, c, case.config())
    ref = matmul_ref_arrays(a, b, c, "binary32")
    err = np.abs(d[:, 0, 0] - ref[:, 0, 0])
    err_cvt = None
    if case.cd_format.name == "FP16":
        ref16 = round_to_format(ref[:, 0, 0], FP16, RoundingMode.NEAREST_EVEN)
        err_cvt = np.abs(d[:, 0, 0] - ref16)
    return err, err_cvt


def _chunks(n: int, size: int = CHUNK) -> list[np.ndarray]:
    return [np.arange(i, min(i + size, n), dtype=np.int64) for i in range(0, n, size)]


def _map(fn, args: Sequence, workers: int):
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_star, [(fn, a) for a in args]))


def _star(item):
    fn, args = item
    return fn(*args)


def probe_errors(case: ProbeCase, workers: int = 1) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-trial absolute errors in trial order."""
    parts = _map(_probe_chunk, [(case, idx) for idx in _chunks(case.trials)], workers)
    err = np.concatenate([p[0] for p in parts])
    err_cvt = np.concatenate([p[1] for p in parts]) if parts[0][1] is not None else None
    return err, err_cvt


def _mean(values: np.ndarray) -> float:
    return math.fsum(values.tolist()) / len(values)


def run_probe(case: ProbeCase, workers: int = 1) -> ProbeResult:
    """Mean absolute error of ``d0`` against the binary32 reference."""
    if case.trials < 1:
        raise ValueError("trials must be >= 1")
    err, err_cvt = probe_errors(case, workers)
    return ProbeResult(
        operation=str(case.operation),
        format=case.format.name,
        cd_format=case.cd_format.name,
        init_mode=str(case.init_mode),
        trials=case.trials,
        seed=case.seed,
        mean_abs_error=_mean(err),
        mean_abs_error_cvt=None if err_cvt is None else _mean(err_cvt),
        nonzero_trials=int(np.count_nonzero(err)),
    )


# ---------------------------------------------------------------------------
# chain


@dataclass(frozen=True)
class ChainConfig:
    format: FloatFormat
    cd_format: FloatFormat = FP32
    length: int = 20
    init_mode: InitMode = InitMode.INIT_LOW
    trials: int = 1000
    seed: int = DEFAULT_SEED
    shape: MmaShape = M16N8K8
    pipeline: NumericPipelineConfig | None = None

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError("chain length must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.shape.n != self.shape.k:
            raise ValueError(f"chain needs n == k so D can feed the next A, got {self.shape}")

    def config(self) -> NumericPipelineConfig:
        if self.pipeline is not None:
            return self.pipeline
        return NumericPipelineConfig(ab_format=self.format, cd_format=self.cd_format)


@dataclass
class ChainResult:
    format: str
    cd_format: str
    init_mode: str
    trials: int
    seed: int
    # per N (index N-1); NaN from the first overflowing step on
    relative_errors: list
    overflow_step: int | None
    # per N: number of trials whose result was non-finite
    overflow_trials: list = field(default_factory=list)


def chain_inputs(cfg: ChainConfig, trials: np.ndarray):
    """A0 ``(T, m, k)`` and the B sequence ``(T, N, k, n)`` for each trial."""
    s = cfg.shape
    n_a = s.m * s.k
    n_b = s.k * s.n
    v = trial_normals(cfg.seed, trials, n_a + cfg.length * n_b)
    v = round_to_format(v, FP32, RoundingMode.NEAREST_EVEN)
    if cfg.init_mode is InitMode.INIT_LOW:
        v = round_to_format(v, cfg.format, RoundingMode.NEAREST_EVEN)
    a0 = v[:, :n_a].reshape(-1, s.m, s.k)
    bs = v[:, n_a:].reshape(-1, cfg.length, s.k, s.n)
    return a0, bs


def _chain_chunk(cfg: ChainConfig, trials: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a_emu, bs = chain_inputs(cfg, trials)
    a_ref = a_emu.copy()
    pipe = cfg.config()
    s = cfg.shape
    zero = np.zeros((len(trials), s.m, s.n))
    errs = np.empty((len(trials), cfg.length))
    over = np.empty((len(trials), cfg.length), dtype=bool)
    for step in range(cfg.length):
        b = bs[:, step]
        d_emu = mma_emulate_arrays(a_emu, b, zero, pipe)
        d_ref = matmul_ref_arrays(a_ref, b, zero, "binary32")
        errs[:, step], over[:, step] = relative_l2_error_batched(d_emu, d_ref)
        a_emu, a_ref = d_emu, d_ref
    return errs, over


def chain_errors(cfg: ChainConfig, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial, per-step relative errors and overflow flags, shape ``(trials, N)``."""
    parts = _map(_chain_chunk, [(cfg, idx) for idx in _chunks(cfg.trials, 256)], workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def run_chain(cfg: ChainConfig, workers: int = 1) -> ChainResult:
    """Mean relative L2 error per chain length; overflow is sticky once any trial overflows."""
    errs, over = chain_errors(cfg, workers)
    any_over = over.any(axis=0)
    overflow_step = int(np.argmax(any_over)) + 1 if any_over.any() else None
    means = []
    for step in range(cfg.length):
        if overflow_step is not None and step + 1 >= overflow_step:
            means.append(math.nan)
        else:
            means.append(_mean(errs[:, step]))
    return ChainResult(
        format=cfg.format.name,
        cd_format=cfg.cd_format.name,
        init_mode=str(cfg.init_mode),
        trials=cfg.trials,
        seed=cfg.seed,
        relative_errors=means,
        overflow_step=overflow_step,
        overflow_trials=[int(x) for x in over.sum(axis=0)],
    )


# ---------------------------------------------------------------------------
# reports

REPORT_COLUMNS = ("experiment", "format", "init_mode", "N", "mean_abs_error", "relative_l2_error", "overflow_step")


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "overflow-detected"
    return repr(float(x))


def probe_rows(results: Sequence[ProbeResult]) -> list[tuple]:
    rows = []
    for r in results:
        label = f"{r.format}/{r.cd_format}" if r.cd_format != "FP32" else r.format
        rows.append((f"probe:{r.operation}", label, r.init_mode, "", _num(r.mean_abs_error), "", ""))
        if r.mean_abs_error_cvt is not None:
            rows.append((f"probe:{r.operation}:cvtFP16", label, r.init_mode, "", _num(r.mean_abs_error_cvt), "", ""))
    return rows


def chain_rows(results: Sequence[ChainResult]) -> list[tuple]:
    rows = []
    for r in results:
        label = f"{r.format}/{r.cd_format}" if r.cd_format != "FP32" else r.format
        ostep = "" if r.overflow_step is None else str(r.overflow_step)
        for n, e in enumerate(r.relative_errors, 1):
            rows.append(("chain", label, r.init_mode, str(n), "", _num(e), ostep))
    return rows


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def report_json(probes: Sequence[ProbeResult] = (), chains: Sequence[ChainResult] = ()) -> str:
    doc = {
        "columns": list(REPORT_COLUMNS),
        "probes": [asdict(p) for p in probes],
        "chains": [asdict(c) for c in chains],
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def parse_experiment_config(text: str) -> dict:
    """Key-value experiment config: operation, format, cd_format, init_mode, trials, seed, chain_length."""
    from .io import parse_key_values

    raw = parse_key_values(text)
    allowed = {"operation", "format", "cd_format", "init_mode", "trials", "seed", "chain_length"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"unknown experiment config field(s): {', '.join(sorted(unknown))}")
    out: dict = {}
    if "operation" in raw:
        out["operation"] = Operation.parse(raw["operation"])
    if "format" in raw:
        out["format"] = get_format(raw["format"])
    if "cd_format" in raw:
        out["cd_format"] = get_format(raw["cd_format"])
    if "init_mode" in raw:
        out["init_mode"] = InitMode.parse(raw["init_mode"])
    for key in ("trials", "seed", "chain_length"):
        if key in raw:
            out[key] = int(raw[key], 0)
    return out
