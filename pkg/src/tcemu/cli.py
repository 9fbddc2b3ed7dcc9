"""Command line interface.

Exit codes: 0 success, 1 invalid input, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import bench, io
from .formats import FP32, get_format, ulp
from .mma_emu import MmaShape, NumericPipelineConfig, load_pipeline_config, mma_emulate, quantize_operands
from .oracle import DenseMatrix, matmul_ref
from .perfmodel import calibration as calib
from .perfmodel import model
from .rng import SEED_ENV, default_seed
from .shmem import TRACE_HEADER, SharedMemoryModel, run_trace, trace_rows
from .sparse24 import check_24, compress_24, decompress_24, mma_sp_emulate, prune_24


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2
        raise UsageError(f"{self.prog}: {message}")


def _emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _markdown(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def _table(header, rows, kind: str) -> str:
    if kind == "md":
        return _markdown(header, rows)
    return io.write_csv(None, header, rows)


def _seed(args) -> int:
    return args.seed if args.seed is not None else default_seed()


# ---------------------------------------------------------------------------
# emulate


def _max_ulp_deviation(d: DenseMatrix, ref: DenseMatrix, fmt) -> float:
    worst = 0.0
    for x, r in zip(d.elements.ravel(), ref.elements.ravel()):
        if not (math.isfinite(x) and math.isfinite(r)):
            if x != r:
                return math.inf
            continue
        if x == r:
            continue
        scale = ulp(r, fmt) if r != 0 else fmt.min_subnormal
        worst = max(worst, abs(x - r) / scale)
    return worst


def cmd_emulate(args) -> int:
    shape = MmaShape.parse(args.shape)
    cfg = NumericPipelineConfig.for_formats(args.ab, args.cd)
    if args.pipeline_config:
        cfg = load_pipeline_config(args.pipeline_config, base=cfg)
    a = io.read_matrix(args.a_file)
    b = io.read_matrix(args.b_file)
    c = io.read_matrix(args.c_file) if args.c_file else DenseMatrix.zeros(shape.m, shape.n)
    if args.sparse:
        d = mma_sp_emulate(compress_24(a), b, c, shape, cfg)
    else:
        d = mma_emulate(a, b, c, shape, cfg)
    qa, qb, qc = quantize_operands(a.elements, b.elements, c.elements, cfg)
    ref = matmul_ref(qa, qb, qc, precision="binary64")
    dev = _max_ulp_deviation(d, ref, cfg.cd_format)
    _emit(io.dumps_matrix(d), args.out)
    msg = f"max_ulp_deviation_vs_binary64={dev:g} ({cfg.cd_format.name} ulps)\n"
    (sys.stderr if args.out in (None, "-") else sys.stdout).write(msg)
    return 0


# ---------------------------------------------------------------------------
# sparse


def cmd_sparse(args) -> int:
    if args.action == "check":
        m = io.read_matrix(args.input)
        bad = check_24(m)
        if bad is None:
            print("valid")
            return 0
        print(f"invalid: row {bad[0]}, group {bad[1]}")
        return 1
    if args.action == "compress":
        _emit(io.dumps_sparse(compress_24(io.read_matrix(args.input))), args.out)
    elif args.action == "prune":
        _emit(io.dumps_matrix(prune_24(io.read_matrix(args.input))), args.out)
    elif args.action == "decompress":
        _emit(io.dumps_matrix(decompress_24(io.read_sparse(args.input))), args.out)
    return 0


# ---------------------------------------------------------------------------
# bench


def _load_experiment(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    return bench.parse_experiment_config(Path(args.config).read_text())


def _write_reports(args, header, rows, probes=(), chains=()) -> None:
    _emit(_table(header, rows, args.table), args.out)
    if args.json:
        Path(args.json).write_text(bench.report_json(probes, chains))


def cmd_bench_probe(args) -> int:
    conf = _load_experiment(args)
    fmt = conf.get("format") or get_format(args.format)
    cd = conf.get("cd_format") or get_format(args.cd)
    init = conf.get("init_mode") or bench.InitMode.parse(args.init)
    trials = conf.get("trials", args.trials)
    seed = conf.get("seed", _seed(args))
    ops = [conf["operation"]] if "operation" in conf else (
        list(bench.Operation) if args.operation == "all" else [bench.Operation.parse(args.operation)]
    )
    results = [
        bench.run_probe(bench.ProbeCase(op, init, fmt, cd, trials, seed), workers=args.workers) for op in ops
    ]
    _write_reports(args, bench.REPORT_COLUMNS, bench.probe_rows(results), probes=results)
    return 0


def cmd_bench_chain(args) -> int:
    conf = _load_experiment(args)
    formats = [conf["format"]] if "format" in conf else [get_format(f) for f in args.format.split(",")]
    cd = conf.get("cd_format") or get_format(args.cd)
    inits = [conf["init_mode"]] if "init_mode" in conf else [bench.InitMode.parse(i) for i in args.init.split(",")]
    n_max = conf.get("chain_length", args.n_max)
    trials = conf.get("trials", args.trials)
    seed = conf.get("seed", _seed(args))
    results = []
    for fmt in formats:
        for init in inits:
            cfg = bench.ChainConfig(fmt, cd if fmt.name == "FP16" else FP32, n_max, init, trials, seed)
            results.append(bench.run_chain(cfg, workers=args.workers))
    _write_reports(args, bench.REPORT_COLUMNS, bench.chain_rows(results), chains=results)
    return 0


# ---------------------------------------------------------------------------
# perf


def _records(args):
    return calib.load_calibration(args.calibration) if args.calibration else None


def _throughput_unit(kind: str) -> str:
    return "bytes/clk/SM" if kind == "ldmatrix" else "FMA/clk/SM"


def cmd_perf_lookup(args) -> int:
    rec = calib.lookup(args.arch, args.instr, args.ab, args.cd, args.shape, _records(args))
    header = ("arch", "kind", "ab", "cd", "shape", "completion_cycles", "warps", "ilp", "latency_cycles",
              f"throughput_{_throughput_unit(rec.kind).replace('/', '_per_')}")
    rows = [
        (rec.arch, rec.kind, rec.ab_type, rec.cd_type, rec.shape, calib._fmt(rec.completion_latency), p.warps, p.ilp,
         calib._fmt(p.latency), calib._fmt(p.throughput))
        for p in rec.convergence_points
    ]
    _emit(_table(header, rows, args.table), args.out)
    return 0


def cmd_perf_predict(args) -> int:
    rec = calib.lookup(args.arch, args.instr, args.ab, args.cd, args.shape, _records(args))
    params = model.fit_params(rec)
    unit = _throughput_unit(rec.kind)
    if args.sweep:
        rows = [(w, i, f"{p.latency:.2f}", f"{p.throughput:.1f}") for w, i, p in model.sweep(params)]
        header = ("warps", "ilp", "latency_cycles", "throughput_" + unit.replace("/", "_per_"))
        _emit(_table(header, rows, args.table), args.out)
        return 0
    p = model.predict(params, args.warps, args.ilp)
    line = (f"{rec.describe()} warps={args.warps} ilp={args.ilp} "
            f"latency={p.latency:.2f} cycles throughput={p.throughput:.1f} {unit}\n")
    _emit(line, args.out)
    return 0


def cmd_calib_dump(args) -> int:
    records = calib.load_calibration(args.calibration) if args.calibration else calib.default_records()
    if args.checksum:
        _emit(calib.checksum(records) + "\n", args.out)
        return 0
    text = calib.dump_markdown(records) if args.table == "md" else calib.dump_calibration(records)
    _emit(text, args.out)
    return 0


# ---------------------------------------------------------------------------
# ldmatrix trace


def cmd_ldmatrix_trace(args) -> int:
    text = sys.stdin.read() if args.trace == "-" else Path(args.trace).read_text()
    mem = SharedMemoryModel(size=args.smem_bytes)
    results = run_trace(text.splitlines(), mem)
    _emit(_table(TRACE_HEADER, trace_rows(results), args.table), args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_table(p) -> None:
    p.add_argument("--table", choices=("csv", "md"), default="csv", help="output table style (default csv)")


def _add_perf_target(p) -> None:
    p.add_argument("--arch", required=True, help="GPU: A100, RTX3070Ti or RTX2080Ti")
    p.add_argument("--instr", default="mma", choices=("mma", "mma_sp", "ldmatrix"), help="instruction kind")
    p.add_argument("--ab", default="FP16", help="A/B type: FP16, TF32, INT8 (ignored for ldmatrix)")
    p.add_argument("--cd", default="FP32", help="C/D type: FP32, FP16, INT32 (ignored for ldmatrix)")
    p.add_argument("--shape", default="m16n8k16", help="mma shape such as m16n8k16, or x1/x2/x4 for ldmatrix")
    p.add_argument("--calibration", help="calibration CSV to use instead of the bundled dataset")


def _command(sub, name: str, text: str):
    return sub.add_parser(name, help=text, description=text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tcemu", description="Tensor Core numerics emulator and performance model.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    seed_help = f"64-bit RNG seed (default: ${SEED_ENV} or 42)"

    p = _command(sub, "emulate", "emulate one mma (or mma.sp) on CSV matrices")
    p.add_argument("--shape", required=True, help="mma shape, e.g. m16n8k8")
    p.add_argument("--ab", default="FP16", help="A/B format: FP16, BF16, TF32")
    p.add_argument("--cd", default="FP32", help="C/D format: FP32, FP16")
    p.add_argument("--a-file", required=True, help="A matrix CSV (m x k)")
    p.add_argument("--b-file", required=True, help="B matrix CSV (k x n)")
    p.add_argument("--c-file", help="C matrix CSV (m x n); zeros if omitted")
    p.add_argument("--pipeline-config", help="key = value pipeline config overriding --ab/--cd")
    p.add_argument("--sparse", action="store_true", help="compress A as 2:4 and run mma.sp")
    p.add_argument("--out", help="output D CSV (default stdout)")
    p.set_defaults(func=cmd_emulate)

    p = _command(sub, "sparse", "2:4 sparsity tools")
    p.add_argument("action", choices=("check", "compress", "decompress", "prune"))
    p.add_argument("--in", dest="input", required=True, help="input matrix CSV (sparse file for decompress)")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_sparse)

    p = _command(sub, "bench-probe", "element-wise probe error (mean |error| vs binary32 CPU result)")
    p.add_argument("--operation", default="all",
                   help="Multiplication, InnerProductAdd, AccumulationAdd or all (default all)")
    p.add_argument("--format", default="BF16", help="A/B format: BF16, FP16, TF32")
    p.add_argument("--cd", default="FP32", help="C/D format: FP32 or FP16 (FP16 only with FP16 A/B)")
    p.add_argument("--init", default="low", help="low (values pre-quantized) or fp32 (conversion loss included)")
    p.add_argument("--trials", type=int, default=10_000, help="number of trials (default 10000)")
    p.add_argument("--seed", type=lambda s: int(s, 0), help=seed_help)
    p.add_argument("--workers", type=int, default=1, help="worker processes; results do not depend on it")
    p.add_argument("--config", help="key = value experiment config file")
    p.add_argument("--out", help="report CSV (default stdout)")
    p.add_argument("--json", help="also write a JSON report here")
    _add_table(p)
    p.set_defaults(func=cmd_bench_probe)

    p = _command(sub, "bench-chain", "chain matrix multiplication, relative L2 error per chain length N")
    p.add_argument("--format", default="BF16,FP16,TF32", help="comma-separated A/B formats")
    p.add_argument("--cd", default="FP32", help="C/D format for FP16 chains: FP32 or FP16")
    p.add_argument("--init", default="low", help="comma-separated init modes: low, fp32")
    p.add_argument("--n-max", type=int, default=20, help="largest chain length N (default 20)")
    p.add_argument("--trials", type=int, default=1000, help="trials per N (default 1000)")
    p.add_argument("--seed", type=lambda s: int(s, 0), help=seed_help)
    p.add_argument("--workers", type=int, default=1, help="worker processes; results do not depend on it")
    p.add_argument("--config", help="key = value experiment config file")
    p.add_argument("--out", help="report CSV (default stdout)")
    p.add_argument("--json", help="also write a JSON report here")
    _add_table(p)
    p.set_defaults(func=cmd_bench_chain)

    p = _command(sub, "perf-lookup", "calibrated completion latency (cycles) and convergence points")
    _add_perf_target(p)
    p.add_argument("--out", help="output file (default stdout)")
    _add_table(p)
    p.set_defaults(func=cmd_perf_lookup)

    p = _command(sub, "perf-predict",
                 "predicted latency (cycles) and throughput (FMA/clk/SM, bytes/clk/SM for ldmatrix)")
    _add_perf_target(p)
    p.add_argument("--warps", type=int, default=1, help="warps per SM (1..16)")
    p.add_argument("--ilp", type=int, default=1, help="independent instructions per warp (1..8)")
    p.add_argument("--sweep", action="store_true", help="emit the warps {1,2,4,6,8,12,16} x ilp 1..6 grid")
    p.add_argument("--out", help="output file (default stdout)")
    _add_table(p)
    p.set_defaults(func=cmd_perf_predict)

    p = _command(sub, "ldmatrix-trace",
                 "cost a trace of ldmatrix/ldshared requests (transactions, ways, latency in cycles)")
    p.add_argument("--trace", required=True, help="trace file, or - for stdin")
    p.add_argument("--smem-bytes", type=int, default=164 * 1024, help="shared memory size in bytes")
    p.add_argument("--out", help="output CSV (default stdout)")
    _add_table(p)
    p.set_defaults(func=cmd_ldmatrix_trace)

    p = _command(sub, "calib-dump", "print the calibration dataset (cycles; FMA/clk/SM or bytes/clk/SM)")
    p.add_argument("--calibration", help="calibration CSV to use instead of the bundled dataset")
    p.add_argument("--checksum", action="store_true", help="print the sha256 of the dataset instead")
    p.add_argument("--out", help="output file (default stdout)")
    _add_table(p)
    p.set_defaults(func=cmd_calib_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except AssertionError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 2
    except (ValueError, LookupError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
