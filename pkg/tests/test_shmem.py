import numpy as np
import pytest

from tcemu.formats import BF16, FP16, FP32, decode_array, round_to_format
from tcemu.fragments import fragment_layout, gather_from_fragments
from tcemu.mma_emu import M16N8K16
from tcemu.shmem import (
    LdmatrixRequest,
    SharedMemoryError,
    SharedMemoryModel,
    bank,
    bank_conflict_ways,
    ldmatrix_emulate,
    ldmatrix_transactions,
    ldmatrix_values,
    ldshared_latency,
    run_trace,
    trace_rows,
)


def _tile_rows(row_bytes, rows=16, col_blocks=2, base=0):
    # lane i supplies row i % 16 of column block i // 16 (the usual x4 addressing)
    return [base + (i % rows) * row_bytes + (i // rows) * 16 for i in range(rows * col_blocks)]


def test_bank_function():
    assert bank(0) == 0 and bank(4) == 1 and bank(128) == 0 and bank(132) == 1


@pytest.mark.parametrize("addrs,ways", [
    ([4 * i for i in range(32)], 1),
    ([64] * 32, 1),
    ([128 * i for i in range(32)], 32),
    ([256 * (i % 4) for i in range(32)], 4),
])
def test_bank_conflict_examples(addrs, ways):
    assert bank_conflict_ways(addrs) == ways


def test_bank_conflict_errors():
    with pytest.raises(SharedMemoryError):
        bank_conflict_ways([2] + [0] * 31)
    with pytest.raises(SharedMemoryError):
        bank_conflict_ways([None] * 32)


def test_broadcast_never_increases_ways():
    rng = np.random.default_rng(0)
    for _ in range(200):
        addrs = list(4 * rng.integers(0, 2048, 31))
        before = bank_conflict_ways(addrs)
        assert bank_conflict_ways(addrs + [addrs[rng.integers(0, 31)]]) == before


@pytest.mark.parametrize("ways,cycles", [(1, 23.0), (2, 25.0), (4, 29.0), (8, 37.0)])
def test_ldshared_latency_table(ways, cycles):
    assert ldshared_latency(ways) == cycles


def test_ldshared_latency_linear():
    assert all(ldshared_latency(w) - ldshared_latency(w - 1) == 2 for w in range(2, 33))
    with pytest.raises(ValueError):
        ldshared_latency(0)


def test_x1_distribution():
    mem = SharedMemoryModel(1024)
    m = round_to_format(np.random.default_rng(1).standard_normal((8, 8)), FP16)
    mem.store_matrix(m, FP16, [16 * r for r in range(8)])
    vals = ldmatrix_values(mem, LdmatrixRequest(1, [16 * r for r in range(8)]), FP16)
    for lane in range(32):
        r, t = lane // 4, lane % 4
        assert vals[lane, 0, 0] == m[r, 2 * t] and vals[lane, 0, 1] == m[r, 2 * t + 1]


def test_zero_memory_gives_zero_registers():
    regs = ldmatrix_emulate(SharedMemoryModel(1024), LdmatrixRequest(4, [16 * i for i in range(32)]))
    assert regs.shape == (32, 4) and not regs.any()


@pytest.mark.parametrize("fmt", [FP16, BF16], ids=lambda f: f.name)
def test_x4_tile_matches_a_fragment(fmt):
    tile = round_to_format(np.random.default_rng(2).standard_normal((16, 16)), fmt)
    mem = SharedMemoryModel(4096)
    mem.store_matrix(tile, fmt, [32 * r for r in range(16)])
    # matrix q = lane // 8: rows 8*(q%2).., column block q//2
    addrs = [32 * (8 * ((i // 8) % 2) + i % 8) + 16 * (i // 16) for i in range(32)]
    vals = ldmatrix_values(mem, LdmatrixRequest(4, addrs), fmt)
    layout = fragment_layout("A", M16N8K16, fmt)
    assert np.array_equal(gather_from_fragments(vals, layout).elements, tile)
    # A (0,0) lands in lane 0 slot 0, consistent with the fragment table
    assert vals[0, 0, 0] == tile[0, 0] and layout.mapping(0, 0, 0) == (0, 0)


def test_distribution_is_a_permutation_of_source_bytes():
    rng = np.random.default_rng(3)
    for n in (1, 2, 4):
        mem = SharedMemoryModel(8192, contents=rng.integers(0, 256, 8192, dtype=np.uint8))
        addrs = list(16 * rng.choice(512, 8 * n, replace=False))
        regs = ldmatrix_emulate(mem, LdmatrixRequest(n, addrs))
        got = sorted(regs.astype("<u4").tobytes())
        want = sorted(b"".join(mem.read(a, 16) for a in addrs))
        assert got == want


def test_exhaustive_8x8_bijectivity():
    # every element index of an 8x8 16-bit matrix appears exactly once
    mem = SharedMemoryModel(256)
    mem.store_matrix(np.arange(64, dtype=float).reshape(8, 8), FP16, [16 * r for r in range(8)])
    vals = ldmatrix_values(mem, LdmatrixRequest(1, [16 * r for r in range(8)]), FP16)
    assert sorted(vals.ravel().tolist()) == list(range(64))


@pytest.mark.parametrize("n,ways", [(1, 1), (2, 2), (4, 4)])
def test_transactions_contiguous(n, ways):
    cost = ldmatrix_transactions(LdmatrixRequest(n, [16 * i for i in range(8 * n)]))
    assert cost.transactions == ways and cost.ways_equivalent == ways
    assert cost.phase_ways == (1,) * n


@pytest.mark.parametrize("n,measured", [(1, 23.1), (2, 25.1), (4, 29.3)])
def test_transaction_latency_tracks_measurements(n, measured):
    cost = ldmatrix_transactions(LdmatrixRequest(n, [16 * i for i in range(8 * n)]))
    assert abs(cost.latency - measured) <= 0.5


def test_padded_tile_conflicts_and_swizzle_fixes_it():
    strided = ldmatrix_transactions(LdmatrixRequest(4, _tile_rows(32)))
    assert strided.phase_ways == (2, 2, 2, 2)
    # 128-byte rows with an XOR swizzle of the 16-byte chunk index
    swizzled = [128 * (i % 16) + 16 * ((i // 16) ^ (i % 8)) for i in range(32)]
    assert len(set(a // 128 for a in swizzled)) == 16
    cost = ldmatrix_transactions(LdmatrixRequest(4, swizzled))
    contiguous = ldmatrix_transactions(LdmatrixRequest(4, [16 * i for i in range(32)]))
    assert cost.ways_equivalent == contiguous.ways_equivalent == 4


def test_request_validation():
    with pytest.raises(SharedMemoryError):
        LdmatrixRequest(3, [0] * 24)
    with pytest.raises(SharedMemoryError):
        LdmatrixRequest(1, [8] + [0] * 7)
    with pytest.raises(SharedMemoryError):
        LdmatrixRequest(2, [0] * 8)
    # inactive lanes are ignored
    LdmatrixRequest(1, [16 * i for i in range(8)] + [3] * 24)
    with pytest.raises(SharedMemoryError):
        ldmatrix_emulate(SharedMemoryModel(64), LdmatrixRequest(1, [16 * i for i in range(8)]))


def test_memory_store_rejects_32_bit_rows_overflow():
    mem = SharedMemoryModel(64)
    with pytest.raises(SharedMemoryError):
        mem.write(60, b"\0" * 8)
    mem.store_matrix(np.ones((1, 4)), FP32, [0])
    assert decode_array(np.frombuffer(mem.read(0, 4), "<u4").astype(np.uint64), FP32)[0] == 1.0


def test_trace():
    lines = [
        "# comment",
        "ldmatrix x1 " + " ".join(str(16 * i) for i in range(8)),
        "ldmatrix x4 " + " ".join(hex(a) for a in _tile_rows(32)),
        "",
        "ldshared " + " ".join(str(128 * i) for i in range(32)),
    ]
    res = run_trace(lines)
    assert trace_rows(res) == [(0, 1, 1, "23.0"), (1, 8, 2, "37.0"), (2, 32, 32, "85.0")]


@pytest.mark.parametrize("line", ["ldmatrix x1 0 16", "ldmatrix 0", "stshared 0", "ldshared 0", "ldmatrix x1 zz"])
def test_trace_errors(line):
    with pytest.raises(SharedMemoryError):
        run_trace([line])
