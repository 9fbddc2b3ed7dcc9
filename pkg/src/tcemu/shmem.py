"""Banked shared memory, ``ldmatrix`` distribution and conflict latency.

Multi-matrix ``ldmatrix`` requests are costed as one 128-byte phase per
8x8 matrix; each phase costs its bank-conflict ways. This follows the
measured latencies (x1/x2/x4 line up with 1/2/4-way ``ld.shared``) even
though a profiler reports no bank conflicts for x2/x4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .formats import FloatFormat, decode_array, encode_array

BANKS = 32
BANK_WIDTH = 4
WARP_SIZE = 32
ROW_BYTES = 16
DEFAULT_SIZE = 164 * 1024

LDSHARED_BASE_LATENCY = 23.0
CYCLES_PER_WAY = 2.0


class SharedMemoryError(ValueError):
    pass


def bank(address: int) -> int:
    return (address // BANK_WIDTH) % BANKS


@dataclass
class SharedMemoryModel:
    size: int = DEFAULT_SIZE
    banks: int = BANKS
    bank_width: int = BANK_WIDTH
    contents: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.contents is None:
            self.contents = np.zeros(self.size, dtype=np.uint8)
        else:
            self.contents = np.array(self.contents, dtype=np.uint8).reshape(-1)
            self.size = self.contents.size

    def bank(self, address: int) -> int:
        return (address // self.bank_width) % self.banks

    def _check(self, address: int, nbytes: int) -> None:
        if address < 0 or address + nbytes > self.size:
            raise SharedMemoryError(f"address range [{address}, {address + nbytes}) outside {self.size}-byte memory")

    def read(self, address: int, nbytes: int) -> bytes:
        self._check(address, nbytes)
        return self.contents[address : address + nbytes].tobytes()

    def write(self, address: int, data: bytes) -> None:
        self._check(address, len(data))
        self.contents[address : address + len(data)] = np.frombuffer(bytes(data), dtype=np.uint8)

    def store_matrix(self, values, fmt: FloatFormat, row_addresses: Sequence[int]) -> None:
        """Store each row of ``values`` (encoded little-endian in ``fmt``) at its address."""
        values = np.asarray(values, dtype=np.float64)
        nbytes = fmt.storage_bits // 8
        bits = encode_array(values, fmt)
        for row, addr in zip(bits, row_addresses):
            raw = b"".join(int(v).to_bytes(nbytes, "little") for v in row)
            self.write(int(addr), raw)


@dataclass(frozen=True)
class LdmatrixRequest:
    """``n_matrices`` in {1, 2, 4}; lanes ``0 .. 8*n-1`` supply row addresses, others are ignored."""

    n_matrices: int
    row_addresses: tuple

    def __post_init__(self) -> None:
        if self.n_matrices not in (1, 2, 4):
            raise SharedMemoryError(f"ldmatrix supports x1, x2, x4, not x{self.n_matrices}")
        addrs = tuple(self.row_addresses)
        if len(addrs) < self.active_lanes or len(addrs) > WARP_SIZE:
            raise SharedMemoryError(f"need {self.active_lanes} row addresses (at most 32), got {len(addrs)}")
        for lane in range(self.active_lanes):
            if addrs[lane] is None or int(addrs[lane]) % ROW_BYTES:
                raise SharedMemoryError(f"lane {lane}: row address {addrs[lane]} is not 16-byte aligned")
        object.__setattr__(self, "row_addresses", addrs)

    @property
    def active_lanes(self) -> int:
        return 8 * self.n_matrices

    def active_addresses(self) -> list[int]:
        return [int(a) for a in self.row_addresses[: self.active_lanes]]


def ldmatrix_emulate(mem: SharedMemoryModel, req: LdmatrixRequest) -> np.ndarray:
    """Return ``(32, n)`` uint32 registers: lane ``4r+t`` slot ``q`` holds bytes ``[4t, 4t+4)`` of row ``8q+r``."""
    regs = np.zeros((WARP_SIZE, req.n_matrices), dtype=np.uint32)
    addrs = req.active_addresses()
    for q in range(req.n_matrices):
        for r in range(8):
            row = mem.read(addrs[8 * q + r], ROW_BYTES)
            for t in range(4):
                regs[4 * r + t, q] = int.from_bytes(row[4 * t : 4 * t + 4], "little")
    return regs


def ldmatrix_values(mem: SharedMemoryModel, req: LdmatrixRequest, fmt: FloatFormat) -> np.ndarray:
    """Registers of a 16-bit load decoded to values, shape ``(32, n, 2)`` (low half first)."""
    if fmt.storage_bits != 16:
        raise SharedMemoryError("ldmatrix distributes 16-bit elements")
    regs = ldmatrix_emulate(mem, req).astype(np.uint64)
    halves = np.stack([regs & np.uint64(0xFFFF), regs >> np.uint64(16)], axis=-1)
    return decode_array(halves, fmt)


def bank_conflict_ways(addresses: Iterable[int | None]) -> int:
    """Max number of distinct words any bank must serve; same-word requests broadcast."""
    words_per_bank: dict[int, set[int]] = {}
    for lane, addr in enumerate(addresses):
        if addr is None:
            continue
        addr = int(addr)
        if addr % BANK_WIDTH:
            raise SharedMemoryError(f"lane {lane}: address {addr} is not 4-byte aligned")
        word = addr // BANK_WIDTH
        words_per_bank.setdefault(word % BANKS, set()).add(word)
    if not words_per_bank:
        raise SharedMemoryError("no active addresses")
    return max(len(words) for words in words_per_bank.values())


def ldshared_latency(ways: int) -> float:
    """Cycles for a warp-wide 4-byte ``ld.shared`` with the given conflict ways."""
    if ways < 1:
        raise ValueError(f"ways must be >= 1, got {ways}")
    return LDSHARED_BASE_LATENCY + CYCLES_PER_WAY * (ways - 1)


@dataclass(frozen=True)
class LdmatrixCost:
    transactions: int
    ways_equivalent: int
    phase_ways: tuple

    @property
    def max_ways(self) -> int:
        return max(self.phase_ways)

    @property
    def latency(self) -> float:
        return ldshared_latency(self.ways_equivalent)


def ldmatrix_transactions(req: LdmatrixRequest, mem: SharedMemoryModel | None = None) -> LdmatrixCost:
    """Split the request into one 128-byte phase per matrix and sum their conflict ways."""
    addrs = req.active_addresses()
    if mem is not None:
        for a in addrs:
            mem._check(a, ROW_BYTES)
    phases = []
    for q in range(req.n_matrices):
        words = [a + 4 * t for a in addrs[8 * q : 8 * q + 8] for t in range(4)]
        phases.append(bank_conflict_ways(words))
    total = sum(phases)
    return LdmatrixCost(total, total, tuple(phases))


# ---------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class TraceResult:
    request_id: int
    transactions: int
    ways: int
    latency_cycles: float


def _parse_addr(text: str) -> int:
    return int(text, 0)


def run_trace(lines: Iterable[str], mem: SharedMemoryModel | None = None) -> list[TraceResult]:
    """Cost each ``ldmatrix xN ...`` / ``ldshared ...`` line; ``#`` comments and blanks are skipped."""
    results = []
    for lineno, line in enumerate(lines, 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        op = parts[0].lower()
        try:
            if op == "ldmatrix":
                if len(parts) < 2 or not parts[1].lower().startswith("x"):
                    raise SharedMemoryError("expected 'ldmatrix xN addr...'")
                n = int(parts[1][1:])
                addrs = [_parse_addr(p) for p in parts[2:]]
                if len(addrs) != 8 * n:
                    raise SharedMemoryError(f"ldmatrix x{n} needs {8 * n} addresses, got {len(addrs)}")
                cost = ldmatrix_transactions(LdmatrixRequest(n, tuple(addrs)), mem)
                results.append(TraceResult(len(results), cost.transactions, cost.max_ways, cost.latency))
            elif op == "ldshared":
                addrs = [_parse_addr(p) for p in parts[1:]]
                if len(addrs) != WARP_SIZE:
                    raise SharedMemoryError(f"ldshared needs 32 addresses, got {len(addrs)}")
                if mem is not None:
                    for a in addrs:
                        mem._check(a, BANK_WIDTH)
                ways = bank_conflict_ways(addrs)
                results.append(TraceResult(len(results), ways, ways, ldshared_latency(ways)))
            else:
                raise SharedMemoryError(f"unknown trace op {parts[0]!r}")
        except ValueError as exc:
            raise SharedMemoryError(f"trace line {lineno}: {exc}") from exc
    return results


TRACE_HEADER = ("request_id", "transactions", "ways", "latency_cycles")


def trace_rows(results: Sequence[TraceResult]) -> list[tuple]:
    return [(r.request_id, r.transactions, r.ways, f"{r.latency_cycles:.1f}") for r in results]
