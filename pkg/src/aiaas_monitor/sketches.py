"""Bounded-memory summaries used by the audit informer.

``DistinctSketch`` counts distinct identity tokens. Small sets are counted
exactly from a buffer of 64-bit hashes; past the buffer limit the count comes
from a register array (HyperLogLog layout) read with Ertl's improved raw
estimator, which stays unbiased across the small/large cardinality boundary
without empirical bias tables. Registers are maintained in both modes so
merging never needs the original tokens.

``HeavyHitterSketch`` is the Space-Saving algorithm (Metwally et al., 2005):
k counters, each with an overestimation error, such that for every tracked
item ``count - error <= true_count <= count`` and ``error <= N / k``.
"""

from __future__ import annotations

import base64
import hashlib
import heapq
import math
from collections import Counter
from typing import Hashable, Iterable

DEFAULT_PRECISION = 12
EXACT_LIMIT = 256
DEFAULT_HH_CAPACITY = 1024


def hash64(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")


def _sigma(x: float) -> float:
    if x == 1.0:
        return math.inf
    y = 1.0
    z = x
    while True:
        x *= x
        z_old = z
        z += x * y
        y += y
        if z == z_old:
            return z


def _tau(x: float) -> float:
    if x == 0.0 or x == 1.0:
        return 0.0
    y = 1.0
    z = 1.0 - x
    while True:
        x = math.sqrt(x)
        z_old = z
        y *= 0.5
        z -= (1.0 - x) ** 2 * y
        if z == z_old:
            return z / 3.0


class DistinctSketch:
    """Hybrid exact/probabilistic distinct counter.

    Parameters
    ----------
    p : int
        Precision; the sketch keeps ``2**p`` registers.
    exact_limit : int
        Largest set size counted exactly. Once exceeded the sketch switches
        to probabilistic mode for good.
    """

    __slots__ = ("p", "exact_limit", "_q", "_registers", "_exact")

    def __init__(self, p: int = DEFAULT_PRECISION, exact_limit: int = EXACT_LIMIT) -> None:
        if not 4 <= p <= 18:
            raise ValueError(f"precision must be in [4, 18], got {p}")
        self.p = p
        self.exact_limit = exact_limit
        self._q = 64 - p
        self._registers = bytearray(1 << p)
        self._exact: set[int] | None = set()

    @property
    def m(self) -> int:
        return 1 << self.p

    @property
    def is_exact(self) -> bool:
        return self._exact is not None

    @property
    def mode(self) -> str:
        return "exact" if self.is_exact else "probabilistic"

    @property
    def registers(self) -> bytes:
        return bytes(self._registers)

    def add(self, token: str) -> None:
        self.add_hash(hash64(token))

    def add_hash(self, h: int) -> None:
        q = self._q
        idx = h >> q
        rank = q - (h & ((1 << q) - 1)).bit_length() + 1
        if rank > self._registers[idx]:
            self._registers[idx] = rank
        if self._exact is not None:
            self._exact.add(h)
            if len(self._exact) > self.exact_limit:
                self._exact = None

    def update(self, tokens: Iterable[str]) -> None:
        for token in tokens:
            self.add_hash(hash64(token))

    def estimate(self) -> float:
        if self._exact is not None:
            return float(len(self._exact))
        return self._register_estimate()

    def _register_estimate(self) -> float:
        m, q = self.m, self._q
        hist = Counter(self._registers)
        z = m * _tau(1.0 - hist.get(q + 1, 0) / m)
        for k in range(q, 0, -1):
            z = 0.5 * (z + hist.get(k, 0))
        z += m * _sigma(hist.get(0, 0) / m)
        return m * m / (2.0 * math.log(2.0) * z)

    def relative_error_bound(self) -> float:
        """Zero in exact mode, the standard error ``1.04 / sqrt(m)`` otherwise."""
        return 0.0 if self.is_exact else 1.04 / math.sqrt(self.m)

    def merge(self, other: DistinctSketch) -> DistinctSketch:
        if other.p != self.p:
            raise ValueError(f"cannot merge precision {self.p} with {other.p}")
        out = DistinctSketch(self.p, min(self.exact_limit, other.exact_limit))
        out._registers = bytearray(max(a, b) for a, b in zip(self._registers, other._registers))
        if self._exact is not None and other._exact is not None:
            union = self._exact | other._exact
            out._exact = union if len(union) <= out.exact_limit else None
        else:
            out._exact = None
        return out

    def copy(self) -> DistinctSketch:
        out = DistinctSketch(self.p, self.exact_limit)
        out._registers = bytearray(self._registers)
        out._exact = set(self._exact) if self._exact is not None else None
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DistinctSketch):
            return NotImplemented
        return (
            self.p == other.p
            and self.exact_limit == other.exact_limit
            and self._registers == other._registers
            and self._exact == other._exact
        )

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "exact_limit": self.exact_limit,
            "registers": base64.b64encode(bytes(self._registers)).decode("ascii"),
            "exact": sorted(self._exact) if self._exact is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> DistinctSketch:
        out = cls(data["p"], data["exact_limit"])
        out._registers = bytearray(base64.b64decode(data["registers"]))
        out._exact = set(data["exact"]) if data["exact"] is not None else None
        return out

    def __repr__(self) -> str:
        return f"DistinctSketch(p={self.p}, mode={self.mode}, estimate={self.estimate():.1f})"


class HeavyHitterSketch:
    """Space-Saving frequent-item summary with capacity ``k``."""

    def __init__(self, k: int = DEFAULT_HH_CAPACITY) -> None:
        if k < 1:
            raise ValueError("capacity must be positive")
        self.k = k
        self.total = 0
        self._table: dict[Hashable, list[int]] = {}  # item -> [count, error, seq]
        self._heap: list[tuple[int, int, Hashable]] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, item: Hashable) -> bool:
        return item in self._table

    def add(self, item: Hashable) -> None:
        self.total += 1
        entry = self._table.get(item)
        if entry is not None:
            entry[0] += 1
            heapq.heappush(self._heap, (entry[0], entry[2], item))
        elif len(self._table) < self.k:
            self._insert(item, 1, 0)
        else:
            floor = self._pop_min()
            self._insert(item, floor + 1, floor)
        if len(self._heap) > 8 * self.k:
            self._rebuild_heap()

    def _insert(self, item: Hashable, count: int, error: int) -> None:
        self._seq += 1
        self._table[item] = [count, error, self._seq]
        heapq.heappush(self._heap, (count, self._seq, item))

    def _pop_min(self) -> int:
        # Lazy deletion: heap entries go stale whenever a counter is bumped.
        while True:
            count, seq, item = heapq.heappop(self._heap)
            entry = self._table.get(item)
            if entry is not None and entry[0] == count and entry[2] == seq:
                del self._table[item]
                return count

    def _rebuild_heap(self) -> None:
        self._heap = [(c, s, item) for item, (c, _e, s) in self._table.items()]
        heapq.heapify(self._heap)

    def estimate(self, item: Hashable) -> tuple[int, int]:
        """Return ``(count, error)``; untracked items report ``(min_count, min_count)``."""
        entry = self._table.get(item)
        if entry is not None:
            return entry[0], entry[1]
        floor = min((e[0] for e in self._table.values()), default=0) if len(self._table) >= self.k else 0
        return floor, floor

    def items(self) -> list[tuple[Hashable, int, int]]:
        return sorted(
            ((item, c, e) for item, (c, e, _s) in self._table.items()),
            key=lambda t: (-t[1], str(t[0])),
        )

    def frequent(self, phi: float) -> list[tuple[Hashable, int, int]]:
        """Items whose upper-bound count reaches ``phi * total``; no false negatives."""
        if not 0.0 < phi < 1.0:
            raise ValueError(f"phi must lie in (0, 1), got {phi}")
        cut = phi * self.total
        return [t for t in self.items() if t[1] >= cut]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HeavyHitterSketch):
            return NotImplemented
        return (self.k, self.total, self._seq, self._table) == (
            other.k, other.total, other._seq, other._table
        )

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "total": self.total,
            "seq": self._seq,
            "table": sorted(([str(i), *v] for i, v in self._table.items()), key=lambda r: r[3]),
        }

    @classmethod
    def from_dict(cls, data: dict) -> HeavyHitterSketch:
        out = cls(data["k"])
        out.total = data["total"]
        out._seq = data["seq"]
        out._table = {item: [c, e, s] for item, c, e, s in data["table"]}
        out._rebuild_heap()
        return out
