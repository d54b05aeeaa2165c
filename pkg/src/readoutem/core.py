"""Bitstrings, shot records and sparse distributions over bitstrings.

Bit order convention: index 0 is the leftmost character of the text form,
and corresponds to qubit 0 of a calibration document.  When a bitstring is
mapped to an integer (dense vector index) the leftmost bit is the most
significant one, so ``int(s, 2)`` is the dense index of ``s``.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

PROBABILITY = "probability"
QUASI = "quasi"
NORMALIZATION_MODES = (PROBABILITY, QUASI)

NORM_TOL = 1e-9
DENSE_MAX = 24

Bitstring = str


class ReadoutError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(ReadoutError, ValueError):
    """Input violates a documented precondition."""


class DenseLimitError(ReadoutError):
    """A dense 2**n representation was requested above the configured limit."""


def check_bitstring(s: str, n: int | None = None) -> str:
    if not isinstance(s, str) or not s or s.strip("01"):
        raise ValidationError(f"not a bitstring: {s!r}")
    if n is not None and len(s) != n:
        raise ValidationError(f"bitstring {s!r} has length {len(s)}, expected {n}")
    return s


def bits_to_str(bits: Sequence[int]) -> str:
    return "".join("1" if b else "0" for b in bits)


def str_to_bits(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")


def rows_to_strings(bits: np.ndarray) -> list[str]:
    """Text form of every row of a (M, n) 0/1 array."""
    bits = np.asarray(bits, dtype=np.uint8)
    chars = (bits + ord("0")).astype(np.uint8)
    n = bits.shape[1]
    return [row.tobytes().decode("ascii") for row in chars.reshape(-1, n)]


@dataclass(frozen=True)
class BitSubset:
    """Strictly increasing tuple of qubit indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValidationError("empty bit subset")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValidationError(f"subset indices must be strictly increasing: {idx}")
        if idx[0] < 0:
            raise ValidationError(f"negative qubit index in {idx}")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def check(self, n: int) -> "BitSubset":
        if self.indices[-1] >= n:
            raise ValidationError(f"subset {self.indices} out of range for n={n}")
        return self


def as_subset(subset: BitSubset | Iterable[int], n: int) -> BitSubset:
    if not isinstance(subset, BitSubset):
        subset = BitSubset(tuple(subset))
    return subset.check(n)


class ShotRecord:
    """Ordered list of ``M`` observed bitstrings of length ``n``.

    Stored as a read-only ``(M, n)`` uint8 array.
    """

    __slots__ = ("_bits", "_float_bits")

    def __init__(self, bits):
        arr = np.array(bits, dtype=np.uint8, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError("a shot record needs at least one shot of at least one bit")
        if arr.max() > 1:
            raise ValidationError("shot bits must be 0 or 1")
        arr.setflags(write=False)
        self._bits = arr
        self._float_bits = None

    @classmethod
    def from_strings(cls, shots: Sequence[str]) -> "ShotRecord":
        shots = list(shots)
        if not shots:
            raise ValidationError("a shot record needs at least one shot")
        n = len(shots[0])
        for s in shots:
            check_bitstring(s, n)
        buf = "".join(shots).encode("ascii")
        arr = (np.frombuffer(buf, dtype=np.uint8) - ord("0")).reshape(len(shots), n)
        return cls(arr)

    @classmethod
    def from_counts(cls, counts: Mapping[str, int], n: int | None = None) -> "ShotRecord":
        """Expand a counts map lexicographically by bitstring, counts repeated."""
        shots: list[str] = []
        for s in sorted(counts):
            c = counts[s]
            if int(c) != c or c <= 0:
                raise ValidationError(f"count for {s!r} must be a positive integer, got {c!r}")
            check_bitstring(s, n)
            shots.extend([s] * int(c))
        return cls.from_strings(shots)

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def float_bits(self) -> np.ndarray:
        """The bits as a read-only float array, cached."""
        if self._float_bits is None:
            fb = self._bits.astype(float)
            fb.setflags(write=False)
            self._float_bits = fb
        return self._float_bits

    @property
    def n(self) -> int:
        return self._bits.shape[1]

    @property
    def m(self) -> int:
        return self._bits.shape[0]

    def __len__(self):
        return self.m

    def strings(self) -> list[str]:
        return rows_to_strings(self._bits)

    def take(self, indices) -> "ShotRecord":
        return ShotRecord(self._bits[np.asarray(indices)])

    def counts(self) -> dict[str, int]:
        return dict(Counter(self.strings()))

    def marginal_counts(self, subset: BitSubset | Iterable[int]) -> np.ndarray:
        """Dense count vector of length ``2**l`` over the subset's bits."""
        subset = as_subset(subset, self.n)
        l = len(subset)
        weights = 1 << np.arange(l - 1, -1, -1, dtype=np.int64)
        codes = self._bits[:, list(subset.indices)].astype(np.int64) @ weights
        return np.bincount(codes, minlength=1 << l)

    def __eq__(self, other):
        if not isinstance(other, ShotRecord):
            return NotImplemented
        return np.array_equal(self._bits, other._bits)

    def __repr__(self):
        return f"ShotRecord(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class SparseDistribution:
    """Weights over bitstrings, stored on the support only.

    ``mode="probability"`` requires nonnegative weights summing to one;
    ``mode="quasi"`` only requires the sum to be one.
    """

    n: int
    weights: Mapping[str, float]
    mode: str = PROBABILITY

    def __post_init__(self):
        if self.mode not in NORMALIZATION_MODES:
            raise ValidationError(f"unknown normalization mode {self.mode!r}")
        if self.n < 1:
            raise ValidationError("n must be positive")
        clean = {}
        for s, w in self.weights.items():
            check_bitstring(s, self.n)
            w = float(w)
            if not math.isfinite(w):
                raise ValidationError(f"non-finite weight for {s!r}")
            if w != 0.0:
                clean[s] = w
        if self.mode == PROBABILITY and any(w < 0 for w in clean.values()):
            raise ValidationError("probability-mode distribution has negative weights")
        total = math.fsum(clean.values())
        if abs(total - 1.0) > NORM_TOL:
            raise ValidationError(f"weights sum to {total!r}, expected 1")
        object.__setattr__(self, "weights", MappingProxyType(clean))

    @classmethod
    def from_dense(cls, vec, n: int | None = None, mode: str = PROBABILITY) -> "SparseDistribution":
        vec = np.asarray(vec, dtype=float)
        if n is None:
            n = int(round(math.log2(vec.size)))
        if vec.size != 1 << n:
            raise ValidationError(f"dense vector of size {vec.size} does not match n={n}")
        nz = np.flatnonzero(vec)
        fmt = f"0{n}b"
        return cls(n, {format(int(i), fmt): float(vec[i]) for i in nz}, mode)

    @classmethod
    def uniform(cls, n: int) -> "SparseDistribution":
        return cls.from_dense(np.full(1 << n, 1.0 / (1 << n)), n)

    @classmethod
    def point(cls, s: str) -> "SparseDistribution":
        return cls(len(s), {s: 1.0})

    def to_dense(self, n_dense_max: int = DENSE_MAX) -> np.ndarray:
        if self.n > n_dense_max:
            raise DenseLimitError(f"n={self.n} exceeds the dense limit {n_dense_max}")
        vec = np.zeros(1 << self.n)
        for s, w in self.weights.items():
            vec[int(s, 2)] = w
        return vec

    def __getitem__(self, s: str) -> float:
        return self.weights.get(s, 0.0)

    def __len__(self):
        return len(self.weights)

    @property
    def support(self) -> frozenset[str]:
        return frozenset(self.weights)

    def is_nonnegative(self, tol: float = 1e-12) -> bool:
        return all(w >= -tol for w in self.weights.values())

    def total(self) -> float:
        return math.fsum(self.weights.values())

    def l1_distance(self, other: "SparseDistribution") -> float:
        keys = set(self.weights) | set(other.weights)
        return math.fsum(abs(self[k] - other[k]) for k in keys)


def empirical_distribution(record: ShotRecord) -> SparseDistribution:
    """Relative shot frequencies ``count / M`` over the observed bitstrings."""
    counts = record.counts()
    m = record.m
    return SparseDistribution(record.n, {s: c / m for s, c in counts.items()})


def empirical_marginal(record: ShotRecord, subset) -> SparseDistribution:
    """Empirical distribution of the subset's bits, without building the full one."""
    subset = as_subset(subset, record.n)
    counts = record.marginal_counts(subset)
    return SparseDistribution.from_dense(counts / record.m, len(subset))


def marginalize(dist: SparseDistribution, subset) -> SparseDistribution:
    subset = as_subset(subset, dist.n)
    idx = subset.indices
    if len(idx) == dist.n:
        return dist
    acc: dict[str, list[float]] = {}
    for s, w in dist.weights.items():
        acc.setdefault("".join(s[i] for i in idx), []).append(w)
    return SparseDistribution(len(idx), {k: math.fsum(v) for k, v in acc.items()}, dist.mode)


def relative_entropy(p: SparseDistribution, q: SparseDistribution) -> float:
    """``sum_x p(x) ln(p(x)/q(x))``; ``math.inf`` when q vanishes on p's support."""
    if p.mode != PROBABILITY or q.mode != PROBABILITY:
        raise ValidationError("relative entropy needs probability-mode distributions")
    if p.n != q.n:
        raise ValidationError(f"dimension mismatch: n={p.n} vs n={q.n}")
    terms = []
    for s, ps in p.weights.items():
        qs = q[s]
        if qs <= 0.0:
            return math.inf
        terms.append(ps * math.log(ps / qs))
    return max(math.fsum(terms), 0.0)


def global_correlation(dist: SparseDistribution) -> float:
    """Combined weight of the all-zeros and all-ones strings."""
    return dist["0" * dist.n] + dist["1" * dist.n]


def local_correlation(dist: SparseDistribution, subset) -> float:
    return global_correlation(marginalize(dist, subset))
