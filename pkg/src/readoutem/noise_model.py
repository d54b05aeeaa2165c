"""Independent per-qubit readout channel.

The full transition matrix is ``R(s|xi) = prod_k R_k(s_k|xi_k)`` with each
``R_k`` a column-stochastic 2x2 matrix indexed ``[s, xi]``::

    R_k = [[1 - r1_given_0,     r0_given_1],
           [    r1_given_0, 1 - r0_given_1]]

Dense transforms never build the ``2**n x 2**n`` matrix; they apply the n
factors one axis at a time, O(n 2**n).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .core import (
    DENSE_MAX,
    PROBABILITY,
    DenseLimitError,
    QUASI,
    ReadoutError,
    ShotRecord,
    SparseDistribution,
    ValidationError,
    as_subset,
    check_bitstring,
)

RATE_EPS = 1e-9
SINGULAR_TOL = 1e-12


class SingularChannelError(ReadoutError):
    """A qubit channel with ``r1_given_0 + r0_given_1 == 1`` cannot be inverted."""


class CalibrationWarning(UserWarning):
    pass


def _clamp(rate: float) -> float:
    return min(max(rate, RATE_EPS), 1.0 - RATE_EPS)


@dataclass(frozen=True)
class QubitChannel:
    r1_given_0: float
    r0_given_1: float

    def __post_init__(self):
        for name in ("r1_given_0", "r0_given_1"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0 or math.isnan(v):
                raise ValidationError(f"{name}={v!r} outside [0, 1]")
            object.__setattr__(self, name, v)

    @property
    def matrix(self) -> np.ndarray:
        a, b = self.r1_given_0, self.r0_given_1
        return np.array([[1.0 - a, b], [a, 1.0 - b]])

    @property
    def determinant(self) -> float:
        return 1.0 - self.r1_given_0 - self.r0_given_1

    @property
    def is_singular(self) -> bool:
        return abs(self.determinant) < SINGULAR_TOL

    @property
    def inverse(self) -> np.ndarray:
        if self.is_singular:
            raise SingularChannelError(
                f"singular qubit channel r1_given_0={self.r1_given_0}, r0_given_1={self.r0_given_1}"
            )
        a, b = self.r1_given_0, self.r0_given_1
        return np.array([[1.0 - b, -b], [-a, 1.0 - a]]) / self.determinant

    def clamped(self) -> "QubitChannel":
        return QubitChannel(_clamp(self.r1_given_0), _clamp(self.r0_given_1))

    @property
    def log_matrix(self) -> np.ndarray:
        """Entrywise log of the clamped matrix; always finite."""
        return np.log(self.clamped().matrix)

    def entry(self, s: int, xi: int) -> float:
        return float(self.matrix[s, xi])


@dataclass(frozen=True)
class ProductChannel:
    """Tensor product of ``n`` qubit channels; qubit ``k`` is bit ``k`` of a bitstring.

    ``warnings`` carries messages about rates clamped at load time.
    """

    per_qubit: tuple[QubitChannel, ...]
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "per_qubit", tuple(self.per_qubit))
        if not self.per_qubit:
            raise ValidationError("a product channel needs at least one qubit")

    @classmethod
    def from_rates(cls, rates: Iterable[Sequence[float]]) -> "ProductChannel":
        return cls(tuple(QubitChannel(a, b) for a, b in rates))

    @classmethod
    def symmetric(cls, n: int, rate: float) -> "ProductChannel":
        return cls(tuple(QubitChannel(rate, rate) for _ in range(n)))

    @classmethod
    def noiseless(cls, n: int) -> "ProductChannel":
        return cls.symmetric(n, 0.0)

    @property
    def n(self) -> int:
        return len(self.per_qubit)

    @cached_property
    def rates(self) -> np.ndarray:
        """(n, 2) array of ``(r1_given_0, r0_given_1)`` rows."""
        out = np.array([(q.r1_given_0, q.r0_given_1) for q in self.per_qubit])
        out.setflags(write=False)
        return out

    def restrict(self, subset) -> "ProductChannel":
        subset = as_subset(subset, self.n)
        return ProductChannel(tuple(self.per_qubit[i] for i in subset), self.warnings)

    def matrices(self) -> list[np.ndarray]:
        return [q.matrix for q in self.per_qubit]

    @cached_property
    def _log_tables(self) -> np.ndarray:
        tables = np.stack([q.log_matrix for q in self.per_qubit])
        tables.setflags(write=False)
        return tables

    def log_matrices(self) -> np.ndarray:
        """(n, 2, 2) array of clamped log transition tables ``[k, s, xi]``."""
        return self._log_tables

    def inverse_matrices(self) -> list[np.ndarray]:
        return [q.inverse for q in self.per_qubit]

    def is_singular(self) -> bool:
        return any(q.is_singular for q in self.per_qubit)


def _check_lengths(ch: ProductChannel, *strings: str) -> None:
    for s in strings:
        check_bitstring(s, ch.n)


def channel_entry(ch: ProductChannel, s: str, xi: str) -> float:
    """``R(s|xi)`` as the product of the per-qubit factors."""
    _check_lengths(ch, s, xi)
    out = 1.0
    for q, sk, xk in zip(ch.per_qubit, s, xi):
        out *= q.entry(int(sk), int(xk))
    return out


def log_channel_entry(ch: ProductChannel, s: str, xi: str) -> float:
    _check_lengths(ch, s, xi)
    return math.fsum(
        math.log(q.clamped().entry(int(sk), int(xk))) for q, sk, xk in zip(ch.per_qubit, s, xi)
    )


def log_likelihood_matrix(ch: ProductChannel, shots: np.ndarray, xis: np.ndarray) -> np.ndarray:
    """``ln R(s_mu|xi_nu)`` for every shot row and every candidate row, shape (M, K).

    Uses the clamped rates.  Written as a bilinear form in the bits so the
    cost is two matrix products, not an M x K x n tensor.
    """
    L = ch.log_matrices()
    l00, l01, l10, l11 = L[:, 0, 0], L[:, 0, 1], L[:, 1, 0], L[:, 1, 1]
    S = shots if shots.dtype == float else np.asarray(shots, dtype=float)
    X = np.asarray(xis, dtype=float)
    coupling = (l10 - l00)[:, None] + (l11 - l10 - l01 + l00)[:, None] * X.T  # (n, K)
    return S @ coupling + (X @ (l01 - l00) + l00.sum())[None, :]


def kron_apply(factors: Sequence[np.ndarray], vec: np.ndarray) -> np.ndarray:
    """Apply ``factors[0] (x) ... (x) factors[n-1]`` to a length-2**n vector."""
    v = np.asarray(vec, dtype=float)
    for k, f in enumerate(factors):
        v = (f @ v.reshape(1 << k, 2, -1)).reshape(-1)
    return v


def kron_matrix(factors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1))
    for f in factors:
        out = np.kron(out, f)
    return out


class DenseOperator:
    """Forward, transpose and inverse action of a product channel on dense vectors.

    Small registers use the explicit matrix; larger ones the per-axis factors.
    """

    EXPLICIT_MAX = 6

    def __init__(self, ch: ProductChannel, n_dense_max: int = DENSE_MAX):
        if ch.n > n_dense_max:
            raise _dense_error(ch.n, n_dense_max)
        self.n = ch.n
        self._ch = ch
        self._factors = ch.matrices()
        if ch.n <= self.EXPLICIT_MAX:
            matrix = kron_matrix(self._factors)
            self.forward = matrix.dot
            self.transpose = np.ascontiguousarray(matrix.T).dot
        else:
            transposed = [f.T for f in self._factors]
            self.forward = lambda q: kron_apply(self._factors, q)
            self.transpose = lambda w: kron_apply(transposed, w)

    def inverse(self, p: np.ndarray) -> np.ndarray:
        return kron_apply(self._ch.inverse_matrices(), p)


def _dense_error(n, n_dense_max):
    return DenseLimitError(f"n={n} exceeds the dense limit {n_dense_max}; use marginal or structural mitigation")


def _check_dims(ch: ProductChannel, dist: SparseDistribution) -> None:
    if ch.n != dist.n:
        raise ValidationError(f"channel has {ch.n} qubits, distribution has {dist.n}")


def apply_forward(ch: ProductChannel, q: SparseDistribution, n_dense_max: int = DENSE_MAX) -> SparseDistribution:
    """Distribution of the registered bitstrings, ``sum_xi R(s|xi) q(xi)``."""
    _check_dims(ch, q)
    if ch.n > n_dense_max:
        raise _dense_error(ch.n, n_dense_max)
    out = kron_apply(ch.matrices(), q.to_dense(n_dense_max))
    if q.mode == PROBABILITY:
        out = np.maximum(out, 0.0)
    return SparseDistribution.from_dense(out, ch.n, q.mode)


def apply_inverse(ch: ProductChannel, p: SparseDistribution, n_dense_max: int = DENSE_MAX) -> SparseDistribution:
    """``R^{-1} p`` as a quasi distribution; may contain negative weights."""
    _check_dims(ch, p)
    for k, qc in enumerate(ch.per_qubit):
        if qc.is_singular:
            raise SingularChannelError(f"qubit {k} channel is singular (r1_given_0 + r0_given_1 = 1)")
    if ch.n > n_dense_max:
        raise _dense_error(ch.n, n_dense_max)
    out = kron_apply(ch.inverse_matrices(), p.to_dense(n_dense_max))
    return SparseDistribution.from_dense(out, ch.n, QUASI)


def sample_noisy_shots(ch: ProductChannel, q: SparseDistribution, m: int, seed: int) -> ShotRecord:
    """Draw ``xi ~ q`` then flip each bit independently with its readout rate."""
    if m < 1:
        raise ValidationError("number of shots must be at least 1")
    if q.mode != PROBABILITY:
        raise ValidationError("sampling needs a probability-mode distribution")
    _check_dims(ch, q)
    rng = np.random.default_rng(seed)
    keys = sorted(q.weights)
    probs = np.array([q.weights[k] for k in keys])
    support = np.array([[c == "1" for c in k] for k in keys], dtype=np.uint8)
    ideal = support[rng.choice(len(keys), size=m, p=probs / probs.sum())]
    rates = ch.rates
    flip_prob = np.where(ideal == 1, rates[:, 1], rates[:, 0])
    flips = rng.random(ideal.shape) < flip_prob
    return ShotRecord(ideal ^ flips.astype(np.uint8))


def load_calibration(doc) -> ProductChannel:
    """Build a channel from ``{"qubits": [{"r1_given_0": a, "r0_given_1": b}, ...]}``.

    Rates are clamped into ``[1e-9, 1 - 1e-9]``; each clamp is reported in the
    channel's ``warnings`` and as a :class:`CalibrationWarning`.
    """
    if not isinstance(doc, dict) or not isinstance(doc.get("qubits"), list):
        raise ValidationError("calibration document needs a 'qubits' list")
    qubits = doc["qubits"]
    if not qubits:
        raise ValidationError("calibration document lists no qubits")
    per_qubit = []
    notes = []
    for k, entry in enumerate(qubits):
        try:
            a, b = float(entry["r1_given_0"]), float(entry["r0_given_1"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"qubit {k}: malformed calibration entry {entry!r}") from exc
        raw = QubitChannel(a, b)
        clamped = raw.clamped()
        if clamped != raw:
            notes.append(
                f"qubit {k}: rates ({a}, {b}) clamped to "
                f"({clamped.r1_given_0}, {clamped.r0_given_1})"
            )
        per_qubit.append(clamped)
    if "n" in doc and int(doc["n"]) != len(per_qubit):
        raise ValidationError(f"calibration declares n={doc['n']} but lists {len(per_qubit)} qubits")
    for note in notes:
        warnings.warn(note, CalibrationWarning, stacklevel=2)
    return ProductChannel(tuple(per_qubit), tuple(notes))


def calibration_document(ch: ProductChannel) -> dict:
    return {
        "n": ch.n,
        "qubits": [{"r1_given_0": q.r1_given_0, "r0_given_1": q.r0_given_1} for q in ch.per_qubit],
    }
