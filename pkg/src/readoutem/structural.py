"""Structural mitigation: the ideal distribution is a mixture of K unknown bitstrings.

EM on the per-shot log-likelihood ``(1/M) sum_mu ln sum_nu R(s_mu|xi_nu) p_nu``:

* responsibilities ``gamma[mu, nu]`` are the component posteriors of each shot,
* weights become the mean responsibility of each component,
* each component bitstring is re-chosen to maximize
  ``sum_mu gamma[mu, nu] ln R(s_mu|xi)``.  Because ``ln R`` is a sum over
  bits this maximization is done bit by bit.

The objective is maximized.  Written as a relative entropy ``S[P || RQ]``
between the empirical and the modelled shot distribution it is the same
problem, with the sign flipped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .core import ShotRecord, ValidationError, check_bitstring, rows_to_strings, str_to_bits
from .noise_model import ProductChannel, log_likelihood_matrix

WEIGHT_FLOOR = 1e-15
DROP_BELOW = 1e-12


@dataclass(frozen=True)
class MixtureModel:
    n: int
    components: tuple[tuple[str, float], ...]

    def __post_init__(self):
        comps = tuple((check_bitstring(xi, self.n), float(p)) for xi, p in self.components)
        if not comps:
            raise ValidationError("a mixture needs at least one component")
        if any(p < 0 for _, p in comps):
            raise ValidationError("mixture weights must be nonnegative")
        total = math.fsum(p for _, p in comps)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"mixture weights sum to {total!r}, expected 1")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_arrays(cls, xis: np.ndarray, weights: np.ndarray) -> "MixtureModel":
        return cls(xis.shape[1], tuple(zip(rows_to_strings(xis), np.asarray(weights, dtype=float).tolist())))

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def bitstrings(self) -> list[str]:
        return [xi for xi, _ in self.components]

    @property
    def weights(self) -> np.ndarray:
        return np.array([p for _, p in self.components])

    def xi_array(self) -> np.ndarray:
        return np.stack([str_to_bits(xi) for xi in self.bitstrings])

    def weight_of(self, xi: str) -> float:
        return math.fsum(p for x, p in self.components if x == xi)

    def canonical(self, drop_below: float = DROP_BELOW) -> "MixtureModel":
        """Merge duplicate bitstrings, drop negligible components, sort by bitstring."""
        merged: dict[str, float] = {}
        for xi, p in self.components:
            merged[xi] = merged.get(xi, 0.0) + p
        kept = {xi: p for xi, p in merged.items() if p >= drop_below}
        if not kept:
            kept = {max(merged, key=merged.get): 1.0}
        total = math.fsum(kept.values())
        return MixtureModel(self.n, tuple((xi, kept[xi] / total) for xi in sorted(kept)))


@dataclass(frozen=True)
class EmConfig:
    k: int = 2
    restarts: int = 10
    max_iter: int = 500
    tol_loglik: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be at least 1")
        if self.restarts < 1:
            raise ValidationError("restarts must be at least 1")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")


@dataclass
class EmResult:
    model: MixtureModel
    avg_loglik: float
    iterations: int
    restart_index: int
    converged: bool
    loglik_trace: list[float] = field(default_factory=list)


def _log_joint(record: ShotRecord, ch: ProductChannel, xis: np.ndarray, weights: np.ndarray, loglik=None) -> np.ndarray:
    log_w = np.log(np.maximum(weights, WEIGHT_FLOOR))
    if loglik is None:
        loglik = log_likelihood_matrix(ch, record.float_bits, xis)
    return loglik + log_w[None, :]


def _e_step(record, ch, xis, weights, loglik=None):
    """Responsibilities and the average log-likelihood of the current model.

    ``loglik`` is the (M, K) matrix ``ln R(s_mu|xi_nu)`` if already known.
    """
    log_joint = _log_joint(record, ch, xis, weights, loglik)
    top = log_joint.max(axis=1, keepdims=True)
    joint = np.exp(log_joint - top)
    norm = joint.sum(axis=1, keepdims=True)
    gamma = joint / norm
    return gamma, float((top + np.log(norm)).mean())


def _m_step(record: ShotRecord, ch: ProductChannel, gamma: np.ndarray):
    mass = gamma.sum(axis=0)
    weights = mass / record.m
    L = ch.log_matrices()  # [k, s, xi]
    ones = gamma.T @ record.float_bits  # responsibility mass reading 1, (K, n)
    zeros = mass[:, None] - ones
    score0 = zeros * L[None, :, 0, 0] + ones * L[None, :, 1, 0]
    score1 = zeros * L[None, :, 0, 1] + ones * L[None, :, 1, 1]
    xis = (score1 > score0).astype(np.uint8)
    return xis, weights


def _check(record: ShotRecord, ch: ProductChannel, model: MixtureModel | None = None) -> None:
    if ch.n != record.n:
        raise ValidationError(f"channel has {ch.n} qubits, record has {record.n}")
    if model is not None and model.n != record.n:
        raise ValidationError(f"model has {model.n} bits, record has {record.n}")


def responsibilities(record: ShotRecord, ch: ProductChannel, model: MixtureModel) -> np.ndarray:
    """(M, K) posterior of each component given each shot; rows sum to one."""
    _check(record, ch, model)
    gamma, _ = _e_step(record, ch, model.xi_array(), model.weights)
    return gamma


def avg_loglik(record: ShotRecord, ch: ProductChannel, model: MixtureModel) -> float:
    """Per-shot log-likelihood ``(1/M) sum_mu ln sum_nu R(s_mu|xi_nu) p_nu``."""
    _check(record, ch, model)
    log_joint = _log_joint(record, ch, model.xi_array(), model.weights)
    return float(logsumexp(log_joint, axis=1).mean())


def em_step(record: ShotRecord, ch: ProductChannel, model: MixtureModel) -> MixtureModel:
    """One EM update; per-bit ties resolve to 0."""
    _check(record, ch, model)
    gamma, _ = _e_step(record, ch, model.xi_array(), model.weights)
    xis, weights = _m_step(record, ch, gamma)
    return MixtureModel.from_arrays(xis, weights)


def initial_components(record: ShotRecord, k: int, rng: np.random.Generator, _distinct=None) -> np.ndarray:
    """Up to ``k`` distinct observed shots, drawn with probability proportional to frequency."""
    uniq, counts = _distinct if _distinct is not None else np.unique(record.bits, axis=0, return_counts=True)
    k_eff = min(k, len(uniq))
    pick = rng.choice(len(uniq), size=k_eff, replace=False, p=counts / counts.sum())
    return uniq[pick]


def run_em(
    record: ShotRecord,
    ch: ProductChannel,
    xis: np.ndarray,
    weights: np.ndarray | None = None,
    max_iter: int = 500,
    tol_loglik: float = 1e-10,
):
    """EM from the given components; returns ``(xis, weights, trace, iterations, converged)``.

    ``trace[r]`` is the average log-likelihood at iterate ``r``.  The run stops
    once the bitstrings stop changing and the log-likelihood gain is below
    ``tol_loglik``.
    """
    xis = np.asarray(xis, dtype=np.uint8)
    if weights is None:
        weights = np.full(len(xis), 1.0 / len(xis))
    trace: list[float] = []
    converged = False
    same_strings = False
    it = 0
    loglik = None  # reused while the bitstrings stay put
    while it < max_iter:
        if loglik is None:
            loglik = log_likelihood_matrix(ch, record.float_bits, xis)
        gamma, ll = _e_step(record, ch, xis, weights, loglik)
        trace.append(ll)
        if it > 0 and same_strings and abs(ll - trace[-2]) < tol_loglik:
            converged = True
            break
        new_xis, weights = _m_step(record, ch, gamma)
        same_strings = np.array_equal(new_xis, xis)
        if not same_strings:
            loglik = None
        xis = new_xis
        it += 1
    else:
        trace.append(_e_step(record, ch, xis, weights, loglik)[1])
    return xis, weights, trace, it, converged


def fit_mixture(record: ShotRecord, ch: ProductChannel, cfg: EmConfig | None = None) -> EmResult:
    """Best of ``cfg.restarts`` EM runs by average log-likelihood.

    The returned model has duplicate components merged and components below
    1e-12 weight dropped.
    """
    cfg = cfg or EmConfig()
    _check(record, ch)
    rng = np.random.default_rng(cfg.seed)
    distinct = np.unique(record.bits, axis=0, return_counts=True)
    best: EmResult | None = None
    for r in range(cfg.restarts):
        init = initial_components(record, cfg.k, rng, distinct)
        xis, weights, trace, iters, converged = run_em(
            record, ch, init, max_iter=cfg.max_iter, tol_loglik=cfg.tol_loglik
        )
        if best is None or trace[-1] > best.avg_loglik:
            model = MixtureModel.from_arrays(xis, weights / weights.sum()).canonical()
            best = EmResult(model, trace[-1], iters, r, converged, trace)
    return best


def sweep_k(record: ShotRecord, ch: ProductChannel, k_max: int, cfg: EmConfig | None = None) -> list[EmResult]:
    """Fit ``K = 1 .. k_max``; model selection is left to the caller."""
    cfg = cfg or EmConfig()
    out = []
    for k in range(1, k_max + 1):
        out.append(
            fit_mixture(record, ch, EmConfig(k, cfg.restarts, cfg.max_iter, cfg.tol_loglik, cfg.seed))
        )
    return out


def model_correlation(model: MixtureModel) -> float:
    """Total weight on the all-zeros and all-ones components."""
    return model.weight_of("0" * model.n) + model.weight_of("1" * model.n)


def fit_from(
    record: ShotRecord,
    ch: ProductChannel,
    init: Sequence[str],
    max_iter: int = 500,
    tol_loglik: float = 1e-10,
) -> EmResult:
    """Single EM run from explicit starting bitstrings with uniform weights."""
    _check(record, ch)
    xis = np.stack([str_to_bits(check_bitstring(s, record.n)) for s in init])
    xis, weights, trace, iters, converged = run_em(record, ch, xis, max_iter=max_iter, tol_loglik=tol_loglik)
    model = MixtureModel.from_arrays(xis, weights / weights.sum()).canonical()
    return EmResult(model, trace[-1], iters, 0, converged, trace)
