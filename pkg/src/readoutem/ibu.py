"""Iterative Bayesian unfolding as EM on the relative entropy ``S[P || RQ]``.

One step maps

    Q'(xi) = sum_s P(s) R(s|xi) Q(xi) / (RQ)(s)

and never increases ``S[P || RQ]``.  The dense path works on length-2**n
vectors; :func:`ibu_step_from_shots` evaluates the same update as a sum over
the recorded shots and only touches the support of ``Q``, so it works for
any ``n`` when the starting point is sparse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import logsumexp

from .core import (
    DENSE_MAX,
    PROBABILITY,
    ReadoutError,
    ShotRecord,
    SparseDistribution,
    ValidationError,
    as_subset,
    empirical_marginal,
    relative_entropy,
    str_to_bits,
)
from .noise_model import DenseOperator, ProductChannel, apply_forward, log_likelihood_matrix

MARGINAL_MAX = 20


class InfeasibleSupportError(ReadoutError):
    """An observed bitstring has zero probability under ``RQ``."""


InitSpec = Union[str, SparseDistribution]


@dataclass(frozen=True)
class IbuConfig:
    max_iter: int = 1000
    tol_l1: float = 1e-10
    init: InitSpec = "uniform"
    track_objective: bool = True

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if not self.tol_l1 > 0:
            raise ValidationError("tol_l1 must be positive")
        if isinstance(self.init, str) and self.init not in ("uniform", "empirical"):
            raise ValidationError(f"unknown init {self.init!r}")


@dataclass
class IbuResult:
    q: SparseDistribution
    iterations: int
    converged: bool
    objective_trace: list[float] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else math.nan


def _check(p: SparseDistribution, ch: ProductChannel) -> None:
    if p.mode != PROBABILITY:
        raise ValidationError("IBU needs a probability-mode observed distribution")
    if ch.n != p.n:
        raise ValidationError(f"channel has {ch.n} qubits, distribution has {p.n}")


class _DenseUnfolder:
    """Dense-vector form of the unfolding step for a fixed observed ``P``."""

    def __init__(self, p: np.ndarray, ch: ProductChannel, n_dense_max: int):
        self.op = DenseOperator(ch, n_dense_max)
        self.p = p
        self.observed = p > 0
        self.all_observed = bool(self.observed.all())
        p_obs = p[self.observed]
        self._p_obs = p_obs
        self._plogp = float(np.dot(p_obs, np.log(p_obs)))

    def ratio(self, d: np.ndarray) -> np.ndarray:
        if d.min() > 0.0:
            return self.p / d
        d_obs = d[self.observed]
        if not d_obs.min() > 0.0:
            raise InfeasibleSupportError("an observed bitstring has zero probability under the current estimate")
        out = np.zeros_like(self.p)
        out[self.observed] = self._p_obs / d_obs
        return out

    def objective(self, d: np.ndarray) -> float:
        """``S[P || d]`` for ``d = Rq``."""
        d_obs = d if self.all_observed else d[self.observed]
        with np.errstate(divide="ignore"):
            val = self._plogp - float(np.dot(self._p_obs, np.log(d_obs)))
        return max(val, 0.0)

    def step(self, q: np.ndarray, d: np.ndarray | None = None) -> np.ndarray:
        if d is None:
            d = self.op.forward(q)
        out = self.op.transpose(self.ratio(d))
        out *= q
        return out


def ibu_step(
    p: SparseDistribution,
    ch: ProductChannel,
    q_prev: SparseDistribution,
    n_dense_max: int = DENSE_MAX,
) -> SparseDistribution:
    _check(p, ch)
    if q_prev.mode != PROBABILITY or q_prev.n != p.n:
        raise ValidationError("q_prev must be a probability-mode distribution on the same register")
    unfolder = _DenseUnfolder(p.to_dense(n_dense_max), ch, n_dense_max)
    return SparseDistribution.from_dense(unfolder.step(q_prev.to_dense(n_dense_max)), p.n)


def _initial(p: SparseDistribution, init: InitSpec, n_dense_max: int) -> np.ndarray:
    if isinstance(init, SparseDistribution):
        if init.mode != PROBABILITY or init.n != p.n:
            raise ValidationError("custom init must be a probability distribution on the same register")
        return init.to_dense(n_dense_max)
    if init == "empirical":
        return p.to_dense(n_dense_max)
    size = 1 << p.n
    return np.full(size, 1.0 / size)


def mitigate_full_ibu(
    p: SparseDistribution,
    ch: ProductChannel,
    cfg: IbuConfig | None = None,
    n_dense_max: int = DENSE_MAX,
) -> IbuResult:
    """Iterate the unfolding step until successive iterates differ by < ``tol_l1`` in L1.

    ``objective_trace[r]`` is ``S[P || R Q^(r)]`` for ``r = 0 .. iterations``
    when tracking is on.  Hitting ``max_iter`` returns the last iterate with
    ``converged=False``.
    """
    cfg = cfg or IbuConfig()
    _check(p, ch)
    unfolder = _DenseUnfolder(p.to_dense(n_dense_max), ch, n_dense_max)
    forward, transpose = unfolder.op.forward, unfolder.op.transpose
    pv = unfolder.p
    track = cfg.track_objective
    q = _initial(p, cfg.init, n_dense_max)
    trace: list[float] = []
    converged = False
    it = 0
    while it < cfg.max_iter:
        d = forward(q)
        if track:
            trace.append(unfolder.objective(d))
        q_new = transpose(pv / d if d.min() > 0.0 else unfolder.ratio(d))
        q_new *= q
        it += 1
        delta = float(np.abs(q_new - q).sum())
        q = q_new
        if delta < cfg.tol_l1:
            converged = True
            break
    if track:
        trace.append(unfolder.objective(forward(q)))
    return IbuResult(SparseDistribution.from_dense(q, p.n), it, converged, trace)


def mitigate_marginal_ibu(
    record: ShotRecord,
    ch: ProductChannel,
    subset,
    cfg: IbuConfig | None = None,
) -> IbuResult:
    """Full IBU on the empirical marginal of ``subset`` with the restricted channel."""
    if ch.n != record.n:
        raise ValidationError(f"channel has {ch.n} qubits, record has {record.n}")
    subset = as_subset(subset, record.n)
    if len(subset) > MARGINAL_MAX:
        raise ValidationError(f"marginal size {len(subset)} exceeds {MARGINAL_MAX}")
    marginal = empirical_marginal(record, subset)
    return mitigate_full_ibu(marginal, ch.restrict(subset), cfg)


def lre_objective(
    p: SparseDistribution,
    ch: ProductChannel,
    q: SparseDistribution,
    n_dense_max: int = DENSE_MAX,
) -> float:
    """``S[P || RQ]``; ``math.inf`` when ``RQ`` vanishes somewhere on P's support."""
    if q.mode != PROBABILITY:
        raise ValidationError("the objective is defined for probability-mode Q only")
    _check(p, ch)
    return relative_entropy(p, apply_forward(ch, q, n_dense_max))


def ibu_step_from_shots(record: ShotRecord, ch: ProductChannel, q_prev: SparseDistribution) -> SparseDistribution:
    """The unfolding step written as an average over shots.

    ``Q'(xi) = (1/M) sum_mu R(s_mu|xi) Q(xi) / sum_xi' R(s_mu|xi') Q(xi')``,
    restricted to the support of ``q_prev``.  Likelihoods use the clamped
    rates and are combined in log space, so any register size works.
    """
    if q_prev.mode != PROBABILITY or q_prev.n != record.n or ch.n != record.n:
        raise ValidationError("record, channel and q_prev must share the register")
    keys = sorted(q_prev.weights)
    xis = np.stack([str_to_bits(k) for k in keys])
    log_q = np.log([q_prev.weights[k] for k in keys])
    uniq, counts = np.unique(record.bits, axis=0, return_counts=True)
    log_joint = log_likelihood_matrix(ch, uniq, xis) + log_q[None, :]
    log_post = log_joint - logsumexp(log_joint, axis=1, keepdims=True)
    new = (counts[:, None] * np.exp(log_post)).sum(axis=0) / record.m
    return SparseDistribution(record.n, dict(zip(keys, new.tolist())))

