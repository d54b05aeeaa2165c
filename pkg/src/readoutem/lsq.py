"""Least-squares mitigation by exact inversion of the product channel.

For an invertible ``R`` the least-squares problem
``min_Q sum_s [P(s) - (RQ)(s)]^2`` is solved exactly by ``Q = R^{-1} P``,
so only the inversion is implemented.  The result is a quasi distribution.
"""
from __future__ import annotations

from .core import (
    DENSE_MAX,
    PROBABILITY,
    ShotRecord,
    SparseDistribution,
    ValidationError,
    as_subset,
    empirical_marginal,
)
from .noise_model import ProductChannel, apply_inverse

MARGINAL_MAX = 20


def mitigate_full_lsq(
    p: SparseDistribution,
    ch: ProductChannel,
    project: bool = False,
    n_dense_max: int = DENSE_MAX,
) -> SparseDistribution:
    """Return ``R^{-1} p`` (quasi mode).

    With ``project=True`` negative weights are clipped to zero and the rest
    renormalized, giving a probability-mode result.  The projection is a
    convenience post-step; the raw inversion is the default so negativity
    stays visible.  Use ``result.is_nonnegative()`` to check the sign.
    """
    q = apply_inverse(ch, p, n_dense_max)
    if project:
        return project_to_simplex(q)
    return q


def project_to_simplex(q: SparseDistribution) -> SparseDistribution:
    clipped = {s: w for s, w in q.weights.items() if w > 0}
    total = sum(clipped.values())
    if total <= 0:
        raise ValidationError("no positive weight left to renormalize")
    return SparseDistribution(q.n, {s: w / total for s, w in clipped.items()}, PROBABILITY)


def mitigate_marginal_lsq(
    record: ShotRecord,
    ch: ProductChannel,
    subset,
    project: bool = False,
) -> SparseDistribution:
    """LSQ on the empirical marginal of ``subset`` with the restricted channel."""
    if ch.n != record.n:
        raise ValidationError(f"channel has {ch.n} qubits, record has {record.n}")
    subset = as_subset(subset, record.n)
    if len(subset) > MARGINAL_MAX:
        raise ValidationError(f"marginal size {len(subset)} exceeds {MARGINAL_MAX}")
    marginal = empirical_marginal(record, subset)
    return mitigate_full_lsq(marginal, ch.restrict(subset), project=project)

