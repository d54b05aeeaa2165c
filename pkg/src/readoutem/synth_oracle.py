"""Synthetic ground truths, device-like channels and brute-force oracles.

The oracles only use the core data types and :func:`channel_entry`; they
share no code path with the EM-based mitigators they are used to check.
"""
from __future__ import annotations

import itertools

import numpy as np

from .core import ShotRecord, SparseDistribution, ValidationError
from .noise_model import ProductChannel, QubitChannel, channel_entry
from .structural import MixtureModel

LRE_MAX_N = 2
MIXTURE_MAX_N = 4
MIXTURE_MAX_K = 2


def make_ghz_truth(n: int, weight_zero: float = 0.5) -> SparseDistribution:
    if not 0.0 <= weight_zero <= 1.0:
        raise ValidationError("weight_zero must lie in [0, 1]")
    return SparseDistribution(n, {"0" * n: weight_zero, "1" * n: 1.0 - weight_zero})


def make_device_profile(n: int, rate_low: float, rate_high: float, seed: int) -> ProductChannel:
    """Independent rates per qubit and direction, uniform on ``[rate_low, rate_high]``."""
    if not 0.0 <= rate_low <= rate_high < 0.5:
        raise ValidationError("need 0 <= rate_low <= rate_high < 0.5")
    if rate_low == rate_high:
        return ProductChannel.symmetric(n, rate_low)
    rng = np.random.default_rng(seed)
    rates = rng.uniform(rate_low, rate_high, size=(n, 2))
    return ProductChannel(tuple(QubitChannel(a, b) for a, b in rates))


def _strings(n: int) -> list[str]:
    return ["".join(bits) for bits in itertools.product("01", repeat=n)]


def _transition_table(ch: ProductChannel) -> np.ndarray:
    """Explicit ``R[s, xi]`` assembled entry by entry."""
    keys = _strings(ch.n)
    return np.array([[channel_entry(ch, s, xi) for xi in keys] for s in keys])


def simplex_grid(dim: int, step: float) -> np.ndarray:
    """All points of the probability simplex in ``dim`` coordinates with the given spacing."""
    parts = int(round(1.0 / step))
    if abs(parts * step - 1.0) > 1e-9:
        raise ValidationError("grid_step must divide 1")
    axes = np.meshgrid(*[np.arange(parts + 1)] * (dim - 1), indexing="ij")
    head = np.stack([a.ravel() for a in axes], axis=1)
    head = head[head.sum(axis=1) <= parts]
    last = parts - head.sum(axis=1, keepdims=True)
    return np.hstack([head, last]) / parts


def brute_force_lre(p: SparseDistribution, ch: ProductChannel, grid_step: float = 1e-2):
    """Minimize ``S[P || RQ]`` by exhaustive scan of a simplex grid.

    Returns ``(q, objective)`` at the best grid point.
    """
    if p.n > LRE_MAX_N or ch.n != p.n:
        raise ValidationError(f"grid oracle supports n <= {LRE_MAX_N} with a matching channel")
    if grid_step > 1e-2:
        raise ValidationError("grid_step must be at most 1e-2")
    keys = _strings(p.n)
    R = _transition_table(ch)
    pv = np.array([p[k] for k in keys])
    obs = pv > 0
    grid = simplex_grid(len(keys), grid_step)
    image = grid @ R.T
    with np.errstate(divide="ignore"):
        vals = (pv[obs] * (np.log(pv[obs]) - np.log(image[:, obs]))).sum(axis=1)
    best = int(np.argmin(vals))
    q = SparseDistribution(p.n, dict(zip(keys, grid[best].tolist())))
    return q, float(vals[best])


def _best_weight(a: np.ndarray, b: np.ndarray, counts: np.ndarray, grid_points: int = 1001) -> tuple[float, float]:
    """Maximize ``sum_mu c_mu ln(w a_mu + (1-w) b_mu) / sum c`` over ``w`` in [0, 1].

    Grid scan, then bisection on the derivative of the concave objective
    inside the bracket around the best grid point.
    """
    total = counts.sum()

    def value(w):
        with np.errstate(divide="ignore"):
            return float((counts * np.log(w * a + (1 - w) * b)).sum() / total)

    def slope(w):
        with np.errstate(divide="ignore", invalid="ignore"):
            return float((counts * (a - b) / (w * a + (1 - w) * b)).sum())

    ws = np.linspace(0.0, 1.0, grid_points)
    with np.errstate(divide="ignore"):
        grid_vals = (counts[None, :] * np.log(ws[:, None] * a[None, :] + (1 - ws[:, None]) * b[None, :])).sum(axis=1)
    i = int(np.argmax(grid_vals))
    lo, hi = ws[max(i - 1, 0)], ws[min(i + 1, grid_points - 1)]
    candidates = [lo, ws[i], hi]
    if slope(lo) > 0 > slope(hi):
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if slope(mid) > 0:
                lo = mid
            else:
                hi = mid
        candidates.append(0.5 * (lo + hi))
    best_w = max(candidates, key=value)
    return best_w, value(best_w)


def brute_force_mixture(record: ShotRecord, ch: ProductChannel, k: int) -> tuple[MixtureModel, float]:
    """Exact maximizer of the average log-likelihood over all component tuples.

    For ``k = 2`` every unordered pair of distinct bitstrings is scanned with
    its weight optimized in one dimension.  Ties go to the lexicographically
    first tuple.  Returns ``(model, avg_loglik)``.
    """
    if record.n > MIXTURE_MAX_N or ch.n != record.n:
        raise ValidationError(f"mixture enumeration supports n <= {MIXTURE_MAX_N} with a matching channel")
    if not 1 <= k <= MIXTURE_MAX_K:
        raise ValidationError(f"mixture enumeration supports 1 <= k <= {MIXTURE_MAX_K}")
    keys = _strings(record.n)
    R = _transition_table(ch)
    counts_map = record.counts()
    observed = sorted(counts_map)
    counts = np.array([counts_map[s] for s in observed], dtype=float)
    rows = np.array([keys.index(s) for s in observed])
    lik = R[rows, :]  # (distinct shots, candidate xi)

    best = None
    if k == 1:
        for j, xi in enumerate(keys):
            with np.errstate(divide="ignore"):
                val = float((counts * np.log(lik[:, j])).sum() / counts.sum())
            if best is None or val > best[0]:
                best = (val, MixtureModel(record.n, ((xi, 1.0),)))
        return best[1], best[0]
    for i, j in itertools.combinations(range(len(keys)), 2):
        w, val = _best_weight(lik[:, i], lik[:, j], counts)
        if best is None or val > best[0]:
            best = (val, MixtureModel(record.n, ((keys[i], w), (keys[j], 1.0 - w))))
    return best[1], best[0]

