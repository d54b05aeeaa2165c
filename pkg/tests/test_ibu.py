import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from readoutem.core import ShotRecord, SparseDistribution, ValidationError, empirical_distribution, relative_entropy
from readoutem.ibu import (
    IbuConfig,
    InfeasibleSupportError,
    ibu_step,
    ibu_step_from_shots,
    lre_objective,
    mitigate_full_ibu,
    mitigate_marginal_ibu,
)
from readoutem.lsq import mitigate_full_lsq
from readoutem.noise_model import ProductChannel, apply_forward, sample_noisy_shots

from helpers import random_channel, random_dist

CH1 = ProductChannel.symmetric(1, 0.1)


def test_step_hand_value():
    p = SparseDistribution(1, {"0": 0.82, "1": 0.18})
    q = ibu_step(p, CH1, SparseDistribution.uniform(1))
    assert q["0"] == pytest.approx(0.756, abs=1e-12) and q["1"] == pytest.approx(0.244, abs=1e-12)


def test_step_fixed_point(rng):
    ch = random_channel(rng, 4)
    q_star = random_dist(rng, 4)
    q = ibu_step(apply_forward(ch, q_star), ch, q_star)
    assert q.l1_distance(q_star) < 1e-12


def test_step_noiseless_returns_p(rng):
    p = random_dist(rng, 3, full=False)
    q = ibu_step(p, ProductChannel.noiseless(3), random_dist(rng, 3))
    assert q.l1_distance(p) < 1e-12


def test_config_validation():
    with pytest.raises(ValidationError):
        IbuConfig(max_iter=0)
    with pytest.raises(ValidationError):
        IbuConfig(tol_l1=0.0)
    with pytest.raises(ValidationError):
        IbuConfig(init="zeros")


def test_max_iter_one_is_one_step(rng):
    ch = random_channel(rng, 3)
    p = random_dist(rng, 3)
    res = mitigate_full_ibu(p, ch, IbuConfig(max_iter=1))
    assert res.iterations == 1 and not res.converged
    assert res.q.l1_distance(ibu_step(p, ch, SparseDistribution.uniform(3))) < 1e-15
    assert len(res.objective_trace) == 2


def test_agrees_with_lsq_n4(rng):
    ch = random_channel(rng, 4, max_rate=0.1)
    q_true = random_dist(rng, 4)
    p = apply_forward(ch, q_true)
    res = mitigate_full_ibu(p, ch, IbuConfig(max_iter=10000))
    assert res.q.l1_distance(mitigate_full_lsq(p, ch)) < 1e-4


def test_vertex_recovery():
    ch = ProductChannel.from_rates([(0.01, 0.02), (0.03, 0.015), (0.02, 0.02), (0.025, 0.01)])
    p = apply_forward(ch, SparseDistribution.point("0000"))
    res = mitigate_full_ibu(p, ch, IbuConfig(max_iter=10**6, tol_l1=1e-12, track_objective=False))
    assert res.converged
    assert res.q.l1_distance(SparseDistribution.point("0000")) < 1e-6


def test_marginal_exact_ghz():
    marginal = SparseDistribution(2, {"00": 0.4525, "01": 0.0475, "10": 0.0475, "11": 0.4525})
    res = mitigate_full_ibu(marginal, ProductChannel.symmetric(2, 0.05), IbuConfig(max_iter=10**6, tol_l1=1e-12, track_objective=False))
    assert res.converged
    assert res.q.l1_distance(SparseDistribution(2, {"00": 0.5, "11": 0.5})) < 1e-6


def test_marginal_all_bits_matches_full(rng):
    ch = random_channel(rng, 3, max_rate=0.2)
    rec = sample_noisy_shots(ch, random_dist(rng, 3), 300, seed=1)
    a = mitigate_marginal_ibu(rec, ch, [0, 1, 2])
    b = mitigate_full_ibu(empirical_distribution(rec), ch)
    assert a.q.l1_distance(b.q) < 1e-15 and a.iterations == b.iterations


def test_empirical_init(rng):
    ch = random_channel(rng, 2)
    p = random_dist(rng, 2)
    res = mitigate_full_ibu(p, ch, IbuConfig(max_iter=1, init="empirical"))
    assert res.q.l1_distance(ibu_step(p, ch, p)) < 1e-15
    custom = SparseDistribution(2, {"00": 0.5, "11": 0.5})
    res = mitigate_full_ibu(p, ch, IbuConfig(max_iter=1, init=custom))
    assert res.q.support <= custom.support


def test_objective_examples(rng):
    ch = random_channel(rng, 3)
    q = random_dist(rng, 3)
    assert lre_objective(apply_forward(ch, q), ch, q) < 1e-12
    p = random_dist(rng, 3)
    noiseless = ProductChannel.noiseless(3)
    assert lre_objective(p, noiseless, q) == pytest.approx(relative_entropy(p, q), abs=1e-14)
    assert lre_objective(SparseDistribution.point("000"), noiseless, SparseDistribution.point("111")) == math.inf


def test_infeasible_support():
    # exact zero channel: P puts mass where RQ vanishes
    ch = ProductChannel.noiseless(1)
    p = SparseDistribution(1, {"0": 0.5, "1": 0.5})
    with pytest.raises(InfeasibleSupportError):
        mitigate_full_ibu(p, ch, IbuConfig(init=SparseDistribution.point("0")))


def test_mode_checks():
    from readoutem.core import QUASI

    q = SparseDistribution(1, {"0": 1.125, "1": -0.125}, QUASI)
    with pytest.raises(ValidationError):
        mitigate_full_ibu(q, CH1)
    with pytest.raises(ValidationError):
        mitigate_full_ibu(SparseDistribution.point("00"), CH1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_iterates_positive_normalized_monotone(n, seed):
    rng = np.random.default_rng(seed)
    ch = random_channel(rng, n)
    p = random_dist(rng, n, full=False)
    trace = []
    q = SparseDistribution.uniform(n)
    for _ in range(30):
        trace.append(lre_objective(p, ch, q))
        q = ibu_step(p, ch, q)
        dense = q.to_dense()
        assert abs(dense.sum() - 1.0) < 1e-12
        assert np.all(dense > 0)
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


def test_objective_trace_matches_lre(rng):
    ch = random_channel(rng, 3)
    p = random_dist(rng, 3)
    res = mitigate_full_ibu(p, ch, IbuConfig(max_iter=5))
    q = SparseDistribution.uniform(3)
    for r in range(6):
        assert res.objective_trace[r] == pytest.approx(lre_objective(p, ch, q), abs=1e-13)
        q = ibu_step(p, ch, q)


def test_shot_sum_form_matches_dense(rng):
    ch = random_channel(rng, 4, max_rate=0.2)
    rec = sample_noisy_shots(ch, random_dist(rng, 4), 400, seed=8)
    q_prev = random_dist(rng, 4)
    dense = ibu_step(empirical_distribution(rec), ch, q_prev)
    shots = ibu_step_from_shots(rec, ch, q_prev)
    assert dense.l1_distance(shots) < 1e-12


def test_shot_sum_form_large_register():
    n = 60
    ch = ProductChannel.symmetric(n, 0.05)
    truth = SparseDistribution(n, {"0" * n: 0.5, "1" * n: 0.5})
    rec = sample_noisy_shots(ch, truth, 500, seed=3)
    q = SparseDistribution(n, {"0" * n: 0.3, "1" * n: 0.7})
    for _ in range(5):
        q = ibu_step_from_shots(rec, ch, q)
    assert q.support == truth.support
    assert abs(q.total() - 1.0) < 1e-12
    zeros = sum(1 for s in rec.strings() if s.count("1") < n / 2) / rec.m
    assert q["0" * n] == pytest.approx(zeros, abs=1e-6)
