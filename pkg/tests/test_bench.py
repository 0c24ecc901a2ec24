import numpy as np
import pytest

from goq.bench import compare, monte_carlo_ol, required_clusters
from goq.goals import builtin_goal
from goq.quantizers import build_uniform_scalar, lloyd_max
from goq.solver import SolverConfig
from goq.sources import builtin_source, empirical_source


def test_identity_surrogate_zero_loss():
    goal = builtin_goal("scalar-quadratic")
    source = builtin_source("uniform-box", lo=0.0, hi=1.0)
    rep = monte_carlo_ol(goal, None, source, 2000, seed=1)
    assert rep.mean_ol == 0.0
    assert rep.quantizer_tag == "identity"
    # the ideal value of this goal is identically zero: every sample hits the
    # relative-loss denominator guard
    assert rep.guarded_fraction == 1.0
    assert np.isnan(rep.mean_relative_ol_pct)

    ee = builtin_goal("scalar-ee")
    src = builtin_source("trunc-exp")
    rep2 = monte_carlo_ol(ee, None, src, 2000, seed=1)
    assert rep2.mean_ol == 0.0
    assert rep2.mean_relative_ol_pct == 0.0
    assert rep2.guarded_fraction == 0.0


def test_uniform_quantizer_classic_rate():
    goal = builtin_goal("scalar-quadratic")
    source = builtin_source("uniform-box", lo=0.0, hi=1.0)
    for M in (4, 16):
        q = build_uniform_scalar((0.0, 1.0), M)
        rep = monte_carlo_ol(goal, q, source, 200_000, seed=3)
        expect = 1.0 / (12 * M * M)
        assert abs(rep.mean_ol - expect) < 3 * rep.std_error
        assert rep.mean_ol >= -3 * rep.std_error


def test_losses_nonnegative_for_true_minimizer():
    goal = builtin_goal("scalar-ee")
    source = builtin_source("trunc-exp")
    q = build_uniform_scalar((0.1, 10.0), 8)
    rep = monte_carlo_ol(goal, q, source, 20_000, seed=5)
    assert rep.mean_ol >= -1e-9
    assert 0.0 <= rep.guarded_fraction <= 1.0


def test_compare_is_paired_and_deterministic():
    goal = builtin_goal("scalar-ee")
    source = builtin_source("trunc-exp")
    q = build_uniform_scalar((0.1, 10.0), 8)
    r1, r2 = compare(goal, source, [q, q], 5000, seed=9)
    assert r1 == r2
    again, _ = compare(goal, source, [q, q], 5000, seed=9)
    assert again == r1


def test_compare_rejects_mixed_dims():
    goal = builtin_goal("scalar-quadratic")
    source = builtin_source("trunc-exp")
    q1 = build_uniform_scalar((0.1, 10.0), 4)
    q2 = lloyd_max(builtin_source("exp-iid", dim=2), 3, mc_points=500, seed=0)
    with pytest.raises(ValueError):
        compare(goal, source, [q1, q2], 100, seed=0)


def test_estimator_consistency_with_sample_growth():
    goal = builtin_goal("scalar-ee")
    source = builtin_source("trunc-exp")
    q = build_uniform_scalar((0.1, 10.0), 4)
    a = monte_carlo_ol(goal, q, source, 20_000, seed=11)
    b = monte_carlo_ol(goal, q, source, 80_000, seed=12)
    tol = 3 * np.hypot(a.std_error, b.std_error)
    assert abs(a.mean_ol - b.mean_ol) < tol


def test_adding_regions_never_hurts_much():
    goal = builtin_goal("scalar-ee")
    source = builtin_source("trunc-exp")
    prev = None
    for M in range(2, 11):
        q = build_uniform_scalar((0.1, 10.0), M)
        rep = monte_carlo_ol(goal, q, source, 30_000, seed=21)
        if prev is not None:
            slack = 3 * np.hypot(rep.relative_std_error_pct, prev.relative_std_error_pct)
            assert rep.mean_relative_ol_pct <= prev.mean_relative_ol_pct + slack
        prev = rep


def _two_group_dataset():
    rng = np.random.default_rng(2)
    a = np.abs(rng.normal(0.3, 0.05, size=(12, 4)))
    a[:, 0] += 2.0
    b = np.abs(rng.normal(0.3, 0.05, size=(12, 4)))
    b[:, 3] += 2.0
    return np.vstack([a, b])


def test_required_clusters_easy_instance():
    dataset = empirical_source(_two_group_dataset())
    cfg = SolverConfig(M=1, seed=3, max_iters=30, init="kmeans-seed",
                       pattern_max_iters=80)
    rows = required_clusters(dataset, [2.0], target_rel_ol_pct=5.0,
                             m_range=(1, 8), cfg=cfg, energy=2.0)
    row = rows[0]
    assert row["m_goq"] <= row["m_kmeans"]
    assert not row["saturated_goq"]


def test_required_clusters_zero_target_needs_full_codebook():
    data = _two_group_dataset()[:6]
    dataset = empirical_source(data)
    cfg = SolverConfig(M=1, seed=3, max_iters=30, init="kmeans-seed",
                       pattern_max_iters=60)
    rows = required_clusters(dataset, [4.0], target_rel_ol_pct=1e-12,
                             m_range=(1, len(data)), cfg=cfg, energy=2.0)
    assert rows[0]["m_goq"] == len(data)


def test_required_clusters_validates():
    dataset = empirical_source(_two_group_dataset())
    cfg = SolverConfig(M=1, seed=0)
    with pytest.raises(ValueError):
        required_clusters(dataset, [2.0], target_rel_ol_pct=-1.0,
                          m_range=(1, 4), cfg=cfg)
    with pytest.raises(ValueError):
        required_clusters(dataset, [2.0], target_rel_ol_pct=5.0,
                          m_range=(0, 4), cfg=cfg)
