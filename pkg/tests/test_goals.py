import math

import numpy as np
import pytest

from goq.goals import (
    DerivativeMismatch,
    GoalParameterError,
    UnknownGoalError,
    builtin_goal,
    builtin_goal_ids,
    curvature,
    detect_kappa,
    euclidean_quadratic,
    fill_valleys_rows,
    water_fill_rows,
    with_decision,
)
from goq.sources import builtin_source

CLOSED_FORM = ["scalar-quadratic", "scalar-log", "scalar-ee", "scalar-sigmoid10",
               "quadratic-2d", "pcs-lp"]
ANALYTIC = CLOSED_FORM + ["se-multiband"]


def _goal(name):
    if name == "pcs-lp":
        return builtin_goal(name, P=4.0, energy=3.0, dim=4)
    return builtin_goal(name)


def _param_box(goal):
    if goal.name.startswith("pcs"):
        # keep every slot active so the fill rule is interior and smooth
        return 0.2, 1.0
    return 0.15, 8.0


def test_registry_and_errors():
    assert set(builtin_goal_ids()) == {
        "scalar-quadratic", "scalar-log", "scalar-ee", "scalar-sigmoid10",
        "quadratic-2d", "se-multiband", "ee-multiband", "pcs-lp"}
    with pytest.raises(UnknownGoalError):
        builtin_goal("nope")
    with pytest.raises(GoalParameterError):
        builtin_goal("scalar-ee", c=-1.0)
    with pytest.raises(GoalParameterError):
        builtin_goal("scalar-ee", eta=0.5)
    with pytest.raises(GoalParameterError):
        builtin_goal("scalar-log", bogus=3)
    with pytest.raises(GoalParameterError):
        builtin_goal("pcs-lp", P=0.5)


def test_quadratic_decision_is_identity():
    g = builtin_goal("scalar-quadratic")
    assert g.evaluate(np.array([2.0]), np.array([3.0])) == 1.0
    assert g.decide(np.array([3.0]))[0] == 3.0


def test_log_decision_rule():
    g = builtin_goal("scalar-log", gain=10.0)
    assert g.decide(np.array([2.0]))[0] == pytest.approx(1 - 1 / 20.0, abs=1e-12)
    assert g.decide(np.array([0.05]))[0] == 0.0  # clipped branch


def test_sigmoid_decision_constant():
    g = builtin_goal("scalar-sigmoid10")
    # e^t = 1 + 10 t at the printed 4-decimal precision
    assert g.params["tstar"] == pytest.approx(3.6150, abs=5e-5)
    assert g.decide(np.array([2.0]))[0] == pytest.approx(g.params["tstar"] / 2)


def test_ee_decision_rule():
    g = builtin_goal("scalar-ee", c=1.0, eta=3.0)
    assert g.decide(np.array([2.0]))[0] == pytest.approx(1 / 6.0)


def test_quadratic2d_decision_rule():
    g = builtin_goal("quadratic-2d")
    x = g.decide(np.array([1.0, 1.0]))
    assert np.allclose(x, [1.0, 0.5])
    # interior first-order condition
    for gg in np.random.default_rng(0).uniform(0.2, 3.0, size=(50, 2)):
        grad = g.derivatives.grad_x(g.decide(gg), gg)
        assert np.linalg.norm(grad) < 1e-8


@pytest.mark.parametrize("name", CLOSED_FORM)
def test_probing_optimality(name):
    """f(chi(g); g) <= f(x; g) for random feasible probes."""
    goal = _goal(name)
    rng = np.random.default_rng(42)
    lo, hi = _param_box(goal)
    G = rng.uniform(lo, hi, size=(100, goal.param_dim))
    chis = goal.decisions(G)
    ideal = goal.value_rows(chis, G)
    span = max(np.abs(chis).max(), 1.0)
    for i, g in enumerate(G):
        probes = goal.decision_set.sample(rng, 1000, span=3 * span)
        vals = goal.value_rows(probes, np.broadcast_to(g, probes.shape[:1] + g.shape))
        assert vals.min() >= ideal[i] - 1e-7 * max(1.0, abs(ideal[i])), name


def test_negation_convention_probing():
    """For goals negated from utility metrics, decide() still locates the
    argmin of the stored (negated) objective."""
    rng = np.random.default_rng(11)
    for name in ["scalar-ee", "scalar-log", "scalar-sigmoid10"]:
        goal = builtin_goal(name)
        for g in rng.uniform(0.2, 5.0, size=12):
            ga = np.array([g])
            x0 = goal.decide(ga)
            f0 = goal.evaluate(x0, ga)
            xs = np.linspace(max(x0[0] * 0.2, 1e-3), x0[0] * 5, 400)
            vals = goal.evaluate_rows(xs, np.full_like(xs, g))
            assert f0 <= vals.min() + 1e-9 * max(1, abs(f0))


def test_curvature_constant_for_quadratic():
    goal = builtin_goal("scalar-quadratic")
    b = curvature(goal, np.array([1.0]))
    assert b.hess_f[0, 0] == pytest.approx(2.0)
    assert b.jac_chi[0, 0] == pytest.approx(1.0)
    assert b.hess_chi[0, 0, 0] == pytest.approx(0.0)


def test_curvature_quadratic2d_jacobian():
    goal = builtin_goal("quadratic-2d")
    b = curvature(goal, np.array([1.0, 1.0]), validate=True)
    assert np.allclose(b.jac_chi, [[1.0, 1.0], [1.0, 1.0]])
    assert np.allclose(b.hess_f, [[4.0, -2.0], [-2.0, 4.0]])


def test_curvature_ee_eta3():
    goal = builtin_goal("scalar-ee", c=1.0, eta=3.0)
    b = curvature(goal, np.array([1.0]), validate=True)
    assert abs(b.grad_f[0]) < 1e-9
    assert b.hess_f[0, 0] > 1e-3


@pytest.mark.parametrize("name", ANALYTIC)
def test_analytic_derivatives_match_finite_differences(name):
    goal = _goal(name)
    rng = np.random.default_rng(7)
    lo, hi = _param_box(goal)
    count = 0
    for _ in range(400):
        if count >= 25:
            break
        g = rng.uniform(lo, hi, size=goal.param_dim)
        if name == "se-multiband":
            # keep away from the active-set switching surface
            x = goal.decide(g)
            mu = x.max() + 1.0 / g[np.argmax(x)]
            if np.any(np.abs(mu - 1.0 / g) < 0.15):
                continue
        if name == "scalar-log" and abs(g[0] - 0.1) < 1e-2:
            continue
        bundle = curvature(goal, g, validate=True, rtol=1e-4)
        if bundle.degraded:
            continue
        count += 1
    assert count >= 25


def test_validate_catches_wrong_oracle():
    goal = builtin_goal("scalar-quadratic")
    from dataclasses import replace

    bad = replace(goal, derivatives=replace(goal.derivatives,
                                            hess_x=lambda x, g: np.array([[5.0]])))
    with pytest.raises(DerivativeMismatch):
        curvature(bad, np.array([1.0]), validate=True)


def test_detect_kappa():
    uni = builtin_source("uniform-box", lo=0.1, hi=10.0)
    exp = builtin_source("trunc-exp")
    assert detect_kappa(builtin_goal("scalar-quadratic"), uni, probes=50) == 2
    assert detect_kappa(builtin_goal("scalar-ee"), exp, probes=100) == 2
    assert detect_kappa(builtin_goal("scalar-log"), exp, probes=100, seed=3) == 2
    assert detect_kappa(builtin_goal("scalar-sigmoid10"), uni, probes=50) == 2


def test_detect_kappa_validates_inputs():
    with pytest.raises(ValueError):
        detect_kappa(builtin_goal("quadratic-2d"), builtin_source("exp-iid"), probes=5)
    with pytest.raises(ValueError):
        detect_kappa(builtin_goal("scalar-quadratic"),
                     builtin_source("uniform-box"), probes=0)


def test_water_fill_budget_and_kkt():
    rng = np.random.default_rng(5)
    G = rng.uniform(0.05, 4.0, size=(60, 3))
    X = water_fill_rows(G, p_max=5.0, sigma2=1.0)
    assert np.all(X >= -1e-12)
    assert np.allclose(X.sum(axis=1), 5.0, atol=1e-7)
    # equal water level across active bands
    for x, g in zip(X, G):
        act = x > 1e-8
        levels = x[act] + 1.0 / g[act]
        assert np.ptp(levels) < 1e-7
        # inactive bands would need a level above the common one
        if (~act).any():
            assert np.all(1.0 / g[~act] >= levels.mean() - 1e-7)


def test_fill_valleys_energy_and_level():
    rng = np.random.default_rng(6)
    G = rng.uniform(0.0, 3.0, size=(40, 6))
    X = fill_valleys_rows(G, energy=4.0)
    assert np.all(X >= -1e-12)
    assert np.allclose(X.sum(axis=1), 4.0, atol=1e-9)
    for x, g in zip(X, G):
        act = x > 1e-10
        tops = (x + g)[act]
        assert np.ptp(tops) < 1e-9
        if (~act).any():
            assert np.all(g[~act] >= tops.mean() - 1e-9)


def test_pcs_decision_beats_random_feasible():
    goal = builtin_goal("pcs-lp", P=8.0, energy=5.0, dim=6)
    rng = np.random.default_rng(8)
    for _ in range(20):
        g = rng.uniform(0.0, 2.0, size=6)
        x0 = goal.decide(g)
        f0 = goal.evaluate(x0, g)
        for _ in range(50):
            probe = rng.uniform(0, 3, size=6)
            s = probe.sum()
            if s < 5.0:
                probe *= 5.0 / s
            assert goal.evaluate(probe, g) >= f0 - 1e-9


def test_ee_multiband_single_band_structure():
    goal = builtin_goal("ee-multiband", bands=2, c=1.0, p_max=5.0)
    rng = np.random.default_rng(12)
    G = rng.uniform(0.2, 3.0, size=(30, 2))
    X = goal.decide_rows(G)
    # grid oracle per sample
    xs = np.linspace(1e-4, 5.0, 160)
    X1, X2 = np.meshgrid(xs, xs)
    mask = X1 + X2 <= 5.0
    grid = np.stack([X1[mask], X2[mask]], axis=1)
    for g, x in zip(G, X):
        fx = goal.evaluate(x, g)
        vals = goal.evaluate_rows(grid, np.broadcast_to(g, grid.shape))
        assert fx <= vals.min() + 1e-3 * abs(vals.min())
        # concentrated in the strongest band
        assert x[np.argmin(g)] < 1e-6 or abs(g[0] - g[1]) < 1e-6


def test_with_decision_drops_decision_oracles():
    goal = builtin_goal("scalar-quadratic")
    sub = with_decision(goal, lambda g: np.atleast_1d(0.5 * np.asarray(g)))
    assert sub.derivatives.jac_chi is None
    b = curvature(sub, np.array([2.0]))
    assert b.jac_chi[0, 0] == pytest.approx(0.5, rel=1e-6)
    # suboptimal rule leaves a first-order term
    assert abs(b.grad_f[0]) > 0.1


def test_euclidean_quadratic_weights():
    goal = euclidean_quadratic(3)
    A, B = goal.derivatives.weight_rows(np.zeros((4, 3)))
    assert np.allclose(A, 2 * np.eye(3))
    assert np.allclose(B, 0)


def test_decision_set_membership():
    goal = builtin_goal("se-multiband", bands=2, p_max=5.0, sigma2=1.0)
    rng = np.random.default_rng(1)
    for g in rng.uniform(0.05, 6.0, size=(40, 2)):
        assert goal.decision_set.contains(goal.decide(g))
    pcs = builtin_goal("pcs-lp", P=4.0, energy=3.0, dim=4)
    for g in rng.uniform(0.0, 2.0, size=(40, 4)):
        assert pcs.decision_set.contains(pcs.decide(g))
