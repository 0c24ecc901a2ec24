import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from goq.hr_scalar import density_from_unnormalized, optimal_density, uniform_density
from goq.goals import builtin_goal
from goq.quantizers import (
    Quantizer,
    QuantizerFormatError,
    build_compander_scalar,
    build_product_uniform,
    build_uniform_scalar,
    decode,
    encode,
    from_json,
    lloyd_max,
    to_json,
)
from goq.sources import Box, builtin_source, empirical_source


# ---------------------------------------------------------------------------
# encode
# ---------------------------------------------------------------------------
def test_encode_scalar_intervals():
    q = Quantizer(representatives=np.array([[0.25], [0.75]]),
                  support=Box.of(0.0, 1.0), rule="scalar-intervals",
                  boundaries=np.array([0.0, 0.5, 1.0]))
    # membership of g=0.3 in the first interval (0-based index)
    assert encode(q, np.array([[0.3]]))[0] == 0
    assert encode(q, np.array([[0.5]]))[0] == 1  # right-open cells
    assert encode(q, np.array([[1.0]]))[0] == 1


def test_encode_plain_nearest():
    q = Quantizer(representatives=np.array([[0.0, 0.0], [1.0, 1.0]]),
                  support=Box.of([0, 0], [1, 1]), rule="plain")
    assert encode(q, np.array([[0.9, 0.9]]))[0] == 1


def test_encode_weighted_quadratic_form():
    reps = np.array([[0.0, 0.0], [1.0, 0.0]])
    sup = Box.of([-10, -10], [10, 10])

    def metric(E):
        return lambda G: np.broadcast_to(E, (len(np.atleast_2d(G)), 2, 2))

    q100 = Quantizer(representatives=reps, support=sup, rule="weighted",
                     metric_rows=metric(np.diag([100.0, 1.0])))
    assert encode(q100, np.array([[0.4, 5.0]]))[0] == 0
    qid = Quantizer(representatives=reps, support=sup, rule="weighted",
                    metric_rows=metric(np.eye(2)))
    assert encode(qid, np.array([[0.4, 5.0]]))[0] == 0
    assert encode(qid, np.array([[0.6, 0.0]]))[0] == 1


def test_encode_clamps_and_counts():
    q = build_uniform_scalar((0.0, 1.0), 4)
    idx = encode(q, np.array([[-0.5], [1.7]]))
    assert idx.tolist() == [0, 3]
    assert q.clamp_warnings.count == 2


def test_encode_decode_idempotent():
    rng = np.random.default_rng(0)
    reps = rng.uniform(0, 1, size=(8, 3))
    q = Quantizer(representatives=reps, support=Box.of([0] * 3, [1] * 3), rule="plain")
    assert encode(q, decode(q, np.arange(8))).tolist() == list(range(8))


@given(st.integers(min_value=1, max_value=12), st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_encode_total_coverage_and_determinism(m, seed):
    rng = np.random.default_rng(seed)
    reps = np.sort(rng.uniform(0, 1, size=m))
    reps += np.arange(m) * 1e-9  # enforce distinctness
    edges = np.concatenate([[0.0], 0.5 * (reps[:-1] + reps[1:]), [1.0]])
    if np.any(np.diff(edges) <= 0):
        return
    q = Quantizer(representatives=reps.reshape(-1, 1), support=Box.of(0, 1),
                  rule="scalar-intervals", boundaries=edges)
    pts = rng.uniform(0, 1, size=(200, 1))
    i1 = encode(q, pts)
    i2 = encode(q, pts)
    assert np.array_equal(i1, i2)
    assert np.all((0 <= i1) & (i1 < m))


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_weighted_identity_reduces_to_plain(seed):
    rng = np.random.default_rng(seed)
    reps = rng.normal(size=(5, 2))
    sup = Box.of([-5, -5], [5, 5])
    qw = Quantizer(representatives=reps, support=sup, rule="weighted",
                   metric_rows=lambda G: np.broadcast_to(np.eye(2), (len(np.atleast_2d(G)), 2, 2)))
    qp = Quantizer(representatives=reps, support=sup, rule="plain")
    pts = rng.uniform(-5, 5, size=(100, 2))
    assert np.array_equal(encode(qw, pts), encode(qp, pts))


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------
def test_uniform_scalar_layout():
    q = build_uniform_scalar((0.0, 1.0), 2)
    assert np.allclose(q.boundaries, [0.0, 0.5, 1.0])
    assert np.allclose(q.representatives.ravel(), [0.25, 0.75])
    q4 = build_uniform_scalar((0.1, 10.0), 4)
    assert np.allclose(np.diff(q4.boundaries), 2.475)
    q1 = build_uniform_scalar((0.0, 1.0), 1)
    assert q1.representatives[0, 0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        build_uniform_scalar((1.0, 1.0), 2)
    with pytest.raises(ValueError):
        build_uniform_scalar((0.0, 1.0), 0)


def test_compander_uniform_density():
    rho = uniform_density((0.0, 1.0))
    q = build_compander_scalar(rho, 4)
    assert np.allclose(q.boundaries, [0, 0.25, 0.5, 0.75, 1.0], atol=1e-9)


def test_compander_linear_density():
    # rho(g) = 2g on [0, 1]: CDF g^2, median boundary at sqrt(1/2)
    rho = density_from_unnormalized(lambda g: np.asarray(g, dtype=float), (0.0, 1.0))
    q = build_compander_scalar(rho, 2)
    assert q.boundaries[1] == pytest.approx(np.sqrt(0.5), abs=1e-8)


def test_compander_constant_curvature_matches_uniform():
    goal = builtin_goal("scalar-quadratic")
    source = builtin_source("uniform-box", lo=0.1, hi=10.0)
    rho = optimal_density(goal, source, kappa=2)
    q = build_compander_scalar(rho, 8)
    u = build_uniform_scalar((0.1, 10.0), 8)
    assert np.allclose(q.boundaries, u.boundaries, atol=1e-7)
    assert np.allclose(q.representatives, u.representatives, atol=1e-7)


def test_compander_quantile_masses():
    goal = builtin_goal("scalar-ee")
    source = builtin_source("trunc-exp")
    rho = optimal_density(goal, source, kappa=2)
    M = 16
    q = build_compander_scalar(rho, M)
    for m in range(M):
        mass = quad(lambda g: float(rho.eval(np.array([g]))[0]),
                    q.boundaries[m], q.boundaries[m + 1],
                    epsabs=1e-12, epsrel=1e-10, limit=200)[0]
        assert abs(mass - 1.0 / M) < 1e-8


# ---------------------------------------------------------------------------
# Lloyd-Max
# ---------------------------------------------------------------------------
def test_lloyd_max_uniform_fixed_point():
    source = builtin_source("uniform-box", lo=0.0, hi=1.0)
    q = lloyd_max(source, 2)
    assert np.allclose(q.representatives.ravel(), [0.25, 0.75], atol=1e-6)
    assert q.boundaries[1] == pytest.approx(0.5, abs=1e-6)
    q1 = lloyd_max(source, 1)
    assert q1.representatives[0, 0] == pytest.approx(0.5, abs=1e-9)


def test_lloyd_max_exact_two_means():
    src = empirical_source(np.array([[0.0], [0.0], [1.0], [1.0]]))
    q = lloyd_max(src, 2)
    assert np.allclose(np.sort(q.representatives.ravel()), [0.0, 1.0])


def test_lloyd_max_distortion_monotone():
    source = builtin_source("trunc-exp")
    _, trace = lloyd_max(source, 8, return_trace=True)
    diffs = np.diff(trace)
    assert np.all(diffs <= 1e-12)


def test_lloyd_max_vector_runs():
    source = builtin_source("exp-iid", dim=2)
    q = lloyd_max(source, 5, mc_points=4000, seed=2)
    assert q.rule == "plain"
    assert q.M == 5
    assert source.support.contains(q.representatives).all()


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------
def test_json_round_trip_bit_exact():
    src = builtin_source("trunc-exp")
    q = lloyd_max(src, 6, seed=11)
    q2 = from_json(to_json(q))
    assert q2.representatives.tobytes() == q.representatives.tobytes()
    assert q2.boundaries.tobytes() == q.boundaries.tobytes()
    assert to_json(q2) == to_json(q)


def test_json_weighted_needs_metric():
    q = Quantizer(representatives=np.array([[0.0, 0.0], [1.0, 1.0]]),
                  support=Box.of([0, 0], [2, 2]), rule="weighted",
                  metric_rows=lambda G: np.broadcast_to(np.eye(2), (len(np.atleast_2d(G)), 2, 2)))
    q2 = from_json(to_json(q))
    with pytest.raises(QuantizerFormatError):
        encode(q2, np.array([[0.5, 0.5]]))


def test_quantizer_validation():
    with pytest.raises(QuantizerFormatError):
        Quantizer(representatives=np.array([[0.2], [0.8]]), support=Box.of(0, 1),
                  rule="scalar-intervals", boundaries=np.array([0.0, 0.6, 0.4, 1.0][:3]))
    with pytest.raises(QuantizerFormatError):
        Quantizer(representatives=np.array([[0.2]]), support=Box.of(0, 1), rule="bogus")
    with pytest.raises(QuantizerFormatError):
        from_json("{not json")


def test_product_uniform_grid():
    sup = Box.of([0.0, 0.0], [4.0, 4.0])
    q = build_product_uniform(sup, 1)
    assert q.M == 4
    assert np.allclose(sorted(map(tuple, q.representatives.tolist())),
                       [(1, 1), (1, 3), (3, 1), (3, 3)])
