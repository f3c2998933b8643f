import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irredet.correspond import CorrespondenceSet, DetectionErrorMap
from irredet.cost import cost_report
from irredet.detect import InterestPointSet
from irredet.errors import DegeneracyError, ParameterError
from irredet.evaluate import (
    approximation_error,
    domain_grid,
    estimate_transform,
    fit_transform,
    repeatability,
    repeatability_of,
)
from irredet.image import Transform, apply_transform_xy, compose
from irredet.irredundant import prune


def ident(n):
    return CorrespondenceSet(tuple((i, i) for i in range(n)))


def ps(xy, domain=(100, 100)):
    return InterestPointSet.from_xy(xy, domain=domain)


# --- cost ---

def test_cost_examples():
    assert cost_report(2000, 0).cost_full == 2001000
    r = cost_report(100, 30)
    assert (r.cost_pruned, r.savings) == (2485, 2565)
    assert r.cost_full - r.cost_pruned == r.savings
    assert cost_report(57, 0).savings == 0
    assert cost_report(10, 3, measured=77).measured_evaluations == 77


def test_cost_rejects_n_star_above_n():
    with pytest.raises(ParameterError):
        cost_report(5, 6)


@settings(max_examples=500)
@given(st.integers(0, 10**6).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n))))
def test_cost_identities(nn):
    n, k = nn
    r = cost_report(n, k)
    assert r.cost_full == n * (n + 1) // 2 and r.cost_full * 2 == n * (n + 1)
    assert r.cost_pruned * 2 == (n - k) * (n - k + 1)
    assert r.savings * 2 == k * (1 + 2 * n - k)
    assert r.cost_full - r.cost_pruned == r.savings
    assert (r.savings > 0) == (k >= 1)
    assert all(isinstance(v, int) for v in (r.cost_full, r.cost_pruned, r.savings))


# --- registration ---

def test_exact_similarity_recovered():
    rng = np.random.default_rng(3)
    src = rng.uniform(0, 100, (12, 2))
    t = Transform.similarity(1.07, 0.4, 5.5, -3.25, center=(50, 50))
    rep = estimate_transform(ident(12), ps(src), ps(apply_transform_xy(t, src)), "similarity")
    np.testing.assert_allclose(rep.estimated.A, t.A, atol=1e-9)
    np.testing.assert_allclose(rep.estimated.t, t.t, atol=1e-9)
    assert rep.rms_error <= 1e-9 and rep.rms_error <= rep.max_error + 1e-15
    assert rep.n_correspondences == 12


def test_identity_correspondences():
    xy = np.array([[1.0, 2.0], [10, 3], [4, 40]])
    for model in ("similarity", "affine"):
        rep = estimate_transform(ident(3), ps(xy), ps(xy), model)
        np.testing.assert_allclose(rep.estimated.A, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(rep.estimated.t, 0, atol=1e-12)
        assert rep.rms_error == pytest.approx(0, abs=1e-12)


def test_degenerate_fits():
    col = np.array([[0.0, 0], [1, 1], [2, 2]])
    with pytest.raises(DegeneracyError):
        estimate_transform(ident(3), ps(col), ps(col), "affine")
    with pytest.raises(DegeneracyError):
        estimate_transform(ident(1), ps(col[:1]), ps(col[:1]), "similarity")
    with pytest.raises(DegeneracyError):
        fit_transform(np.ones((4, 2)), np.ones((4, 2)), "similarity")
    with pytest.raises(ParameterError):
        fit_transform(col, col, "homography")


def test_affine_recovered():
    rng = np.random.default_rng(5)
    src = rng.uniform(0, 100, (8, 2))
    t = Transform.affine([[1.1, 0.08], [-0.05, 0.93]], (4.0, -7.0))
    est = fit_transform(src, apply_transform_xy(t, src), "affine")
    np.testing.assert_allclose(est.A, t.A, atol=1e-9)
    np.testing.assert_allclose(est.t, t.t, atol=1e-9)


def test_least_squares_matches_lstsq_oracle():
    rng = np.random.default_rng(9)
    src = rng.uniform(0, 100, (20, 2))
    dst = src * 1.02 + rng.normal(0, 0.5, src.shape) + 3
    est = fit_transform(src, dst, "affine")
    # oracle: generic least squares on [x y 1]
    X = np.column_stack([src, np.ones(len(src))])
    sol, *_ = np.linalg.lstsq(X, dst, rcond=None)
    np.testing.assert_allclose(est.A, sol[:2].T, atol=1e-9)
    np.testing.assert_allclose(est.t, sol[2], atol=1e-9)
    # similarity oracle: linear least squares on (a, b, tx, ty)
    est = fit_transform(src, dst, "similarity")
    M = np.zeros((2 * len(src), 4))
    M[0::2] = np.column_stack([src[:, 0], -src[:, 1], np.ones(len(src)), np.zeros(len(src))])
    M[1::2] = np.column_stack([src[:, 1], src[:, 0], np.zeros(len(src)), np.ones(len(src))])
    (a, b, tx, ty), *_ = np.linalg.lstsq(M, dst.ravel(), rcond=None)
    np.testing.assert_allclose(est.A, [[a, -b], [b, a]], atol=1e-9)
    np.testing.assert_allclose(est.t, [tx, ty], atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_similarity_recovery_random(seed):
    rng = np.random.default_rng(seed)
    t = Transform.similarity(rng.uniform(0.5, 2), rng.uniform(-math.pi, math.pi), *rng.uniform(-50, 50, 2))
    src = rng.uniform(0, 128, (int(rng.integers(2, 30)), 2))
    if np.ptp(src, axis=0).max() < 1:
        return
    est = fit_transform(src, apply_transform_xy(t, src), "similarity")
    np.testing.assert_allclose(est.A, t.A, atol=1e-9)
    np.testing.assert_allclose(est.t, t.t, atol=1e-9)


# --- approximation error ---

def test_approximation_error_examples():
    t = Transform.similarity(1.05, 0.3, 2, 1)
    assert approximation_error(t, t, (50, 40)) == (0.0, 0.0)
    rms, mx = approximation_error(compose(Transform.shift(1, 0), t), t, (50, 40))
    assert rms == pytest.approx(1.0) and mx == pytest.approx(1.0)
    rms, mx = approximation_error(Transform.similarity(1.01), Transform.identity(), (100, 100))
    assert mx == pytest.approx(0.01 * math.hypot(99, 99), rel=1e-9)
    assert mx == pytest.approx(1.400, abs=1e-3)
    g = domain_grid(100, 100)
    assert rms == pytest.approx(0.01 * math.sqrt(np.mean(np.sum(g * g, axis=1))), rel=1e-9)


def test_domain_grid_covers_edges():
    g = domain_grid(10, 7, 4)
    assert {tuple(p) for p in g} >= {(0.0, 0.0), (9.0, 6.0), (8.0, 4.0)}
    with pytest.raises(ParameterError):
        domain_grid(10, 10, 0.5)


# --- repeatability ---

def test_repeatability_examples():
    a = ps([[5, 5], [20, 20], [30, 30]])
    assert repeatability(a, a, Transform.identity(), 0.0) == 1.0
    assert repeatability_of(DetectionErrorMap((0.5, 2.0, 0.3)), 1.0) == pytest.approx(2 / 3)
    assert repeatability_of(DetectionErrorMap((None,)), 1.0) == 0.0
    with pytest.raises(ParameterError):
        repeatability_of(DetectionErrorMap((1.0,)), -1)


def test_pruned_set_fully_repeatable(blob_run):
    src, dst, t, errs = blob_run
    for delta in (0.5, 1.0, 2.0):
        r = prune(src, errs, delta)
        if len(r.retained):
            assert repeatability(r.retained, dst, t, delta) == 1.0


@settings(max_examples=100)
@given(st.lists(st.one_of(st.none(), st.floats(0, 10)), max_size=30), st.floats(0, 10), st.floats(0, 10))
def test_repeatability_monotone(errs, a, b):
    a, b = sorted((a, b))
    m = DetectionErrorMap(tuple(errs))
    assert 0 <= repeatability_of(m, a) <= repeatability_of(m, b) <= 1
