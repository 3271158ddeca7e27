import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rtlasso.data import LabeledDataset
from rtlasso.errors import DegenerateResiduals, ValidationError
from rtlasso.selection import detection_threshold
from rtlasso.solvers import SolverSettings
from rtlasso.transfer import (MAD_CONSISTENCY, NoiseScaleEstimate, assemble,
                              compute_tn, estimate_sigma, fit_delta,
                              hard_threshold, mad_scale, transfer_fit)

from oracles import tn_reference

TIGHT = SolverSettings(tol=1e-12)


def sparse_problem(rng, n=60, p=30, noise=0.0):
    X = rng.normal(size=(n, p))
    beta = np.zeros(p)
    beta[[2, 5, 11]] = [1.0, -1.5, 2.0]
    y = X @ beta + noise * rng.normal(size=n)
    return LabeledDataset(X, y), beta


def test_tn_example():
    expected = 9 * math.sqrt(math.log(400) / 100) + 2.0
    assert compute_tn(1.0, 100, 400, 0.1, 0.1) == pytest.approx(4.2029, abs=1e-4)
    assert compute_tn(1.0, 100, 400, 0.1, 0.1) == pytest.approx(expected, rel=1e-15)


def test_tn_vanishes():
    assert compute_tn(0.0, 100, 400, 0.0, 0.0) == 0.0


def test_tn_linear_in_sigma():
    a = compute_tn(1.0, 50, 200, 0.2, 0.3)
    b = compute_tn(2.0, 50, 200, 0.2, 0.3)
    slope = 9 * math.sqrt(math.log(200) / 50) + 12 * 0.2 + 4 * 0.3
    assert b - a == pytest.approx(slope, rel=1e-14)
    assert compute_tn(NoiseScaleEstimate(1.0), 50, 200, 0.2, 0.3) == a


def test_tn_random_against_reference():
    rng = np.random.default_rng(7)
    for _ in range(100):
        s, lt, ld = rng.uniform(1e-3, 5, size=3)
        n0, p = int(rng.integers(10, 1000)), int(rng.integers(2, 5000))
        ref = tn_reference(s, n0, p, lt, ld)
        assert abs(compute_tn(s, n0, p, lt, ld) - ref) <= 4 * np.finfo(float).eps * ref


def test_assemble_examples():
    x = np.array([1.0, 2.0])
    np.testing.assert_array_equal(assemble(x, np.zeros(2)).values, x)
    np.testing.assert_array_equal(assemble(x, -x).values, 0)
    np.testing.assert_array_equal(assemble(x, [0.5, -1]).values, [1.5, 1.0])
    with pytest.raises(ValidationError):
        assemble(x, np.zeros(3))


def test_hard_threshold_examples():
    x = np.array([0.3, -0.7, 0.5])
    np.testing.assert_array_equal(hard_threshold(x, 0).values, x)
    np.testing.assert_array_equal(hard_threshold(x, 0.5).values, [0, -0.7, 0.5])
    assert not hard_threshold(x, 0.71).values.any()
    with pytest.raises(ValidationError):
        hard_threshold(x, -1)


@given(arrays(float, 12, elements=st.floats(-10, 10)), st.floats(0, 10))
def test_hard_threshold_idempotent(x, g):
    once = hard_threshold(x, g).values
    np.testing.assert_array_equal(hard_threshold(once, g).values, once)
    kept = once != 0
    assert np.all(np.abs(x[kept]) >= g)


def test_exact_source_gives_zero_correction(rng):
    d, beta = sparse_problem(rng)
    delta, e = fit_delta(d, beta, 0.05, 0.05, TIGHT)
    assert not delta.values.any() and not e.values.any()


def test_one_coordinate_off(rng):
    d, beta = sparse_problem(rng)
    b0 = beta.copy()
    b0[5] += 0.8
    delta, e = fit_delta(d, b0, 1e-3, 1.0, TIGHT)
    assert delta.values[5] == pytest.approx(-0.8, abs=0.01)
    assert np.abs(np.delete(delta.values, 5)).max() < 0.01


def test_huge_shift_penalty_returns_source(rng):
    d, beta = sparse_problem(rng, noise=0.1)
    b0 = beta + 0.1
    tf = transfer_fit(d, b0, 1e6, 0.1)
    np.testing.assert_array_equal(tf.beta_final.values, b0)
    np.testing.assert_array_equal(tf.beta_final.values,
                                  tf.beta_source.values + tf.delta.values)


def test_corruption_support_recovered(rng):
    hits = 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        n, p = 100, 50
        X = r.normal(size=(n, p))
        beta = np.zeros(p)
        beta[:5] = 1.0
        e = np.zeros(n)
        rows = r.choice(n, 10, replace=False)
        e[rows] = r.uniform(0.5, 1.0, 10)
        sigma = 0.01
        y = X @ beta + e + sigma * r.normal(size=n)
        lam_e = 2 * sigma * math.sqrt(2 * math.log(n) / n)
        _, eh = fit_delta(LabeledDataset(X, y), beta, 0.01, lam_e)
        found = np.flatnonzero(np.abs(eh.values) >= detection_threshold(sigma, n, 3.0))
        hits += set(found) == set(rows)
    assert hits >= 18


def test_threshold_invariant(rng):
    d, beta = sparse_problem(rng, noise=0.05)
    tf = transfer_fit(d, np.zeros(d.p), 0.02, 0.5, threshold=0.4)
    keep = np.abs(tf.beta_final.values) >= 0.4
    np.testing.assert_array_equal(tf.beta_thresholded.values,
                                  np.where(keep, tf.beta_final.values, 0))
    assert tf.to_dict()["threshold_used"] == 0.4


def test_mad_alternating_signs():
    r = np.array([1.0, -1.0] * 10)
    assert mad_scale(r) == pytest.approx(MAD_CONSISTENCY)


def test_sigma_consistency(rng):
    n = 10000
    X = rng.normal(size=(n, 2))
    y = 0.3 * rng.normal(size=n)
    s = estimate_sigma(LabeledDataset(X, y), np.zeros(2), np.zeros(n))
    assert abs(s.sigma_hat - 0.3) <= 0.05 * 0.3


def test_sigma_degenerate():
    X = np.ones((20, 1))
    with pytest.raises(DegenerateResiduals):
        estimate_sigma(LabeledDataset(X, np.ones(20)), np.zeros(1), np.zeros(20))
    e = np.ones(20)
    e[:5] = 0
    with pytest.raises(DegenerateResiduals):
        estimate_sigma(LabeledDataset(X, np.arange(20.0)), np.zeros(1), e)
    with pytest.raises(ValidationError):
        NoiseScaleEstimate(0.0)
