import math

import numpy as np
import pytest

from rtlasso.data import LabeledDataset
from rtlasso.edsl import (EdslConfig, averaged_hessian_norm, edsl_aggregate,
                          gradient, resolve_anchor, schedule)
from rtlasso.errors import EmptySelection, InvalidConfig
from rtlasso.solvers import LassoProblem, SolverSettings, lasso_fit

from oracles import finite_difference_gradient

TIGHT = SolverSettings(tol=1e-12)


def panel(seed, L=3, n=60, p=40, s=4, sigma=0.1, same_design=False):
    r = np.random.default_rng(seed)
    beta = np.zeros(p)
    beta[r.choice(p, s, replace=False)] = r.choice([-1.0, 1.0], s)
    X0 = r.normal(size=(n, p))
    out = []
    for j in range(L):
        X = X0 if same_design else r.normal(size=(n, p))
        out.append(LabeledDataset(X, X @ beta + sigma * r.normal(size=n),
                                  id=f"s{j}", kind="source"))
    return out, beta


def test_gradient_formula(rng):
    X = rng.normal(size=(6, 4))
    y = rng.normal(size=6)
    d = LabeledDataset(X, y)
    np.testing.assert_allclose(gradient(d, np.zeros(4)), -X.T @ y / 6)
    b = rng.normal(size=4)
    f = lambda v: 0.5 * np.sum((y - X @ v) ** 2) / 6
    np.testing.assert_allclose(gradient(d, b), finite_difference_gradient(f, b), atol=1e-6)
    Q = rng.normal(size=(4, 4))
    sq = LabeledDataset(Q, Q @ b)
    np.testing.assert_allclose(gradient(sq, b), 0, atol=1e-12)


def test_schedule_formula():
    lp = math.log(400)
    want = 2 * math.sqrt(lp / 500) + math.sqrt(lp / 100) * (0.3 * 5 * math.sqrt(lp / 100)) ** 3
    assert schedule(3, 2.0, 0.3, 5, 400, 500, 100) == want


def test_single_source_equals_lasso():
    srcs, _ = panel(0, L=1)
    b, tr = edsl_aggregate(srcs, [0], EdslConfig(), TIGHT)
    ref = lasso_fit(LassoProblem(srcs[0].design, srcs[0].response, tr.final_lambda), TIGHT)
    assert np.abs(b.values - ref.values).max() <= 1e-8
    assert max(tr.correction_norm) == 0.0
    assert tr.proximal == 0.0


def test_identical_sources_match_single():
    srcs, _ = panel(1, L=1)
    b1, t1 = edsl_aggregate(srcs, [0], EdslConfig(), TIGHT)
    b2, t2 = edsl_aggregate([srcs[0], srcs[0]], [0, 1], EdslConfig(), TIGHT)
    # gradients coincide, so the correction vanishes; the pooled sample size
    # lowers the penalty floor, so compare at the pair's own final penalty
    assert max(t2.correction_norm) == 0.0
    ref = lasso_fit(LassoProblem(srcs[0].design, srcs[0].response, t2.final_lambda), TIGHT)
    assert np.abs(b2.values - ref.values).max() <= 1e-8


def test_lambdas_decrease_to_floor():
    srcs, _ = panel(2)
    _, tr = edsl_aggregate(srcs, [0, 1, 2])
    lam = np.array([tr.lambda_init] + tr.lambdas)
    assert np.all(np.diff(lam) < 0)
    assert np.all(lam > tr.floor)
    expect = [schedule(t + 1, tr.c_lambda_1, tr.c_lambda_2, tr.s_hint, 40, 180, 60)
              for t in range(len(tr.lambdas))]
    assert tr.lambdas == expect


def test_surrogate_descent():
    srcs, _ = panel(3)
    cfg = EdslConfig(max_rounds=1)
    b, tr = edsl_aggregate(srcs, [0, 1, 2], cfg, TIGHT)
    # rebuild round 1 from the initial fit
    v = srcs[tr.anchor]
    b0 = lasso_fit(LassoProblem(v.design, v.response, tr.lambda_init), TIGHT).values
    off = np.mean([gradient(s, b0) for s in srcs], axis=0) - gradient(v, b0)
    lam = tr.lambdas[0]

    def surrogate(x):
        r = v.response - v.design @ x
        return 0.5 * r @ r / v.n + off @ x + lam * np.abs(x).sum()
    assert surrogate(b.values) <= surrogate(b0) + 1e-12


def test_aggregation_beats_single_source():
    wins, err_a, err_1 = 0, [], []
    for seed in range(50):
        srcs, beta = panel(100 + seed, L=5, n=100, p=400, s=12)
        ba, _ = edsl_aggregate(srcs, range(5))
        b1, _ = edsl_aggregate(srcs, [0])
        err_a.append(np.linalg.norm(ba.values - beta))
        err_1.append(np.linalg.norm(b1.values - beta))
    assert np.mean(err_a) < np.mean(err_1)


def test_deterministic():
    srcs, _ = panel(4)
    a = edsl_aggregate(srcs, [2, 0, 1])
    b = edsl_aggregate(srcs, [0, 1, 2])
    np.testing.assert_array_equal(a[0].values, b[0].values)
    assert a[1].to_csv() == b[1].to_csv()


def test_trace_csv():
    srcs, _ = panel(5)
    _, tr = edsl_aggregate(srcs, [0, 1])
    lines = tr.to_csv().splitlines()
    assert lines[0] == "round,lambda,l1_change,correction_norm"
    assert len(lines) == 1 + len(tr.lambdas)


def test_anchor_policies():
    assert resolve_anchor("first", [3, 1]) == 3
    assert resolve_anchor("min_shift", [0, 1, 2], {0: 5.0, 1: 1.0, 2: 1.0}) == 1
    assert resolve_anchor(2, [0, 2]) == 2
    with pytest.raises(InvalidConfig):
        resolve_anchor(4, [0, 2])
    with pytest.raises(InvalidConfig):
        resolve_anchor("min_shift", [0])


def test_config_errors():
    srcs, _ = panel(6)
    with pytest.raises(EmptySelection):
        edsl_aggregate(srcs, [])
    with pytest.raises(InvalidConfig):
        EdslConfig(c_lambda_1=0)
    with pytest.raises(InvalidConfig):
        EdslConfig(anchor="middle")
    # c2 * s * sqrt(log p / n) >= 1 would make the penalties grow
    with pytest.raises(InvalidConfig):
        edsl_aggregate(srcs, [0, 1], EdslConfig(c_lambda_2=10.0, s_hint=5))


def test_hessian_norm(rng):
    a = LabeledDataset(rng.normal(size=(10, 3)), np.zeros(10))
    b = LabeledDataset(rng.normal(size=(20, 3)), np.zeros(20))
    H = 0.5 * a.design.T @ a.design / 10 + 0.5 * b.design.T @ b.design / 20
    assert averaged_hessian_norm([a, b], [0.5, 0.5]) == pytest.approx(
        np.linalg.eigvalsh(H).max(), rel=1e-12)
