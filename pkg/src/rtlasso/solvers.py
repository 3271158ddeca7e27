"""Coordinate-descent engines for the Lasso and the corruption-robust Lasso.

Both problems are solved by one kernel.  The plain Lasso minimizes

    (1/2n) ||y - X b||^2 + <c, b> + (mu/2) ||b - b_c||^2 + sum_j t_j |b_j|

and the robust variant adds a per-observation corruption block,

    (1/2n) ||y - X b - sqrt(n) e||^2 + ... + lambda_e ||e||_1,

which is the plain Lasso on the augmented design ``[X, sqrt(n) I]``.  The
identity block is handled in closed form (each ``e_i`` update is O(1)), so
robust fits cost about as much as plain ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .data import CorruptionVector, SparseCoefficients
from .errors import NotConverged, ValidationError

_EMPTY_IDX = np.empty(0, dtype=np.int64)
_EMPTY_VEC = np.empty(0)


@dataclass(frozen=True)
class SolverSettings:
    """Stopping rule and acceleration switches for coordinate descent.

    ``max_iters`` counts sweeps; ``tol`` bounds the KKT residual.  With
    ``polish`` the iterate is periodically replaced by the exact solution on
    its current support and signs when that lowers the objective.
    """

    max_iters: int = 100_000
    tol: float = 1e-7
    active_set: bool = True
    polish: bool = True

    def __post_init__(self):
        if self.tol <= 0:
            raise ValidationError("tol must be positive")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be positive")


DEFAULT_SETTINGS = SolverSettings()
INNER_SWEEPS = 100


@dataclass(frozen=True, eq=False)
class LassoProblem:
    """(1/2n)||y - Xb||^2 + <linear_offset, b> + penalty * sum_j w_j |b_j|.

    A positive ``proximal`` weight mu adds (mu/2)||b - proximal_center||^2,
    which keeps the problem bounded below whatever the linear offset.
    """

    design: np.ndarray
    response: np.ndarray
    penalty: float
    linear_offset: np.ndarray | None = None
    weights: np.ndarray | None = None
    proximal: float = 0.0
    proximal_center: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValidationError("design/response shape mismatch")
        if self.penalty < 0 or not np.isfinite(self.penalty):
            raise ValidationError("penalty must be finite and >= 0")
        p = X.shape[1]
        c = (np.zeros(p) if self.linear_offset is None
             else np.asarray(self.linear_offset, dtype=float).ravel())
        if c.shape != (p,):
            raise ValidationError(f"linear_offset must have length {p}")
        w = (np.ones(p) if self.weights is None
             else np.asarray(self.weights, dtype=float).ravel())
        if w.shape != (p,) or np.any(w < 0):
            raise ValidationError(f"weights must be {p} nonnegative numbers")
        if self.proximal < 0 or not np.isfinite(self.proximal):
            raise ValidationError("proximal weight must be finite and >= 0")
        b_c = (np.zeros(p) if self.proximal_center is None
               else np.asarray(self.proximal_center, dtype=float).ravel())
        if b_c.shape != (p,):
            raise ValidationError(f"proximal_center must have length {p}")
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "linear_offset", c)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "proximal_center", b_c)

    @property
    def effective_offset(self):
        """Linear coefficient once the proximal term is expanded."""
        return self.linear_offset - self.proximal * self.proximal_center

    @property
    def thresholds(self):
        return self.penalty * self.weights

    def objective(self, beta):
        beta = np.asarray(beta, dtype=float)
        r = self.response - self.design @ beta
        d = beta - self.proximal_center
        return (0.5 * r @ r / r.size + self.linear_offset @ beta
                + 0.5 * self.proximal * d @ d + self.thresholds @ np.abs(beta))


@dataclass(frozen=True, eq=False)
class RobustLassoProblem:
    """(1/2n)||y - X(b0 + b) - sqrt(n) e||^2 + lambda_beta ||b||_1 + lambda_e ||e||_1.

    ``beta_offset`` is the fixed vector ``b0`` (zero when omitted); the
    solver returns the free part ``b`` only.
    """

    design: np.ndarray
    response: np.ndarray
    lambda_beta: float
    lambda_e: float
    beta_offset: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValidationError("design/response shape mismatch")
        for name in ("lambda_beta", "lambda_e"):
            v = getattr(self, name)
            if v < 0 or not np.isfinite(v):
                raise ValidationError(f"{name} must be finite and >= 0")
        b0 = self.beta_offset
        if b0 is not None:
            b0 = np.asarray(b0, dtype=float).ravel()
            if b0.shape != (X.shape[1],):
                raise ValidationError("beta_offset length must equal p")
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "beta_offset", b0)

    @property
    def adjusted_response(self):
        if self.beta_offset is None:
            return self.response
        return self.response - self.design @ self.beta_offset

    def augmented(self):
        """The equivalent plain Lasso on ``[X, sqrt(n) I]`` with block weights."""
        n, p = self.design.shape
        Z = np.hstack([self.design, math.sqrt(n) * np.eye(n)])
        w = np.concatenate([np.full(p, self.lambda_beta), np.full(n, self.lambda_e)])
        return LassoProblem(Z, self.adjusted_response, 1.0, weights=w)

    def objective(self, beta, e):
        n = self.response.size
        r = self.adjusted_response - self.design @ beta - math.sqrt(n) * np.asarray(e)
        return (0.5 * r @ r / n + self.lambda_beta * np.abs(beta).sum()
                + self.lambda_e * np.abs(e).sum())


@njit(cache=True)
def _sweep(X, col_sq, ridge, r, beta, thresh, offset, idx, e, e_thresh, e_idx,
           root_n):
    n = X.shape[0]
    inv_n = 1.0 / n
    max_change = 0.0
    for k in range(idx.shape[0]):
        j = idx[k]
        a = col_sq[j]
        old = beta[j]
        c = a + ridge
        if c == 0.0:
            new = 0.0
        else:
            g = 0.0
            for i in range(n):
                g += X[i, j] * r[i]
            z = g * inv_n + a * old - offset[j]
            t = thresh[j]
            if z > t:
                new = (z - t) / c
            elif z < -t:
                new = (z + t) / c
            else:
                new = 0.0
        if new != old:
            d = new - old
            for i in range(n):
                r[i] -= X[i, j] * d
            beta[j] = new
            ch = abs(d) * c
            if ch > max_change:
                max_change = ch
    for k in range(e_idx.shape[0]):
        i = e_idx[k]
        old = e[i]
        z = r[i] / root_n + old
        t = e_thresh[i]
        if z > t:
            new = z - t
        elif z < -t:
            new = z + t
        else:
            new = 0.0
        if new != old:
            d = new - old
            r[i] -= root_n * d
            e[i] = new
            if abs(d) > max_change:
                max_change = abs(d)
    return max_change


def _violation(grad, coef, thresh):
    nz = coef != 0
    v = np.maximum(np.abs(grad) - thresh, 0.0)
    v[nz] = np.abs(grad[nz] + thresh[nz] * np.sign(coef[nz]))
    return v


def _kkt(X, y, beta, thresh, offset, e=None, e_thresh=None, ridge=0.0):
    n = X.shape[0]
    r = y - X @ beta
    if e is not None:
        r = r - math.sqrt(n) * e
    grad = -(X.T @ r) / n + offset + ridge * beta
    res = float(_violation(grad, beta, thresh).max(initial=0.0))
    if e is not None and e.size:
        res = max(res, float(_violation(-r / math.sqrt(n), e, e_thresh).max()))
    return res


def _objective(r, beta, thresh, offset, e, e_thresh, ridge=0.0):
    # with a ridge, offset already carries -ridge * center; the constant
    # (ridge/2)||center||^2 is dropped
    val = (0.5 * (r @ r) / r.size + offset @ beta + 0.5 * ridge * beta @ beta
           + thresh @ np.abs(beta))
    if e.size:
        val += e_thresh @ np.abs(e)
    return float(val)


def _polish(X, y, beta, thresh, offset, e, e_thresh, ridge, r):
    """Exact solve on the current support and sign pattern.

    Cyclic updates crawl when the active columns are nearly collinear.  On a
    fixed support with fixed signs the problem is a linear system; its
    solution replaces the iterate (in place) when the signs survive and the
    objective does not go up.  Returns the residual of the kept iterate.
    """
    n = X.shape[0]
    robust = e.size > 0
    S = np.flatnonzero(beta)
    E = np.flatnonzero(e) if robust else _EMPTY_IDX
    m = S.size + E.size
    if m == 0 or m > n:
        return r
    root_n = math.sqrt(n)
    Z = np.hstack([X[:, S], root_n * np.eye(n)[:, E]])
    sgn = np.concatenate([np.sign(beta[S]), np.sign(e[E])])
    t = np.concatenate([thresh[S], e_thresh[E]])
    c = np.concatenate([offset[S], np.zeros(E.size)])
    G = Z.T @ Z / n
    G[np.arange(S.size), np.arange(S.size)] += ridge
    rhs = Z.T @ y / n - c - t * sgn
    try:
        sol = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        return r
    if not np.all(np.isfinite(sol)) or np.any(np.sign(sol) != sgn):
        return r
    nb = beta.copy()
    nb[S] = sol[:S.size]
    ne = e.copy()
    if robust:
        ne[E] = sol[S.size:]
    nr = y - X @ nb - (root_n * ne if robust else 0.0)
    if (_objective(nr, nb, thresh, offset, ne, e_thresh, ridge)
            > _objective(r, beta, thresh, offset, e, e_thresh, ridge)):
        return r
    beta[:] = nb
    if robust:
        e[:] = ne
    return nr


def _coordinate_descent(X, y, thresh, offset, e_thresh, settings, beta0=None,
                        e0=None, history=None, ridge=0.0):
    n, p = X.shape
    Xf = np.asfortranarray(X)
    col_sq = (X * X).sum(axis=0) / n
    ridge = float(ridge)
    dead = (col_sq + ridge == 0) & (np.abs(offset) > thresh)
    if np.any(dead):
        raise ValidationError(
            f"objective unbounded below along zero column {int(np.flatnonzero(dead)[0])}")
    robust = e_thresh is not None
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    e = (np.zeros(n) if e0 is None else np.array(e0, dtype=float)) if robust else _EMPTY_VEC.copy()
    e_thresh = np.asarray(e_thresh, dtype=float) if robust else _EMPTY_VEC
    root_n = math.sqrt(n)
    all_idx = np.arange(p, dtype=np.int64)
    all_e = np.arange(n, dtype=np.int64) if robust else _EMPTY_IDX

    def residual():
        r = y - X @ beta
        if robust:
            r -= root_n * e
        return r

    r = residual()
    if history is not None:
        history.append(_objective(r, beta, thresh, offset, e, e_thresh, ridge))
    sweeps = 0
    kkt = _kkt(X, y, beta, thresh, offset, e if robust else None, e_thresh, ridge)
    if kkt <= settings.tol:
        # already optimal (e.g. zero start above the largest useful penalty)
        return beta, (e if robust else None), kkt, sweeps
    inner_tol = 0.1 * settings.tol
    while sweeps < settings.max_iters:
        _sweep(Xf, col_sq, ridge, r, beta, thresh, offset, all_idx, e, e_thresh, all_e, root_n)
        sweeps += 1
        r = residual()
        if history is not None:
            history.append(_objective(r, beta, thresh, offset, e, e_thresh, ridge))
        kkt = _kkt(X, y, beta, thresh, offset, e if robust else None, e_thresh,
                   ridge)
        if kkt <= settings.tol:
            return beta, (e if robust else None), kkt, sweeps
        if not settings.active_set:
            continue
        act = np.flatnonzero(beta).astype(np.int64)
        act_e = np.flatnonzero(e).astype(np.int64) if robust else _EMPTY_IDX
        # on a badly conditioned active set the changes can hover above
        # inner_tol long after the KKT test would pass, so check back often
        for _ in range(INNER_SWEEPS):
            if sweeps >= settings.max_iters:
                break
            change = _sweep(Xf, col_sq, ridge, r, beta, thresh, offset, act, e,
                            e_thresh, act_e, root_n)
            sweeps += 1
            if history is not None:
                history.append(_objective(residual(), beta, thresh, offset, e, e_thresh, ridge))
            if change <= inner_tol:
                break
        r = residual()
        if settings.polish:
            r = _polish(X, y, beta, thresh, offset, e, e_thresh, ridge, r)
    raise NotConverged(settings.max_iters, kkt, SparseCoefficients(beta),
                       CorruptionVector(e) if robust else None)


def lasso_fit(problem, settings=None, init=None, history=None):
    """Solve a :class:`LassoProblem` to KKT residual ``settings.tol``.

    ``init`` warm-starts the iterate.  When ``history`` is a list the
    objective value after every sweep is appended to it.
    """
    settings = settings or DEFAULT_SETTINGS
    start = 0 if history is None else len(history)
    beta, _, _, _ = _coordinate_descent(
        problem.design, problem.response, problem.thresholds,
        problem.effective_offset, None, settings,
        beta0=None if init is None else np.asarray(init, dtype=float),
        history=history, ridge=problem.proximal)
    if history is not None and problem.proximal:
        const = 0.5 * problem.proximal * problem.proximal_center @ problem.proximal_center
        history[start:] = [h + const for h in history[start:]]
    return SparseCoefficients(beta)


def robust_lasso_fit(problem, settings=None, init=None, history=None):
    """Solve a :class:`RobustLassoProblem`; returns ``(beta, e)``."""
    settings = settings or DEFAULT_SETTINGS
    X = problem.design
    n, p = X.shape
    b0, e0 = (None, None) if init is None else init
    beta, e, _, _ = _coordinate_descent(
        X, problem.adjusted_response, np.full(p, float(problem.lambda_beta)),
        np.zeros(p), np.full(n, float(problem.lambda_e)), settings,
        beta0=None if b0 is None else np.asarray(b0, dtype=float),
        e0=None if e0 is None else np.asarray(e0, dtype=float),
        history=history)
    return SparseCoefficients(beta), CorruptionVector(e)


def kkt_residual(problem, beta, e=None):
    """Largest subgradient-condition violation of a candidate solution.

    Zero exactly at an optimum.  For a :class:`RobustLassoProblem` the
    corruption block ``e`` must be supplied.
    """
    beta = np.asarray(beta, dtype=float).ravel()
    if isinstance(problem, RobustLassoProblem):
        if e is None:
            raise ValidationError("robust problems need the corruption vector")
        e = np.asarray(e, dtype=float).ravel()
        n, p = problem.design.shape
        if beta.shape != (p,) or e.shape != (n,):
            raise ValidationError("candidate has wrong length")
        return _kkt(problem.design, problem.adjusted_response, beta,
                    np.full(p, float(problem.lambda_beta)), np.zeros(p), e,
                    np.full(n, float(problem.lambda_e)))
    if beta.shape != (problem.design.shape[1],):
        raise ValidationError("candidate has wrong length")
    return _kkt(problem.design, problem.response, beta, problem.thresholds,
                problem.effective_offset, ridge=problem.proximal)


def lambda_max(X, y, offset=None):
    """Smallest penalty for which the Lasso solution is identically zero."""
    g = X.T @ y / X.shape[0]
    if offset is not None:
        g = g - offset
    return float(np.abs(g).max())


def lasso_path(X, y, penalties, settings=None):
    """Lasso solutions along ``penalties`` (any order), warm-started in turn."""
    out = []
    beta = None
    for lam in penalties:
        beta = lasso_fit(LassoProblem(X, y, float(lam)), settings, init=beta)
        out.append(beta)
    return out


def scaled_fit(X, y, robust=False, settings=None, beta_scale=0.5,
               max_rounds=30, rtol=1e-4):
    """Joint penalized estimate of coefficients and noise level.

    Alternates a (robust) Lasso fit at penalties
    ``sigma * beta_scale * sqrt(2 log p / n)`` (and
    ``sigma * sqrt(2 log n / n)`` for the corruption block) with the update
    ``sigma = ||r|| / sqrt(n)``.  This is block minimization of a jointly
    convex criterion, so it converges from any start.  With the full
    universal constant (``beta_scale=1``) the joint optimum is often the
    empty model once s log p / n is not small, hence the default of 0.5.

    Returns ``(beta, e_or_None, sigma)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    lam_b = beta_scale * math.sqrt(2 * math.log(p) / n)
    lam_e = math.sqrt(2 * math.log(n) / n)
    sigma = float(np.sqrt(np.mean(y ** 2)))
    if sigma == 0:
        return SparseCoefficients(np.zeros(p)), (CorruptionVector(np.zeros(n)) if robust else None), 0.0
    beta, e = None, None
    for _ in range(max_rounds):
        if robust:
            beta, e = robust_lasso_fit(
                RobustLassoProblem(X, y, sigma * lam_b, sigma * lam_e), settings,
                init=None if beta is None else (beta.values, e.values))
            r = y - X @ beta.values - math.sqrt(n) * e.values
        else:
            beta = lasso_fit(LassoProblem(X, y, sigma * lam_b), settings,
                             init=None if beta is None else beta.values)
            r = y - X @ beta.values
        new = float(np.linalg.norm(r) / math.sqrt(n))
        if new <= 0 or abs(new - sigma) <= rtol * sigma:
            sigma = new
            break
        sigma = new
    return beta, e, sigma
