"""Reference computations that share no code with the package.

Each oracle solves its problem by a different route than the code under
test: exhaustive enumeration instead of coordinate descent, explicit
formulas instead of library calls.
"""
import itertools
import math

import numpy as np


def lasso_exhaustive(X, y, lam, offset=None, weights=None, slack=1e-9):
    """Exact Lasso solution by enumerating every support and sign pattern.

    For a support S and sign vector s the stationarity condition
    X_S^T (y - X_S b) / n = c_S + lam * w_S * s is a linear system; a
    candidate is accepted when its signs agree with s and every coordinate
    off S satisfies |X_j^T r / n - c_j| <= lam * w_j.
    """
    n, p = X.shape
    c = np.zeros(p) if offset is None else np.asarray(offset, float)
    w = np.ones(p) if weights is None else np.asarray(weights, float)
    t = lam * w
    g0 = X.T @ y / n - c
    if np.all(np.abs(g0) <= t + slack):
        return np.zeros(p)
    G = X.T @ X / n
    best, best_obj = None, math.inf
    for k in range(1, p + 1):
        for S in itertools.combinations(range(p), k):
            S = list(S)
            A = G[np.ix_(S, S)]
            if np.linalg.matrix_rank(A) < k:
                continue
            Ainv = np.linalg.inv(A)
            signs = np.array(list(itertools.product((-1.0, 1.0), repeat=k)))
            # each row of B is a candidate b_S for one sign pattern
            B = (g0[S][None, :] - signs * t[S][None, :]) @ Ainv.T
            ok = np.all(np.sign(B) == signs, axis=1)
            for b in B[ok]:
                full = np.zeros(p)
                full[S] = b
                r = y - X @ full
                grad = X.T @ r / n - c
                off = np.setdiff1d(np.arange(p), S)
                if np.all(np.abs(grad[off]) <= t[off] + slack):
                    obj = 0.5 * r @ r / n + c @ full + t @ np.abs(full)
                    if obj < best_obj:
                        best, best_obj = full, obj
    return best


def tn_reference(sigma, n0, p, lam_t, lam_delta):
    """Threshold formula written out term by term with exact summation."""
    terms = [9 * sigma * (math.log(p) / n0) ** 0.5,
             12 * sigma * lam_t,
             3 * lam_t,
             4 * sigma * lam_delta,
             lam_delta]
    return math.fsum(terms)


def ser_reference(x, xh):
    num = math.fsum(float(v) ** 2 for v in x)
    den = math.fsum((float(a) - float(b)) ** 2 for a, b in zip(x, xh))
    return 10 * math.log10(num / den)


def mmd_reference(a, b, bandwidth):
    """Double loops over rows, biased estimator."""
    def k(u, v):
        return math.exp(-float(np.sum((u - v) ** 2)) / (2 * bandwidth ** 2))
    kaa = sum(k(u, v) for u in a for v in a) / len(a) ** 2
    kbb = sum(k(u, v) for u in b for v in b) / len(b) ** 2
    kab = sum(k(u, v) for u in a for v in b) / (len(a) * len(b))
    return math.sqrt(max(kaa + kbb - 2 * kab, 0.0))


def finite_difference_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g
