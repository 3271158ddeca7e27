"""Source screening, corruption counting and hyperparameter tuning."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import CorruptionVector, SparseCoefficients, stack
from .errors import BadFoldCount, EmptyGrid, RTLError, ValidationError
from .solvers import (LassoProblem, RobustLassoProblem, lambda_max, lasso_fit,
                      lasso_path, robust_lasso_fit, scaled_fit)
from .transfer import assemble, fit_delta


@dataclass(frozen=True)
class ShiftEstimate:
    source_index: int
    h_hat: float
    merged_fit: SparseCoefficients
    solo_fit: SparseCoefficients
    sigma: float = float("nan")

    @classmethod
    def from_fits(cls, j, merged, solo, sigma=float("nan")):
        h = 2.0 * float(np.abs(merged.values - solo.values).sum())
        return cls(j, h, merged, solo, sigma)

    def to_dict(self):
        return {"source_index": self.source_index, "h_hat": self.h_hat,
                "sigma": self.sigma,
                "merged_fit": self.merged_fit.sparse_pairs(),
                "solo_fit": self.solo_fit.sparse_pairs()}


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple
    validation_index: int | None
    shift_table: tuple
    failures: dict = field(default_factory=dict)

    def to_dict(self):
        return {"selected": list(self.selected),
                "validation_index": self.validation_index,
                "shift_table": [s.to_dict() for s in self.shift_table],
                "failures": dict(self.failures)}


@dataclass(frozen=True)
class AhtDecision:
    corruption_count_estimate: int
    branch: str
    chosen: tuple
    score_table: tuple
    c_tilde: float = float("nan")

    def to_dict(self):
        return {"corruption_count_estimate": self.corruption_count_estimate,
                "branch": self.branch, "chosen": list(self.chosen),
                "c_tilde": self.c_tilde,
                "score_table": [dict(r) for r in self.score_table]}


@dataclass(frozen=True)
class ShiftPenalties:
    """Penalty multipliers for shift estimation.

    The solo Lasso on source j uses ``solo * sigma * sqrt(log p / n_j)``; the
    merged robust fit uses ``beta * sigma * sqrt(log p / (n0 + n_j))`` and
    ``e * sigma * sqrt(2 log(n0 + n_j) / (n0 + n_j))``.
    """

    solo: float = 1.0
    beta: float = 1.0
    e: float = 1.0

    def to_dict(self):
        return asdict(self)


def merged_robust_fit(target, source, lambda_beta, lambda_e, settings=None):
    """Robust Lasso on the row-stack ``[source; target]``.

    The corruption block is scaled by sqrt(n0 + n_j), the stacked row count.
    """
    if source.p != target.p:
        raise ValidationError("source and target must share p")
    m = stack(source, target)
    return robust_lasso_fit(
        RobustLassoProblem(m.design, m.response, lambda_beta, lambda_e), settings)


def source_sigma(source, settings=None):
    return scaled_fit(source.design, source.response, settings=settings)[2]


def estimate_shifts(target, sources, penalties=None, settings=None, sigmas=None):
    """Shift estimate 2 ||b_merged - b_solo||_1 for every source.

    ``sigmas`` optionally gives the noise level of each source; by default it
    is estimated with a scaled Lasso on the (clean) source.  Sources whose
    fits fail are reported in the returned ``failures`` mapping.

    Returns ``(table, failures)``.
    """
    penalties = penalties or ShiftPenalties()
    if not sources:
        raise ValidationError("need at least one source")
    table, failures = [], {}
    p = target.p
    for j, src in enumerate(sources):
        try:
            sig = sigmas[j] if sigmas is not None else source_sigma(src, settings)
            solo = lasso_fit(LassoProblem(
                src.design, src.response,
                penalties.solo * sig * math.sqrt(math.log(p) / src.n)), settings)
            nm = target.n + src.n
            merged, _ = merged_robust_fit(
                target, src,
                penalties.beta * sig * math.sqrt(math.log(p) / nm),
                penalties.e * sig * math.sqrt(2 * math.log(nm) / nm), settings)
        except RTLError as exc:
            failures[j] = str(exc)
            continue
        table.append(ShiftEstimate.from_fits(j, merged, solo, float(sig)))
    if not table:
        raise RTLError(f"shift estimation failed for every source: {failures}")
    return table, failures


def sds_select(shift_table, h, A_cap=None):
    """Keep sources whose shift estimate is at most ``h`` and among the
    ``A_cap`` smallest; the validation source is the overall minimizer.

    Ties are broken by the original source index.
    """
    if not shift_table:
        raise ValidationError("shift table is empty")
    order = sorted(shift_table, key=lambda s: (s.h_hat, s.source_index))
    cap = len(order) if A_cap is None else int(A_cap)
    smallest = {s.source_index for s in order[:cap]}
    selected = tuple(sorted(s.source_index for s in shift_table
                            if s.h_hat <= h and s.source_index in smallest))
    return SelectionResult(selected=selected,
                           validation_index=order[0].source_index,
                           shift_table=tuple(sorted(shift_table,
                                                    key=lambda s: s.source_index)))


def detection_threshold(sigma, n, C_tilde):
    """Corruption entries at or above this size count as detected."""
    return C_tilde * sigma * math.sqrt(math.log(n) / n)


def detect_corruption(target, settings=None, C_tilde=1.0, sigma=None,
                      lambda_beta=None, lambda_e=None):
    """Robust Lasso on the target alone and the rows it flags as corrupted.

    Returns ``(count, flagged_rows, e_hat, sigma)``.  Without ``sigma`` the
    noise level comes from a scaled robust fit on the target; that estimate
    is inflated once a large share of rows is corrupted, so pass a trusted
    ``sigma`` (e.g. from a clean source) when one is available.  A noise
    level that is negligible relative to the response is treated as an exact
    fit with nothing flagged.
    """
    n, p = target.n, target.p
    if sigma is None:
        sigma = scaled_fit(target.design, target.response, robust=True,
                           settings=settings)[2]
    scale = float(np.sqrt(np.mean(target.response ** 2)))
    if sigma <= 1e-6 * scale:
        return 0, np.empty(0, dtype=int), CorruptionVector(np.zeros(n)), float(sigma)
    if lambda_beta is None:
        lambda_beta = sigma * math.sqrt(2 * math.log(p) / n)
    if lambda_e is None:
        lambda_e = sigma * math.sqrt(2 * math.log(n) / n)
    _, e = robust_lasso_fit(RobustLassoProblem(
        target.design, target.response, lambda_beta, lambda_e), settings)
    flagged = np.flatnonzero(np.abs(e.values) >= detection_threshold(sigma, n, C_tilde))
    return int(flagged.size), flagged, e, float(sigma)


def estimate_corruption_count(target, settings=None, C_tilde=1.0, sigma=None):
    return detect_corruption(target, settings, C_tilde, sigma)[0]


def kfold_split(n, k0, seed=0):
    """Random partition of ``range(n)`` into ``k0`` folds of near-equal size."""
    if k0 < 2 or n < k0:
        raise BadFoldCount(f"need 2 <= k0 <= n, got k0={k0}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k0)]


def _grid(lambda_deltas, lambda_es):
    g = [(float(a), float(b)) for a in lambda_deltas for b in lambda_es]
    if not g:
        raise EmptyGrid("tuning grid is empty")
    return g


def aht_tune(target, sources, v, beta_source, lambda_deltas, lambda_es,
             c_h=5, c_tilde=1.0, k0=5, settings=None, seed=0,
             corruption=None, C_tilde=1.0, sigma=None):
    """Pick (lambda_delta, lambda_e) for the transfer correction.

    When the target looks heavily corrupted (more than ``c_h`` flagged rows)
    each pair is scored by the squared loss of the reconstruction on the
    validation source ``v``, among pairs with ||delta||_1 <= ``c_tilde``.
    Otherwise ``k0``-fold cross-validation on the target is used, scoring
    held-out rows that were not flagged as corrupted.

    ``corruption`` may carry a precomputed ``(count, flagged_rows)`` pair.
    """
    grid = _grid(lambda_deltas, lambda_es)
    if corruption is None:
        count, flagged, _, _ = detect_corruption(target, settings, C_tilde, sigma)
    else:
        count, flagged = corruption
    b0 = np.asarray(beta_source, dtype=float)
    rows = []
    if count > c_h:
        branch = "validation_based"
        if v is None:
            raise ValidationError("validation branch needs a validation source")
        val = sources[v]
        init = None
        for ld, le in grid:
            delta, e = fit_delta(target, b0, ld, le, settings, init=init)
            init = (delta.values, e.values)
            bhat = assemble(b0, delta).values
            r = val.response - val.design @ bhat
            l1 = delta.l1()
            rows.append({"lambda_delta": ld, "lambda_e": le,
                         "score": float(0.5 * r @ r / val.n), "delta_l1": l1,
                         "feasible": bool(l1 <= c_tilde)})
        feas = [r for r in rows if r["feasible"]]
        if feas:
            best = min(feas, key=lambda r: r["score"])
        else:
            best = min(rows, key=lambda r: r["delta_l1"])
    else:
        branch = "cross_validation"
        flagged_mask = np.zeros(target.n, dtype=bool)
        flagged_mask[np.asarray(flagged, dtype=int)] = True
        folds = kfold_split(target.n, k0, seed)
        sse = np.zeros(len(grid))
        cnt = 0
        for f in folds:
            train = np.setdiff1d(np.arange(target.n), f)
            tr = target.rows(train)
            keep = f[~flagged_mask[f]]
            cnt += keep.size
            Xk, yk = target.design[keep], target.response[keep]
            init = None
            for g, (ld, le) in enumerate(grid):
                delta, e = fit_delta(tr, b0, ld, le, settings, init=init)
                init = (delta.values, e.values)
                r = yk - Xk @ (b0 + delta.values)
                sse[g] += float(r @ r)
        for g, (ld, le) in enumerate(grid):
            rows.append({"lambda_delta": ld, "lambda_e": le,
                         "score": float(sse[g] / max(cnt, 1)),
                         "delta_l1": float("nan"), "feasible": True})
        best = min(rows, key=lambda r: r["score"])
    return AhtDecision(corruption_count_estimate=int(count), branch=branch,
                       chosen=(best["lambda_delta"], best["lambda_e"]),
                       score_table=tuple(rows), c_tilde=float(c_tilde))


def lasso_cv(dataset, k0=5, seed=0, n_lambdas=30, eps=None, settings=None):
    """Plain Lasso with the penalty picked by ``k0``-fold cross-validation.

    The grid runs from the smallest all-zero penalty down to ``eps`` times
    it; ``eps`` defaults to 0.01 when n < p and 1e-4 otherwise.

    Returns ``(coefficients, chosen_penalty)``.
    """
    X, y = dataset.design, dataset.response
    if eps is None:
        eps = 1e-2 if dataset.n < dataset.p else 1e-4
    lmax = lambda_max(X, y)
    if lmax == 0:
        return SparseCoefficients(np.zeros(dataset.p)), 0.0
    grid = lmax * np.logspace(0, math.log10(eps), n_lambdas)
    err = np.zeros(n_lambdas)
    for f in kfold_split(dataset.n, k0, seed):
        train = np.setdiff1d(np.arange(dataset.n), f)
        path = lasso_path(X[train], y[train], grid, settings)
        for i, b in enumerate(path):
            r = y[f] - X[f] @ b.values
            err[i] += float(r @ r)
    lam = float(grid[int(np.argmin(err))])
    return lasso_fit(LassoProblem(X, y, lam), settings), lam
