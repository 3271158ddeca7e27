"""Evaluation metrics: SER, support/sign recovery and an RBF-kernel MMD."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import EmptyDataset, ValidationError, ZeroTruth


@dataclass(frozen=True)
class SerScore:
    """Signal-to-error ratio in dB.  ``exact`` marks a perfect reconstruction,
    in which case ``value_db`` is ``inf``."""

    value_db: float
    exact: bool = False

    def __float__(self):
        return self.value_db


def ser_db(truth, estimate):
    """10 log10(||truth||^2 / ||truth - estimate||^2)."""
    x = np.asarray(truth, dtype=float).ravel()
    xh = np.asarray(estimate, dtype=float).ravel()
    if x.shape != xh.shape:
        raise ValidationError("truth and estimate differ in length")
    num = float(x @ x)
    if num == 0:
        raise ZeroTruth("SER undefined for an all-zero truth")
    d = x - xh
    den = float(d @ d)
    if den == 0:
        return SerScore(math.inf, exact=True)
    return SerScore(10.0 * math.log10(num / den))


@dataclass(frozen=True)
class RecoveryScore:
    sign_match: bool
    support_precision: float
    support_recall: float
    corruption_precision: float
    corruption_recall: float

    def to_dict(self):
        return asdict(self)


def _precision_recall(truth, est):
    t = np.asarray(truth) != 0
    e = np.asarray(est) != 0
    hit = int(np.sum(t & e))
    # an empty prediction is never wrong; an empty truth is never missed
    precision = hit / e.sum() if e.any() else 1.0
    recall = hit / t.sum() if t.any() else 1.0
    return float(precision), float(recall)


def recovery_score(truth_beta, est_beta, truth_e=None, est_e=None):
    tb = np.asarray(truth_beta, dtype=float).ravel()
    eb = np.asarray(est_beta, dtype=float).ravel()
    if tb.shape != eb.shape:
        raise ValidationError("coefficient vectors differ in length")
    sp, sr = _precision_recall(tb, eb)
    if truth_e is None or est_e is None:
        cp = cr = float("nan")
    else:
        te = np.asarray(truth_e, dtype=float).ravel()
        ee = np.asarray(est_e, dtype=float).ravel()
        if te.shape != ee.shape:
            raise ValidationError("corruption vectors differ in length")
        cp, cr = _precision_recall(te, ee)
    return RecoveryScore(
        sign_match=bool(np.array_equal(np.sign(tb), np.sign(eb))),
        support_precision=sp, support_recall=sr,
        corruption_precision=cp, corruption_recall=cr)


def median_bandwidth(a, b):
    """Median pairwise distance over the pooled rows."""
    z = np.vstack([np.asarray(a, dtype=float), np.asarray(b, dtype=float)])
    d = pdist(z)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def mmd_rbf(a, b, bandwidth=None):
    """Biased (V-statistic) MMD between the rows of ``a`` and ``b``.

    Uses k(u, v) = exp(-||u - v||^2 / (2 bandwidth^2)) and returns the square
    root of mean(K_aa) + mean(K_bb) - 2 mean(K_ab).  The bandwidth defaults
    to the median heuristic.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyDataset("mmd_rbf needs nonempty samples")
    if a.shape[1] != b.shape[1]:
        raise ValidationError("samples must share their column count")
    if bandwidth is None:
        bandwidth = median_bandwidth(a, b)
    if not bandwidth > 0:
        raise ValidationError("bandwidth must be positive")
    g = 0.5 / bandwidth ** 2
    kaa = np.exp(-g * cdist(a, a, "sqeuclidean")).mean()
    kbb = np.exp(-g * cdist(b, b, "sqeuclidean")).mean()
    kab = np.exp(-g * cdist(a, b, "sqeuclidean")).mean()
    return float(math.sqrt(max(kaa + kbb - 2.0 * kab, 0.0)))
