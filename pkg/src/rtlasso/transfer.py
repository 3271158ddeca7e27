"""Transfer correction around an aggregated source estimate.

Given a source-side estimate ``b_src``, the target is refit for a sparse
shift ``delta`` and a sparse corruption vector ``e``; the reconstruction is
``b_src + delta``, optionally hard-thresholded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import CorruptionVector, SparseCoefficients
from .errors import DegenerateResiduals, ValidationError
from .solvers import RobustLassoProblem, robust_lasso_fit

MAD_CONSISTENCY = 1.4826


@dataclass(frozen=True)
class NoiseScaleEstimate:
    sigma_hat: float
    method: str = "mad_clean_rows"

    def __post_init__(self):
        if not self.sigma_hat > 0:
            raise ValidationError("sigma_hat must be positive")


@dataclass(frozen=True, eq=False)
class TransferFit:
    beta_source: SparseCoefficients
    delta: SparseCoefficients
    corruption: CorruptionVector
    beta_final: SparseCoefficients
    beta_thresholded: SparseCoefficients
    threshold_used: float
    lambda_delta: float
    lambda_e: float

    def to_dict(self):
        out = {}
        for name in ("beta_source", "delta", "corruption", "beta_final",
                     "beta_thresholded"):
            v = getattr(self, name)
            out[name] = {"dense": v.values.tolist(), "sparse": v.sparse_pairs()}
        out.update(threshold_used=self.threshold_used,
                   lambda_delta=self.lambda_delta, lambda_e=self.lambda_e)
        return out


def fit_delta(target, beta_source, lambda_delta, lambda_e, settings=None, init=None):
    """Robust refit of the target around a fixed source estimate.

    Returns ``(delta, e)`` minimizing
    (1/2n)||y - X(b_src + delta) - sqrt(n) e||^2 + lambda_delta ||delta||_1
    + lambda_e ||e||_1.
    """
    b0 = np.asarray(beta_source, dtype=float)
    if b0.shape != (target.p,):
        raise ValidationError("beta_source length must equal p")
    prob = RobustLassoProblem(target.design, target.response, lambda_delta,
                              lambda_e, beta_offset=b0)
    return robust_lasso_fit(prob, settings, init=init)


def assemble(beta_source, delta):
    a = np.asarray(beta_source, dtype=float)
    b = np.asarray(delta, dtype=float)
    if a.shape != b.shape:
        raise ValidationError("beta_source and delta differ in length")
    return SparseCoefficients(a + b)


def hard_threshold(beta, gamma):
    """Keep entries with |value| >= gamma, zero the rest."""
    if gamma < 0:
        raise ValidationError("threshold must be nonnegative")
    b = np.asarray(beta, dtype=float)
    return SparseCoefficients(np.where(np.abs(b) >= gamma, b, 0.0))


def compute_tn(sigma_hat, n0, p, lambda_t, lambda_delta):
    """Data-driven hard threshold.

    9 s sqrt(log p / n0) + 12 s lambda_t + 3 lambda_t + 4 s lambda_delta
    + lambda_delta, with s the noise-scale estimate.
    """
    s = float(getattr(sigma_hat, "sigma_hat", sigma_hat))
    return (9.0 * s * math.sqrt(math.log(p) / n0) + 12.0 * s * lambda_t
            + 3.0 * lambda_t + 4.0 * s * lambda_delta + lambda_delta)


def mad_scale(r):
    r = np.asarray(r, dtype=float)
    return MAD_CONSISTENCY * float(np.median(np.abs(r - np.median(r))))


def estimate_sigma(target, beta, corruption, min_clean=10):
    """MAD noise scale of the residuals on rows not flagged as corrupted."""
    X, y = target.design, target.response
    e = np.asarray(corruption, dtype=float)
    if e.shape != (target.n,):
        raise ValidationError("corruption length must equal n")
    r = y - X @ np.asarray(beta, dtype=float) - math.sqrt(target.n) * e
    clean = r[e == 0]
    if clean.size < min_clean:
        raise DegenerateResiduals(
            f"only {clean.size} clean rows left, need {min_clean}")
    s = mad_scale(clean)
    if s <= 0:
        raise DegenerateResiduals("residual scale is zero")
    return NoiseScaleEstimate(s, "mad_clean_rows")


def delta_grid(sigma, n, p, mults=(0.25, 0.5, 1.0, 2.0, 4.0)):
    return [float(sigma * math.sqrt(math.log(p) / n) * m) for m in mults]


def e_grid(sigma, n, mults=(0.25, 0.5, 1.0, 2.0, 4.0)):
    return [float(sigma * math.sqrt(2 * math.log(n) / n) * m) for m in mults]


def transfer_fit(target, beta_source, lambda_delta, lambda_e, threshold=0.0,
                 settings=None):
    """Run the whole correction: fit delta and e, assemble, hard-threshold."""
    delta, e = fit_delta(target, beta_source, lambda_delta, lambda_e, settings)
    final = assemble(beta_source, delta)
    return TransferFit(
        beta_source=SparseCoefficients(np.asarray(beta_source, dtype=float)),
        delta=delta, corruption=e, beta_final=final,
        beta_thresholded=hard_threshold(final, threshold),
        threshold_used=float(threshold), lambda_delta=float(lambda_delta),
        lambda_e=float(lambda_e))
