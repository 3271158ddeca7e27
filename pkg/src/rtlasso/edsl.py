"""Communication-efficient aggregation of several source datasets.

One anchor dataset solves a Lasso problem whose loss is corrected, every
round, by the difference between the averaged gradient of all selected
datasets and the anchor's own gradient.  Only gradients travel between
machines; here the pattern is kept but everything runs in-process.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .data import SparseCoefficients
from .errors import EmptySelection, InvalidConfig, ValidationError
from .solvers import LassoProblem, lasso_fit, scaled_fit


@dataclass(frozen=True)
class EdslConfig:
    """Penalty-schedule constants and anchor policy.

    ``c_lambda_1=None`` resolves to twice a noise-level estimate on the
    anchor, so the penalty floor sits on the noise scale.  ``c_lambda_2=None``
    resolves to the value that makes the geometric part of the schedule
    shrink by ``contraction`` per round.  ``anchor`` is ``"first"``,
    ``"min_shift"`` (needs shift estimates) or an explicit source index.

    ``proximal`` is the weight mu of a term (mu/2)||b - b_t||^2 added to each
    round's problem whenever the gradient correction is nonzero.  Without it the
    round problem is unbounded below as soon as p exceeds the anchor's
    sample size and the gradient correction outgrows the penalty, which
    happens routinely once the penalty nears its floor.  ``None`` picks half
    the spectral norm of the averaged Hessian, the smallest weight for which
    the correction step contracts even along the anchor's null space.  Set
    it to 0 for the bare surrogate.
    """

    c_lambda_1: float | None = None
    c_lambda_2: float | None = None
    s_hint: int | None = None
    max_rounds: int = 20
    anchor: object = "first"
    weighted: bool = False
    contraction: float = 0.5
    proximal: float | None = None

    def __post_init__(self):
        for name in ("c_lambda_1", "c_lambda_2"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InvalidConfig(name, "must be positive")
        if self.s_hint is not None and self.s_hint < 1:
            raise InvalidConfig("s_hint", "must be a positive integer")
        if self.max_rounds < 1:
            raise InvalidConfig("max_rounds", "must be a positive integer")
        if self.proximal is not None and not self.proximal >= 0:
            raise InvalidConfig("proximal", "must be >= 0")
        if not 0 < self.contraction < 1:
            raise InvalidConfig("contraction", "must lie in (0, 1)")
        if not (self.anchor in ("first", "min_shift")
                or (isinstance(self.anchor, (int, np.integer)) and self.anchor >= 0)):
            raise InvalidConfig("anchor", "first, min_shift or a source index")


@dataclass
class EdslTrace:
    anchor: int
    selected: list
    c_lambda_1: float
    c_lambda_2: float
    s_hint: int
    floor: float
    lambda_init: float
    proximal: float = 0.0
    lambdas: list = field(default_factory=list)
    l1_change: list = field(default_factory=list)
    correction_norm: list = field(default_factory=list)

    @property
    def final_lambda(self):
        return self.lambdas[-1] if self.lambdas else self.lambda_init

    def to_dict(self):
        return {k: getattr(self, k) for k in (
            "anchor", "selected", "c_lambda_1", "c_lambda_2", "s_hint", "floor",
            "lambda_init", "proximal", "lambdas", "l1_change", "correction_norm")}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "lambda", "l1_change", "correction_norm"])
        for t, row in enumerate(zip(self.lambdas, self.l1_change,
                                    self.correction_norm), start=1):
            w.writerow([t] + [f"{v:.17g}" for v in row])
        return buf.getvalue()


def gradient(dataset, beta):
    """Gradient of (1/2n)||y - X beta||^2, i.e. -X^T (y - X beta) / n."""
    X = dataset.design
    b = np.asarray(beta, dtype=float)
    if b.shape != (X.shape[1],):
        raise ValidationError("beta length must equal p")
    return -(X.T @ (dataset.response - X @ b)) / X.shape[0]


def averaged_hessian_norm(datasets, weights):
    """Spectral norm of sum_j w_j X_j^T X_j / n_j."""
    Z = np.vstack([math.sqrt(w / d.n) * d.design for w, d in zip(weights, datasets)])
    return float(np.linalg.norm(Z, 2) ** 2)


def schedule(t, c_lambda_1, c_lambda_2, s, p, n_total, n_anchor):
    """Penalty for round ``t``.

    c1 sqrt(log p / N) + sqrt(log p / n_v) (c2 s sqrt(log p / n_v))^t where N
    is the pooled sample size of the selected sources.
    """
    lp = math.log(p)
    base = math.sqrt(lp / n_anchor)
    return (c_lambda_1 * math.sqrt(lp / n_total)
            + base * (c_lambda_2 * s * base) ** t)


def resolve_anchor(policy, selected, shifts=None):
    if isinstance(policy, (int, np.integer)):
        if policy not in selected:
            raise InvalidConfig("anchor", f"explicit anchor {policy} not selected")
        return int(policy)
    if policy == "min_shift":
        if shifts is None:
            raise InvalidConfig("anchor", "min_shift needs shift estimates")
        return min(selected, key=lambda j: (shifts[j], j))
    return selected[0]


def edsl_aggregate(sources, selected, config=None, settings=None, shifts=None):
    """Aggregate the selected sources into one sparse coefficient estimate.

    Parameters
    ----------
    sources : list of LabeledDataset
    selected : iterable of int
        Indices into ``sources``.
    config : EdslConfig
    settings : SolverSettings
    shifts : mapping or sequence, optional
        Shift estimates indexed like ``sources``; used by the
        ``"min_shift"`` anchor policy.

    Returns
    -------
    (SparseCoefficients, EdslTrace)
    """
    config = config or EdslConfig()
    selected = sorted(set(int(j) for j in selected))
    if not selected:
        raise EmptySelection("EDSL needs at least one selected source")
    p = sources[selected[0]].p
    for j in selected:
        if sources[j].p != p:
            raise ValidationError(f"source {j} has {sources[j].p} columns, expected {p}")
    v = resolve_anchor(config.anchor, selected, shifts)
    anchor = sources[v]
    n_v = anchor.n
    n_total = sum(sources[j].n for j in selected)
    if config.weighted:
        wts = np.array([sources[j].n for j in selected], dtype=float) / n_total
    else:
        wts = np.full(len(selected), 1.0 / len(selected))

    c1 = config.c_lambda_1
    if c1 is None:
        _, _, sigma = scaled_fit(anchor.design, anchor.response, settings=settings)
        c1 = 2.0 * max(sigma, np.finfo(float).tiny)
    base = math.sqrt(math.log(p) / n_v)
    lam0 = schedule(0, c1, 1.0, 1, p, n_total, n_v)
    beta = lasso_fit(LassoProblem(anchor.design, anchor.response, lam0), settings)
    s = config.s_hint if config.s_hint is not None else max(beta.support.size, 1)
    c2 = config.c_lambda_2
    if c2 is None:
        c2 = config.contraction / (s * base)
    if c2 * s * base >= 1:
        raise InvalidConfig(
            "c_lambda_2", f"c2*s*sqrt(log p/n) = {c2 * s * base:.3g} >= 1, "
            "penalties would not decrease")
    floor = c1 * math.sqrt(math.log(p) / n_total)
    trace = EdslTrace(anchor=v, selected=selected, c_lambda_1=float(c1),
                      c_lambda_2=float(c2), s_hint=int(s), floor=float(floor),
                      lambda_init=float(lam0))

    b = beta.values
    # without a correction the round problem is the plain Lasso and needs no
    # proximal term
    if len(selected) == 1:
        mu = 0.0
    elif config.proximal is None:
        mu = 0.5 * averaged_hessian_norm([sources[j] for j in selected], wts)
    else:
        mu = config.proximal
    trace.proximal = float(mu)
    for t in range(config.max_rounds):
        g_v = gradient(anchor, b)
        avg = np.zeros(p)
        for w, j in zip(wts, selected):
            g = g_v if j == v else gradient(sources[j], b)
            avg += w * g
        offset = avg - g_v
        lam = schedule(t + 1, c1, c2, s, p, n_total, n_v)
        new = lasso_fit(LassoProblem(anchor.design, anchor.response, lam,
                                     linear_offset=offset,
                                     proximal=mu if offset.any() else 0.0,
                                     proximal_center=b),
                        settings, init=b).values
        change = float(np.abs(new - b).sum())
        trace.lambdas.append(float(lam))
        trace.l1_change.append(change)
        trace.correction_norm.append(float(np.abs(offset).max()))
        b = new
        tol = settings.tol if settings is not None else 1e-7
        if abs(lam - floor) <= 1e-3 * floor and change <= tol:
            break
    return SparseCoefficients(b), trace
