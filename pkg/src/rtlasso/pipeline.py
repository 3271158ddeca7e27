"""End-to-end robust transfer Lasso: oracle mode and full mode with
source selection.

All estimation happens in working coordinates where every column of every
dataset is divided by one common factor (see :func:`rtlasso.data.panel_scale`).
User-facing quantities (``h``, ``gamma1``, ``c_tilde``) and the reported
coefficients are on the original scale.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .data import (CorruptionVector, SparseCoefficients, StandardizationRecord,
                   panel_scale, validate_panel)
from .edsl import EdslConfig, edsl_aggregate, resolve_anchor
from .errors import (DegenerateResiduals, EmptySelection, InvalidConfig,
                     RTLError, StageError, ValidationError)
from .selection import (ShiftPenalties, ShiftEstimate, SelectionResult,
                        aht_tune, detect_corruption, estimate_shifts, sds_select,
                        source_sigma)
from .solvers import SolverSettings, scaled_fit
from .transfer import (NoiseScaleEstimate, TransferFit, assemble, compute_tn,
                       delta_grid, e_grid, estimate_sigma, fit_delta,
                       hard_threshold)

SCHEMA_VERSION = "1.0"
MULTS = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs of the full pipeline.

    h, gamma1 and c_tilde are on the original coefficient scale.
    ``gamma1=None`` thresholds at the data-driven t_n instead;
    ``c_tilde=None`` uses 2 * sigma * sqrt(s log p / n0) (working scale)
    with s the support size of the aggregated source estimate.
    """

    h: float = 10.0
    A_cap: int | None = None
    c_h: int = 5
    c_tilde: float | None = None
    C_tilde: float = 1.0
    gamma1: float | None = None
    k0: int = 5
    delta_mults: tuple = MULTS
    e_mults: tuple = MULTS
    shift_penalties: ShiftPenalties = field(default_factory=ShiftPenalties)
    edsl: EdslConfig = field(default_factory=lambda: EdslConfig(anchor="min_shift"))
    settings: SolverSettings = field(default_factory=SolverSettings)
    seed: int = 0
    scale: bool = True

    def __post_init__(self):
        for name in ("h", "c_h", "C_tilde"):
            if getattr(self, name) < 0:
                raise InvalidConfig(name, "must be >= 0")
        for name in ("c_tilde", "gamma1"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise InvalidConfig(name, "must be >= 0")
        if self.k0 < 2:
            raise InvalidConfig("k0", "must be >= 2")
        if self.A_cap is not None and self.A_cap < 1:
            raise InvalidConfig("A_cap", "must be a positive integer")
        if not self.delta_mults or not self.e_mults:
            raise InvalidConfig("grids", "tuning grids must be nonempty")

    def to_dict(self):
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("shift_penalties", "edsl", "settings"):
                v = asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidConfig(sorted(unknown)[0], "unknown field")
        if "shift_penalties" in d:
            d["shift_penalties"] = ShiftPenalties(**d["shift_penalties"])
        if "edsl" in d:
            e = {"anchor": "min_shift", **d["edsl"]}
            d["edsl"] = EdslConfig(**e)
        if "settings" in d:
            d["settings"] = SolverSettings(**d["settings"])
        for k in ("delta_mults", "e_mults"):
            if k in d:
                d[k] = tuple(float(x) for x in d[k])
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidConfig("config", str(exc)) from None


def _vec(v):
    v = np.asarray(v, dtype=float)
    return {"dense": v.tolist(),
            "sparse": [[int(i), float(v[i])] for i in np.flatnonzero(v)]}


@dataclass(eq=False)
class FitReport:
    """Everything a pipeline run produced.

    ``transfer``, ``edsl_beta`` and the shift table are in working
    coordinates; ``beta_hat`` and ``beta_thresholded`` are on the original
    scale.
    """

    mode: str
    scaling: StandardizationRecord
    sigma: NoiseScaleEstimate
    sigma_source: float
    transfer: TransferFit
    beta_hat: np.ndarray
    beta_thresholded: np.ndarray
    selection: SelectionResult | None = None
    edsl_beta: SparseCoefficients | None = None
    edsl_trace: object = None
    tuning: object = None
    config: PipelineConfig | None = None
    timings: dict = field(default_factory=dict)

    @property
    def corruption(self):
        return self.transfer.corruption

    def to_dict(self, timings=True):
        d = {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "seed": self.config.seed if self.config else None,
            "config": self.config.to_dict() if self.config else None,
            "scaling": self.scaling.to_dict(),
            "sigma": {"sigma_hat": self.sigma.sigma_hat, "method": self.sigma.method},
            "sigma_source": self.sigma_source,
            "beta_hat": _vec(self.beta_hat),
            "beta_thresholded": _vec(self.beta_thresholded),
            "selection": self.selection.to_dict() if self.selection else None,
            "edsl": None if self.edsl_beta is None else {
                "beta": _vec(self.edsl_beta.values),
                "trace": self.edsl_trace.to_dict()},
            "tuning": self.tuning.to_dict() if self.tuning else None,
            "transfer": self.transfer.to_dict(),
            "solver": {"coordinate_order": "natural", "stopping": "kkt",
                       "tol": self.config.settings.tol if self.config else None},
        }
        if timings:
            d["timings"] = dict(self.timings)
        return d

    def to_json(self, timings=True):
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True,
                          allow_nan=True) + "\n"


class _Clock:
    def __init__(self):
        self.timings = {}

    def stage(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except RTLError as exc:
            raise StageError(name, exc) from exc
        finally:
            self.timings[name] = time.perf_counter() - t0


def _working(target, sources, config):
    validate_panel(target, sources)
    rec = (panel_scale([target, *sources]) if config.scale
           else StandardizationRecord.identity(target.p))
    tw = target.with_design(rec.apply(target.design))
    sw = [s.with_design(rec.apply(s.design)) for s in sources]
    return rec, tw, sw


def _threshold(config, rec, sigma_hat, n0, p, lam_t, lam_delta):
    if config.gamma1 is not None:
        # one common scale factor, so a raw-scale threshold maps to a scalar
        return float(config.gamma1 * rec.column_scales[0])
    return compute_tn(sigma_hat, n0, p, lam_t, lam_delta)


def _final_sigma(target, beta, e, fallback):
    try:
        return estimate_sigma(target, beta, e)
    except DegenerateResiduals:
        return NoiseScaleEstimate(max(fallback, np.finfo(float).tiny), "source_scaled_lasso")


def _transfer_stages(clock, tw, sw, selected, v, shifts, sigmas, config, rec):
    """EDSL -> AHT -> transfer fit -> threshold, shared by both modes."""
    p, n0 = tw.p, tw.n
    ecfg = config.edsl
    if ecfg.anchor == "min_shift":
        anchor = resolve_anchor("min_shift", list(selected), shifts)
        ecfg = replace(ecfg, anchor=anchor)
    beta_d, trace = clock.stage("edsl", edsl_aggregate, sw, selected, ecfg,
                                config.settings, shifts)
    if v is None:
        v = trace.anchor
    sigma_src = float(np.median([sigmas[j] for j in selected]))
    count, flagged, _, _ = clock.stage(
        "corruption", detect_corruption, tw, config.settings, config.C_tilde,
        sigma_src)
    s = max(beta_d.support.size, 1)
    if config.c_tilde is None:
        c_tilde = 2.0 * sigma_src * math.sqrt(s * math.log(p) / n0)
    else:
        c_tilde = config.c_tilde * rec.column_scales[0]
    tuning = clock.stage(
        "aht", aht_tune, tw, sw, v, beta_d.values,
        delta_grid(sigma_src, n0, p, config.delta_mults),
        e_grid(sigma_src, n0, config.e_mults), c_h=config.c_h,
        c_tilde=c_tilde, k0=config.k0, settings=config.settings,
        seed=config.seed, corruption=(count, flagged))
    lam_delta, lam_e = tuning.chosen
    delta, e = clock.stage("transfer", fit_delta, tw, beta_d.values, lam_delta,
                           lam_e, config.settings)
    final = assemble(beta_d.values, delta)
    sigma = _final_sigma(tw, final.values, e.values, sigma_src)
    thr = _threshold(config, rec, sigma, n0, p, trace.final_lambda, lam_delta)
    tf = TransferFit(beta_source=beta_d, delta=delta, corruption=e,
                     beta_final=final, beta_thresholded=hard_threshold(final, thr),
                     threshold_used=float(thr), lambda_delta=float(lam_delta),
                     lambda_e=float(lam_e))
    return beta_d, trace, tuning, tf, sigma, sigma_src


def _report(mode, rec, tf, sigma, sigma_src, config, clock, **kw):
    return FitReport(
        mode=mode, scaling=rec, sigma=sigma, sigma_source=float(sigma_src),
        transfer=tf, beta_hat=rec.to_original(tf.beta_final.values),
        beta_thresholded=rec.to_original(tf.beta_thresholded.values),
        config=config, timings=clock.timings, **kw)


def fit_target_only(target, config=None, rec=None):
    """Robust Lasso on the target alone, penalties from a scaled robust fit.

    This is both the pipeline's fallback and the target-only baseline.
    """
    config = config or PipelineConfig()
    clock = _Clock()
    if rec is None:
        rec, tw, _ = _working(target, [], config)
    else:
        tw = target.with_design(rec.apply(target.design))
    beta, e, sig = clock.stage("fallback", scaled_fit, tw.design, tw.response,
                               robust=True, settings=config.settings)
    p, n0 = tw.p, tw.n
    sigma = _final_sigma(tw, beta.values, e.values, sig)
    lam_b = 0.5 * sig * math.sqrt(2 * math.log(p) / n0)
    lam_e = sig * math.sqrt(2 * math.log(n0) / n0)
    thr = _threshold(config, rec, sigma, n0, p, 0.0, lam_b)
    zero = SparseCoefficients(np.zeros(p))
    tf = TransferFit(beta_source=zero, delta=beta, corruption=e,
                     beta_final=assemble(zero.values, beta),
                     beta_thresholded=hard_threshold(beta, thr),
                     threshold_used=float(thr), lambda_delta=float(lam_b),
                     lambda_e=float(lam_e))
    return clock, rec, tf, sigma, sig


def run_rtl(target, sources, config=None):
    """Full pipeline: source selection, aggregation, tuning, correction."""
    config = config or PipelineConfig()
    rec, tw, sw = _working(target, sources, config)
    c = float(rec.column_scales[0])
    selection = None
    if sw:
        clock = _Clock()
        sigmas = [clock.stage("sigma", source_sigma, s, config.settings) for s in sw]
        table, failures = clock.stage("sds_shifts", estimate_shifts, tw, sw,
                                      config.shift_penalties, config.settings,
                                      sigmas)
        selection = sds_select(table, config.h * c, config.A_cap)
        selection = replace(selection, failures=failures)
        if selection.selected:
            shifts = {s.source_index: s.h_hat for s in table}
            beta_d, trace, tuning, tf, sigma, sig_src = _transfer_stages(
                clock, tw, sw, list(selection.selected),
                selection.validation_index, shifts, sigmas, config, rec)
            return _report("rtl", rec, tf, sigma, sig_src, config, clock,
                           selection=selection, edsl_beta=beta_d,
                           edsl_trace=trace, tuning=tuning)
        fb_timings = clock.timings
    else:
        fb_timings = {}
    clock, rec, tf, sigma, sig = fit_target_only(target, config, rec)
    clock.timings.update(fb_timings)
    return _report("fallback_target_only", rec, tf, sigma, sig, config, clock,
                   selection=selection)


def screen_sources(target, sources, config=None):
    """Shift estimates and source selection alone, without the transfer fit.

    Returns ``(selection, scale)``: the shift table is in working units,
    which are ``scale`` times the original coefficient units.
    """
    config = config or PipelineConfig()
    if not sources:
        raise InvalidConfig("sources", "selection needs at least one source")
    rec, tw, sw = _working(target, sources, config)
    c = float(rec.column_scales[0])
    sigmas = [source_sigma(s, config.settings) for s in sw]
    table, failures = estimate_shifts(tw, sw, config.shift_penalties,
                                      config.settings, sigmas)
    sel = replace(sds_select(table, config.h * c, config.A_cap), failures=failures)
    return sel, c


def run_oracle(target, sources, known_A, config=None, known_shifts=None):
    """Pipeline with the useful sources given.

    ``known_shifts`` (indexed like ``sources``) picks the anchor/validation
    source; without it the shift estimates of the given sources are used.
    """
    config = config or PipelineConfig()
    known_A = sorted(set(int(j) for j in known_A))
    if not known_A:
        raise EmptySelection("oracle mode needs a nonempty source set")
    if known_A[0] < 0 or known_A[-1] >= len(sources):
        raise ValidationError("known_A indexes outside the source list")
    rec, tw, sw = _working(target, sources, config)
    clock = _Clock()
    sigmas = {j: clock.stage("sigma", source_sigma, sw[j], config.settings)
              for j in known_A}
    table = None
    if known_shifts is not None:
        shifts = {j: float(known_shifts[j]) for j in known_A}
    else:
        sub = [sw[j] for j in known_A]
        est, _ = clock.stage("sds_shifts", estimate_shifts, tw, sub,
                             config.shift_penalties, config.settings,
                             [sigmas[j] for j in known_A])
        shifts = {known_A[s.source_index]: s.h_hat for s in est}
        table = tuple(replace(s, source_index=known_A[s.source_index]) for s in est)
    v = min(known_A, key=lambda j: (shifts.get(j, math.inf), j))
    beta_d, trace, tuning, tf, sigma, sig_src = _transfer_stages(
        clock, tw, sw, known_A, v, shifts, sigmas, config, rec)
    selection = SelectionResult(selected=tuple(known_A), validation_index=v,
                                shift_table=table or ())
    return _report("oracle", rec, tf, sigma, sig_src, config, clock,
                   selection=selection, edsl_beta=beta_d, edsl_trace=trace,
                   tuning=tuning)
