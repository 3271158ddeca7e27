"""Seeded synthetic panels for corrupted compressed sensing, and a
benchmark sweep over designs and methods."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .data import CorruptionVector, LabeledDataset, SparseCoefficients
from .diagnostics import recovery_score, ser_db
from .errors import InvalidDesign, RTLError

METHODS = ("lasso", "rlasso", "rtl", "oracle")


@dataclass(frozen=True)
class SimDesign:
    """Data-generating settings.

    ``design_scaling="root_n"`` draws sensing-matrix entries with variance
    1/sqrt(n); ``"cs"`` uses the conventional 1/n.  ``source_shifts`` and
    ``source_sparsities`` override the random per-source draws.
    """

    p: int = 400
    n_target: int = 100
    n_source: int = 100
    L: int = 5
    target_sparsity: int = 12
    corruption_fraction: float = 0.1
    corruption_low: float = 0.5
    corruption_high: float = 1.0
    corruption_sign_flip: bool = False
    noise_sd: float = 0.1
    source_sparsity_alt: int = 20
    shared_support_size: int = 12
    shift_low: float = 2.0
    shift_high: float = 24.0
    signal_amplitude: float = 1.0
    design_scaling: str = "root_n"
    source_shifts: tuple | None = None
    source_sparsities: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        def bad(f, msg):
            raise InvalidDesign(f, msg)
        if self.p < 1:
            bad("p", "must be positive")
        if self.n_target < 2 or self.n_source < 2:
            bad("n_target", "sample sizes must be >= 2")
        if self.L < 0:
            bad("L", "must be >= 0")
        if not 1 <= self.target_sparsity <= self.p:
            bad("target_sparsity", "must lie in [1, p]")
        if not 0 <= self.corruption_fraction <= 1:
            bad("corruption_fraction", "must lie in [0, 1]")
        if not 0 <= self.corruption_low <= self.corruption_high:
            bad("corruption_low", "need 0 <= low <= high")
        if self.noise_sd < 0:
            bad("noise_sd", "must be >= 0")
        if not 0 <= self.shared_support_size <= self.target_sparsity:
            bad("shared_support_size", "must lie in [0, target_sparsity]")
        if not 0 <= self.shift_low <= self.shift_high:
            bad("shift_low", "need 0 <= low <= high")
        if self.design_scaling not in ("root_n", "cs"):
            bad("design_scaling", "must be 'root_n' or 'cs'")
        for name in ("source_shifts", "source_sparsities"):
            v = getattr(self, name)
            if v is not None:
                if len(v) != self.L:
                    bad(name, f"needs {self.L} entries")
                object.__setattr__(self, name, tuple(v))
        sizes = self._sparsities_override()
        if sizes is not None:
            for sz in sizes:
                if not self.shared_support_size <= sz <= self.p:
                    bad("source_sparsities", f"{sz} outside [shared, p]")
        if self.source_sparsity_alt < self.shared_support_size:
            bad("source_sparsity_alt", "smaller than the shared support")

    @property
    def k(self):
        return int(math.floor(self.corruption_fraction * self.n_target + 0.5))

    def _sparsities_override(self):
        if self.source_sparsities is not None:
            return [int(s) for s in self.source_sparsities]
        if self.source_shifts is not None:
            return [self.target_sparsity if s == 0 else self.source_sparsity_alt
                    for s in self.source_shifts]
        return None

    def to_dict(self):
        d = asdict(self)
        for k in ("source_shifts", "source_sparsities"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidDesign(sorted(unknown)[0], "unknown field")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SimInstance:
    target: LabeledDataset
    truth_beta: SparseCoefficients
    truth_e: CorruptionVector
    sources: list
    truth_source_betas: list
    truth_shifts: list
    design_echo: SimDesign

    def useful_sources(self, h):
        """Indices of sources whose true shift has l1 norm at most ``h``."""
        return [j for j, s in enumerate(self.truth_shifts) if s <= h]


def _sensing(rng, n, p, scaling):
    var = 1.0 / math.sqrt(n) if scaling == "root_n" else 1.0 / n
    return rng.normal(0.0, math.sqrt(var), size=(n, p))


def generate(design):
    """Draw one panel: corrupted target plus ``L`` clean sources.

    Fully determined by ``design.seed``.
    """
    d = design
    rng = np.random.default_rng(d.seed)
    p, n = d.p, d.n_target
    supp = np.sort(rng.choice(p, d.target_sparsity, replace=False))
    beta = np.zeros(p)
    beta[supp] = d.signal_amplitude * rng.choice([-1.0, 1.0], supp.size)

    X = _sensing(rng, n, p, d.design_scaling)
    e = np.zeros(n)
    rows = rng.choice(n, d.k, replace=False)
    e[rows] = rng.uniform(d.corruption_low, d.corruption_high, d.k)
    if d.corruption_sign_flip:
        e[rows] *= rng.choice([-1.0, 1.0], d.k)
    y = X @ beta + e + d.noise_sd * rng.normal(size=n)
    target = LabeledDataset(X, y, id="target", kind="target")

    outside = np.setdiff1d(np.arange(p), supp)
    sizes = d._sparsities_override()
    sources, betas, shifts = [], [], []
    for j in range(d.L):
        if sizes is None:
            # 12-sparse with probability 1 - 1/L, else the alternative size
            use_main = rng.random() < 1.0 - 1.0 / d.L
            size = d.target_sparsity if use_main else d.source_sparsity_alt
        else:
            size = sizes[j]
        shared = np.sort(rng.choice(supp, d.shared_support_size, replace=False))
        extra_n = size - shared.size
        extra = rng.choice(outside, extra_n, replace=False) if extra_n else np.empty(0, int)
        if d.source_shifts is None:
            requested = rng.uniform(d.shift_low, d.shift_high)
        else:
            requested = float(d.source_shifts[j])
        b = np.zeros(p)
        b[shared] = beta[shared]
        if extra_n:
            w = rng.uniform(0.5, 1.5, extra_n)
            b[extra] = rng.choice([-1.0, 1.0], extra_n) * w / w.sum() * requested
            if requested == 0:
                raise InvalidDesign("source_shifts",
                                    f"source {j} has extra support but zero shift")
        Xs = _sensing(rng, d.n_source, p, d.design_scaling)
        ys = Xs @ b + d.noise_sd * rng.normal(size=d.n_source)
        sources.append(LabeledDataset(Xs, ys, id=f"source_{j}", kind="source"))
        betas.append(SparseCoefficients(b))
        shifts.append(float(np.abs(beta - b).sum()))
    return SimInstance(target=target, truth_beta=SparseCoefficients(beta),
                       truth_e=CorruptionVector(e), sources=sources,
                       truth_source_betas=betas, truth_shifts=shifts,
                       design_echo=d)


def replicate_seed(seed, cell, rep):
    """Seed for replicate ``rep`` of design ``cell``; independent of
    execution order."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(cell), int(rep)))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def fit_method(method, inst, config=None, h_oracle=None):
    """Run one estimator on an instance; returns the original-scale estimate."""
    from .pipeline import PipelineConfig, fit_target_only, run_oracle, run_rtl
    from .selection import lasso_cv

    config = config or PipelineConfig()
    if method == "lasso":
        b, _ = lasso_cv(inst.target, k0=config.k0, seed=config.seed,
                        settings=config.settings)
        return b.values, None
    if method == "rlasso":
        clock, rec, tf, _, _ = fit_target_only(inst.target, config)
        return rec.to_original(tf.beta_final.values), tf.corruption.values
    if method == "rtl":
        rep = run_rtl(inst.target, inst.sources, config)
        return rep.beta_hat, rep.corruption.values
    if method == "oracle":
        h = config.h if h_oracle is None else h_oracle
        A = inst.useful_sources(h)
        if not A:
            clock, rec, tf, _, _ = fit_target_only(inst.target, config)
            return rec.to_original(tf.beta_final.values), tf.corruption.values
        rep = run_oracle(inst.target, inst.sources, A, config,
                         known_shifts=inst.truth_shifts)
        return rep.beta_hat, rep.corruption.values
    raise ValueError(f"unknown method {method!r}")


def _score(inst, est, e_hat):
    ser = ser_db(inst.truth_beta.values, est)
    rs = recovery_score(inst.truth_beta.values, est, inst.truth_e.values, e_hat)
    return ser.value_db, rs


@dataclass(frozen=True)
class CellResult:
    design_index: int
    method: str
    reps: int
    ser: tuple
    sign: tuple
    errors: tuple = ()

    @property
    def ok(self):
        return [s for s in self.ser if s is not None]

    def row(self, design):
        ser = np.array(self.ok, dtype=float)
        fin = ser[np.isfinite(ser)]
        sign = [s for s in self.sign if s is not None]
        mean = float(fin.mean()) if fin.size else float("nan")
        se = float(fin.std(ddof=1) / math.sqrt(fin.size)) if fin.size > 1 else float("nan")
        d = design.to_dict()
        d.pop("source_shifts")
        d.pop("source_sparsities")
        return {"design_index": self.design_index, **d, "method": self.method,
                "reps": self.reps, "completed": len(self.ok),
                "mean_ser_db": mean, "se_ser_db": se,
                "sign_recovery_rate": float(np.mean(sign)) if sign else float("nan"),
                "failures": len(self.errors)}


def run_cell(design, design_index, method, reps, base_seed, config=None):
    """All replicates of one (design, method) cell."""
    sers, signs, errs = [], [], []
    for r in range(reps):
        inst = generate(replace(design, seed=replicate_seed(base_seed, design_index, r)))
        try:
            est, e_hat = fit_method(method, inst, config)
            s, rs = _score(inst, est, e_hat)
            sers.append(s)
            signs.append(rs.sign_match)
        except RTLError as exc:
            sers.append(None)
            signs.append(None)
            errs.append(f"rep {r}: {exc}")
    return CellResult(design_index, method, reps, tuple(sers), tuple(signs), tuple(errs))


def _run_cell_args(args):
    return run_cell(*args)


@dataclass
class BenchmarkTable:
    designs: list
    cells: list = field(default_factory=list)

    COLUMNS = ("design_index", "p", "n_target", "n_source", "L",
               "target_sparsity", "corruption_fraction", "corruption_low",
               "corruption_high", "corruption_sign_flip", "noise_sd",
               "source_sparsity_alt", "shared_support_size", "shift_low",
               "shift_high", "signal_amplitude", "design_scaling", "seed",
               "method", "reps", "completed", "mean_ser_db", "se_ser_db",
               "sign_recovery_rate", "failures")

    def rows(self):
        cells = sorted(self.cells, key=lambda c: (c.design_index, c.method))
        return [c.row(self.designs[c.design_index]) for c in cells]

    def mean_ser(self, design_index, method):
        for c in self.cells:
            if c.design_index == design_index and c.method == method:
                return c.row(self.designs[design_index])["mean_ser_db"]
        raise KeyError((design_index, method))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v)
                        for k, v in row.items()})
        return buf.getvalue()


def sweep(designs, methods, reps, seed=0, config=None, jobs=1, skip=None,
          on_cell=None):
    """Evaluate every (design, method) cell over ``reps`` replicates.

    Replicate ``r`` of design ``i`` uses the same generated instance for all
    methods.  ``skip`` holds already-finished cells keyed by
    ``(design_index, method)``; ``on_cell`` is called with each new result.
    """
    if reps < 1:
        raise InvalidDesign("reps", "must be >= 1")
    for m in methods:
        if m not in METHODS:
            raise InvalidDesign("methods", f"unknown method {m!r}")
    skip = dict(skip or {})
    table = BenchmarkTable(list(designs), list(skip.values()))
    todo = [(d, i, m, reps, seed, config) for i, d in enumerate(designs)
            for m in methods if (i, m) not in skip]
    if jobs <= 1:
        results = map(_run_cell_args, todo)
    else:
        pool = ProcessPoolExecutor(max_workers=jobs)
        results = pool.map(_run_cell_args, todo)
    try:
        for res in results:
            table.cells.append(res)
            if on_cell is not None:
                on_cell(res)
    finally:
        if jobs > 1:
            pool.shutdown()
    return table
