"""Robust transfer Lasso for sparse recovery from corrupted measurements."""
from .data import (CorruptionVector, LabeledDataset, SparseCoefficients,
                   StandardizationRecord, read_csv, standardize, write_csv)
from .diagnostics import mmd_rbf, recovery_score, ser_db
from .edsl import EdslConfig, edsl_aggregate
from .errors import RTLError
from .pipeline import (FitReport, PipelineConfig, fit_target_only, run_oracle,
                       run_rtl, screen_sources)
from .selection import aht_tune, estimate_shifts, lasso_cv, sds_select
from .simulation import SimDesign, generate, sweep
from .solvers import (LassoProblem, RobustLassoProblem, SolverSettings,
                      kkt_residual, lasso_fit, robust_lasso_fit)
from .transfer import compute_tn, hard_threshold, transfer_fit

__version__ = "0.1.0"
