"""proxkit: model-based stochastic subgradient methods with robust stepsizes.

The package implements four per-sample update rules (classical subgradient,
truncated, full proximal, and a two-cut bundle) over six convex loss
families, plus synthetic problem generators, a stepsize-robustness sweep
harness, and independent verification oracles.  Hot loops are compiled with
numba when available; set ``PROXKIT_NUMBA=0`` to force the pure-numpy path.
"""

__version__ = "0.1.0"

from . import backend, datagen, harness, kernels, models, problems, rng, verify
from .datagen import GenSpec, generate
from .errors import (InsufficientDecayError, NonCertifiedError,
                     OracleInconsistencyError, ProxkitError,
                     RankDeficientError, UnsupportedProxError)
from .harness import (RunConfig, SummaryRow, TrialRecord, default_alpha_grid,
                      emit_csv, emit_json, run_sweep, run_trial, summarize)
from .models import (MODEL_NAMES, AffineMinorant, FirstOrderInfo,
                     StepSchedule, apply_model_step, bundle2_step,
                     bundle_pair_prox, first_order_info, full_prox_step,
                     sgm_step, truncated_step)
from .problems import (FAMILIES, Dataset, ReferenceOptimum, Sample,
                       batch_subgrad, ensure_reference, inf_value,
                       load_dataset, loss_value, objective, prox,
                       reference_optimum, save_dataset, subgrad)
from .rng import RngStream
from .verify import (CheckResult, RateFit, fit_linear_rate, grid_prox_oracle,
                     logged_distances, normality_check, run_all_checks,
                     stability_check)

__all__ = [
    "__version__",
    "backend", "datagen", "harness", "kernels", "models", "problems", "rng",
    "verify",
    "GenSpec", "generate",
    "InsufficientDecayError", "NonCertifiedError", "OracleInconsistencyError",
    "ProxkitError", "RankDeficientError", "UnsupportedProxError",
    "RunConfig", "SummaryRow", "TrialRecord", "default_alpha_grid",
    "emit_csv", "emit_json", "run_sweep", "run_trial", "summarize",
    "MODEL_NAMES", "AffineMinorant", "FirstOrderInfo", "StepSchedule",
    "apply_model_step", "bundle2_step", "bundle_pair_prox",
    "first_order_info", "full_prox_step", "sgm_step", "truncated_step",
    "FAMILIES", "Dataset", "ReferenceOptimum", "Sample", "batch_subgrad",
    "ensure_reference", "inf_value", "load_dataset", "loss_value",
    "objective", "prox", "reference_optimum", "save_dataset", "subgrad",
    "RngStream",
    "CheckResult", "RateFit", "fit_linear_rate", "grid_prox_oracle",
    "logged_distances", "normality_check", "run_all_checks", "stability_check",
]
