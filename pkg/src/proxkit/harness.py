"""Trial runner and stepsize-robustness sweep harness.

A sweep runs the Cartesian product alpha_grid x models x trials.  Each trial
gets its own dataset and sample-index stream keyed by (master_seed, model,
alpha index, trial), starts at x_1 = 0, and records the first evaluated
iterate whose objective gap falls below epsilon.  Aggregation reports median
and 5/95-percentile hit times per (model, alpha0) cell with non-converged
trials censored at k_max.

Records deliberately carry wall_nanos = 0 when produced by ``run_sweep`` so
that records.csv is byte-reproducible from its own metadata; pass
``collect_timing=True`` to ``run_trial`` for real timings.
"""

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from . import backend, datagen, kernels, models, problems
from .datagen import GenSpec
from .models import MODEL_NAMES, StepSchedule
from .problems import Dataset
from .rng import RngStream

RECORD_COLUMNS = ("experiment_id", "family", "model", "alpha0", "beta", "trial",
                  "hit_time", "converged", "diverged", "final_gap", "wall_nanos")
SUMMARY_COLUMNS = ("family", "model", "alpha0", "median", "p5", "p95",
                   "converged_fraction")


def default_alpha_grid() -> tuple:
    """21 log-spaced initial stepsizes covering 1e-5 .. 1e5."""
    # scalar pow keeps the decade points exact (np.logspace is one ulp off)
    return tuple(10.0 ** float(e) for e in np.linspace(-5.0, 5.0, 21))


@dataclass(frozen=True)
class RunConfig:
    gen_spec: GenSpec
    models: tuple = MODEL_NAMES
    schedule: StepSchedule = field(default_factory=lambda: StepSchedule(1.0, 0.6))
    epsilon: float = 0.05
    k_max: int = 50_000
    trials: int = 40
    alpha_grid: tuple = field(default_factory=default_alpha_grid)
    track_average: bool = False
    eval_stride: int = 10
    master_seed: int = 0
    shared_dataset: bool = False

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        for m in self.models:
            if m not in MODEL_NAMES:
                raise ValueError(f"unknown model {m!r}")
        if not self.models:
            raise ValueError("at least one model required")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.k_max < 1 or self.trials < 1 or self.eval_stride < 1:
            raise ValueError("k_max, trials and eval_stride must be >= 1")
        if any(a <= 0.0 for a in self.alpha_grid):
            raise ValueError("alpha_grid entries must be positive")
        if list(self.alpha_grid) != sorted(self.alpha_grid):
            raise ValueError("alpha_grid must be sorted ascending")

    def to_dict(self) -> dict:
        return {
            "gen_spec": self.gen_spec.to_dict(),
            "models": list(self.models),
            "schedule": {"alpha0": self.schedule.alpha0, "beta": self.schedule.beta},
            "epsilon": self.epsilon,
            "k_max": self.k_max,
            "trials": self.trials,
            "alpha_grid": list(self.alpha_grid),
            "track_average": self.track_average,
            "eval_stride": self.eval_stride,
            "master_seed": self.master_seed,
            "shared_dataset": self.shared_dataset,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        spec = GenSpec.from_dict(d.pop("gen_spec"))
        sched = d.pop("schedule", {"alpha0": 1.0, "beta": 0.6})
        if "model" in d and "models" not in d:  # accept the singular form
            d["models"] = [d.pop("model")]
        elif "model" in d:
            d.pop("model")
        return cls(gen_spec=spec,
                   schedule=StepSchedule(sched["alpha0"], sched["beta"]),
                   **{k: v for k, v in d.items() if k in (
                       "models", "epsilon", "k_max", "trials", "alpha_grid",
                       "track_average", "eval_stride", "master_seed",
                       "shared_dataset")})

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def experiment_id(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]


@dataclass
class TrialRecord:
    experiment_id: str
    family: str
    model: str
    alpha0: float
    beta: float
    trial: int
    hit_time: int               # censored at k_max when not converged
    converged: bool
    diverged: bool
    final_gap: float
    wall_nanos: int
    avg_gap: float = float("nan")      # in-memory only, not a CSV column
    nonfinite_evals: int = 0           # in-memory only


@dataclass
class SummaryRow:
    family: str
    model: str
    alpha0: float
    median: float
    p5: float
    p95: float
    converged_fraction: float


def _aux_for(dataset: Dataset) -> np.ndarray:
    aux = np.zeros((dataset.m, 2))
    if dataset.family == "Poisson":
        for i, bi in enumerate(dataset.b):
            aux[i, 0] = math.lgamma(bi + 1.0)
            aux[i, 1] = aux[i, 0] + bi - bi * math.log(bi) if bi > 0.0 else 0.0
    elif dataset.family == "HalfspaceDist":
        aux[:, 0] = np.linalg.norm(dataset.A, axis=1)
    return aux


def _trial_python(dataset, model, alpha0, beta, epsilon, k_max, eval_stride,
                  idx, x0, track_avg):
    """Reference trial loop over the public per-sample operations."""
    x = x0.copy()
    xbar = np.zeros_like(x)
    status, hit, final_gap, nonfinite = kernels.STATUS_NOT_CONVERGED, 0, np.inf, 0
    kcls = dataset.n_classes
    for k in range(1, k_max + 1):
        if track_avg:
            xbar += (x - xbar) / k
        nx2 = float(x @ x)
        if not (nx2 <= 1e200):
            status, final_gap = kernels.STATUS_DIVERGED, np.inf
            break
        if k == 1 or k % eval_stride == 0 or k == k_max:
            F = problems.objective(dataset, x)
            if not np.isfinite(F):
                nonfinite += 1
                status, final_gap = kernels.STATUS_DIVERGED, np.inf
                break
            final_gap = F - dataset.f_star
            if final_gap <= epsilon:
                status, hit = kernels.STATUS_CONVERGED, k
                break
        if k < k_max:
            sample = dataset.sample(int(idx[k - 1]))
            alpha = alpha0 * float(k) ** (-beta)
            x = models.apply_model_step(model, dataset.family, sample, x, alpha, kcls)
    avg_gap = np.nan
    if track_avg and status != kernels.STATUS_DIVERGED:
        Fb = problems.objective(dataset, xbar)
        if np.isfinite(Fb):
            avg_gap = Fb - dataset.f_star
    return status, hit, final_gap, avg_gap, nonfinite


def run_trial(dataset: Dataset, model: str, schedule: StepSchedule,
              epsilon: float, k_max: int, eval_stride: int, stream: RngStream,
              *, x_init: np.ndarray | None = None, track_average: bool = False,
              collect_timing: bool = False, engine: str = "auto",
              experiment_id: str = "", trial: int = 0) -> TrialRecord:
    """Run one trial; the reference optimum is certified against epsilon first."""
    problems.ensure_reference(dataset, epsilon)
    idx = stream.sample_indices(max(k_max - 1, 0), dataset.m)
    x0 = np.zeros(dataset.dim) if x_init is None else np.asarray(x_init, dtype=np.float64).reshape(-1).copy()
    model_code = models.MODEL_CODES[model]
    use_kernel = engine == "kernel" or (engine == "auto" and backend.numba_enabled())
    start = time.perf_counter_ns() if collect_timing else 0
    if not use_kernel:
        out = _trial_python(dataset, model, schedule.alpha0, schedule.beta,
                            epsilon, k_max, eval_stride, idx, x0, track_average)
    elif dataset.family == "MulticlassHinge":
        out = kernels.trial_hinge(
            np.ascontiguousarray(dataset.A), dataset.b.astype(np.int64),
            dataset.n_classes, model_code, schedule.alpha0, schedule.beta,
            epsilon, dataset.f_star, k_max, eval_stride, idx,
            x0.reshape(dataset.n_classes, dataset.n), 1 if track_average else 0)
    else:
        out = kernels.trial_vec(
            np.ascontiguousarray(dataset.A), dataset.b, _aux_for(dataset),
            kernels.FAM_CODES[dataset.family], model_code, schedule.alpha0,
            schedule.beta, epsilon, dataset.f_star, k_max, eval_stride, idx,
            x0, 1 if track_average else 0)
    wall = time.perf_counter_ns() - start if collect_timing else 0
    status, hit, final_gap, avg_gap, nonfinite = out
    converged = status == kernels.STATUS_CONVERGED
    return TrialRecord(
        experiment_id=experiment_id, family=dataset.family, model=model,
        alpha0=schedule.alpha0, beta=schedule.beta, trial=trial,
        hit_time=int(hit) if converged else k_max, converged=converged,
        diverged=status == kernels.STATUS_DIVERGED, final_gap=float(final_gap),
        wall_nanos=int(wall), avg_gap=float(avg_gap), nonfinite_evals=int(nonfinite))


def _run_cell(config_dict: dict, alpha_idx: int, model: str) -> list:
    """Worker: all trials of one (alpha0, model) cell, in trial order."""
    config = RunConfig.from_dict(config_dict)
    alpha0 = config.alpha_grid[alpha_idx]
    schedule = StepSchedule(alpha0, config.schedule.beta)
    root = RngStream(config.master_seed)
    exp_id = config.experiment_id()
    records = []
    shared = None
    if config.shared_dataset:
        shared = datagen.generate(config.gen_spec, root.derive("data/shared"))
        problems.ensure_reference(shared, config.epsilon)
    for trial in range(config.trials):
        if shared is not None:
            ds = shared
        else:
            ds = datagen.generate(config.gen_spec,
                                  root.derive(f"data/{model}/a{alpha_idx}", trial))
        rec = run_trial(ds, model, schedule, config.epsilon, config.k_max,
                        config.eval_stride,
                        root.derive(f"samples/{model}/a{alpha_idx}", trial),
                        track_average=config.track_average,
                        experiment_id=exp_id, trial=trial)
        records.append(rec)
    return records


def run_sweep(config: RunConfig, workers: int = 1, progress=None):
    """Full Cartesian sweep; returns (records, summaries) in deterministic order."""
    cells = [(ai, model) for ai in range(len(config.alpha_grid))
             for model in config.models]
    config_dict = config.to_dict()
    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_cell, config_dict, ai, model): (ai, model)
                       for ai, model in cells}
            done = 0
            for fut in as_completed(futures):
                results[futures[fut]] = fut.result()
                done += 1
                if progress:
                    progress(done, len(cells))
    else:
        for done, (ai, model) in enumerate(cells, 1):
            results[(ai, model)] = _run_cell(config_dict, ai, model)
            if progress:
                progress(done, len(cells))
    records = []
    for ai, model in cells:
        records.extend(results[(ai, model)])
    summaries = summarize(records, config)
    return records, summaries


def summarize(records: list, config: RunConfig) -> list:
    """Percentile aggregation per (alpha0, model) cell, censored at k_max."""
    rows = []
    for ai in range(len(config.alpha_grid)):
        alpha0 = config.alpha_grid[ai]
        for model in config.models:
            cell = [r for r in records if r.model == model and r.alpha0 == alpha0]
            if not cell:
                continue
            hits = np.array([float(r.hit_time) for r in cell])
            p5, med, p95 = np.percentile(hits, [5.0, 50.0, 95.0], method="linear")
            frac = sum(1 for r in cell if r.converged) / len(cell)
            rows.append(SummaryRow(family=config.gen_spec.family, model=model,
                                   alpha0=alpha0, median=float(med), p5=float(p5),
                                   p95=float(p95), converged_fraction=float(frac)))
    return rows


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _rows_and_columns(rows: list):
    if rows and isinstance(rows[0], SummaryRow):
        return SUMMARY_COLUMNS
    return RECORD_COLUMNS


def emit_csv(rows: list, path: str) -> None:
    """Long-format CSV; one row per record (or summary cell)."""
    columns = _rows_and_columns(rows)
    try:
        with open(path, "w") as fh:
            fh.write(",".join(columns) + "\n")
            for r in rows:
                fh.write(",".join(_format(getattr(r, c)) for c in columns) + "\n")
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc


def emit_json(rows: list, path: str) -> None:
    columns = _rows_and_columns(rows)
    payload = [{c: getattr(r, c) for c in columns} for r in rows]
    try:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc
