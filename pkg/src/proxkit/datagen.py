"""Seeded synthetic problem generators.

Every generator is a pure function of (spec, stream): identical inputs give
bit-identical datasets on any platform, because all randomness flows through
the counter-based :class:`~proxkit.rng.RngStream`.

Conditioned design matrices are built as sqrt(m) * Q * D with Q a uniformly
random m-by-n orthonormal frame and D = diag(linspace(1, kappa, n)).  The
sqrt(m) factor keeps per-row squared norms near n * mean(D^2), the same scale
as unit-variance Gaussian rows, so the mean objective at the origin is O(n)
rather than O(n/m) and time-to-accuracy sweeps start from a nontrivial gap.
The condition number of A is exactly kappa either way.
"""

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import problems
from .errors import RankDeficientError
from .problems import Dataset
from .rng import RngStream

_MAX_REDRAWS = 8


@dataclass(frozen=True)
class GenSpec:
    """Recipe for one synthetic dataset; serializes verbatim into configs."""

    family: str
    m: int = 1000
    n: int = 40
    kappa: float = 1.0      # condition number of the design matrix
    sigma: float = 0.0      # additive noise std (regression families)
    p: float = 0.0          # label corruption probability (classification)
    K: int = 0              # class count (MulticlassHinge only)
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be at least 1")
        if self.kappa < 1.0:
            raise ValueError("kappa must be >= 1")
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.family not in problems.FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "MulticlassHinge" and self.K < 2:
            raise ValueError("MulticlassHinge needs K >= 2")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GenSpec":
        return cls(**d)


def gen_conditioned_matrix(m: int, n: int, kappa: float, stream: RngStream) -> np.ndarray:
    """m-by-n matrix with singular values sqrt(m) * linspace(1, kappa, n)."""
    if m < n:
        raise ValueError("conditioned matrix requires m >= n")
    for attempt in range(_MAX_REDRAWS):
        g = stream.derive("gaussian", attempt).gaussians(m * n).reshape(m, n)
        q, r = np.linalg.qr(g, mode="reduced")
        diag = np.diag(r)
        if np.min(np.abs(diag)) <= 1e-10 * math.sqrt(m):
            continue
        # fix signs so Q is the unique factor with positive R diagonal
        q = q * np.where(diag >= 0.0, 1.0, -1.0)
        d = np.linspace(1.0, kappa, n)
        return np.ascontiguousarray(math.sqrt(m) * q * d)
    raise RankDeficientError(f"gaussian draw rank-deficient {_MAX_REDRAWS} times (m={m}, n={n})")


def _check_rows_nonzero(A: np.ndarray) -> bool:
    return bool(np.min(np.einsum("ij,ij->i", A, A)) > 0.0)


def gen_regression(spec: GenSpec, stream: RngStream | None = None) -> Dataset:
    """LeastSquares / AbsoluteLoss data: b = A x* + sigma * v."""
    if spec.family not in ("LeastSquares", "AbsoluteLoss"):
        raise ValueError("gen_regression serves LeastSquares and AbsoluteLoss")
    stream = stream or RngStream(spec.seed)
    A = gen_conditioned_matrix(spec.m, spec.n, spec.kappa, stream.derive("matrix"))
    x_star = stream.derive("planted").gaussians(spec.n)
    b = A @ x_star
    if spec.sigma > 0.0:
        b = b + spec.sigma * stream.derive("noise").gaussians(spec.m)
    ds = Dataset(family=spec.family, A=A, b=b, planted=x_star,
                 meta={"kappa": spec.kappa, "sigma": spec.sigma, "generator": "regression"})
    if spec.family == "LeastSquares":
        ref = problems.reference_optimum(ds)
        ds.f_star, ds.f_star_tolerance = ref.f_star, ref.tolerance
        ds.meta["f_star_method"] = ref.method
    elif spec.sigma == 0.0:
        ds.f_star = 0.0
        ds.f_star_tolerance = problems.objective(ds, x_star)
        ds.meta["f_star_method"] = "witness"
    return ds  # noisy AbsoluteLoss is certified lazily (long subgradient run)


def gen_logistic(spec: GenSpec, stream: RngStream | None = None) -> Dataset:
    """Conditioned rows label a planted direction; labels flip w.p. p."""
    if spec.family != "Logistic":
        raise ValueError("gen_logistic serves Logistic")
    stream = stream or RngStream(spec.seed)
    A = gen_conditioned_matrix(spec.m, spec.n, spec.kappa, stream.derive("matrix"))
    u_star = stream.derive("planted").gaussians(spec.n)
    b = np.where(A @ u_star >= 0.0, 1.0, -1.0)
    if spec.p > 0.0:
        flips = stream.derive("flips").uniforms(spec.m) < spec.p
        b = np.where(flips, -b, b)
    ds = Dataset(family="Logistic", A=A, b=b, planted=u_star,
                 meta={"kappa": spec.kappa, "p": spec.p, "generator": "logistic"})
    ref = problems.reference_optimum(ds)
    ds.f_star, ds.f_star_tolerance = ref.f_star, ref.tolerance
    ds.meta["f_star_method"] = ref.method
    return ds


def gen_hinge(spec: GenSpec, stream: RngStream | None = None) -> Dataset:
    """Gaussian rows labeled by a planted K-by-n score matrix; labels
    resampled uniformly over all K classes w.p. p."""
    if spec.family != "MulticlassHinge":
        raise ValueError("gen_hinge serves MulticlassHinge")
    stream = stream or RngStream(spec.seed)
    for attempt in range(_MAX_REDRAWS):
        A = stream.derive("rows", attempt).gaussians(spec.m * spec.n).reshape(spec.m, spec.n)
        if _check_rows_nonzero(A):
            break
    else:
        raise RankDeficientError("could not draw nonzero hinge rows")
    U = stream.derive("planted").gaussians(spec.K * spec.n).reshape(spec.K, spec.n)
    labels = np.argmax(A @ U.T, axis=1).astype(np.float64)
    if spec.p > 0.0:
        hit = stream.derive("resample_mask").uniforms(spec.m) < spec.p
        fresh = np.floor(stream.derive("resample_label").uniforms(spec.m) * spec.K)
        labels = np.where(hit, np.minimum(fresh, spec.K - 1), labels)
    ds = Dataset(family="MulticlassHinge", A=A, b=labels, n_classes=spec.K,
                 planted=U.reshape(-1), meta={"p": spec.p, "generator": "hinge"})
    if spec.p == 0.0:
        ref = problems.reference_optimum(ds)
        ds.f_star, ds.f_star_tolerance = ref.f_star, ref.tolerance
        ds.meta["f_star_method"] = ref.method
    return ds  # noisy hinge certified lazily


def gen_poisson(spec: GenSpec, stream: RngStream | None = None) -> Dataset:
    """Counts b_i ~ Poisson(exp(<a_i, u>)) with ||u|| = sqrt(n), a_i ~ N(0, I/n)."""
    if spec.family != "Poisson":
        raise ValueError("gen_poisson serves Poisson")
    stream = stream or RngStream(spec.seed)
    u = math.sqrt(spec.n) * stream.derive("planted").unit_sphere(spec.n)
    for attempt in range(_MAX_REDRAWS):
        A = stream.derive("rows", attempt).gaussians(spec.m * spec.n).reshape(spec.m, spec.n)
        A /= math.sqrt(spec.n)
        if _check_rows_nonzero(A):
            break
    else:
        raise RankDeficientError("could not draw nonzero poisson rows")
    b = stream.derive("counts").poisson(np.exp(A @ u)).astype(np.float64)
    ds = Dataset(family="Poisson", A=A, b=b, planted=u,
                 meta={"sigma": 0.0, "generator": "poisson"})
    ref = problems.reference_optimum(ds)
    ds.f_star, ds.f_star_tolerance = ref.f_star, ref.tolerance
    ds.meta["f_star_method"] = ref.method
    return ds


def gen_feasibility(spec: GenSpec, stream: RngStream | None = None) -> Dataset:
    """Halfspaces <a_i, x> <= b_i sharing the planted interior point."""
    if spec.family != "HalfspaceDist":
        raise ValueError("gen_feasibility serves HalfspaceDist")
    stream = stream or RngStream(spec.seed)
    margin_sigma = 0.1
    for attempt in range(_MAX_REDRAWS):
        g = stream.derive("directions", attempt).gaussians(spec.m * spec.n).reshape(spec.m, spec.n)
        norms = np.linalg.norm(g, axis=1)
        if np.min(norms) > 0.0:
            A = g / norms[:, None]
            break
    else:
        raise RankDeficientError("could not draw nonzero halfspace directions")
    x_star = stream.derive("planted").gaussians(spec.n)
    margins = margin_sigma * np.abs(stream.derive("margins").gaussians(spec.m))
    b = A @ x_star + margins
    ds = Dataset(family="HalfspaceDist", A=A, b=b, planted=x_star,
                 f_star=0.0, f_star_tolerance=0.0,
                 meta={"sigma": 0.0, "margin_sigma": margin_sigma,
                       "generator": "feasibility", "f_star_method": "witness"})
    return ds


def gen_interpolation(spec: GenSpec, stream: RngStream | None = None) -> Dataset:
    """Consistent wide least-squares system (n > m), rows of norm sqrt(n).

    The planted point is the projection of a Gaussian draw onto the row span,
    and draws are rejected until the smallest of the m singular values is at
    least sqrt(m).
    """
    if spec.family != "LeastSquares" or spec.n <= spec.m:
        raise ValueError("gen_interpolation requires LeastSquares with n > m")
    stream = stream or RngStream(spec.seed)
    for attempt in range(_MAX_REDRAWS):
        rows = stream.derive("rows", attempt)
        A = np.stack([math.sqrt(spec.n) * rows.unit_sphere(spec.n) for _ in range(spec.m)])
        smin = float(np.linalg.svd(A, compute_uv=False)[-1])
        if smin >= math.sqrt(spec.m):
            break
    else:
        raise RankDeficientError(f"sigma_min stayed below sqrt(m) after {_MAX_REDRAWS} draws")
    x0 = stream.derive("planted").gaussians(spec.n)
    x_star = A.T @ np.linalg.solve(A @ A.T, A @ x0)
    b = A @ x_star
    ds = Dataset(family="LeastSquares", A=A, b=b, planted=x_star,
                 meta={"sigma": 0.0, "generator": "interpolation", "sigma_min": smin,
                       "f_star_method": "witness"})
    ds.f_star = 0.0
    ds.f_star_tolerance = problems.objective(ds, x_star)
    return ds


def generate(spec: GenSpec, stream: RngStream | None = None) -> Dataset:
    """Dispatch to the family's generator (wide LeastSquares means interpolation)."""
    fam = spec.family
    if fam == "LeastSquares" and spec.n > spec.m:
        return gen_interpolation(spec, stream)
    if fam in ("LeastSquares", "AbsoluteLoss"):
        return gen_regression(spec, stream)
    if fam == "Logistic":
        return gen_logistic(spec, stream)
    if fam == "MulticlassHinge":
        return gen_hinge(spec, stream)
    if fam == "Poisson":
        return gen_poisson(spec, stream)
    if fam == "HalfspaceDist":
        return gen_feasibility(spec, stream)
    raise ValueError(f"unknown family {fam!r}")
