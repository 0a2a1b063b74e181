"""Loss families and their per-sample oracles.

Each family exposes four per-sample operations used by the step rules:

* ``loss_value(family, sample, x)``   convex loss f(x; sample)
* ``subgrad(family, sample, x)``      one element of the subdifferential
* ``inf_value(family, sample)``       inf_z f(z; sample), known in closed form
* ``prox(family, sample, x, alpha)``  argmin_y f(y; sample) + ||y-x||^2 / (2 alpha)

plus the full-batch ``objective`` and a certified ``reference_optimum``.

Families and their per-sample losses for a sample (a, b):

==================  ==========================================================
LeastSquares        0.5 * (<a,x> - b)^2
AbsoluteLoss        |<a,x> - b|
Logistic            log(1 + exp(-b <a,x>)),  b in {-1, +1}
MulticlassHinge     max_{j != l} [1 + <a, x_j - x_l>]_+ ,  b = class index l
Poisson             exp(<a,x>) - b <a,x> + log(b!),  b a count
HalfspaceDist       dist(x, {z : <a,z> <= b}) = [<a,x> - b]_+ / ||a||
==================  ==========================================================

The multiclass iterate is a single flat vector of length K*n; block j
(``x[j*n:(j+1)*n]``) is the weight vector of class j, labels are 0-based.

Proximal maps follow the one-dimensional structure of each loss: the
displacement is always parallel to the sample direction ``a`` (for the hinge,
every class block moves along ``a``), so scalar bisection or a tiny dual QP
suffices and the result is exact to the stated tolerance.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonCertifiedError, UnsupportedProxError

FAMILIES = (
    "LeastSquares",
    "AbsoluteLoss",
    "Logistic",
    "MulticlassHinge",
    "Poisson",
    "HalfspaceDist",
)

# exp() arguments are capped here; e^700 ~ 1e304 stays finite so the harness
# divergence sentinel, not an overflow, decides a run's fate
EXP_CAP = 700.0

BISECT_TOL = 1e-12
BISECT_MAX_ITERS = 200
HINGE_KKT_TOL = 1e-10
HINGE_MAX_ITERS = 10_000


@dataclass
class Sample:
    """One observation: direction ``a`` and scalar payload ``b``.

    ``b`` is the regression target, a +-1 label, a count, or a 0-based class
    index depending on the family.
    """

    a: np.ndarray
    b: float


@dataclass
class Dataset:
    """Columnar sample store plus the certified optimum when known."""

    family: str
    A: np.ndarray            # (m, n) float64
    b: np.ndarray            # (m,) float64; class indices stored as floats
    n_classes: int = 0       # K for MulticlassHinge, else 0
    planted: np.ndarray | None = None     # generator's witness point, flat
    f_star: float | None = None
    f_star_tolerance: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def dim(self) -> int:
        """Length of the iterate vector."""
        k = self.n_classes if self.family == "MulticlassHinge" else 1
        return max(k, 1) * self.n

    def sample(self, i: int) -> Sample:
        return Sample(self.A[i], float(self.b[i]))


def _sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _softplus(z: float) -> float:
    # log(1 + e^z) without overflow
    if z > 0.0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


def _hinge_blocks(x: np.ndarray, n: int, k: int) -> np.ndarray:
    return np.asarray(x).reshape(k, n)


def _hinge_scores(blocks: np.ndarray, a: np.ndarray) -> np.ndarray:
    return blocks @ a


# ---------------------------------------------------------------------------
# per-sample value / subgradient / infimum


def loss_value(family: str, sample: Sample, x: np.ndarray, n_classes: int = 0) -> float:
    a, b = sample.a, sample.b
    if family == "MulticlassHinge":
        blocks = _hinge_blocks(x, a.shape[0], n_classes)
        t = _hinge_scores(blocks, a)
        label = int(b)
        c = 1.0 + t - t[label]
        c[label] = 0.0
        return float(max(0.0, c.max()))
    t = float(np.dot(a, x))
    if family == "LeastSquares":
        r = t - b
        return 0.5 * r * r
    if family == "AbsoluteLoss":
        return abs(t - b)
    if family == "Logistic":
        return _softplus(-b * t)
    if family == "Poisson":
        return math.exp(min(t, EXP_CAP)) - b * t + math.lgamma(b + 1.0)
    if family == "HalfspaceDist":
        r = t - b
        return max(r, 0.0) / float(np.linalg.norm(a))
    raise ValueError(f"unknown family {family!r}")


def subgrad(family: str, sample: Sample, x: np.ndarray, n_classes: int = 0) -> np.ndarray:
    a, b = sample.a, sample.b
    if family == "MulticlassHinge":
        n = a.shape[0]
        blocks = _hinge_blocks(x, n, n_classes)
        t = _hinge_scores(blocks, a)
        label = int(b)
        c = 1.0 + t - t[label]
        c[label] = -np.inf
        j = int(np.argmax(c))  # first max wins on ties
        g = np.zeros_like(blocks)
        if c[j] > 0.0:
            g[j] = a
            g[label] = -a
        return g.reshape(-1)
    t = float(np.dot(a, x))
    if family == "LeastSquares":
        return (t - b) * a
    if family == "AbsoluteLoss":
        s = math.copysign(1.0, t - b) if t != b else 0.0
        return s * a
    if family == "Logistic":
        return (-b * _sigmoid(-b * t)) * a
    if family == "Poisson":
        return (math.exp(min(t, EXP_CAP)) - b) * a
    if family == "HalfspaceDist":
        if t - b > 0.0:
            return a / float(np.linalg.norm(a))
        return np.zeros_like(a)
    raise ValueError(f"unknown family {family!r}")


def inf_value(family: str, sample: Sample) -> float:
    if family == "Poisson":
        b = sample.b
        if b <= 0.0:
            return 0.0
        return math.lgamma(b + 1.0) + b - b * math.log(b)
    if family in FAMILIES:
        return 0.0
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# proximal maps


def prox(family: str, sample: Sample, x: np.ndarray, alpha: float, n_classes: int = 0) -> np.ndarray:
    """Exact minimizer of f(y; sample) + ||y - x||^2 / (2 alpha)."""
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    a, b = sample.a, sample.b
    if family == "MulticlassHinge":
        return _prox_hinge(a, int(b), x, alpha, n_classes)
    aa = float(np.dot(a, a))
    t = float(np.dot(a, x))
    if family == "LeastSquares":
        r = t - b
        return x - (alpha * r / (1.0 + alpha * aa)) * a
    if family == "AbsoluteLoss":
        if aa == 0.0:
            return x.copy()
        r = t - b
        if r == 0.0:
            return x.copy()
        return x - math.copysign(min(alpha, abs(r) / aa), r) * a
    if family == "HalfspaceDist":
        if aa == 0.0:
            return x.copy()
        norm = math.sqrt(aa)
        r = t - b
        if r <= 0.0:
            return x.copy()
        return x - (min(alpha, r / norm) / norm) * a
    if family == "Logistic":
        # y = x + s*b*a with s in [0, alpha] solving s = alpha*sigmoid(-b t - s ||a||^2)
        lo, hi = 0.0, alpha
        tol = BISECT_TOL * min(1.0, alpha)
        for _ in range(BISECT_MAX_ITERS):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            h = mid - alpha * _sigmoid(-b * t - mid * aa)
            if h > 0.0:
                hi = mid
            else:
                lo = mid
        s = 0.5 * (lo + hi)
        return x + (s * b) * a
    if family == "Poisson":
        # y = x - theta*a with theta/alpha = exp(t - theta ||a||^2) - b, monotone in theta
        edge = alpha * (math.exp(min(t, EXP_CAP)) - b)
        edge = max(min(edge, 1e300), -1e300)
        lo, hi = min(0.0, edge), max(0.0, edge)
        tol = BISECT_TOL * min(1.0, alpha)
        for _ in range(BISECT_MAX_ITERS):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            h = mid / alpha - math.exp(min(t - mid * aa, EXP_CAP)) + b
            if h > 0.0:
                hi = mid
            else:
                lo = mid
        theta = 0.5 * (lo + hi)
        return x - theta * a
    raise UnsupportedProxError(f"no prox registered for family {family!r}")


def project_capped_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w : w >= 0, sum(w) <= 1}."""
    w = np.maximum(v, 0.0)
    s = w.sum()
    if s <= 1.0:
        return w
    # cap is active: project onto the probability simplex (sort and threshold)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    j = np.arange(1, v.shape[0] + 1)
    rho = np.nonzero(u - css / j > 0.0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def hinge_dual_solve(c: np.ndarray, alpha_aa: float, n_classes: int):
    """Solve the hinge prox dual over the capped simplex by projected gradient.

    Minimizes (alpha_aa / 2) * (sum lam_j^2 + (sum lam_j)^2) - <c, lam>
    subject to lam >= 0, sum(lam) <= 1.  Returns (lam, kkt_residual, iters).
    """
    lam = np.zeros_like(c)
    if alpha_aa <= 0.0:
        return lam, 0.0, 0
    eta = 1.0 / (2.0 * alpha_aa * n_classes)
    # the unit-step natural residual scales like alpha_aa * |lam - lam_opt|,
    # so a fixed tolerance bounds the primal displacement error by about
    # tol / ||a|| independently of alpha
    tol = HINGE_KKT_TOL
    res = np.inf
    iters = 0
    for iters in range(1, HINGE_MAX_ITERS + 1):
        grad = alpha_aa * (lam + lam.sum()) - c
        res = float(np.max(np.abs(lam - project_capped_simplex(lam - grad))))
        if res <= tol:
            break
        lam = project_capped_simplex(lam - eta * grad)
    return lam, res, iters


def _prox_hinge(a: np.ndarray, label: int, x: np.ndarray, alpha: float, k: int) -> np.ndarray:
    n = a.shape[0]
    blocks = _hinge_blocks(x, n, k).copy()
    t = _hinge_scores(blocks, a)
    others = [j for j in range(k) if j != label]
    c = np.array([1.0 + t[j] - t[label] for j in others])
    aa = float(np.dot(a, a))
    lam, _, _ = hinge_dual_solve(c, alpha * aa, k)
    total = float(lam.sum())
    for lam_j, j in zip(lam, others):
        blocks[j] -= (alpha * lam_j) * a
    blocks[label] += (alpha * total) * a
    return blocks.reshape(-1)


# ---------------------------------------------------------------------------
# full-batch objective and batch subgradient


def objective(dataset: Dataset, x: np.ndarray) -> float:
    """Mean loss over the dataset."""
    A, b = dataset.A, dataset.b
    fam = dataset.family
    if fam == "MulticlassHinge":
        k = dataset.n_classes
        blocks = _hinge_blocks(x, dataset.n, k)
        scores = A @ blocks.T
        labels = b.astype(np.int64)
        rows = np.arange(A.shape[0])
        margins = 1.0 + scores - scores[rows, labels][:, None]
        margins[rows, labels] = -np.inf
        return float(np.mean(np.maximum(margins.max(axis=1), 0.0)))
    t = A @ x
    if fam == "LeastSquares":
        r = t - b
        return float(0.5 * np.mean(r * r))
    if fam == "AbsoluteLoss":
        return float(np.mean(np.abs(t - b)))
    if fam == "Logistic":
        z = -b * t
        out = np.where(z > 0.0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(-np.abs(z))))
        return float(np.mean(out))
    if fam == "Poisson":
        lgb = _lgamma_cache(dataset)
        return float(np.mean(np.exp(np.minimum(t, EXP_CAP)) - b * t + lgb))
    if fam == "HalfspaceDist":
        norms = np.linalg.norm(A, axis=1)
        return float(np.mean(np.maximum(t - b, 0.0) / norms))
    raise ValueError(f"unknown family {fam!r}")


def batch_subgrad(dataset: Dataset, x: np.ndarray) -> np.ndarray:
    """Subgradient of the full objective, flattened like the iterate."""
    A, b = dataset.A, dataset.b
    m = A.shape[0]
    fam = dataset.family
    if fam == "MulticlassHinge":
        k = dataset.n_classes
        blocks = _hinge_blocks(x, dataset.n, k)
        scores = A @ blocks.T
        labels = b.astype(np.int64)
        rows = np.arange(m)
        margins = 1.0 + scores - scores[rows, labels][:, None]
        margins[rows, labels] = -np.inf
        jstar = np.argmax(margins, axis=1)
        active = margins[rows, jstar] > 0.0
        g = np.zeros_like(blocks)
        np.add.at(g, jstar[active], A[active])
        np.add.at(g, labels[active], -A[active])
        return g.reshape(-1) / m
    t = A @ x
    if fam == "LeastSquares":
        return A.T @ (t - b) / m
    if fam == "AbsoluteLoss":
        return A.T @ np.sign(t - b) / m
    if fam == "Logistic":
        z = -b * t
        sig = np.where(z >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
        return A.T @ (-b * sig) / m
    if fam == "Poisson":
        return A.T @ (np.exp(np.minimum(t, EXP_CAP)) - b) / m
    if fam == "HalfspaceDist":
        norms = np.linalg.norm(A, axis=1)
        w = np.where(t - b > 0.0, 1.0 / norms, 0.0)
        return A.T @ w / m
    raise ValueError(f"unknown family {fam!r}")


def _lgamma_cache(dataset: Dataset) -> np.ndarray:
    lgb = dataset.meta.get("_lgamma")
    if lgb is None:
        lgb = np.array([math.lgamma(v + 1.0) for v in dataset.b])
        dataset.meta["_lgamma"] = lgb
    return lgb


# ---------------------------------------------------------------------------
# reference optimum


@dataclass
class ReferenceOptimum:
    f_star: float
    tolerance: float
    x_hat: np.ndarray | None
    method: str


def reference_optimum(dataset: Dataset, subgrad_iters: int = 1_000_000,
                      subgrad_window: int = 10_000) -> ReferenceOptimum:
    """Certified optimal value of the full objective.

    Strategy by family: least squares uses the normal equations; smooth
    families use damped Newton; structurally-zero noiseless families are
    certified through a witness point; the rest fall back to a long-horizon
    full-batch subgradient method with best-value tracking whose reported
    tolerance is the improvement over the trailing window.
    """
    fam = dataset.family
    meta = dataset.meta
    if fam == "LeastSquares":
        x_hat, *_ = np.linalg.lstsq(dataset.A, dataset.b, rcond=None)
        resid = dataset.A @ x_hat - dataset.b
        ortho = float(np.linalg.norm(dataset.A.T @ resid))
        f = objective(dataset, x_hat)
        return ReferenceOptimum(f, max(ortho * 1e-12, 1e-15) + 4e-16 * abs(f), x_hat, "normal_equations")
    if fam in ("AbsoluteLoss", "HalfspaceDist") and meta.get("sigma", None) == 0.0:
        wit = dataset.planted
        if wit is None:
            wit, *_ = np.linalg.lstsq(dataset.A, dataset.b, rcond=None)
        tol = objective(dataset, wit)
        return ReferenceOptimum(0.0, tol, wit, "witness")
    if fam == "Logistic" and meta.get("p", None) == 0.0 and dataset.planted is not None:
        margins = dataset.b * (dataset.A @ dataset.planted)
        if margins.min() > 0.0:
            # separable: objective decays to 0 along the witness ray, no minimizer
            tol = objective(dataset, 1e6 * dataset.planted / np.linalg.norm(dataset.planted))
            return ReferenceOptimum(0.0, tol, None, "separable")
    if fam in ("Logistic", "Poisson"):
        return _newton_reference(dataset)
    if fam == "MulticlassHinge" and meta.get("p", None) == 0.0 and dataset.planted is not None:
        tol = min(objective(dataset, t * dataset.planted) for t in (1e3, 1e6, 1e9))
        return ReferenceOptimum(0.0, tol, None, "separable")
    # noisy AbsoluteLoss / MulticlassHinge, or datasets without metadata
    return _polyak_subgradient_reference(dataset, subgrad_iters, subgrad_window)


def _newton_reference(dataset: Dataset) -> ReferenceOptimum:
    A, b = dataset.A, dataset.b
    m, n = A.shape
    fam = dataset.family
    x = np.zeros(n)
    f = objective(dataset, x)
    grad_norm = np.inf
    for _ in range(200):
        t = A @ x
        if fam == "Logistic":
            z = -b * t
            sig = np.where(z >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                           np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
            grad = A.T @ (-b * sig) / m
            w = sig * (1.0 - sig)
        else:
            lam = np.exp(np.minimum(t, EXP_CAP))
            grad = A.T @ (lam - b) / m
            w = lam
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= 1e-10:
            break
        hess = (A * w[:, None]).T @ A / m
        hess[np.diag_indices_from(hess)] += 1e-12 * max(1.0, np.trace(hess) / n)
        direction = np.linalg.solve(hess, grad)
        decr = float(grad @ direction)
        step = 1.0
        for _ in range(60):
            cand = x - step * direction
            fc = objective(dataset, cand)
            if fc <= f - 1e-4 * step * decr:
                x, f = cand, fc
                break
            step *= 0.5
        else:
            break
    t = A @ x
    if fam == "Logistic":
        z = -b * t
        sig = np.where(z >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                       np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
        w = sig * (1.0 - sig)
    else:
        w = np.exp(np.minimum(t, EXP_CAP))
    hess = (A * w[:, None]).T @ A / m
    lam_min = float(np.linalg.eigvalsh(hess)[0])
    if lam_min > 1e-12:
        tol = grad_norm ** 2 / (2.0 * lam_min) + 4e-16 * abs(f)
    else:
        tol = grad_norm  # degenerate curvature, report the raw gradient norm
    return ReferenceOptimum(f, tol, x, "damped_newton")


def _polyak_subgradient_reference(dataset: Dataset, iters: int, window: int) -> ReferenceOptimum:
    x = np.zeros(dataset.dim)
    f = objective(dataset, x)
    best = f
    x_best = x.copy()
    delta = max(0.1 * best, 1e-6)
    since_improve = 0
    hist = np.empty(iters + 1)
    hist[0] = best
    for k in range(1, iters + 1):
        g = batch_subgrad(dataset, x)
        gg = float(g @ g)
        if gg < 1e-300:
            hist[k:] = best
            break
        step = (f - (best - delta)) / gg
        x = x - step * g
        f = objective(dataset, x)
        if f < best:
            best = f
            x_best = x.copy()
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= 2000:
                delta = max(0.5 * delta, 1e-14)
                since_improve = 0
        hist[k] = best
    tail = min(window, iters)
    tol = float(hist[iters - tail] - hist[iters]) + 1e-12 * max(1.0, abs(best))
    return ReferenceOptimum(best, tol, x_best, "polyak_subgradient")


def ensure_reference(dataset: Dataset, epsilon: float | None = None, **kwargs) -> Dataset:
    """Fill ``f_star`` if missing; enforce the certification gate when asked.

    With ``epsilon`` given, a tolerance above ``epsilon / 10`` raises
    :class:`NonCertifiedError`.
    """
    if dataset.f_star is None or dataset.f_star_tolerance is None:
        ref = reference_optimum(dataset, **kwargs)
        dataset.f_star = ref.f_star
        dataset.f_star_tolerance = ref.tolerance
        dataset.meta.setdefault("f_star_method", ref.method)
    if epsilon is not None and dataset.f_star_tolerance > epsilon / 10.0:
        raise NonCertifiedError(
            f"reference optimum tolerance {dataset.f_star_tolerance:.3e} exceeds "
            f"epsilon/10 = {epsilon / 10.0:.3e}")
    return dataset


# ---------------------------------------------------------------------------
# serialization


def save_dataset(dataset: Dataset, path: str) -> None:
    """Columnar text snapshot: header line, then one sample per line."""
    noise = float(dataset.meta.get("sigma", dataset.meta.get("p", 0.0)))
    with open(path, "w") as fh:
        fh.write(f"{dataset.family} {dataset.m} {dataset.n} {dataset.n_classes} {noise!r}\n")
        for i in range(dataset.m):
            coords = " ".join(repr(float(v)) for v in dataset.A[i])
            fh.write(f"{coords} {float(dataset.b[i])!r}\n")


def load_dataset(path: str) -> Dataset:
    with open(path) as fh:
        header = fh.readline().split()
        family, m, n, k = header[0], int(header[1]), int(header[2]), int(header[3])
        noise = float(header[4])
        A = np.empty((m, n))
        b = np.empty(m)
        for i in range(m):
            parts = fh.readline().split()
            if len(parts) != n + 1:
                raise ValueError(f"{path}: line {i + 2} has {len(parts)} fields, expected {n + 1}")
            A[i] = [float(v) for v in parts[:n]]
            b[i] = float(parts[n])
    meta = {"p": noise} if family in ("Logistic", "MulticlassHinge") else {"sigma": noise}
    return Dataset(family=family, A=A, b=b, n_classes=k, meta=meta)
