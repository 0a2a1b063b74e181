"""Independent oracles and verification suites.

Everything here re-derives expected behavior without touching the closed
forms under test: proximal points come from a coarse value scan plus a sign
bisection on the one-dimensional directional derivative, divergence demos
evaluate hand-computable recursions, rate and stability checks measure
trajectories statistically with fixed seeds.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import backend, datagen, models, problems
from .backend import jit
from .errors import InsufficientDecayError
from .models import StepSchedule
from .problems import Dataset, Sample
from .rng import RngStream


# ---------------------------------------------------------------------------
# prox oracles


def _scan_bracket(phi, lo: float, hi: float, grid_points: int):
    """Cell around the grid argmin, padded two cells for rounding slack."""
    grid = np.linspace(lo, hi, max(int(grid_points), 5))
    vals = np.array([phi(float(t)) for t in grid])
    i = int(np.nanargmin(vals))
    return float(grid[max(i - 2, 0)]), float(grid[min(i + 2, grid.shape[0] - 1)])


def _bisect_increasing(dphi, lo: float, hi: float) -> float:
    """Zero crossing of a nondecreasing function by sign bisection.

    Value-based search alone resolves a minimizer only to about
    sqrt(machine eps) relative scale; the derivative sign test reaches
    machine-relative accuracy, which the 1e-8 agreement checks need at
    large stepsizes.
    """
    for _ in range(300):
        if hi - lo <= max(1e-13, 1e-15 * (abs(lo) + abs(hi))):
            break
        mid = 0.5 * (lo + hi)
        if dphi(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def grid_prox_oracle(family: str, sample: Sample, x: np.ndarray, alpha: float,
                     grid_points: int = 201, n_classes: int = 0) -> np.ndarray:
    """Brute-force prox: scalar search along the sample direction.

    The displacement of every single-constraint prox is parallel to ``a``,
    so a grid scan over the signed step length followed by bisection on the
    directional derivative is exhaustive.  The step length is bracketed by
    alpha * ||g(x)|| for any subgradient g, with strict derivative signs at
    twice that radius.  The two-class hinge (K = 2, n = 1) reduces to the
    same scalar search over the coordinate gap.
    """
    if family == "MulticlassHinge":
        return _hinge_pair_oracle(sample, x, alpha, n_classes, grid_points)
    g = problems.subgrad(family, sample, x)
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return x.copy()
    ahat = sample.a / np.linalg.norm(sample.a)

    def phi(t):
        return problems.loss_value(family, sample, x - t * ahat) + t * t / (2.0 * alpha)

    def dphi(t):
        gy = problems.subgrad(family, sample, x - t * ahat)
        return t / alpha - float(gy @ ahat)

    radius = 2.0 * alpha * gnorm
    lo, hi = _scan_bracket(phi, -radius, radius, grid_points)
    if not (dphi(lo) <= 0.0 <= dphi(hi)):
        lo, hi = -radius, radius
    t_star = _bisect_increasing(dphi, lo, hi)
    return x - t_star * ahat


def _hinge_pair_oracle(sample: Sample, x: np.ndarray, alpha: float,
                       n_classes: int, grid_points: int) -> np.ndarray:
    """Two-class hinge prox via the scalar coordinate-gap problem.

    The loss depends on y only through d = y_other - y_label, and for a
    fixed gap the quadratic is minimized by splitting the move evenly, so
    prox reduces to min over delta of [1 + a (d0 + delta)]_+ + delta^2/(4a).
    """
    if n_classes != 2 or sample.a.shape[0] != 1:
        raise ValueError("hinge oracle supports K = 2, n = 1 only")
    a = float(sample.a[0])
    if a == 0.0:
        return x.copy()
    label = int(sample.b)
    other = 1 - label
    d0 = float(x[other] - x[label])

    def phi(delta):
        margin = 1.0 + a * (d0 + delta)
        return (margin if margin > 0.0 else 0.0) + delta * delta / (4.0 * alpha)

    def dphi(delta):
        margin = 1.0 + a * (d0 + delta)
        return (a if margin > 0.0 else 0.0) + delta / (2.0 * alpha)

    radius = 4.0 * alpha * abs(a)
    lo, hi = _scan_bracket(phi, -radius, radius, grid_points)
    if not (dphi(lo) <= 0.0 <= dphi(hi)):
        lo, hi = -radius, radius
    delta = _bisect_increasing(dphi, lo, hi)
    y = x.copy()
    y[other] += 0.5 * delta
    y[label] -= 0.5 * delta
    return y


# ---------------------------------------------------------------------------
# divergence demos


def quartic_sgm_trajectory(alpha0: float, x1: float, steps: int) -> list:
    """Subgradient steps on f(x) = x^4 / 4, truncated at the 1e100 sentinel."""
    xs = [x1]
    x = x1
    for _ in range(steps):
        if abs(x) > 1e100:
            break
        x = x - alpha0 * x ** 3
        xs.append(x)
    return xs


def quartic_prox_trajectory(x1: float, steps: int, alpha0: float = 1.0,
                            beta: float = 1.0) -> list:
    """Proximal point on f(x) = x^4 / 4, alpha_k = alpha0 * k^(-beta).

    The prox solves alpha*y^3 + y = x, a strictly increasing cubic, by
    bisection on [0, x] (the root shares x's sign).
    """
    xs = [x1]
    x = x1
    for k in range(1, steps + 1):
        alpha = alpha0 * float(k) ** (-beta)
        lo, hi = (0.0, x) if x >= 0.0 else (x, 0.0)
        for _ in range(200):
            if hi - lo <= 1e-14 * max(1.0, abs(x)):
                break
            mid = 0.5 * (lo + hi)
            if alpha * mid ** 3 + mid > x:
                hi = mid
            else:
                lo = mid
        x = 0.5 * (lo + hi)
        xs.append(x)
    return xs


def quadratic_sgm_trajectory(alpha0: float, beta: float, K: int, x1: float) -> list:
    """Gradient descent on f(x) = x^2 / 2 with alpha_k = alpha0 * k^(-beta)."""
    xs = [x1]
    x = x1
    for k in range(1, K + 1):
        x = x * (1.0 - alpha0 * float(k) ** (-beta))
        xs.append(x)
    return xs


def quadratic_prox_trajectory(alpha0: float, beta: float, K: int, x1: float) -> list:
    xs = [x1]
    x = x1
    for k in range(1, K + 1):
        x = x / (1.0 + alpha0 * float(k) ** (-beta))
        xs.append(x)
    return xs


def divergence_demo_quartic(alpha0: float = 1.0, x1: float = 2.0, steps: int = 400):
    """SGM doubling on the quartic versus a bounded proximal run.

    Returns (sgm_trajectory, prox_trajectory, growth_ok, prox_ok); growth_ok
    asserts |x_k| >= 2^(k-1) |x_1| for every recorded step, prox_ok that the
    proximal trajectory is bounded and non-increasing in magnitude.
    """
    if abs(x1) < math.sqrt(3.0 / alpha0):
        raise ValueError("need |x1| >= sqrt(3 / alpha0) for guaranteed doubling")
    sgm = quartic_sgm_trajectory(alpha0, x1, steps)
    growth_ok = all(abs(sgm[k]) >= 2.0 ** k * abs(x1) for k in range(len(sgm)))
    prox = quartic_prox_trajectory(x1, 200, alpha0=alpha0, beta=1.0)
    prox_ok = all(abs(b) <= abs(a) for a, b in zip(prox, prox[1:])) \
        and max(abs(v) for v in prox) <= abs(x1)
    return sgm, prox, growth_ok, prox_ok


def divergence_demo_quadratic(alpha0: float = 48.0, beta: float = 1.0, K: int = 16,
                              x1: float = 1.0):
    """SGM doubling on the quadratic while alpha_k >= 3, versus monotone prox."""
    if x1 == 0.0:
        raise ValueError("x1 must be nonzero")
    sgm = quadratic_sgm_trajectory(alpha0, beta, K, x1)
    growth_ok = all(abs(sgm[k + 1]) >= 2.0 * abs(sgm[k]) for k in range(K))
    prox = quadratic_prox_trajectory(alpha0, beta, K, x1)
    prox_ok = all(abs(b) < abs(a) for a, b in zip(prox, prox[1:]))
    return sgm, prox, growth_ok, prox_ok


# ---------------------------------------------------------------------------
# rate fits


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: int


def fit_linear_rate(dists, floor: float = 1e-14) -> RateFit:
    """Least-squares slope of log dist^2 against the iteration index.

    ``dists`` holds dist(x_k, X*) for k = 1..len; entries at or below the
    numerical floor are dropped.
    """
    d = np.asarray(dists, dtype=np.float64)
    k = np.arange(1, d.shape[0] + 1, dtype=np.float64)
    keep = d > floor
    if int(keep.sum()) < 50:
        raise InsufficientDecayError(
            f"only {int(keep.sum())} points above {floor:g}; need 50")
    y = 2.0 * np.log(d[keep])
    kk = k[keep]
    A = np.stack([kk, np.ones_like(kk)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * kk + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit(slope=float(slope), intercept=float(intercept),
                   r_squared=float(r2), points=int(keep.sum()))


def logged_distances(dataset: Dataset, model: str, schedule: StepSchedule,
                     steps: int, target: np.ndarray, stream: RngStream,
                     x_init: np.ndarray | None = None,
                     stop_below: float | None = None) -> np.ndarray:
    """dist(x_k, target) for k = 1.., stepping with the named model."""
    x = np.zeros(dataset.dim) if x_init is None else np.asarray(x_init, float).copy()
    idx = stream.sample_indices(steps, dataset.m)
    out = [float(np.linalg.norm(x - target))]
    for k in range(1, steps + 1):
        sample = dataset.sample(int(idx[k - 1]))
        x = models.apply_model_step(model, dataset.family, sample, x,
                                    schedule.alpha(k), dataset.n_classes)
        d = float(np.linalg.norm(x - target))
        out.append(d)
        if stop_below is not None and d <= stop_below:
            break
    return np.array(out)


# ---------------------------------------------------------------------------
# stability check (noisy least squares, full prox)


@jit
def _ls_fullprox_dist2(A, b, aa, idx, alpha0, beta, xhat):
    n = A.shape[1]
    x = np.zeros(n)
    for i in range(idx.shape[0]):
        ii = idx[i]
        alpha = alpha0 * float(i + 1) ** (-beta)
        t = 0.0
        for j in range(n):
            t += A[ii, j] * x[j]
        s = alpha * (t - b[ii]) / (1.0 + alpha * aa[ii])
        for j in range(n):
            x[j] -= s * A[ii, j]
    d2 = 0.0
    for j in range(n):
        d2 += (x[j] - xhat[j]) ** 2
    return d2


@dataclass
class StabilityReport:
    trials: int
    fraction_within_bound: float
    bound: float
    worst_dist2: float
    mean_dist2: float


def stability_check(sigma: float = 0.5, alpha0: float = 1.0, beta: float = 0.6,
                    k: int = 10_000, trials: int = 100, m: int = 200, n: int = 20,
                    seed: int = 1_2026) -> StabilityReport:
    """Square-summable schedules keep full-prox iterates near the optimum.

    Per trial the final squared distance to the batch optimum must stay below
    dist2(x_1) + C_hat * sum(alpha_i^2) with C_hat the empirical second moment
    of the per-sample gradient at the optimum.
    """
    spec = datagen.GenSpec(family="LeastSquares", m=m, n=n, kappa=1.0,
                           sigma=sigma, seed=seed)
    ds = datagen.generate(spec)
    ref = problems.reference_optimum(ds)
    xhat = ref.x_hat
    resid = ds.A @ xhat - ds.b
    row_sq = np.einsum("ij,ij->i", ds.A, ds.A)
    c_hat = float(np.mean(resid ** 2 * row_sq))
    alphas = alpha0 * np.arange(1, k, dtype=np.float64) ** (-beta)
    bound = float(xhat @ xhat) + c_hat * float(np.sum(alphas ** 2))
    root = RngStream(seed)
    dist2 = np.empty(trials)
    for t in range(trials):
        idx = root.derive("stability", t).sample_indices(k - 1, m)
        dist2[t] = _ls_fullprox_dist2(ds.A, ds.b, row_sq, idx, alpha0, beta, xhat)
    ok = float(np.mean(dist2 <= bound))
    return StabilityReport(trials=trials, fraction_within_bound=ok, bound=bound,
                           worst_dist2=float(dist2.max()), mean_dist2=float(dist2.mean()))


# ---------------------------------------------------------------------------
# asymptotic normality of averaged iterates


@dataclass
class NormalityReport:
    model: str
    k: int
    trials: int
    empirical_cov: list
    target_cov: list
    rel_frobenius_err: float
    max_abs_iterate: float


def _population_ls_1d_fallback(model_code: int, alpha0: float, beta: float,
                               xstar: float, sigma: float, Z: np.ndarray):
    """Vectorized-across-trials twin of kernels.population_ls_1d."""
    trials, k = Z.shape
    x = np.zeros(trials)
    xbar = np.zeros(trials)
    xmax = np.zeros(trials)
    for i in range(1, k + 1):
        xbar += (x - xbar) / i
        np.maximum(xmax, np.abs(x), out=xmax)
        b = xstar + sigma * Z[:, i - 1]
        alpha = alpha0 * float(i) ** (-beta)
        r = x - b
        if model_code == 0:
            s = alpha * r
        elif model_code == 1:
            s = np.minimum(alpha, 0.5) * r
        elif model_code == 2:
            s = alpha * r / (1.0 + alpha)
        else:
            c1 = r
            c2 = (x - alpha * c1) - b
            v1 = 0.5 * c1 * c1
            v2 = 0.5 * c2 * c2 + c2 * alpha * c1
            d = c1 - c2
            dgg = d * d
            with np.errstate(divide="ignore", invalid="ignore"):
                lam = (v1 - v2 - alpha * c2 * d) / (alpha * dgg)
            lam = np.where(alpha * dgg < 1e-300, np.where(v1 >= v2, 1.0, 0.0),
                           np.clip(lam, 0.0, 1.0))
            s = alpha * (lam * c1 + (1.0 - lam) * c2)
        x = x - s
    return xbar, float(xmax.max())


def normality_check(sigma: float = 0.5, k: int = 100_000, trials: int = 200,
                    xstar: float = 1.0, alpha0: float = 1.0, beta: float = 0.6,
                    seed: int = 7_2026, model_names=models.MODEL_NAMES) -> dict:
    """Scaled averaged-iterate fluctuations match the analytic covariance.

    Population sampling of the scalar least-squares law b = xstar + sigma*Z
    makes the target covariance sigma^2 exactly (unit curvature), so the
    empirical variance of sqrt(k) * (xbar_k - xstar) is compared against it.
    """
    from . import kernels
    root = RngStream(seed)
    target = sigma * sigma
    out = {}
    for model in model_names:
        code = models.MODEL_CODES[model]
        devs = np.empty(trials)
        max_abs = 0.0
        if backend.numba_enabled():
            for t in range(trials):
                z = root.derive(f"normality/{model}", t).gaussians(k)
                xbar, xm = kernels.population_ls_1d(code, alpha0, beta, xstar, sigma, z)
                devs[t] = math.sqrt(k) * (xbar - xstar)
                max_abs = max(max_abs, xm)
        else:
            Z = np.stack([root.derive(f"normality/{model}", t).gaussians(k)
                          for t in range(trials)])
            xbars, max_abs = _population_ls_1d_fallback(code, alpha0, beta,
                                                        xstar, sigma, Z)
            devs = math.sqrt(k) * (xbars - xstar)
        var = float(np.mean(devs ** 2))
        rel = abs(var - target) / target if target > 0.0 else float(var)
        out[model] = NormalityReport(model=model, k=k, trials=trials,
                                     empirical_cov=[[var]], target_cov=[[target]],
                                     rel_frobenius_err=rel,
                                     max_abs_iterate=float(max_abs))
    return out


# ---------------------------------------------------------------------------
# Kaczmarz-style rate sanity


def kaczmarz_rate_check(n: int = 20, m: int = 200, steps: int = 4000,
                        seed: int = 3_2026) -> RateFit:
    """Noiseless absolute-loss rows on the sqrt(n)-sphere contract like ~1/n."""
    root = RngStream(seed)
    rows = root.derive("rows")
    A = np.stack([math.sqrt(n) * rows.unit_sphere(n) for _ in range(m)])
    x_star = root.derive("planted").gaussians(n)
    ds = Dataset(family="AbsoluteLoss", A=A, b=A @ x_star, planted=x_star,
                 f_star=0.0, f_star_tolerance=0.0, meta={"sigma": 0.0})
    dists = logged_distances(ds, "Truncated", StepSchedule(1.0, 0.0), steps,
                             x_star, root.derive("samples"), stop_below=1e-13)
    return fit_linear_rate(dists)


# ---------------------------------------------------------------------------
# suite runner


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"check": self.name, "pass": self.passed,
                "measured": self.measured, "threshold": self.threshold,
                "detail": self.detail}


def _random_prox_instances(seed: int = 5_2026, per_family: int = 200):
    root = RngStream(seed)
    n = 6
    for fam_i, family in enumerate(problems.FAMILIES):
        for i in range(per_family):
            s = root.derive(f"prox/{family}", i)
            alpha = 10.0 ** (3.0 * (2.0 * s.uniforms(1)[0] - 1.0))
            if family == "MulticlassHinge":
                a = s.gaussians(1)
                while abs(a[0]) < 1e-3:
                    a = s.gaussians(1)
                label = int(s.uniforms(1)[0] < 0.5)
                x = 2.0 * s.gaussians(2)
                yield family, Sample(a, float(label)), x, alpha, 2
                continue
            a = s.gaussians(n)
            x = 2.0 * s.gaussians(n)
            if family == "Logistic":
                b = 1.0 if s.uniforms(1)[0] < 0.5 else -1.0
            elif family == "Poisson":
                b = float(int(s.uniforms(1)[0] * 6.0))
                t0 = float(a @ x)
                if abs(t0) > 3.0:
                    x *= 3.0 / abs(t0)  # keep exp(<a,x>) in a sane range
            else:
                b = float(s.gaussians(1)[0])
            yield family, Sample(a, b), x, alpha, 0


def check_prox_oracles(per_family: int = 200) -> CheckResult:
    worst = 0.0
    worst_at = ""
    for family, sample, x, alpha, k in _random_prox_instances(per_family=per_family):
        y = problems.prox(family, sample, x, alpha, k)
        y_oracle = grid_prox_oracle(family, sample, x, alpha, n_classes=k)
        dev = float(np.max(np.abs(y - y_oracle)))
        if dev > worst:
            worst, worst_at = dev, family
        if family in ("AbsoluteLoss", "HalfspaceDist"):
            info = models.first_order_info(family, sample, x)
            y_trunc = models.truncated_step(x, info, alpha)
            tdev = float(np.max(np.abs(y - y_trunc)))
            if tdev > 1e-12:
                return CheckResult("prox_oracle_agreement", False, tdev, 1e-12,
                                   f"truncated/prox mismatch on {family}")
    return CheckResult("prox_oracle_agreement", worst <= 1e-8, worst, 1e-8,
                       f"worst family: {worst_at}")


def check_divergence_demos() -> CheckResult:
    sgm_q, _, growth_q, prox_q = divergence_demo_quartic()
    _, _, growth_2, prox_2 = divergence_demo_quadratic()
    ok = growth_q and prox_q and growth_2 and prox_2
    return CheckResult("divergence_demos", ok, float(len(sgm_q)), 0.0,
                       "quartic doubling until sentinel; quadratic doubling 16 steps; prox monotone")


def check_rate_fit_synthetic() -> CheckResult:
    dists = np.sqrt(0.5 ** np.arange(1, 101))
    fit = fit_linear_rate(dists)
    err = abs(fit.slope - math.log(0.5))
    return CheckResult("rate_fit_synthetic", err <= 1e-12 and fit.r_squared >= 1.0 - 1e-12,
                       err, 1e-12, "exact geometric input")


def check_kaczmarz_rate() -> CheckResult:
    fit = kaczmarz_rate_check()
    ratio = abs(fit.slope) * 20.0  # |slope| relative to 1/n with n = 20
    ok = 0.1 <= ratio <= 10.0 and fit.slope < 0.0
    return CheckResult("kaczmarz_rate", ok, ratio, 10.0,
                       f"|slope|*n, r2={fit.r_squared:.3f}")


def check_stability() -> CheckResult:
    rep = stability_check()
    return CheckResult("stability_bound", rep.fraction_within_bound >= 0.95,
                       rep.fraction_within_bound, 0.95,
                       f"bound={rep.bound:.3e} worst={rep.worst_dist2:.3e}")


def check_normality(k: int = 100_000, trials: int = 200) -> CheckResult:
    reports = normality_check(k=k, trials=trials)
    worst = max(r.rel_frobenius_err for r in reports.values())
    detail = " ".join(f"{m}:{r.rel_frobenius_err:.3f}" for m, r in reports.items())
    return CheckResult("normality_covariance", worst <= 0.3, worst, 0.3, detail)


def run_all_checks(fast: bool = False) -> list:
    """Every verification suite; ``fast`` shrinks the statistical runs."""
    checks = [
        check_prox_oracles(40 if fast else 200),
        check_divergence_demos(),
        check_rate_fit_synthetic(),
        check_kaczmarz_rate(),
        check_stability(),
        check_normality(k=20_000 if fast else 100_000, trials=200),
    ]
    return checks
