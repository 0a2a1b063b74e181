"""Compiled trial loops.

These kernels run the per-trial iteration at full speed under numba; with the
backend disabled they remain valid (slow) Python and the harness switches to
vectorized fallbacks instead.  Families and models are addressed by integer
codes so the loops stay monomorphic:

    families: 0 LeastSquares, 1 AbsoluteLoss, 2 Logistic, 3 Poisson,
              4 HalfspaceDist        (MulticlassHinge has its own kernel)
    models:   0 SGM, 1 Truncated, 2 FullProx, 3 Bundle2

``aux`` carries per-sample precomputed scalars: column 0 is log(b!) for
Poisson and the row norm for HalfspaceDist; column 1 is the per-sample
infimum (Poisson) and 0 elsewhere.

All scalar formulas mirror ``problems``/``models`` expression-for-expression
so both code paths agree bitwise where they overlap.
"""

import math

import numpy as np

from .backend import jit

FAM_CODES = {"LeastSquares": 0, "AbsoluteLoss": 1, "Logistic": 2,
             "Poisson": 3, "HalfspaceDist": 4}

STATUS_CONVERGED = 0
STATUS_NOT_CONVERGED = 1
STATUS_DIVERGED = 2

_SENTINEL_SQ = 1e200      # ||x||^2 threshold matching ||x|| > 1e100
_EXP_CAP = 700.0
_BISECT_TOL = 1e-12
_BISECT_MAX = 200
_HINGE_TOL = 1e-10
_HINGE_MAX = 10_000


@jit
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@jit
def _softplus(z):
    if z > 0.0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


@jit
def _value(fam, t, b, aux0):
    if fam == 0:
        r = t - b
        return 0.5 * r * r
    if fam == 1:
        return abs(t - b)
    if fam == 2:
        return _softplus(-b * t)
    if fam == 3:
        return math.exp(min(t, _EXP_CAP)) - b * t + aux0
    r = t - b
    if r > 0.0:
        return r / aux0
    return 0.0


@jit
def _coef(fam, t, b, aux0):
    # subgradient = _coef * a
    if fam == 0:
        return t - b
    if fam == 1:
        r = t - b
        if r > 0.0:
            return 1.0
        if r < 0.0:
            return -1.0
        return 0.0
    if fam == 2:
        return -b * _sigmoid(-b * t)
    if fam == 3:
        return math.exp(min(t, _EXP_CAP)) - b
    if t - b > 0.0:
        return 1.0 / aux0
    return 0.0


@jit
def _prox_scalar(fam, t, b, aa, aux0, alpha):
    # displacement coefficient s with x_next = x - s * a
    if fam == 0:
        return alpha * (t - b) / (1.0 + alpha * aa)
    if fam == 1:
        if aa == 0.0:
            return 0.0
        r = t - b
        if r == 0.0:
            return 0.0
        s = min(alpha, abs(r) / aa)
        if r < 0.0:
            return -s
        return s
    if fam == 4:
        r = t - b
        if r <= 0.0:
            return 0.0
        return min(alpha, r / aux0) / aux0
    if fam == 2:
        lo = 0.0
        hi = alpha
        tol = _BISECT_TOL * min(1.0, alpha)
        for _ in range(_BISECT_MAX):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            h = mid - alpha * _sigmoid(-b * t - mid * aa)
            if h > 0.0:
                hi = mid
            else:
                lo = mid
        return -0.5 * (lo + hi) * b
    # Poisson
    edge = alpha * (math.exp(min(t, _EXP_CAP)) - b)
    edge = max(min(edge, 1e300), -1e300)
    lo = min(0.0, edge)
    hi = max(0.0, edge)
    tol = _BISECT_TOL * min(1.0, alpha)
    for _ in range(_BISECT_MAX):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        h = mid / alpha - math.exp(min(t - mid * aa, _EXP_CAP)) + b
        if h > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@jit
def _step_scalar(fam, model, t, b, aa, aux0, aux1, alpha):
    """Displacement coefficient for one update; x_next = x - s * a."""
    if model == 0:
        return alpha * _coef(fam, t, b, aux0)
    if model == 1:
        c = _coef(fam, t, b, aux0)
        gg = c * c * aa
        if gg < 1e-300:
            return 0.0
        excess = _value(fam, t, b, aux0) - aux1
        if excess < 0.0:
            excess = 0.0
        return min(alpha, excess / gg) * c
    if model == 2:
        return _prox_scalar(fam, t, b, aa, aux0, alpha)
    # Bundle2: pair prox of the tangents at x and at the SGM trial point
    c1 = _coef(fam, t, b, aux0)
    t1 = t - alpha * c1 * aa
    c2 = _coef(fam, t1, b, aux0)
    v1 = _value(fam, t, b, aux0)
    v2 = _value(fam, t1, b, aux0) + c2 * alpha * c1 * aa
    d = c1 - c2
    dgg = d * d * aa
    if alpha * dgg < 1e-300:
        if v1 >= v2:
            lam = 1.0
        else:
            lam = 0.0
    else:
        lam = (v1 - v2 - alpha * c2 * d * aa) / (alpha * dgg)
        if lam < 0.0:
            lam = 0.0
        elif lam > 1.0:
            lam = 1.0
    return alpha * (lam * c1 + (1.0 - lam) * c2)


@jit
def objective_vec(A, b, aux, fam, x):
    m = A.shape[0]
    n = A.shape[1]
    acc = 0.0
    for i in range(m):
        t = 0.0
        for j in range(n):
            t += A[i, j] * x[j]
        acc += _value(fam, t, b[i], aux[i, 0])
    return acc / m


@jit
def trial_vec(A, b, aux, fam, model, alpha0, beta, eps, fstar, kmax, stride,
              idx, x0, track_avg):
    """One trial; returns (status, hit_k, final_gap, avg_gap, nonfinite_evals)."""
    n = A.shape[1]
    x = x0.copy()
    xbar = np.zeros(n)
    status = STATUS_NOT_CONVERGED
    hit = 0
    final_gap = np.inf
    nonfinite = 0
    for k in range(1, kmax + 1):
        if track_avg == 1:
            inv = 1.0 / k
            for j in range(n):
                xbar[j] += (x[j] - xbar[j]) * inv
        nx2 = 0.0
        for j in range(n):
            nx2 += x[j] * x[j]
        if not (nx2 <= _SENTINEL_SQ):
            status = STATUS_DIVERGED
            final_gap = np.inf
            break
        if k == 1 or k % stride == 0 or k == kmax:
            F = objective_vec(A, b, aux, fam, x)
            if not math.isfinite(F):
                nonfinite += 1
                status = STATUS_DIVERGED
                final_gap = np.inf
                break
            final_gap = F - fstar
            if final_gap <= eps:
                status = STATUS_CONVERGED
                hit = k
                break
        if k < kmax:
            i = idx[k - 1]
            alpha = alpha0 * float(k) ** (-beta)
            t = 0.0
            aa = 0.0
            for j in range(n):
                t += A[i, j] * x[j]
                aa += A[i, j] * A[i, j]
            s = _step_scalar(fam, model, t, b[i], aa, aux[i, 0], aux[i, 1], alpha)
            for j in range(n):
                x[j] -= s * A[i, j]
    avg_gap = np.nan
    if track_avg == 1 and status != STATUS_DIVERGED:
        Fb = objective_vec(A, b, aux, fam, xbar)
        if math.isfinite(Fb):
            avg_gap = Fb - fstar
    return status, hit, final_gap, avg_gap, nonfinite


@jit
def _hinge_margins(A, X, i, label, t):
    # fills t with class scores of row i; returns (value, jstar)
    K = X.shape[0]
    n = X.shape[1]
    for j in range(K):
        s = 0.0
        for jj in range(n):
            s += X[j, jj] * A[i, jj]
        t[j] = s
    best = -np.inf
    jstar = -1
    for j in range(K):
        if j == label:
            continue
        c = 1.0 + t[j] - t[label]
        if c > best:
            best = c
            jstar = j
    return best, jstar


@jit
def objective_hinge(A, labels, X, t):
    m = A.shape[0]
    acc = 0.0
    for i in range(m):
        best, _ = _hinge_margins(A, X, i, labels[i], t)
        if best > 0.0:
            acc += best
    return acc / m


@jit
def _project_capped_simplex(v, w):
    # w := projection of v onto {w >= 0, sum w <= 1}; small J, insertion sort.
    # Safe when v and w alias: zeroing negatives first never changes the
    # simplex threshold, which only the positive entries determine.
    J = v.shape[0]
    s = 0.0
    for j in range(J):
        w[j] = v[j] if v[j] > 0.0 else 0.0
        s += w[j]
    if s <= 1.0:
        return
    u = v.copy()
    for a in range(1, J):
        key = u[a]
        pos = a - 1
        while pos >= 0 and u[pos] < key:
            u[pos + 1] = u[pos]
            pos -= 1
        u[pos + 1] = key
    css = 0.0
    tau = 0.0
    for j in range(J):
        css += u[j]
        cand = (css - 1.0) / (j + 1.0)
        if u[j] - cand > 0.0:
            tau = cand
    for j in range(J):
        w[j] = v[j] - tau if v[j] - tau > 0.0 else 0.0


@jit
def _hinge_dual(c, alpha_aa, K, lam, scratch):
    # projected gradient on the capped simplex; lam must start at zero
    J = c.shape[0]
    if alpha_aa <= 0.0:
        return
    eta = 1.0 / (2.0 * alpha_aa * K)
    tol = _HINGE_TOL
    for _ in range(_HINGE_MAX):
        s = 0.0
        for j in range(J):
            s += lam[j]
        res = 0.0
        for j in range(J):
            scratch[j] = lam[j] - (alpha_aa * (lam[j] + s) - c[j])
        _project_capped_simplex(scratch, scratch)
        for j in range(J):
            r = abs(lam[j] - scratch[j])
            if r > res:
                res = r
        if res <= tol:
            break
        for j in range(J):
            scratch[j] = lam[j] - eta * (alpha_aa * (lam[j] + s) - c[j])
        _project_capped_simplex(scratch, lam)


@jit
def trial_hinge(A, labels, K, model, alpha0, beta, eps, fstar, kmax, stride,
                idx, X0, track_avg):
    """Hinge trial over the K-by-n iterate; same contract as trial_vec."""
    m = A.shape[0]
    n = A.shape[1]
    X = X0.copy()
    Xbar = np.zeros((K, n))
    t = np.zeros(K)
    t1 = np.zeros(K)
    c = np.zeros(K - 1)
    lam = np.zeros(K - 1)
    scratch = np.zeros(K - 1)
    status = STATUS_NOT_CONVERGED
    hit = 0
    final_gap = np.inf
    nonfinite = 0
    for k in range(1, kmax + 1):
        if track_avg == 1:
            inv = 1.0 / k
            for j in range(K):
                for jj in range(n):
                    Xbar[j, jj] += (X[j, jj] - Xbar[j, jj]) * inv
        nx2 = 0.0
        for j in range(K):
            for jj in range(n):
                nx2 += X[j, jj] * X[j, jj]
        if not (nx2 <= _SENTINEL_SQ):
            status = STATUS_DIVERGED
            final_gap = np.inf
            break
        if k == 1 or k % stride == 0 or k == kmax:
            F = objective_hinge(A, labels, X, t)
            if not math.isfinite(F):
                nonfinite += 1
                status = STATUS_DIVERGED
                final_gap = np.inf
                break
            final_gap = F - fstar
            if final_gap <= eps:
                status = STATUS_CONVERGED
                hit = k
                break
        if k < kmax:
            i = idx[k - 1]
            label = labels[i]
            alpha = alpha0 * float(k) ** (-beta)
            aa = 0.0
            for jj in range(n):
                aa += A[i, jj] * A[i, jj]
            value, jstar = _hinge_margins(A, X, i, label, t)
            if model == 0:
                if value > 0.0:
                    for jj in range(n):
                        X[jstar, jj] -= alpha * A[i, jj]
                        X[label, jj] += alpha * A[i, jj]
            elif model == 1:
                if value > 0.0 and aa > 0.0:
                    s = min(alpha, value / (2.0 * aa))
                    for jj in range(n):
                        X[jstar, jj] -= s * A[i, jj]
                        X[label, jj] += s * A[i, jj]
            elif model == 2:
                pos = 0
                for j in range(K):
                    if j != label:
                        c[pos] = 1.0 + t[j] - t[label]
                        pos += 1
                for j in range(K - 1):
                    lam[j] = 0.0
                _hinge_dual(c, alpha * aa, K, lam, scratch)
                total = 0.0
                pos = 0
                for j in range(K):
                    if j != label:
                        lj = lam[pos]
                        pos += 1
                        if lj != 0.0:
                            for jj in range(n):
                                X[j, jj] -= alpha * lj * A[i, jj]
                        total += lj
                for jj in range(n):
                    X[label, jj] += alpha * total * A[i, jj]
            else:
                # Bundle2 on the hinge: both tangent slopes live in the
                # rank-one family (e_j - e_label) a^T, so inner products
                # reduce to aa-scaled indicator algebra
                act1 = 1.0 if value > 0.0 else 0.0
                for j in range(K):
                    t1[j] = t[j]
                if act1 == 1.0:
                    t1[jstar] = t[jstar] - alpha * aa
                    t1[label] = t[label] + alpha * aa
                best2 = -np.inf
                j2 = -1
                for j in range(K):
                    if j == label:
                        continue
                    c2m = 1.0 + t1[j] - t1[label]
                    if c2m > best2:
                        best2 = c2m
                        j2 = j
                act2 = 1.0 if best2 > 0.0 else 0.0
                v1 = value if value > 0.0 else 0.0
                g11 = 2.0 * aa * act1
                g22 = 2.0 * aa * act2
                g12 = 0.0
                if act1 == 1.0 and act2 == 1.0:
                    if j2 == jstar:
                        g12 = 2.0 * aa
                    else:
                        g12 = aa
                # l2 re-anchored at X: l2(X) = f(X_trial) + <G2, X - X_trial>
                #                            = f(X_trial) + alpha * <G2, G1>
                v2 = (best2 if best2 > 0.0 else 0.0) + alpha * g12
                dgg = g11 + g22 - 2.0 * g12
                if alpha * dgg < 1e-300:
                    lamb = 1.0 if v1 >= v2 else 0.0
                else:
                    lamb = (v1 - v2 - alpha * (g12 - g22)) / (alpha * dgg)
                    if lamb < 0.0:
                        lamb = 0.0
                    elif lamb > 1.0:
                        lamb = 1.0
                w1 = lamb * act1
                w2 = (1.0 - lamb) * act2
                if w1 != 0.0 or w2 != 0.0:
                    for jj in range(n):
                        aij = A[i, jj]
                        if w1 != 0.0:
                            X[jstar, jj] -= alpha * w1 * aij
                            X[label, jj] += alpha * w1 * aij
                        if w2 != 0.0:
                            X[j2, jj] -= alpha * w2 * aij
                            X[label, jj] += alpha * w2 * aij
    avg_gap = np.nan
    if track_avg == 1 and status != STATUS_DIVERGED:
        Fb = objective_hinge(A, labels, Xbar, t)
        if math.isfinite(Fb):
            avg_gap = Fb - fstar
    return status, hit, final_gap, avg_gap, nonfinite


@jit
def population_ls_1d(model, alpha0, beta, xstar, sigma, z):
    """Scalar least-squares stream b_k = xstar + sigma*z_k from x_1 = 0.

    Returns (mean of x_1..x_k, max |x_k|) for k = len(z).
    """
    x = 0.0
    xbar = 0.0
    xmax = 0.0
    k = z.shape[0]
    for i in range(1, k + 1):
        xbar += (x - xbar) / i
        ax = abs(x)
        if ax > xmax:
            xmax = ax
        b = xstar + sigma * z[i - 1]
        alpha = alpha0 * float(i) ** (-beta)
        s = _step_scalar(0, model, x, b, 1.0, 0.0, 0.0, alpha)
        x -= s
    return xbar, xmax


def warmup():
    """Trigger compilation of every kernel on tiny inputs."""
    A = np.eye(2)
    b = np.zeros(2)
    aux = np.zeros((2, 2))
    idx = np.zeros(4, dtype=np.int64)
    x0 = np.zeros(2)
    for model in range(4):
        for fam in range(5):
            trial_vec(A, b, aux, fam, model, 0.5, 0.0, 1e-9, 0.0, 5, 1, idx, x0, 1)
        trial_hinge(A, idx[:2].copy(), 2, model, 0.5, 0.0, 1e-9, 0.0, 5, 1,
                    idx, np.zeros((2, 2)), 1)
        population_ls_1d(model, 0.5, 0.0, 0.0, 0.0, np.zeros(3))
