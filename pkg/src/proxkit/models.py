"""Model-based step rules.

Every update minimizes a convex surrogate of the sampled loss plus a proximal
penalty anchored at the current iterate:

    x_next = argmin_y  model(y; sample) + ||y - x||^2 / (2 alpha)

The four registered surrogates:

* ``SGM``        first-order Taylor model; the step is a plain subgradient step
* ``Truncated``  Taylor model floored at the per-sample infimum, giving a
                 Polyak-style clipped step that cannot overshoot the sample's
                 own optimal value
* ``FullProx``   the loss itself; the exact proximal point
* ``Bundle2``    pointwise max of two tangent lines, the second taken at the
                 trial point of a plain subgradient step
"""

from dataclasses import dataclass

import numpy as np

from . import problems
from .errors import OracleInconsistencyError

MODEL_NAMES = ("SGM", "Truncated", "FullProx", "Bundle2")
MODEL_CODES = {name: i for i, name in enumerate(MODEL_NAMES)}

_ZERO_GRAD = 1e-300


class StepSchedule:
    """Polynomially decaying stepsizes alpha_k = alpha0 * k^(-beta)."""

    def __init__(self, alpha0: float, beta: float = 0.0):
        if alpha0 <= 0.0:
            raise ValueError("alpha0 must be positive")
        if not 0.0 <= beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        self.alpha0 = alpha0
        self.beta = beta

    def alpha(self, k: int) -> float:
        if k < 1:
            raise ValueError("iteration counter starts at 1")
        return self.alpha0 * float(k) ** (-self.beta)


@dataclass(frozen=True)
class FirstOrderInfo:
    """Sampled-loss oracle outputs at one point: value, subgradient, infimum."""

    value: float
    subgrad: np.ndarray
    inf_value: float


def first_order_info(family: str, sample, x: np.ndarray,
                     n_classes: int = 0) -> FirstOrderInfo:
    return FirstOrderInfo(problems.loss_value(family, sample, x, n_classes),
                          problems.subgrad(family, sample, x, n_classes),
                          problems.inf_value(family, sample))


@dataclass(frozen=True)
class AffineMinorant:
    """The line l(y) = anchor_value + <slope, y - anchor_point>."""

    anchor_value: float
    slope: np.ndarray
    anchor_point: np.ndarray

    def value_at(self, y: np.ndarray) -> float:
        return self.anchor_value + float(self.slope @ (y - self.anchor_point))


def sgm_step(x: np.ndarray, info: FirstOrderInfo, alpha: float) -> np.ndarray:
    return x - alpha * info.subgrad


def truncated_step(x: np.ndarray, info: FirstOrderInfo,
                   alpha: float) -> np.ndarray:
    """Clipped subgradient step: travel min(alpha, excess/||g||^2) along -g."""
    g = info.subgrad
    gg = float(g @ g)
    excess = max(info.value - info.inf_value, 0.0)
    if gg < _ZERO_GRAD:
        if excess > 0.0:
            raise OracleInconsistencyError(
                "zero subgradient together with a value strictly above the "
                f"reported per-sample infimum (excess {excess:.3e})")
        return x.copy()
    return x - min(alpha, excess / gg) * g


def bundle_pair_prox(x: np.ndarray, l1: AffineMinorant, l2: AffineMinorant,
                     alpha: float):
    """Exact prox of max(l1, l2) anchored at x.

    Returns (y, lam) with lam the weight on the first line; the minimizer is
    y = x - alpha * (lam * slope1 + (1 - lam) * slope2).
    """
    g1, g2 = l1.slope, l2.slope
    v1, v2 = l1.value_at(x), l2.value_at(x)
    diff = g1 - g2
    dgg = float(diff @ diff)
    if alpha * dgg < _ZERO_GRAD:
        lam = 1.0 if v1 >= v2 else 0.0
    else:
        lam = (v1 - v2 - alpha * float(g2 @ diff)) / (alpha * dgg)
        lam = min(max(lam, 0.0), 1.0)
    y = x - alpha * (lam * g1 + (1.0 - lam) * g2)
    return y, lam


def bundle2_step(family: str, sample, x: np.ndarray, alpha: float,
                 n_classes: int = 0) -> np.ndarray:
    """Two-line bundle step: tangent at x, tangent at the SGM trial point."""
    info = first_order_info(family, sample, x, n_classes)
    l1 = AffineMinorant(info.value, info.subgrad, x)
    x_trial = sgm_step(x, info, alpha)
    l2 = AffineMinorant(problems.loss_value(family, sample, x_trial, n_classes),
                        problems.subgrad(family, sample, x_trial, n_classes),
                        x_trial)
    y, _ = bundle_pair_prox(x, l1, l2, alpha)
    return y


def full_prox_step(family: str, sample, x: np.ndarray, alpha: float,
                   n_classes: int = 0) -> np.ndarray:
    return problems.prox(family, sample, x, alpha, n_classes)


def apply_model_step(model: str, family: str, sample, x: np.ndarray,
                     alpha: float, n_classes: int = 0) -> np.ndarray:
    """Dispatch one update of the named step rule."""
    if model == "SGM":
        return sgm_step(x, first_order_info(family, sample, x, n_classes), alpha)
    if model == "Truncated":
        return truncated_step(x, first_order_info(family, sample, x, n_classes),
                              alpha)
    if model == "FullProx":
        return full_prox_step(family, sample, x, alpha, n_classes)
    if model == "Bundle2":
        return bundle2_step(family, sample, x, alpha, n_classes)
    raise ValueError(f"unknown model {model!r}; expected one of {MODEL_NAMES}")
