"""Random problem instances shared across test modules."""

import math

import numpy as np

from proxkit.problems import Sample
from proxkit.rng import RngStream

VECTOR_FAMILIES = ("LeastSquares", "AbsoluteLoss", "Logistic", "Poisson",
                   "HalfspaceDist")
ALL_FAMILIES = VECTOR_FAMILIES + ("MulticlassHinge",)


def random_instance(family: str, stream: RngStream, dim: int = 5,
                    alpha_decades=(-3.0, 1.0), n_classes: int = 3):
    """Draw one (sample, x, alpha, n_classes) tuple for the family.

    Stepsizes span the requested decades log-uniformly.  Poisson iterates are
    rescaled so the margin stays in [-3, 3], and the Poisson stepsize is
    capped so a subgradient trial point keeps exp() around e^8; beyond that,
    rounding on the exponential swamps the 1e-9 lemma tolerances and the
    inequalities become untestable in double precision.
    """
    lo, hi = alpha_decades
    alpha = 10.0 ** (lo + (hi - lo) * float(stream.uniforms(1)[0]))
    if family == "MulticlassHinge":
        n = 2
        a = stream.gaussians(n)
        while float(a @ a) < 1e-6:
            a = stream.gaussians(n)
        label = float(int(stream.uniforms(1)[0] * n_classes))
        x = stream.gaussians(n_classes * n)
        return Sample(a, label), x, alpha, n_classes
    a = stream.gaussians(dim)
    while float(a @ a) < 1e-6:
        a = stream.gaussians(dim)
    x = stream.gaussians(dim)
    if family == "Logistic":
        b = 1.0 if stream.uniforms(1)[0] < 0.5 else -1.0
    elif family == "Poisson":
        b = float(int(stream.uniforms(1)[0] * 6.0))
        margin = float(a @ x)
        if abs(margin) > 3.0:
            x = x * (3.0 / abs(margin))
            margin = float(a @ x)
        aa = float(a @ a)
        slope = abs(math.exp(margin) - b) * aa
        alpha = min(alpha, 5.0 / (slope + 1e-12))
    else:
        b = float(stream.gaussians(1)[0])
    return Sample(a, b), x, alpha, 0


def instance_cycle(seed: int, count: int, families=ALL_FAMILIES, **kw):
    """Yield count instances cycling through the families."""
    stream = RngStream(seed, "instances")
    for i in range(count):
        family = families[i % len(families)]
        sample, x, alpha, k = random_instance(family, stream, **kw)
        yield family, sample, x, alpha, k
