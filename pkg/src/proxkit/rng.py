"""Counter-based random streams.

Every random draw in the package flows through a Philox counter-based
generator keyed by ``(seed, label, index)``.  Streams for distinct keys are
independent and reproducible regardless of draw order, thread count, or how
many other streams were consumed first.  Distribution sampling on top of the
uniform stream uses documented algorithms only: Box-Muller for Gaussians,
CDF inversion for Poisson means up to 30 and Hormann's PTRS transformed
rejection above, so the exact draw sequence is stable across platforms.
"""

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class RngStream:
    """One independent uniform stream plus distribution helpers.

    Parameters
    ----------
    seed : int
        Master seed shared by a whole run.
    label : str
        Purpose tag, e.g. ``"data"`` or ``"samples/Truncated/a3"``.
    index : int
        Per-trial or per-item counter within the labelled purpose.
    """

    def __init__(self, seed: int, label: str = "root", index: int = 0):
        self.seed = int(seed)
        self.label = label
        self.index = int(index)
        tag = _fnv1a64(label)
        k0 = _splitmix64((self.seed ^ tag) & _MASK64)
        k1 = _splitmix64((self.index * _GOLDEN + tag + 1) & _MASK64)
        key = np.array([k0, k1], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def derive(self, label: str, index: int = 0) -> "RngStream":
        """Child stream; the parent's (label, index) is folded into the key."""
        return RngStream(self.seed, f"{self.label}.{self.index}/{label}", index)

    def uniforms(self, size: int) -> np.ndarray:
        """iid uniforms on [0, 1)."""
        return self._gen.random(size)

    def gaussians(self, size: int) -> np.ndarray:
        """iid standard normals via Box-Muller on the uniform stream."""
        half = (size + 1) // 2
        u = self._gen.random((2, half))
        r = np.sqrt(-2.0 * np.log1p(-u[0]))  # 1 - u in (0, 1], no log(0)
        theta = 2.0 * np.pi * u[1]
        z = np.empty(2 * half)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:size]

    def unit_sphere(self, dim: int) -> np.ndarray:
        """One point uniform on the unit sphere in R^dim."""
        while True:
            g = self.gaussians(dim)
            norm = float(np.linalg.norm(g))
            if norm > 1e-12:
                return g / norm

    def sample_indices(self, count: int, m: int) -> np.ndarray:
        """Uniform indices in [0, m) via floor(u * m); bias is O(m * 2^-53)."""
        idx = np.floor(self.uniforms(count) * m).astype(np.int64)
        np.minimum(idx, m - 1, out=idx)
        return idx

    def poisson(self, lams: np.ndarray) -> np.ndarray:
        """iid Poisson draws, one per entry of ``lams``."""
        lams = np.asarray(lams, dtype=np.float64)
        out = np.empty(lams.shape, dtype=np.int64)
        flat = lams.ravel()
        res = out.ravel()
        for i, lam in enumerate(flat):
            if lam <= 0.0:
                res[i] = 0
            elif lam <= 30.0:
                res[i] = self._poisson_inversion(lam)
            else:
                res[i] = self._poisson_ptrs(lam)
        return out

    def _poisson_inversion(self, lam: float) -> int:
        # one uniform, walk the CDF; cap guards against u ~ 1 rounding
        u = float(self._gen.random())
        p = math.exp(-lam)
        cdf = p
        k = 0
        cap = int(lam) + 220
        while u > cdf and k < cap:
            k += 1
            p *= lam / k
            cdf += p
        return k

    def _poisson_ptrs(self, lam: float) -> int:
        # Hormann (1993) PTRS rejection, valid for lam >= 10
        slam = math.sqrt(lam)
        loglam = math.log(lam)
        b = 0.931 + 2.53 * slam
        a = -0.059 + 0.02483 * b
        invalpha = 1.1239 + 1.1328 / (b - 3.4)
        vr = 0.9277 - 3.6224 / (b - 2.0)
        while True:
            u = float(self._gen.random()) - 0.5
            v = float(self._gen.random())
            us = 0.5 - abs(u)
            k = int(math.floor((2.0 * a / us + b) * u + lam + 0.43))
            if us >= 0.07 and v <= vr:
                return k
            if k < 0 or (us < 0.013 and v > us):
                continue
            lhs = math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
            rhs = k * loglam - lam - math.lgamma(k + 1.0)
            if lhs <= rhs:
                return k
