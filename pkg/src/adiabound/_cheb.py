"""Vector-valued Chebyshev series on [0, 1] (Lobatto nodes, plateau chopping)."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C

EPS = np.finfo(float).eps


def lobatto_nodes(m: int) -> np.ndarray:
    """m Chebyshev-Lobatto points mapped to [0, 1], ascending, endpoints included."""
    x = np.cos(np.pi * np.arange(m) / (m - 1))
    t = (1.0 - x) / 2.0
    t[0], t[-1] = 0.0, 1.0
    return t


@lru_cache(maxsize=16)
def _inverse_vandermonde(m: int) -> np.ndarray:
    x = 2.0 * lobatto_nodes(m) - 1.0
    return np.linalg.inv(C.chebvander(x, m - 1))


class ChebSeries:
    """f(tau) = sum_k c_k T_k(2 tau - 1), c of shape (m, *value_shape)."""

    def __init__(self, coef: np.ndarray):
        self.coef = np.asarray(coef)

    @classmethod
    def from_values(cls, values: np.ndarray, chop: bool = True) -> "ChebSeries":
        values = np.asarray(values)
        m = values.shape[0]
        coef = np.tensordot(_inverse_vandermonde(m), values, axes=1)
        s = cls(coef)
        return s.chopped() if chop else s

    @property
    def magnitudes(self) -> np.ndarray:
        c = self.coef.reshape(len(self.coef), -1)
        return np.linalg.norm(c, axis=1)

    @property
    def tail_ratio(self) -> float:
        """Size of the last eighth of coefficients relative to the largest one."""
        mag = self.magnitudes
        top = mag.max()
        if top == 0:
            return 0.0
        k = max(2, len(mag) // 8)
        return float(mag[-k:].max() / top)

    def chopped(self) -> "ChebSeries":
        mag = self.magnitudes
        top = mag.max()
        if top == 0:
            return ChebSeries(self.coef[:1] * 0)
        k = max(2, len(mag) // 8)
        plateau = max(4 * EPS * top, 3 * mag[-k:].max())
        env = np.maximum.accumulate(mag[::-1])[::-1]
        keep = np.nonzero(env > plateau)[0]
        n = int(keep[-1]) + 1 if keep.size else 1
        return ChebSeries(self.coef[:n].copy())

    def __call__(self, tau):
        if np.ndim(tau) == 0:
            # T_k(x) = cos(k arccos x): one vectorised pass instead of a Clenshaw loop
            x = min(1.0, max(-1.0, 2.0 * float(tau) - 1.0))
            tk = np.cos(np.arange(len(self.coef)) * math.acos(x))
            return np.tensordot(tk, self.coef, axes=1)
        x = 2.0 * np.asarray(tau, dtype=float) - 1.0
        out = C.chebval(x, self.coef, tensor=True) if self.coef.ndim > 1 else C.chebval(x, self.coef)
        if self.coef.ndim > 1:
            # chebval puts the evaluation axis last; move it first
            out = np.moveaxis(out, -1, 0) if np.ndim(tau) else out
        return out

    def deriv(self) -> "ChebSeries":
        if len(self.coef) < 2:
            return ChebSeries(np.zeros_like(self.coef[:1]))
        return ChebSeries(C.chebder(self.coef, 1, scl=2.0, axis=0))

    def integ(self) -> "ChebSeries":
        """Antiderivative vanishing at tau = 0."""
        return ChebSeries(C.chebint(self.coef, 1, lbnd=-1.0, scl=0.5, axis=0))
