"""Scalar interpolation schedules x(tau) on [0, 1].

Every schedule knows how many of its derivatives vanish at both endpoints
(``Nb``) and carries a declared analyticity height ``gamma``.  Derivatives are
evaluated in closed form to any order the family supports.

Families are registered by string id so that Hamiltonian specs can refer to
them from JSON.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

DEFAULT_GAMMA = 1.0 / 14.0
RATIONAL_GAMMA = 0.9
RATIONAL_MAX_ORDER = 8


class ScheduleError(ValueError):
    """Bad schedule parameters or an unsupported derivative order."""


@lru_cache(maxsize=64)
def _beta_polynomial(nb: int) -> Polynomial:
    # x'(t) proportional to t^nb (1 - t)^nb, integrated and normalised so x(1) = 1
    t = Polynomial([0.0, 1.0])
    density = t**nb * (1 - t) ** nb
    x = density.integ(lbnd=0.0)
    return x / x(1.0)


@lru_cache(maxsize=256)
def _beta_derivative(nb: int, k: int) -> tuple:
    """Coefficients of the k-th derivative, highest power first (for Horner)."""
    poly = _beta_polynomial(nb).deriv(k) if k else _beta_polynomial(nb)
    return tuple(float(c) for c in poly.coef[::-1])


@lru_cache(maxsize=64)
def _beta_centered(nb: int) -> Polynomial:
    # x(1/2 + u) - 1/2, odd in u; built in u directly to avoid cancellation near the middle
    u = Polynomial([0.0, 1.0])
    x = ((0.25 - u**2) ** nb).integ(lbnd=0.0)
    return x / (2 * x(0.5))


@lru_cache(maxsize=256)
def _beta_centered_derivative(nb: int, k: int) -> tuple:
    poly = _beta_centered(nb).deriv(k) if k else _beta_centered(nb)
    return tuple(float(c) for c in poly.coef[::-1])


def _horner(coef: tuple, t: float) -> float:
    acc = 0.0
    for c in coef:
        acc = acc * t + c
    return acc


def _smooth_poly_eval(nb: int, tau: float, k: int) -> float:
    if k > 2 * nb + 1:
        return 0.0
    if 0.05 <= tau <= 0.95:
        val = _horner(_beta_centered_derivative(nb, k), tau - 0.5)
        return 0.5 + val if k == 0 else val
    # reflect through x(t) + x(1 - t) = 1 so endpoint zeros are exact at both ends
    if tau > 0.5:
        val = _horner(_beta_derivative(nb, k), 1.0 - tau)
        if k == 0:
            return 1.0 - val
        return -val if k % 2 == 0 else val
    return _horner(_beta_derivative(nb, k), tau)


def _rational_eval(which: str, tau: float, k: int) -> float:
    if k > RATIONAL_MAX_ORDER:
        raise ScheduleError(
            f"rational schedule derivatives are supported up to order {RATIONAL_MAX_ORDER}, got {k}"
        )
    # 1/(t - i) = (t + i)/(1 + t^2): real part t/(1+t^2), imaginary part 1/(1+t^2)
    w = (-1) ** k * math.factorial(k) / (tau - 1j) ** (k + 1)
    re, im = w.real, w.imag
    if which == "x0":
        # (1 - t)/(1 + t^2) = im - re
        return float(im - re)
    return float(2.0 * re)


def _linear_eval(tau: float, k: int) -> float:
    if k == 0:
        return float(tau)
    return 1.0 if k == 1 else 0.0


def _monomial_eval(p: int, tau: float, k: int) -> float:
    if k > p:
        return 0.0
    return math.perm(p, k) * tau ** (p - k)


@dataclass(frozen=True)
class Schedule:
    """An interpolation function with exactly known endpoint flatness.

    Attributes
    ----------
    family : str
        Registered family id (``linear``, ``smooth_poly``, ``rational_x0``,
        ``rational_x1``, ``monomial``, ``constant``).
    Nb : int
        Number of derivatives (orders 1..Nb) that vanish at tau = 0 and 1.
    gamma : float
        Declared analyticity height. Not computed; polynomials are entire.
    params : dict
        Family parameters.
    """

    family: str
    Nb: int = 0
    gamma: float = DEFAULT_GAMMA
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in _EVALUATORS:
            raise ScheduleError(f"unknown schedule family {self.family!r}")
        if self.gamma <= 0:
            raise ScheduleError("gamma must be positive")
        if self.Nb < 0:
            raise ScheduleError("Nb must be non-negative")

    def __hash__(self):
        return hash((self.family, self.Nb, self.gamma, tuple(sorted(self.params.items()))))

    @property
    def interpolating(self) -> bool:
        """True for families that run from 0 at tau=0 to 1 at tau=1."""
        return self.family not in ("constant", "rational_x0")

    def __call__(self, tau, k: int = 0):
        return eval_schedule(self, tau, k)

    def to_dict(self) -> dict:
        return {"family": self.family, "Nb": self.Nb, "gamma": self.gamma, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return make_schedule(d["family"], gamma=d.get("gamma"), **d.get("params", {}))


_EVALUATORS: dict[str, Callable[[Schedule, float, int], float]] = {
    "linear": lambda s, t, k: _linear_eval(t, k),
    "smooth_poly": lambda s, t, k: _smooth_poly_eval(s.params["Nb"], t, k),
    "rational_x0": lambda s, t, k: _rational_eval("x0", t, k),
    "rational_x1": lambda s, t, k: _rational_eval("x1", t, k),
    "monomial": lambda s, t, k: _monomial_eval(s.params["p"], t, k),
    "constant": lambda s, t, k: float(s.params.get("value", 1.0)) if k == 0 else 0.0,
}


def eval_schedule(s: Schedule, tau, k: int = 0):
    """k-th derivative of ``s`` at ``tau`` (scalar or array), in closed form."""
    if k < 0:
        raise ScheduleError("derivative order must be non-negative")
    fn = _EVALUATORS[s.family]
    if isinstance(tau, float):
        return fn(s, tau, k)
    if np.ndim(tau) == 0:
        return fn(s, float(tau), k)
    return np.array([fn(s, float(t), k) for t in np.asarray(tau, dtype=float).ravel()]).reshape(
        np.shape(tau)
    )


def linear(gamma: float = DEFAULT_GAMMA) -> Schedule:
    return Schedule("linear", Nb=0, gamma=gamma)


def constant(value: float = 1.0, gamma: float = DEFAULT_GAMMA) -> Schedule:
    # every derivative vanishes; Nb is reported as 0 by convention
    return Schedule("constant", Nb=0, gamma=gamma, params={"value": float(value)})


def monomial(p: int, gamma: float = DEFAULT_GAMMA) -> Schedule:
    """x(tau) = tau**p."""
    if p < 0:
        raise ScheduleError("monomial power must be non-negative")
    return Schedule("monomial", Nb=0, gamma=gamma, params={"p": int(p)})


def smooth_poly(Nb: int, gamma: float = DEFAULT_GAMMA) -> Schedule:
    """Regularised incomplete beta polynomial I_tau(Nb+1, Nb+1).

    Degree 2*Nb + 1, monotone on [0, 1], with derivatives 1..Nb vanishing at
    both endpoints and the (Nb+1)-th nonzero there.
    """
    if Nb < 0:
        raise ScheduleError("Nb must be non-negative")
    return Schedule("smooth_poly", Nb=int(Nb), gamma=gamma, params={"Nb": int(Nb)})


def rational_example(gamma: float = RATIONAL_GAMMA) -> tuple[Schedule, Schedule]:
    """The pair x0 = (1-t)/(1+t^2), x1 = 2t/(1+t^2).

    Both have poles at t = +-i, so any height below 1 is admissible.
    """
    if not 0 < gamma < 1:
        raise ScheduleError("rational schedules need 0 < gamma < 1 (poles at tau = +-i)")
    return Schedule("rational_x0", 0, gamma), Schedule("rational_x1", 0, gamma)


_FACTORIES: dict[str, Callable[..., Schedule]] = {
    "linear": lambda gamma=DEFAULT_GAMMA: linear(gamma),
    "smooth_poly": lambda Nb, gamma=DEFAULT_GAMMA: smooth_poly(Nb, gamma),
    "beta": lambda Nb, gamma=DEFAULT_GAMMA: smooth_poly(Nb, gamma),
    "rational_x0": lambda gamma=RATIONAL_GAMMA: rational_example(gamma)[0],
    "rational_x1": lambda gamma=RATIONAL_GAMMA: rational_example(gamma)[1],
    "monomial": lambda p, gamma=DEFAULT_GAMMA: monomial(p, gamma),
    "constant": lambda value=1.0, gamma=DEFAULT_GAMMA: constant(value, gamma),
}


def register_family(name: str, factory: Callable[..., Schedule]) -> None:
    """Make ``factory`` available to :func:`make_schedule` under ``name``."""
    _FACTORIES[name] = factory


def make_schedule(family: str, gamma: float | None = None, **params) -> Schedule:
    """Build a schedule from its registered id and parameters."""
    try:
        factory = _FACTORIES[family]
    except KeyError:
        raise ScheduleError(f"unknown schedule family {family!r}") from None
    if gamma is not None:
        params["gamma"] = gamma
    try:
        return factory(**params)
    except TypeError as exc:
        raise ScheduleError(f"bad parameters for {family!r}: {exc}") from None


@dataclass
class BoundaryReport:
    requested: int
    tol: float
    values: dict  # (tau1, k) -> |x^(k)(tau1)|
    passed: bool
    status: str  # "exact", "count >= requested", or "fail"


def verify_boundary(s: Schedule, Nb: int, tol: float = 1e-12) -> BoundaryReport:
    """Check that derivatives 1..Nb vanish at both endpoints.

    Also looks at order Nb+1: if that one vanishes too the schedule is flatter
    than requested and the status says so (still a pass).
    """
    values = {}
    for t1 in (0.0, 1.0):
        for k in range(1, Nb + 2):
            values[(t1, k)] = abs(eval_schedule(s, t1, k))
    low_ok = all(v <= tol for (t1, k), v in values.items() if k <= Nb)
    top_zero = all(values[(t1, Nb + 1)] <= tol for t1 in (0.0, 1.0))
    if not low_ok:
        status = "fail"
    elif top_zero:
        status = "count >= requested"
    else:
        status = "exact"
    return BoundaryReport(Nb, tol, values, low_ok, status)
