"""Adiabatic error metrics and closed-form time/error bounds.

Conventions: ``xi`` is sup ||dh/dtau|| and ``d`` the minimum gap, both in
energy units; J is the energy unit, so xi/J and d/J are the dimensionless
beta and Delta.  Times are returned in units of 1/J (hbar = 1) unless a
function says otherwise.  N always counts vanishing boundary derivatives.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import simpson

from .propagator import EvolutionResult
from .spectral import track


class BoundInputError(ValueError):
    pass


# -- error metrics -----------------------------------------------------------------


@dataclass
class ErrorReport:
    delta: float
    delta1: float | None
    delta2: float | None
    fidelity: float
    fs_distance: float
    phase: float  # chi = (1/eps) int_0^1 E, the phase removed from Phi(1)
    theta: complex = 1.0  # initial phase factor applied to the trajectory

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta"] = [self.theta.real, self.theta.imag]
        return d


def vector_error(psi1: np.ndarray, phi1: np.ndarray, chi: float) -> float:
    """||psi1 - exp(-i chi) phi1||, with chi reduced mod 2 pi first."""
    return float(np.linalg.norm(psi1 - np.exp(-1j * math.remainder(chi, 2 * math.pi)) * phi1))


def error_report(result: EvolutionResult, frames=None, series=None, phase: float | None = None) -> ErrorReport:
    """delta, delta1, delta2, fidelity and Fubini-Study distance at tau = 1.

    The target states Phi(0), Phi(1) come from ``series`` (smooth parallel
    transport gauge) when given, else from ``frames``, else from tracking
    on the result grid.  Before comparing, the trajectory is rephased so
    that its initial state is theta_hat Phi(0), where theta_hat is the unit
    phase of sum_j eps^j f_j(0) from the series (1 without a series).  This
    makes delta independent of the global phase of the initial state.

    chi defaults to the series' spectral phase integral, then to the
    result's Simpson phase; ``phase`` overrides both.  delta1 and delta2
    need a series.  Results from :func:`evolve_adiabatic` are evaluated
    from their co-rotating deviation, which keeps full relative precision
    however small delta is.
    """
    if series is not None:
        phi0, phi1 = series.phi(0.0), series.phi(1.0)
    else:
        if frames is None:
            frames = track(_ham_of(result), result.grid)
        phi0, phi1 = frames[0].phi, frames[-1].phi
    eps = result.epsilon
    adiabatic = getattr(result, "frame", "lab") == "adiabatic" and (series is None or series is result.reference)
    if phase is not None:
        chi = float(phase)
    elif adiabatic:
        chi = float(result.dynamical_phase[-1])
    elif series is not None:
        chi = float(np.real(series.phase_integral(1.0))) / eps
    else:
        chi = float(result.dynamical_phase[-1])

    if adiabatic:
        return _adiabatic_report(result, chi)

    ov = np.vdot(phi0, result.psi[0])
    if abs(ov) < 1e-12:
        raise ValueError("initial state has no overlap with the target state")
    theta = 1.0 + 0j
    if series is not None:
        th = series.theta(eps)
        theta = th / abs(th)
    psi1 = result.psi[-1] * (theta * np.conj(ov) / abs(ov))

    delta = vector_error(psi1, phi1, chi)
    fid = float(min(1.0, abs(np.vdot(phi1, result.psi[-1])) / np.linalg.norm(result.psi[-1])))
    delta1 = delta2 = None
    if series is not None:
        from .superadiabatic import assemble_state

        Psi = assemble_state(series, 1.0, eps)
        delta1 = float(np.linalg.norm(psi1 - Psi.vector))
        delta2 = float(np.linalg.norm(np.exp(1j * Psi.dynamical_phase) * Psi.vector - phi1))
    return ErrorReport(delta, delta1, delta2, fid, float(math.acos(fid)), chi, complex(theta))


def _adiabatic_report(result, chi: float) -> ErrorReport:
    """Metrics from the co-rotating deviation, avoiding any O(1) cancellation."""
    ref, eps = result.reference, result.epsilon
    phi1 = ref.phi(1.0)
    dev = result.deviation[-1]
    # exp(i chi_res) psi = Phi + dev; compare with exp(-i chi) Phi
    shift = -np.expm1(1j * math.remainder(result.dynamical_phase[-1] - chi, 2 * math.pi))
    delta = float(np.linalg.norm(dev + shift * phi1))
    corr = ref.rotating_correction(1.0, eps)
    delta1 = float(np.linalg.norm(dev - corr))
    delta2 = float(np.linalg.norm(corr))
    state = phi1 + dev
    # 1 - fidelity^2 = ||P_perp state||^2 / ||state||^2, evaluated directly
    perp = dev - np.vdot(phi1, dev) * phi1
    infid = float(np.vdot(perp, perp).real / np.vdot(state, state).real)
    fid = math.sqrt(max(0.0, 1.0 - infid))
    fs = math.asin(min(1.0, math.sqrt(infid)))
    th = ref.theta(eps)
    return ErrorReport(delta, delta1, delta2, fid, fs, chi, complex(th / abs(th)))


def _ham_of(result):
    ham = getattr(result, "ham", None)
    if ham is None:
        raise ValueError("pass frames or a series: the result does not carry its Hamiltonian")
    return ham


def trace_distance_pure(delta: float) -> float:
    """Trace distance between the rays of two unit vectors a distance delta apart
    at optimal phase: D = delta sqrt(1 - delta^2/4).  Only valid when delta is
    the phase-minimised vector distance."""
    if not 0 <= delta <= 2:
        raise ValueError("vector distance of unit vectors lies in [0, 2]")
    return delta * math.sqrt(1 - delta**2 / 4)


# -- closed-form bounds ---------------------------------------------------------------


@dataclass(frozen=True)
class BoundInputs:
    """Inputs of the closed-form bounds.

    xi and d are energies; pass ``J`` to use dimensionless values (xi/J,
    d/J) instead, the results are the same up to the time unit.
    """

    N: int = 1
    q: float = 2.0
    gamma: float = 1.0 / 14.0
    xi: float = 1.0
    d: float = 1.0
    J: float = 1.0
    n: int | None = None
    z: float | None = None
    m: int = 1
    delta_u: float | None = None

    def __post_init__(self):
        if not self.q > 1:
            raise BoundInputError("time dilation q must exceed 1")
        if not self.gamma > 0:
            raise BoundInputError("gamma must be positive")
        if not self.d > 0:
            raise BoundInputError("gap d must be positive")
        if self.xi < 0:
            raise BoundInputError("xi must be non-negative")
        if self.m < 1:
            raise BoundInputError("multiplicity m must be at least 1")
        if self.N < 0:
            raise BoundInputError("N must be non-negative")
        if self.J <= 0:
            raise BoundInputError("J must be positive")

    @property
    def beta(self) -> float:
        return self.xi / self.J

    @property
    def Delta(self) -> float:
        return self.d / self.J

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta"], d["Delta"] = self.beta, self.Delta
        return d


def theorem1_time(inp: BoundInputs) -> float:
    """T = (q/gamma) N xi^2 / d^3."""
    if inp.N == 0:
        warnings.warn("N = 0 lies outside the theorem; T = 0 is returned", stacklevel=2)
    return inp.q / inp.gamma * inp.N * inp.xi**2 / inp.d**3


def theorem1_error_bound(inp: BoundInputs) -> float:
    """(N+1)^(gamma+1) q^(-N)."""
    return (inp.N + 1) ** (inp.gamma + 1) * inp.q ** (-inp.N)


def decreasing_threshold(N: int, gamma: float) -> float:
    """Smallest q for which the bound at N+1 is below the bound at N."""
    return ((N + 2) / (N + 1)) ** (gamma + 1)


def analytic_delta1_bound(inp: BoundInputs, T: float) -> float:
    """(N+2)^(gamma+1) ((N+1) xi^2 / (gamma T d^3))^(N+1)."""
    return (inp.N + 2) ** (inp.gamma + 1) * ((inp.N + 1) * inp.xi**2 / (inp.gamma * T * inp.d**3)) ** (inp.N + 1)


def corollary_exponential(T: float, inp: BoundInputs) -> tuple[float, float]:
    """(c, (cT + 1)^(gamma+1) exp(-cT)) with c = gamma d^3 / (e xi^2)."""
    if T < 0:
        raise BoundInputError("T must be non-negative")
    c = inp.gamma * inp.d**3 / (math.e * inp.xi**2)
    return c, (c * T + 1) ** (inp.gamma + 1) * math.exp(-c * T)


def corollary_fixed_error(inp: BoundInputs) -> float:
    """T = delta_u^(-1/N) (N/gamma) (N+1)^((gamma+1)/N) xi^2/d^3."""
    du = inp.delta_u
    if du is None or not 0 < du < 1:
        raise BoundInputError("target error delta_u must lie in (0, 1)")
    if inp.N < 1:
        raise BoundInputError("fixed-error time needs N >= 1")
    N, g = inp.N, inp.gamma
    return du ** (-1 / N) * (N / g) * (N + 1) ** ((g + 1) / N) * inp.xi**2 / inp.d**3


def implied_q(T: float, inp: BoundInputs) -> float:
    """The q for which theorem1_time returns T."""
    return T * inp.gamma * inp.d**3 / (inp.N * inp.xi**2)


@dataclass
class JRSProfiles:
    grid: np.ndarray
    hdot: np.ndarray  # ||dh/dtau||, energy
    hddot: np.ndarray
    d0: np.ndarray  # instantaneous gap, energy


def jrs_profiles(ham, grid=None) -> JRSProfiles:
    from .hamiltonians import operator_norm

    grid = np.linspace(0, 1, 1025) if grid is None else np.asarray(grid, dtype=float)
    hd = np.array([operator_norm(ham.dimensional(t, 1)) for t in grid])
    hdd = np.array([operator_norm(ham.dimensional(t, 2)) for t in grid])
    gaps = np.array([f.delta0 for f in track(ham, grid)]) * ham.J
    return JRSProfiles(grid, hd, hdd, gaps)


def jrs_time(profiles: JRSProfiles, q: float, m: int = 1) -> tuple[float, float]:
    """(T_integral, T_sup).

    T_integral = q int (m ||h''||/d0^2 + 7 m sqrt(m) ||h'||^2 / d0^3) dtau
    T_sup      = 7 q m sqrt(m) xi^2 / d^3  (sup of ||h'||, min of d0)

    The sup form drops the ||h''|| term, so it is not an upper bound on the
    integral form in general.
    """
    if not q > 1:
        raise BoundInputError("time dilation q must exceed 1")
    if m < 1:
        raise BoundInputError("multiplicity m must be at least 1")
    p = profiles
    if np.any(p.d0 <= 0):
        raise BoundInputError("gap profile must be positive")
    integrand = m * p.hddot / p.d0**2 + 7 * m * math.sqrt(m) * p.hdot**2 / p.d0**3
    T_int = q * float(simpson(integrand, x=p.grid))
    T_sup = 7 * q * m * math.sqrt(m) * float(p.hdot.max()) ** 2 / float(p.d0.min()) ** 3
    return T_int, T_sup


def jrs_error_bound(q: float) -> float:
    return q**-2.0


def qpt_time(inp: BoundInputs, xi_dot_sup: float) -> float:
    """T = (q/gamma) N (sup|xi_sigma'|)^2 / J^3 * n^(4 - 3z).

    ``xi_dot_sup`` is the largest coefficient derivative, in energy units.
    """
    if inp.z is None or not inp.z > 0:
        raise BoundInputError("dynamical exponent z must be positive")
    if inp.n is None or inp.n < 1:
        raise BoundInputError("system size n must be given")
    return inp.q / inp.gamma * inp.N * xi_dot_sup**2 / inp.J**3 * inp.n ** (4 - 3 * inp.z)


def grover_gap(n: int, x, J: float = 1.0):
    """d0 = J sqrt(2^-n + 4 (1 - 2^-n) (x - 1/2)^2)."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise BoundInputError("x must lie in [0, 1]")
    p = 2.0**-n
    out = J * np.sqrt(p + 4 * (1 - p) * (x - 0.5) ** 2)
    return float(out) if out.ndim == 0 else out


def bound_summary(inp: BoundInputs, T: float | None = None) -> dict:
    """JSON-ready {T, delta_bound, c, inputs_echo}; T defaults to theorem1_time."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        T = theorem1_time(inp) if T is None else T
    c, env = corollary_exponential(T, inp)
    return {
        "T": T,
        "JT": T * inp.J,
        "delta_bound": theorem1_error_bound(inp),
        "c": c,
        "envelope": env,
        "inputs_echo": inp.to_dict(),
    }
