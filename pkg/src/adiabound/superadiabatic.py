"""Superadiabatic expansion of the adiabatic evolution.

The corrections are built order by order:

    psi_0_perp = 0,   f_0 = 1
    psi_j_perp = G_r (f_{j-1} Phi' + P_perp psi_{j-1}_perp')
    f_j(tau)   = int_0^tau <Phi'|psi_j_perp> - int_0^1 <Phi'|psi_j_perp>

with Phi in the parallel-transport gauge, so that f_j(1) = 0.  The state

    Psi_N = exp(-i int_0^tau E / eps) (sum_{j<=N} eps^j (f_j Phi + psi_j_perp) + eps^(N+1) psi_{N+1}_perp)

solves the Schroedinger equation up to O(eps^(N+1)).

Every tau-dependent quantity is sampled at Chebyshev-Lobatto nodes and held
as a Chebyshev series.  The tau-derivatives the recursion consumes are not
taken numerically: at each node the eigenpair, the reduced resolvent and the
corrections are carried as local Taylor jets built from the exact derivatives
of H, so only the f_j integrals couple different nodes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _jets as jets
from ._cheb import ChebSeries, lobatto_nodes
from .hamiltonians import InterpolatingHamiltonian
from .spectral import SpectralFrame, gap_profile, target_derivative, track

MAX_ORDER = 6
DEFAULT_NODES = 160
DEFAULT_GRID = 2048


class ExpansionError(RuntimeError):
    pass


class OrderUnreachableError(ExpansionError):
    """The requested order cannot be resolved at this node count."""


def _smooth_gauge(frames: list[SpectralFrame], nodes: np.ndarray, seed: int = 0) -> np.ndarray:
    """Target vectors in the continuous parallel-transport gauge.

    The discrete transport of :func:`fix_gauge` is only second-order accurate
    for complex Hamiltonians.  Here the vectors are first put in a smooth
    reference gauge (<r|Phi> > 0), then the Berry connection is integrated
    spectrally and removed.  Phi(0) is left unchanged.
    """
    phis = np.array([f.phi for f in frames])
    rng = np.random.default_rng(seed)
    m = len(nodes)
    candidates = [phis[0], phis[m // 2], phis[-1], phis[0] + phis[-1], phis[0] + phis[m // 2] + phis[-1]]
    candidates += [c + 0.3 * (rng.normal(size=c.shape) + 1j * rng.normal(size=c.shape)) for c in candidates[-2:]]
    best, w = -1.0, None
    for r in candidates:
        r = r / np.linalg.norm(r)
        wr = phis @ r.conj()
        if np.abs(wr).min() > best:
            best, w = float(np.abs(wr).min()), wr
    if best < 1e-3:
        raise ExpansionError("could not find a reference vector for the smooth gauge")
    ref = phis * (w.conj() / np.abs(w))[:, None]
    ref *= w[0] / abs(w[0])
    series = ChebSeries.from_values(ref)
    dref = series.deriv()(nodes)
    alpha = np.imag(np.einsum("ij,ij->i", ref.conj(), dref))
    theta = -ChebSeries.from_values(alpha).integ()(nodes)
    return ref * np.exp(1j * theta)[:, None]


@dataclass
class ExpansionSeries:
    """Orders 0..N+1 of the superadiabatic expansion for one Hamiltonian.

    ``psi_perp[j]`` and ``f[j]`` are Chebyshev series in tau; index 0 holds the
    trivial order (psi_0_perp = 0, f_0 = 1).  ``grid`` is the uniform output
    grid used for exports and grid-valued properties.
    """

    ham: InterpolatingHamiltonian
    N: int
    nodes: np.ndarray
    frames: list
    phi: ChebSeries
    phidot: ChebSeries
    energy: ChebSeries
    energy_integral: ChebSeries
    psi_perp: list
    psi_perp_dot: list
    f: list
    c: np.ndarray
    grid: np.ndarray
    noise: float = 0.0
    resolution: dict = field(default_factory=dict)

    @property
    def orders(self) -> int:
        return len(self.psi_perp) - 1

    def psi_perp_at(self, j: int, tau):
        return self.psi_perp[j](tau)

    def f_at(self, j: int, tau):
        return self.f[j](tau)

    @property
    def psi_perp_grid(self) -> np.ndarray:
        """Array (N+2, len(grid), dim) of psi_j_perp on the output grid."""
        return np.array([s(self.grid) for s in self.psi_perp])

    @property
    def f_grid(self) -> np.ndarray:
        return np.array([s(self.grid) for s in self.f[: self.N + 1]])

    def theta(self, eps: float) -> complex:
        """Initial amplitude sum_{j<=N} eps^j f_j(0) (a phase up to O(eps^(N+1)))."""
        return 1.0 + self._theta_minus_one(eps)

    def _theta_minus_one(self, eps: float) -> complex:
        return complex(sum(eps**j * self.f[j](0.0) for j in range(1, self.N + 1)))

    # -- reference protocol for propagator.evolve_adiabatic ------------------

    def rotating_correction(self, tau, eps: float) -> np.ndarray:
        """exp(i chi) Psi_N - Phi: every term of the series except f_0 Phi."""
        phi = self.phi(tau)
        out = np.zeros_like(phi)
        for j in range(1, self.N + 1):
            fj = np.asarray(self.f[j](tau))
            out = out + eps**j * (fj[..., None] * phi + self.psi_perp[j](tau))
        return out + eps ** (self.N + 1) * self.psi_perp[self.N + 1](tau)

    def rotating_source(self, tau, eps: float) -> np.ndarray:
        """-eps^(N+1) d psi_{N+1}_perp / dtau, the residual of the truncated series."""
        return -(eps ** (self.N + 1)) * self.psi_perp_dot[self.N + 1](tau)

    def initial_offset(self, eps: float) -> np.ndarray:
        """theta_hat Phi(0) - exp(i chi) Psi_N(0), without cancellation."""
        w = self._theta_minus_one(eps)
        th = 1.0 + w
        mod = abs(th)
        # theta_hat - theta = theta (1 - |theta|) / |theta|
        d = th * (-(2 * w.real + abs(w) ** 2) / (mod + 1.0)) / mod
        corr = self.rotating_correction(0.0, eps) - (th - 1.0) * self.phi(0.0)
        return d * self.phi(0.0) - corr

    def phase_integral(self, tau=1.0):
        """int_0^tau E(s) ds."""
        return self.energy_integral(tau)

    def norm_profiles_csv(self, path) -> None:
        """Write per-order norms: columns tau, j, psi_perp_norm, f_j."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "j", "psi_perp_norm", "f_j"])
            for j in range(1, self.orders + 1):
                vals = np.linalg.norm(self.psi_perp[j](self.grid), axis=-1)
                fj = self.f[j](self.grid).real if j <= self.N else np.full(len(self.grid), np.nan)
                for t, v, fv in zip(self.grid, vals, fj):
                    w.writerow([f"{t:.12g}", j, f"{v:.12e}", f"{fv:.12e}"])


def _build(ham: InterpolatingHamiltonian, N: int, m: int, target: int, phi0):
    nodes = lobatto_nodes(m)
    frames = track(ham, nodes, target=target, phi0=phi0)
    phis = _smooth_gauge(frames, nodes)
    frames = [SpectralFrame(fr.tau, fr.energies, fr.vectors.copy(), fr.target) for fr in frames]
    for fr, p in zip(frames, phis):
        fr.vectors[:, fr.target] = p

    # local Taylor jets at every node: psi_j needs Phi to order N+2
    K = N + 2
    local = []
    for fr in frames:
        Hj = jets.hamiltonian_jet(ham, fr.tau, K)
        R = -1j * fr.Gr
        E, P = jets.eigen_jet(Hj, fr.E, fr.phi, R)
        local.append((Hj, R, E, P, jets.deriv(P)))
    phidot = np.array([loc[4][0] for loc in local])
    energy = ChebSeries.from_values(np.array([fr.E for fr in frames]))

    dim = phis.shape[1]
    zero = ChebSeries(np.zeros((1, dim), dtype=complex))
    psi, dpsi = [zero], [zero]
    f = [ChebSeries(np.array([1.0 + 0j]))]
    c = [0.0 + 0j]
    f_jets = [np.array([[1.0 + 0j] + [0j] * K]).repeat(m, axis=0)]
    psi_jets = [np.zeros((m, K + 1, dim), dtype=complex)]
    for j in range(1, N + 2):
        cur = []
        for k, (Hj, R, E, P, dP) in enumerate(local):
            v = jets.add(jets.scale_vec(f_jets[j - 1][k], dP), jets.deriv(psi_jets[j - 1][k]))
            cur.append(jets.resolvent_solve(Hj, E, P, R, v))
        order = min(len(x) for x in cur)
        cur = np.array([x[:order] for x in cur])
        psi_jets.append(cur)
        # unchopped interpolants reproduce the node values, endpoints included
        psi.append(ChebSeries.from_values(cur[:, 0], chop=False))
        dpsi.append(ChebSeries.from_values(cur[:, 1], chop=False) if order > 1 else zero)
        if j <= N:
            g = np.array([jets.inner(dP, x) for (_, _, _, _, dP), x in zip(local, cur)])
            F = ChebSeries.from_values(g[:, 0]).integ()
            cj = -complex(F(1.0))
            fj = ChebSeries(F.coef.copy())
            fj.coef[0] += cj
            f.append(fj)
            fvals = fj(nodes)
            f_jets.append(np.array([jets.integ(gk, fv) for gk, fv in zip(g, fvals)]))
            c.append(cj)
    resolution = {j: s.tail_ratio for j, s in enumerate(psi)}
    return dict(
        nodes=nodes,
        frames=frames,
        phi=ChebSeries.from_values(phis),
        phidot=ChebSeries.from_values(phidot),
        energy=energy,
        energy_integral=energy.integ(),
        psi_perp=psi,
        psi_perp_dot=dpsi,
        f=f,
        c=np.array(c),
        resolution=resolution,
    )


NODE_LADDER = (96, 160, 256, 384, 512, 768)


def choose_nodes(ham: InterpolatingHamiltonian, target: int = 0, tol: float = 1e-12) -> int:
    """Smallest node count on the ladder that resolves Phi' to ``tol``."""
    for m in NODE_LADDER:
        frames = track(ham, lobatto_nodes(m), target=target)
        pd = np.array([target_derivative(fr, ham(fr.tau, 1)) for fr in frames])
        if ChebSeries.from_values(pd, chop=False).tail_ratio < tol:
            return m
    return NODE_LADDER[-1]


def expand(ham: InterpolatingHamiltonian, N: int, nodes: int | None = None, grid: int | np.ndarray = DEFAULT_GRID,
           target: int = 0, phi0: np.ndarray | None = None, noise_tol: float = 1e-6,
           check_noise: bool = True) -> ExpansionSeries:
    """Superadiabatic corrections through psi_{N+1}_perp.

    The noise estimator rebuilds the expansion on 1.5x as many nodes and
    compares psi_{N+1}_perp; a mismatch above ``noise_tol`` times its scale
    raises :class:`OrderUnreachableError`.  The mismatch of its derivative is
    recorded in ``resolution['derivative_noise']`` but not gated, since it
    only enters the A_N quadrature.
    """
    if N < 0:
        raise ExpansionError("order must be non-negative")
    if N > MAX_ORDER:
        raise OrderUnreachableError(f"order {N} exceeds the supported maximum {MAX_ORDER}")
    nodes = choose_nodes(ham, target) if nodes is None else int(nodes)
    data = _build(ham, N, nodes, target, phi0)
    noise = 0.0
    if check_noise:
        alt = _build(ham, N, int(1.5 * nodes), target, phi0)
        probe = np.linspace(0.0, 1.0, 257)
        mism = {}
        for key in ("psi_perp", "psi_perp_dot"):
            a, b = data[key][N + 1](probe), alt[key][N + 1](probe)
            scale = np.abs(b).max()
            mism[key] = float(np.abs(a - b).max() / scale) if scale > 0 else 0.0
        noise = mism["psi_perp"]
        data["resolution"]["derivative_noise"] = mism["psi_perp_dot"]
        if noise > noise_tol:
            raise OrderUnreachableError(
                f"order {N} not resolved with {nodes} nodes: relative noise {noise:.2e} > {noise_tol:.1e}"
            )
    grid = np.linspace(0.0, 1.0, grid) if np.ndim(grid) == 0 else np.asarray(grid, dtype=float)
    return ExpansionSeries(ham=ham, N=N, grid=grid, noise=noise, **data)


@dataclass
class SuperadiabaticState:
    tau: float
    eps: float
    N: int
    vector: np.ndarray
    dynamical_phase: float  # int_0^tau E / eps


def assemble_state(series: ExpansionSeries, tau: float, eps: float) -> SuperadiabaticState:
    """Psi_N(tau, eps) including the dynamical phase factor."""
    N = series.N
    phi = series.phi(tau)
    vec = phi * complex(series.f[0](tau))
    for j in range(1, N + 1):
        vec = vec + eps**j * (complex(series.f[j](tau)) * phi + series.psi_perp[j](tau))
    vec = vec + eps ** (N + 1) * series.psi_perp[N + 1](tau)
    chi = float(np.real(series.energy_integral(tau))) / eps
    return SuperadiabaticState(float(tau), eps, N, np.exp(-1j * chi) * vec, chi)


# -- bounds on the expansion ------------------------------------------------------------


def g_factor(N: int, gamma: float) -> float:
    """((N-1)/gamma)^(N-1), with g(1) = 1."""
    if N <= 1:
        return 1.0
    return ((N - 1) / gamma) ** (N - 1)


def induction_constant(N: int, gamma: float) -> float:
    """C(N) = prod_{j=1}^{N-1} (1 + gamma (j-1)^(j-1) / j^j), with 0^0 = 1."""
    out = 1.0
    for j in range(1, N):
        out *= 1.0 + gamma * ((j - 1) ** (j - 1) if j > 1 else 1.0) / j**j
    return out


def induction_constant_upper(N: int, gamma: float) -> float:
    return (N + 1) ** (gamma + 1)


def psi_perp_bound(N: int, A: float, beta: float, gamma: float) -> float:
    """C(N) g(N) A^(3N-1) beta^(2N-1)."""
    return induction_constant(N, gamma) * g_factor(N, gamma) * A ** (3 * N - 1) * beta ** (2 * N - 1)


def a_bound_analytic(N: int, A: float, beta: float, gamma: float) -> float:
    """(N+2)^(gamma+1) ((N+1) A^3 beta^2 / gamma)^(N+1)."""
    return (N + 2) ** (gamma + 1) * ((N + 1) * A**3 * beta**2 / gamma) ** (N + 1)


def a_bound(series: ExpansionSeries, A: float | None = None, beta: float | None = None,
            gamma: float | None = None, points: int = 4097) -> tuple[float, float]:
    """(numeric, analytic) versions of A_N = int_0^1 ||d psi_{N+1}_perp / dtau||.

    A and beta default to the measured 1/min-gap and sup||H'|| clamped to at
    least 1 (the analytic bound assumes both exceed 1).
    """
    from scipy.integrate import simpson

    N = series.N
    if A is None or beta is None:
        grid = np.linspace(0, 1, 1025)
        gp = gap_profile(series.frames)
        A = max(1.0, gp.A) if A is None else A
        if beta is None:
            from .hamiltonians import norm_profile

            beta = max(1.0, norm_profile(series.ham, grid).beta)
    gamma = series.ham.gamma if gamma is None else gamma
    t = np.linspace(0.0, 1.0, points)
    vals = np.linalg.norm(series.psi_perp_dot[N + 1](t), axis=-1)
    numeric = float(simpson(vals, x=t))
    return numeric, a_bound_analytic(N, A, beta, gamma)


@dataclass
class VanishingReport:
    Nb: int
    at0: dict
    at1: dict
    tol: float
    passed: bool


def boundary_vanishing(series: ExpansionSeries, Nb: int, tol: float = 1e-6) -> VanishingReport:
    """Norms of psi_j_perp at both endpoints for j <= Nb (and j <= N+1)."""
    top = min(Nb, series.orders)
    at0 = {j: float(np.linalg.norm(series.psi_perp[j](0.0))) for j in range(1, top + 1)}
    at1 = {j: float(np.linalg.norm(series.psi_perp[j](1.0))) for j in range(1, top + 1)}
    ok = all(v <= tol for v in (*at0.values(), *at1.values()))
    return VanishingReport(Nb, at0, at1, tol, ok)


def recursion_forms(series: ExpansionSeries, j: int, tau: float, h: float = 1e-4) -> tuple:
    """The three equivalent right-hand sides for psi_j_perp at tau.

    G P_perp (f Phi' + psi'), G (f Phi' + psi'), G psi' - f G' Phi, with G'
    from a central difference of the reduced resolvent.
    """
    from .spectral import decompose

    ham = series.ham
    phi = series.phi(tau)
    fr = decompose(ham(tau), phi, tau=tau)
    G = fr.Gr
    Gp = decompose(ham(tau + h), phi, tau=tau + h).Gr
    Gm = decompose(ham(tau - h), phi, tau=tau - h).Gr
    dG = (Gp - Gm) / (2 * h)
    fj = complex(series.f[j - 1](tau))
    phidot = series.phidot(tau)
    dpsi = series.psi_perp_dot[j - 1](tau)
    a = G @ fr.Pperp @ (fj * phidot + dpsi)
    b = G @ (fj * phidot + dpsi)
    c = G @ dpsi - fj * (dG @ phi)
    return a, b, c
