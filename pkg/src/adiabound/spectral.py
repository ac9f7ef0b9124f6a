"""Instantaneous eigensystems along a tau-grid.

A :class:`SpectralFrame` holds the full eigendecomposition of H(tau), the
tracked target state, its projectors and the reduced resolvent

    G_r = i * sum_{j != target} |Phi_j><Phi_j| / (E_j - E),

so that G_r (H - E) = (H - E) G_r = i P_perp.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .hamiltonians import InterpolatingHamiltonian, NumericalError, norm_profile, operator_norm

INV_SQRT2 = 1 / np.sqrt(2)


class SpectralError(RuntimeError):
    pass


class TrackingError(SpectralError):
    """The target state could not be identified from the previous frame."""


class DegenerateTargetError(SpectralError):
    """The target eigenvalue touches the rest of the spectrum."""


class GridTooCoarseError(SpectralError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralFrame:
    tau: float
    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors
    target: int

    @property
    def E(self) -> float:
        return float(self.energies[self.target])

    @property
    def phi(self) -> np.ndarray:
        return self.vectors[:, self.target]

    @cached_property
    def P(self) -> np.ndarray:
        return np.outer(self.phi, self.phi.conj())

    @cached_property
    def Pperp(self) -> np.ndarray:
        return np.eye(len(self.energies)) - self.P

    @cached_property
    def gaps(self) -> np.ndarray:
        """E_j - E for every j (zero at the target)."""
        return self.energies - self.E

    @cached_property
    def delta0(self) -> float:
        others = np.delete(self.gaps, self.target)
        return float(np.min(np.abs(others))) if others.size else np.inf

    @cached_property
    def Gr(self) -> np.ndarray:
        inv = np.zeros(len(self.energies))
        mask = np.arange(len(self.energies)) != self.target
        inv[mask] = 1.0 / self.gaps[mask]
        V = self.vectors
        return 1j * (V * inv) @ V.conj().T

    def with_phases(self, phases: np.ndarray) -> "SpectralFrame":
        return SpectralFrame(self.tau, self.energies, self.vectors * phases, self.target)


def decompose(H: np.ndarray, target_hint: np.ndarray | None = None, tau: float = 0.0, target: int = 0,
              gap_tol: float = 1e-10) -> SpectralFrame:
    """Eigendecompose H and pick the target.

    Without a hint the target is eigenvalue index ``target`` in ascending
    order (0 = ground state).  With a hint (the previous target vector) the
    eigenvector of largest overlap is chosen and phased so the overlap is
    real and positive.
    """
    try:
        E, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed at tau={tau}: {exc}") from exc
    if target_hint is not None:
        ov = V.conj().T @ target_hint
        target = int(np.argmax(np.abs(ov)))
        if abs(ov[target]) < INV_SQRT2:
            raise TrackingError(f"max target overlap {abs(ov[target]):.3g} < 1/sqrt(2) at tau={tau}")
        V = V.copy()
        V[:, target] *= np.conj(ov[target]) / abs(ov[target])
    frame = SpectralFrame(float(tau), E, V, target)
    if frame.delta0 <= gap_tol * max(1.0, np.abs(E).max()):
        raise DegenerateTargetError(f"target gap {frame.delta0:.3g} at tau={tau}")
    return frame


def fix_gauge(frames: list[SpectralFrame], min_overlap: float = 1e-8) -> list[SpectralFrame]:
    """Discrete parallel transport of every eigenvector column.

    Each column is rephased so that <Phi_j(tau_k)|Phi_j(tau_{k+1})> is real and
    positive.  Non-target columns whose overlap vanishes (level crossings)
    are left untouched; a vanishing target overlap is an error.
    """
    if not frames:
        return []
    out = [frames[0]]
    for fr in frames[1:]:
        prev = out[-1]
        ov = np.einsum("ij,ij->j", prev.vectors.conj(), fr.vectors)
        mag = np.abs(ov)
        if fr.target != prev.target or mag[fr.target] < min_overlap:
            raise GridTooCoarseError(f"target overlap {mag[fr.target]:.3g} between tau={prev.tau} and {fr.tau}")
        phases = np.ones(len(ov), dtype=complex)
        ok = mag > min_overlap
        phases[ok] = np.conj(ov[ok]) / mag[ok]
        out.append(fr.with_phases(phases))
    return out


def track(ham: InterpolatingHamiltonian, grid, target: int = 0, phi0: np.ndarray | None = None
          ) -> list[SpectralFrame]:
    """Gauge-fixed frames along ``grid`` following the target continuously."""
    grid = np.asarray(grid, dtype=float)
    frames = []
    hint = phi0
    for i, t in enumerate(grid):
        fr = decompose(ham(t), hint, tau=t, target=target)
        if i == 0 and phi0 is None:
            hint = fr.phi
        frames.append(fr)
        hint = fr.phi
    return fix_gauge(frames)


def berry_phase_estimate(frames: list[SpectralFrame]) -> np.ndarray:
    """Central-difference estimate of Im<Phi|dPhi/dtau> at interior points."""
    taus = np.array([f.tau for f in frames])
    phis = np.array([f.phi for f in frames])
    d = (phis[2:] - phis[:-2]) / (taus[2:] - taus[:-2])[:, None]
    return np.imag(np.einsum("ij,ij->i", phis[1:-1].conj(), d))


@dataclass(frozen=True)
class GapProfile:
    grid: np.ndarray
    delta0: np.ndarray
    Delta: float
    A: float
    d: float
    argmin_tau: float


def gap_profile(frames: list[SpectralFrame], J: float = 1.0) -> GapProfile:
    if len(frames) < 2:
        raise SpectralError("gap profile needs at least two frames")
    grid = np.array([f.tau for f in frames])
    delta0 = np.array([f.delta0 for f in frames])
    if np.any(delta0 <= 0):
        raise DegenerateTargetError("target gap closes on the grid")
    i = int(np.argmin(delta0))
    Delta = float(delta0[i])
    return GapProfile(grid, delta0, Delta, 1.0 / Delta, J * Delta, float(grid[i]))


def write_gap_csv(profile: GapProfile, path, frames: list[SpectralFrame] | None = None) -> None:
    """Columns tau, delta0, Emin_index (index of the nearest other level)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "delta0", "Emin_index"])
        for i, (t, g) in enumerate(zip(profile.grid, profile.delta0)):
            idx = ""
            if frames is not None:
                fr = frames[i]
                dist = np.abs(fr.gaps)
                dist[fr.target] = np.inf
                idx = int(np.argmin(dist))
            w.writerow([f"{t:.12g}", f"{g:.15e}", idx])


def gap_summary(profile: GapProfile) -> dict:
    return {"Delta": profile.Delta, "A": profile.A, "d": profile.d, "argmin_tau": profile.argmin_tau}


# -- derivative formulas ----------------------------------------------------------


def reduced_resolvent(frame: SpectralFrame, include_i: bool = True) -> np.ndarray:
    """G_r with the factor i (default), or the bare sum_j |Phi_j><Phi_j| / (E_j - E).

    Only the default satisfies G_r (H - E) = i P_perp; the bare form is kept
    for auditing the other convention.
    """
    return frame.Gr if include_i else -1j * frame.Gr


def target_derivative(frame: SpectralFrame, Hdot: np.ndarray) -> np.ndarray:
    """|dPhi/dtau> = i G_r Hdot |Phi> in the parallel-transport gauge."""
    return 1j * frame.Gr @ (Hdot @ frame.phi)


@dataclass
class HellmannFeynman:
    Edot: float
    Eddot: float
    Pperp_phiddot: np.ndarray


def hellmann_feynman(frame: SpectralFrame, Hdot: np.ndarray, Hddot: np.ndarray,
                     Phidot: np.ndarray | None = None) -> HellmannFeynman:
    """First and second eigenvalue derivatives and P_perp |d2Phi/dtau2>."""
    phi = frame.phi
    if Phidot is None:
        Phidot = target_derivative(frame, Hdot)
    Edot = float(np.real(phi.conj() @ Hdot @ phi))
    Eddot = float(np.real(Phidot.conj() @ Hdot @ phi + phi.conj() @ Hdot @ Phidot + phi.conj() @ Hddot @ phi))
    dim = len(phi)
    eye = np.eye(dim)
    # i P_perp Phi'' = -G (H'' - E'') Phi - 2 G (H' - E') Phi'
    rhs = -frame.Gr @ ((Hddot - Eddot * eye) @ phi) - 2 * frame.Gr @ ((Hdot - Edot * eye) @ Phidot)
    return HellmannFeynman(Edot, Eddot, -1j * rhs)


def projector_derivative(frame: SpectralFrame, Phidot: np.ndarray) -> np.ndarray:
    """dP/dtau = |Phi'><Phi| + |Phi><Phi'|."""
    return np.outer(Phidot, frame.phi.conj()) + np.outer(frame.phi, Phidot.conj())


def reduced_resolvent_derivative(frame: SpectralFrame, Hdot: np.ndarray) -> np.ndarray:
    """dG_r/dtau from  G' P_perp = P_perp' G + i G (H' - E') G  and  G'|Phi> = -G|Phi'>."""
    Phidot = target_derivative(frame, Hdot)
    Edot = float(np.real(frame.phi.conj() @ Hdot @ frame.phi))
    G = frame.Gr
    dPperp = -projector_derivative(frame, Phidot)
    gp = dPperp @ G + 1j * G @ (Hdot - Edot * np.eye(len(Phidot))) @ G
    return gp - np.outer(G @ Phidot, frame.phi.conj())


def resolvent(H: np.ndarray, z: complex) -> np.ndarray:
    return np.linalg.inv(H - z * np.eye(H.shape[0]))


def resolvent_derivative(H: np.ndarray, Hdot: np.ndarray, z: complex) -> np.ndarray:
    """dR/dtau = -R Hdot R at fixed z."""
    R = resolvent(H, z)
    return -R @ Hdot @ R


# -- corollary bounds ----------------------------------------------------------------


@dataclass
class CorollaryReport:
    A: float
    beta: float
    eta: float
    measured: dict = field(default_factory=dict)  # name -> array over grid
    bounds: dict = field(default_factory=dict)  # name -> scalar bound
    ratios: dict = field(default_factory=dict)  # name -> max measured/bound

    @property
    def passed(self) -> bool:
        return all(r <= 1.0 for r in self.ratios.values())


def corollary_bounds(ham: InterpolatingHamiltonian, frames: list[SpectralFrame]) -> CorollaryReport:
    """Evaluate both sides of the derivative-norm inequalities on the grid.

    ||Phi'|| <= A beta, ||P_perp'|| <= 2 A beta,
    ||P_perp Phi''|| <= 6 A^2 beta^2 + 2 A eta, ||G_r' P_perp|| <= 4 A^2 beta.

    G_r' is taken by central finite differences of the (gauge-invariant)
    reduced resolvent, so it is independent of the analytic formula.
    """
    grid = np.array([f.tau for f in frames])
    prof = norm_profile(ham, grid)
    gaps = gap_profile(frames)
    A, beta, eta = gaps.A, prof.beta, prof.eta
    phidot, pdot, phiddot, gdot = [], [], [], []
    for i, fr in enumerate(frames):
        Hd, Hdd = ham(fr.tau, 1), ham(fr.tau, 2)
        pd = target_derivative(fr, Hd)
        hf = hellmann_feynman(fr, Hd, Hdd, pd)
        phidot.append(np.linalg.norm(pd))
        pdot.append(operator_norm(projector_derivative(fr, pd)))
        phiddot.append(np.linalg.norm(hf.Pperp_phiddot))
        if 0 < i < len(frames) - 1:
            dG = (frames[i + 1].Gr - frames[i - 1].Gr) / (frames[i + 1].tau - frames[i - 1].tau)
            gdot.append(operator_norm(dG @ fr.Pperp))
    rep = CorollaryReport(A, beta, eta)
    rep.measured = {
        "phi_dot": np.array(phidot),
        "pperp_dot": np.array(pdot),
        "pperp_phi_ddot": np.array(phiddot),
        "gr_dot_pperp": np.array(gdot),
    }
    rep.bounds = {
        "phi_dot": A * beta,
        "pperp_dot": 2 * A * beta,
        "pperp_phi_ddot": 6 * A**2 * beta**2 + 2 * A * eta,
        "gr_dot_pperp": 4 * A**2 * beta,
    }
    for k, v in rep.measured.items():
        b = rep.bounds[k]
        m = float(v.max()) if v.size else 0.0
        rep.ratios[k] = 0.0 if m == 0 else (m / b if b > 0 else np.inf)
    return rep
