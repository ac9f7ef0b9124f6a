"""System plus finite bath under joint unitary evolution.

    h(t) = h_S(t) (x) I_B + I_S (x) h_B + h_SB

with h_B and h_SB time independent.  The joint state is evolved exactly and
the system state obtained by a partial trace over the bath.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hamiltonians as hm
from .hamiltonians import InterpolatingHamiltonian, NumericalError
from .metrics import BoundInputs, theorem1_error_bound, theorem1_time
from .propagator import evolve
from .spectral import SpectralError, decompose, fix_gauge, gap_profile, track


class OpenSystemError(ValueError):
    pass


class JointGapError(SpectralError):
    pass


def _check_hermitian(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise OpenSystemError(f"{name} must be a square matrix")
    if not np.allclose(M, M.conj().T, atol=1e-12 * (1 + np.abs(M).max())):
        raise OpenSystemError(f"{name} must be Hermitian")
    return M


@dataclass
class JointSpec:
    """System Hamiltonian, constant bath Hamiltonian and constant coupling.

    ``bath`` and ``coupling`` are dimensionless (in units of the system's J).
    """

    system: InterpolatingHamiltonian
    bath: np.ndarray
    coupling: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.bath = _check_hermitian(self.bath, "bath Hamiltonian")
        self.coupling = _check_hermitian(self.coupling, "coupling")
        dS, dB = self.dims
        if dS * dB > hm.MAX_DIM:
            raise OpenSystemError(f"joint dimension {dS * dB} exceeds {hm.MAX_DIM}")
        if self.coupling.shape != (dS * dB, dS * dB):
            raise OpenSystemError("coupling must act on the joint space")

    @property
    def dims(self) -> tuple[int, int]:
        return self.system.dim, self.bath.shape[0]

    def joint(self) -> InterpolatingHamiltonian:
        dS, dB = self.dims
        return self.system.kron(dB, [np.kron(np.eye(dS), self.bath), self.coupling])


def random_bath(n_bath: int, seed: int, gap: float = 0.5, width: float = 1.0) -> np.ndarray:
    """Seeded random bath Hamiltonian with ground energy 0 and first gap ``gap``.

    Eigenvectors are Haar-random; excited levels are spread over
    [gap, gap + width].
    """
    if not 1 <= n_bath <= 3:
        raise OpenSystemError("bath size is limited to 1-3 qubits")
    rng = np.random.default_rng(seed)
    d = 2**n_bath
    Z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    Q, R = np.linalg.qr(Z)
    Q = Q * (np.diag(R) / np.abs(np.diag(R)))
    levels = np.concatenate([[0.0], gap + width * np.sort(rng.random(d - 1))])
    levels[1] = gap
    H = (Q * levels) @ Q.conj().T
    return (H + H.conj().T) / 2


def zz_coupling(n_system: int, n_bath: int, g: float) -> np.ndarray:
    """g Z_1 (x) Z_1 between the first system and the first bath qubit."""
    zs = hm.pauli_matrix("Z" + "I" * (n_system - 1))
    zb = hm.pauli_matrix("Z" + "I" * (n_bath - 1))
    return g * np.kron(zs, zb)


def default_joint_spec(system: InterpolatingHamiltonian, n_bath: int = 1, g: float = 0.01, seed: int = 0,
                       bath_gap: float = 0.5) -> JointSpec:
    n_system = int(round(math.log2(system.dim)))
    return JointSpec(system, random_bath(n_bath, seed, bath_gap), zz_coupling(n_system, n_bath, g), seed)


# -- states ---------------------------------------------------------------------------


@dataclass
class DensityState:
    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        self.validate()

    def validate(self, tol: float = 1e-10) -> None:
        r = self.rho
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise OpenSystemError("density matrix must be square")
        if not np.allclose(r, r.conj().T, atol=tol):
            raise OpenSystemError("density matrix must be Hermitian")
        if abs(np.trace(r).real - 1) > tol:
            raise OpenSystemError(f"trace {np.trace(r).real:.12g} differs from 1")
        if np.linalg.eigvalsh(r).min() < -tol:
            raise OpenSystemError("density matrix has a negative eigenvalue")

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @classmethod
    def pure(cls, vec: np.ndarray) -> "DensityState":
        v = np.asarray(vec, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    def kron(self, other: "DensityState") -> "DensityState":
        return DensityState(np.kron(self.rho, other.rho))

    def purity(self) -> float:
        return float(np.vdot(self.rho, self.rho).real)


def partial_trace_bath(rho, dims: tuple[int, int]):
    """Tr_B over the second tensor factor."""
    r = rho.rho if isinstance(rho, DensityState) else np.asarray(rho)
    dS, dB = dims
    if dS * dB != r.shape[0]:
        raise OpenSystemError(f"dims {dims} do not factor dimension {r.shape[0]}")
    out = np.einsum("ibjb->ij", r.reshape(dS, dB, dS, dB))
    return DensityState(out) if isinstance(rho, DensityState) else out


def trace_distance(r1, r2) -> float:
    """(1/2) ||r1 - r2||_1."""
    a = r1.rho if isinstance(r1, DensityState) else np.asarray(r1)
    b = r2.rho if isinstance(r2, DensityState) else np.asarray(r2)
    if a.shape != b.shape:
        raise OpenSystemError("states have different dimensions")
    diff = a - b
    return float(0.5 * np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum())


# -- dynamics --------------------------------------------------------------------------


@dataclass
class JointTrajectory:
    grid: np.ndarray
    rho: np.ndarray  # (len(grid), d, d)
    T: float
    pure: bool
    max_trace_defect: float = 0.0
    min_eigenvalue: float = 0.0

    @property
    def final(self) -> DensityState:
        return DensityState(self.rho[-1])


def joint_evolve(spec: JointSpec, T: float, initial: DensityState, tol: float = 1e-10,
                 grid: int | np.ndarray = 65) -> JointTrajectory:
    """rho(t) = U rho(0) U^dagger on the joint space.

    A rank-one initial state is evolved as a vector.  Otherwise every
    eigenvector of rho(0) is evolved, which is the same conjugation.
    """
    ham = spec.joint()
    if initial.dim != ham.dim:
        raise OpenSystemError(f"initial state has dimension {initial.dim}, joint space {ham.dim}")
    w, V = np.linalg.eigh(initial.rho)
    keep = w > 1e-14
    pure = int(keep.sum()) == 1 and abs(w[keep][0] - 1) < 1e-10
    out = None
    for p, v in zip(w[keep], V[:, keep].T):
        res = evolve(ham, T, tol=tol, psi0=v, grid=grid)
        contrib = p * np.einsum("ti,tj->tij", res.psi, res.psi.conj())
        out = contrib if out is None else out + contrib
        grid_used = res.grid
    traces = np.abs(np.einsum("tii->t", out).real - 1)
    mins = min(float(np.linalg.eigvalsh(r).min()) for r in out)
    return JointTrajectory(grid_used, out, float(T), bool(pure), float(traces.max()), mins)


def joint_target(spec: JointSpec, grid=None, bath_state: np.ndarray | None = None):
    """Joint frames following the eigenstate connected to Phi_S(0) (x) bath ground."""
    ham = spec.joint()
    grid = np.linspace(0, 1, 513) if grid is None else grid
    phiS = decompose(spec.system(0.0)).phi
    if bath_state is None:
        bath_state = np.linalg.eigh(spec.bath)[1][:, 0]
    hint = np.kron(phiS, bath_state)
    frames = []
    for t in grid:
        fr = decompose(ham(t), hint, tau=t)
        frames.append(fr)
        hint = fr.phi
    return fix_gauge(frames)


@dataclass
class Theorem2Report:
    delta_S: float | None
    delta_SB: float | None
    bound: float
    joint_gap: float
    system_gap: float
    seed: int | None
    N: int
    q: float
    T: float
    T_system: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "delta_S": self.delta_S,
            "delta_SB": self.delta_SB,
            "bound": self.bound,
            "joint_gap": self.joint_gap,
            "system_gap": self.system_gap,
            "seed": self.seed,
            "N": self.N,
            "q": self.q,
            "T": self.T,
            "T_system": self.T_system,
            **self.details,
        }


def theorem2_report(spec: JointSpec, N: int | None = None, q: float = 2.0, tol: float = 1e-10,
                    simulate: bool = True, T: float | None = None, bath_state: DensityState | None = None,
                    grid_points: int = 513) -> Theorem2Report:
    """Distances of the reduced and joint states from their adiabatic targets.

    T defaults to the theorem time evaluated with the gap of the full joint
    Hamiltonian.  The initial state is |Phi_S(0)><Phi_S(0)| (x) rho_B(0),
    with rho_B(0) the bath ground state unless given.  The adiabatic
    reference is |Phi_S(1)><Phi_S(1)| (x) exp(-i h_B T) rho_B(0) exp(i h_B T).
    """
    sys_ham = spec.system
    N = sys_ham.boundary_flatness if N is None else N
    if N < 1 or N > 50:
        raise OpenSystemError("N must be a positive vanishing-derivative count")
    grid = np.linspace(0, 1, grid_points)
    sys_frames = track(sys_ham, grid)
    d_sys = gap_profile(sys_frames, sys_ham.J).d
    try:
        joint_frames = joint_target(spec, grid)
        d_joint = gap_profile(joint_frames, sys_ham.J).d
    except SpectralError as exc:
        raise JointGapError(f"joint Hamiltonian violates the gap condition: {exc}") from exc
    if d_joint <= 0:
        raise JointGapError("joint gap closes")
    xi = hm.norm_profile(sys_ham, grid).xi  # the bath terms are constant
    gamma = sys_ham.gamma
    inp_joint = BoundInputs(N=N, q=q, gamma=gamma, xi=xi, d=d_joint, J=sys_ham.J)
    inp_sys = BoundInputs(N=N, q=q, gamma=gamma, xi=xi, d=d_sys, J=sys_ham.J)
    T_joint = theorem1_time(inp_joint) if T is None else float(T)
    rep = Theorem2Report(None, None, theorem1_error_bound(inp_joint), d_joint, d_sys, spec.seed, N, q,
                         T_joint, theorem1_time(inp_sys))
    if not simulate:
        return rep

    dS, dB = spec.dims
    if bath_state is None:
        bath_state = DensityState.pure(np.linalg.eigh(spec.bath)[1][:, 0])
    phiS0, phiS1 = sys_frames[0].phi, sys_frames[-1].phi
    rho0 = DensityState.pure(phiS0).kron(bath_state)
    traj = joint_evolve(spec, T_joint, rho0, tol=tol)
    rhoT = traj.rho[-1]
    # bath reference evolves under h_B alone for the physical time T
    w, V = np.linalg.eigh(spec.bath)
    UB = (V * np.exp(-1j * sys_ham.J * T_joint * w)) @ V.conj().T
    rhoB_T = UB @ bath_state.rho @ UB.conj().T
    target_S = np.outer(phiS1, phiS1.conj())
    rep.delta_S = trace_distance(partial_trace_bath(rhoT, (dS, dB)), target_S)
    rep.delta_SB = trace_distance(rhoT, np.kron(target_S, rhoB_T))
    rep.details = {
        "trace_defect": traj.max_trace_defect,
        "min_eigenvalue": traj.min_eigenvalue,
        "pure_dilation": traj.pure,
    }
    if rep.delta_S > rep.delta_SB + 1e-10:
        raise NumericalError(f"reduced distance {rep.delta_S:.3e} exceeds joint distance {rep.delta_SB:.3e}")
    return rep
