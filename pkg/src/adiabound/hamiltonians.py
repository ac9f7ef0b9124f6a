"""Dense time-dependent n-qubit Hamiltonians.

H(tau) = sum_k xi_k(tau) M_k, where each coefficient xi_k is an affine
function ``offset + scale * x(tau)`` of a registered schedule and each M_k is a
fixed Hermitian matrix (a Pauli string, a projector, ...).  Derivatives of any
order come from the schedules' closed-form derivatives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce
from itertools import combinations, product
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import schedules as sch
from .schedules import Schedule

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

MAX_DIM = 1024


class HamiltonianError(ValueError):
    pass


class NumericalError(RuntimeError):
    """An eigensolver or integrator failed."""


@dataclass(frozen=True)
class PauliString:
    letters: str

    def __post_init__(self):
        letters = self.letters.upper()
        if not letters or set(letters) - set("IXYZ"):
            raise HamiltonianError(f"invalid Pauli string {self.letters!r}")
        object.__setattr__(self, "letters", letters)

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def weight(self) -> int:
        return sum(c != "I" for c in self.letters)

    def __str__(self):
        return self.letters


def pauli_matrix(p: PauliString | str) -> np.ndarray:
    """Kronecker product of single-qubit Paulis, leftmost letter = first factor."""
    if isinstance(p, str):
        p = PauliString(p)
    return reduce(np.kron, (PAULI[c] for c in p.letters))


def pauli_strings(n: int, max_weight: int) -> list[PauliString]:
    """All n-qubit Pauli strings of weight <= max_weight, identity first."""
    out = []
    for w in range(max_weight + 1):
        for sites in combinations(range(n), w):
            for ops in product("XYZ", repeat=w):
                letters = ["I"] * n
                for s, o in zip(sites, ops):
                    letters[s] = o
                out.append(PauliString("".join(letters)))
    return out


def count_parameters(n: int, L: int) -> int:
    """Number of real parameters of an L-local n-qubit Hamiltonian.

    Weights are capped at n, so L > n counts every Pauli string.
    """
    if L < 0 or n < 1:
        raise HamiltonianError("need n >= 1 and L >= 0")
    return sum(math.comb(n, j) * 3**j for j in range(min(L, n) + 1))


def operator_norm(M: np.ndarray) -> float:
    """Largest singular value (largest |eigenvalue| for Hermitian M)."""
    M = np.asarray(M)
    try:
        if M.ndim == 1:
            return float(np.linalg.norm(M))
        if np.allclose(M, M.conj().T, atol=1e-13 * (1 + np.abs(M).max())):
            ev = np.linalg.eigvalsh(M)
            return float(np.max(np.abs(ev)))
        return float(np.linalg.norm(M, 2))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"norm evaluation failed: {exc}") from exc


@dataclass(frozen=True)
class Coefficient:
    """xi(tau) = offset + scale * x(tau) for a schedule x."""

    schedule: Schedule
    scale: float = 1.0
    offset: float = 0.0

    def __call__(self, tau: float, k: int = 0) -> float:
        val = self.scale * sch.eval_schedule(self.schedule, tau, k)
        return val + self.offset if k == 0 else val


class InterpolatingHamiltonian:
    """H(tau) = sum_k xi_k(tau) M_k with exact tau-derivatives.

    Parameters
    ----------
    terms : sequence of (Coefficient, matrix)
    J : float
        Energy unit; the dimensional Hamiltonian is h = J * H.
    """

    def __init__(self, terms: Sequence[tuple[Coefficient, np.ndarray]], J: float = 1.0, name: str = ""):
        if not terms:
            raise HamiltonianError("a Hamiltonian needs at least one term")
        mats = [np.asarray(m, dtype=complex) for _, m in terms]
        dim = mats[0].shape[0]
        if dim > MAX_DIM:
            raise HamiltonianError(f"dimension {dim} exceeds the dense limit {MAX_DIM}")
        for m in mats:
            if m.shape != (dim, dim):
                raise HamiltonianError("all term matrices must share one square shape")
            if not np.allclose(m, m.conj().T, atol=1e-12 * (1 + np.abs(m).max())):
                raise HamiltonianError("term matrices must be Hermitian")
        if J <= 0:
            raise HamiltonianError("energy unit J must be positive")
        self.coefficients = tuple(c for c, _ in terms)
        self.matrices = np.array(mats)
        self.dim = dim
        self.J = float(J)
        self.name = name
        # terms sharing a schedule are pre-summed: H = M_const + sum_s x_s(tau) M_s
        self._schedules = list(dict.fromkeys(c.schedule for c in self.coefficients))
        index = {sc: i for i, sc in enumerate(self._schedules)}
        self._grouped = np.zeros((len(self._schedules), dim, dim), dtype=complex)
        self._const = np.zeros((dim, dim), dtype=complex)
        for c, m in zip(self.coefficients, mats):
            self._grouped[index[c.schedule]] += c.scale * m
            self._const += c.offset * m

    def coefficient_values(self, tau: float, k: int = 0) -> np.ndarray:
        return np.array([c(tau, k) for c in self.coefficients])

    def __call__(self, tau: float, k: int = 0) -> np.ndarray:
        """k-th tau-derivative of the dimensionless H at tau."""
        x = [sch.eval_schedule(sc, tau, k) for sc in self._schedules]
        out = np.tensordot(x, self._grouped, axes=1) if len(x) > 1 else x[0] * self._grouped[0]
        return out + self._const if k == 0 else out

    def dimensional(self, tau: float, k: int = 0) -> np.ndarray:
        return self.J * self(tau, k)

    @property
    def gamma(self) -> float:
        """Analyticity height: the smallest declared height over all coefficients."""
        return min(c.schedule.gamma for c in self.coefficients)

    @property
    def boundary_flatness(self) -> int:
        """Number of tau-derivatives guaranteed to vanish at both endpoints."""
        live = [c.schedule.Nb for c in self.coefficients if c.schedule.family != "constant" and c.scale != 0]
        return min(live) if live else 10**9

    def kron(self, other_dim: int, constant_terms: Iterable[np.ndarray] = ()) -> "InterpolatingHamiltonian":
        """H (x) I_other plus time-independent terms on the joint space."""
        eye = np.eye(other_dim)
        terms = [(c, np.kron(m, eye)) for c, m in zip(self.coefficients, self.matrices)]
        for m in constant_terms:
            terms.append((Coefficient(sch.constant(1.0)), m))
        return InterpolatingHamiltonian(terms, J=self.J, name=self.name + "+bath")


# -- specs ------------------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    pauli: PauliString
    schedule: str
    params: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class LocalHamiltonianSpec:
    """Serializable L-local Pauli Hamiltonian.

    Each term's ``params`` may carry ``scale`` and ``offset`` (affine map of
    the schedule value) besides the schedule family's own parameters.
    """

    n: int
    L: int
    J: float
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if t.pauli.n != self.n:
                raise HamiltonianError(f"term {t.pauli} does not act on {self.n} qubits")
            if t.pauli.weight > self.L:
                raise HamiltonianError(f"term {t.pauli} has weight {t.pauli.weight} > L={self.L}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "L": self.L,
                "J": self.J,
                "terms": [
                    {"pauli": t.pauli.letters, "schedule": t.schedule, "params": dict(t.params)}
                    for t in self.terms
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str | dict) -> "LocalHamiltonianSpec":
        d = json.loads(text) if isinstance(text, str) else text
        terms = [Term(PauliString(t["pauli"]), t["schedule"], dict(t.get("params", {}))) for t in d["terms"]]
        return cls(int(d["n"]), int(d["L"]), float(d.get("J", 1.0)), tuple(terms))


def _coefficient(term: Term, bank: Mapping | None) -> Coefficient:
    params = dict(term.params)
    scale = float(params.pop("scale", 1.0))
    offset = float(params.pop("offset", 0.0))
    if bank is not None and term.schedule in bank:
        s = bank[term.schedule]
        s = s(**params) if callable(s) and not isinstance(s, Schedule) else s
    else:
        try:
            s = sch.make_schedule(term.schedule, **params)
        except sch.ScheduleError as exc:
            raise HamiltonianError(str(exc)) from None
    return Coefficient(s, scale, offset)


def build(spec: LocalHamiltonianSpec, schedule_bank: Mapping | None = None) -> InterpolatingHamiltonian:
    """Compile a spec into an :class:`InterpolatingHamiltonian`.

    ``schedule_bank`` optionally maps ids to Schedule objects or factories and
    takes precedence over the global registry.
    """
    terms = [(_coefficient(t, schedule_bank), pauli_matrix(t.pauli)) for t in spec.terms]
    return InterpolatingHamiltonian(terms, J=spec.J, name=f"local(n={spec.n},L={spec.L})")


def assemble(spec: LocalHamiltonianSpec, schedule_bank: Mapping | None, tau: float, k: int = 0) -> np.ndarray:
    """sum_sigma xi_sigma^(k)(tau) sigma as a dense matrix."""
    if not 0.0 <= tau <= 1.0:
        raise HamiltonianError("tau must lie in [0, 1]")
    return build(spec, schedule_bank)(tau, k)


# -- builtin families ---------------------------------------------------------


def linear_interpolation(H0: np.ndarray, H1: np.ndarray, schedule: Schedule | None = None, J: float = 1.0,
                         name: str = "") -> InterpolatingHamiltonian:
    """(1 - x(tau)) H0 + x(tau) H1."""
    schedule = schedule or sch.linear()
    return InterpolatingHamiltonian(
        [(Coefficient(schedule, -1.0, 1.0), H0), (Coefficient(schedule, 1.0, 0.0), H1)], J=J, name=name
    )


def x_to_z_spec(n: int, schedule: Schedule | None = None, coupling: float = 0.5, J: float = 1.0
                ) -> LocalHamiltonianSpec:
    """Transverse-field sweep: H0 = sum_i X_i, H1 = sum_i Z_i + coupling * sum_i Z_i Z_{i+1}.

    The target is the ground state. For n = 1 this is (1 - x) X + x Z.
    """
    schedule = schedule or sch.linear()
    sdict = schedule.to_dict()
    base = {k: v for k, v in sdict["params"].items()}
    base["gamma"] = schedule.gamma
    fam = sdict["family"]
    terms = []
    for i in range(n):
        terms.append(Term(PauliString("I" * i + "X" + "I" * (n - i - 1)), fam, {**base, "scale": -1.0, "offset": 1.0}))
        terms.append(Term(PauliString("I" * i + "Z" + "I" * (n - i - 1)), fam, dict(base)))
    if coupling and n > 1:
        for i in range(n - 1):
            letters = "I" * i + "ZZ" + "I" * (n - i - 2)
            terms.append(Term(PauliString(letters), fam, {**base, "scale": coupling}))
    return LocalHamiltonianSpec(n, 2 if n > 1 else 1, J, tuple(terms))


def x_to_z(n: int, schedule: Schedule | None = None, coupling: float = 0.5, J: float = 1.0):
    return build(x_to_z_spec(n, schedule, coupling, J))


def random_2local_spec(n: int, seed: int, schedule: Schedule | None = None, J: float = 1.0
                       ) -> LocalHamiltonianSpec:
    """Random 2-local interpolation with coefficients a_s + b_s x(tau), a, b ~ N(0, 1/sqrt(#terms))."""
    rng = np.random.default_rng(seed)
    schedule = schedule or sch.linear()
    sdict = schedule.to_dict()
    base = dict(sdict["params"], gamma=schedule.gamma)
    strings = [p for p in pauli_strings(n, min(2, n)) if p.weight > 0]
    width = 1.0 / math.sqrt(len(strings))
    terms = []
    for p in strings:
        a, b = rng.normal(0.0, width, size=2)
        terms.append(Term(p, sdict["family"], {**base, "scale": float(b), "offset": float(a)}))
    return LocalHamiltonianSpec(n, min(2, n), J, tuple(terms))


def grover_hamiltonian(n: int, m: int, x: float) -> np.ndarray:
    """(1 - x)(I - |phi><phi|) + x (I - |m><m|), |phi> the uniform superposition."""
    dim = 2**n
    if not 0 <= m < dim:
        raise HamiltonianError(f"marked index {m} out of range for n={n}")
    A, B = _grover_parts(n, m)
    return (1 - x) * A + x * B


def _grover_parts(n: int, m: int):
    dim = 2**n
    phi = np.full(dim, 1 / math.sqrt(dim), dtype=complex)
    A = np.eye(dim, dtype=complex) - np.outer(phi, phi.conj())
    B = np.eye(dim, dtype=complex)
    B[m, m] = 0.0
    return A, B


def grover(n: int, m: int = 0, schedule: Schedule | None = None, J: float = 1.0) -> InterpolatingHamiltonian:
    if not 0 <= m < 2**n:
        raise HamiltonianError(f"marked index {m} out of range for n={n}")
    A, B = _grover_parts(n, m)
    return linear_interpolation(A, B, schedule, J=J, name=f"grover(n={n})")


# -- norms ----------------------------------------------------------------------


@dataclass(frozen=True)
class NormProfile:
    """Grid-sampled sups; lower estimates of the true suprema."""

    beta: float  # sup ||dH/dtau||
    eta: float  # sup ||d2H/dtau2||
    xi: float  # J * beta
    grid: np.ndarray
    hdot: np.ndarray  # ||dH/dtau|| per grid point
    hddot: np.ndarray


def default_grid(points: int = 257) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


def norm_profile(ham: InterpolatingHamiltonian, grid: np.ndarray | None = None) -> NormProfile:
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise HamiltonianError("empty grid")
    hdot = np.array([operator_norm(ham(t, 1)) for t in grid])
    hddot = np.array([operator_norm(ham(t, 2)) for t in grid])
    beta = float(hdot.max())
    return NormProfile(beta, float(hddot.max()), ham.J * beta, grid, hdot, hddot)


def hilbert_schmidt_components(M: np.ndarray, n: int) -> dict[str, complex]:
    """Coefficients c_s = Tr(s M)/2^n over all 4^n Pauli strings (small n only)."""
    out = {}
    for letters in product("IXYZ", repeat=n):
        s = "".join(letters)
        out[s] = np.trace(pauli_matrix(s) @ M) / 2**n
    return out
