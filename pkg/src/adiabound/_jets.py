"""Truncated Taylor series ("jets") in tau around a single point.

A jet of order K is an array c of shape (K+1, ...) with
f(tau0 + s) = sum_k c[k] s^k + O(s^(K+1)).  Used to differentiate the
superadiabatic recursion exactly instead of numerically.
"""

from __future__ import annotations

import math

import numpy as np


def hamiltonian_jet(ham, tau: float, K: int) -> np.ndarray:
    return np.array([ham(tau, k) / math.factorial(k) for k in range(K + 1)])


def deriv(c: np.ndarray) -> np.ndarray:
    k = np.arange(1, len(c)).reshape((-1,) + (1,) * (c.ndim - 1))
    return c[1:] * k


def integ(c: np.ndarray, c0) -> np.ndarray:
    k = np.arange(1, len(c) + 1).reshape((-1,) + (1,) * (c.ndim - 1))
    return np.concatenate([np.asarray(c0, dtype=c.dtype).reshape((1,) + c.shape[1:]), c / k])


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    K = min(len(a), len(b))
    return a[:K] + b[:K]


def scale_vec(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Jet product of a scalar jet and a vector jet."""
    K = min(len(a), len(v))
    return np.array([sum(a[i] * v[k - i] for i in range(k + 1)) for k in range(K)])


def inner(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Jet of <u(s)|v(s)> for real s."""
    K = min(len(u), len(v))
    return np.array([sum(np.vdot(u[i], v[k - i]) for i in range(k + 1)) for k in range(K)])


def eigen_jet(Hj: np.ndarray, E0: float, phi0: np.ndarray, R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Jets of the tracked eigenpair in the parallel-transport gauge.

    ``R`` is the reduced inverse sum_{j != t} |j><j| / (E_j - E0).
    Order by order, (H0 - E0) Phi_k = r_k + E_k Phi_0 fixes E_k and the
    perpendicular part of Phi_k; <Phi|Phi'> = 0 fixes the rest.
    """
    K = len(Hj) - 1
    E = np.zeros(K + 1)
    E[0] = E0
    P = np.zeros((K + 1, len(phi0)), dtype=complex)
    P[0] = phi0
    for k in range(1, K + 1):
        r = -sum(Hj[i] @ P[k - i] for i in range(1, k + 1))
        r = r + sum(E[i] * P[k - i] for i in range(1, k))
        E[k] = -np.vdot(phi0, r).real
        P[k] = R @ r
        a = -sum((k - i) * np.vdot(P[i], P[k - i]) for i in range(1, k)) / k if k > 1 else 0.0
        P[k] += a * phi0
    return E, P


def resolvent_solve(Hj: np.ndarray, E: np.ndarray, P: np.ndarray, R: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Jet of G_r(s) v(s), with G_r = i (H - E)^-1 on the complement of Phi.

    Solves (H - E) psi = i P_perp v together with <Phi|psi> = 0.
    """
    K = min(len(v), len(P)) - 1
    w = 1j * (v[: K + 1] - scale_vec(inner(P, v)[: K + 1], P))
    psi = np.zeros((K + 1, P.shape[1]), dtype=complex)
    for k in range(K + 1):
        u = w[k] - sum(Hj[i] @ psi[k - i] - E[i] * psi[k - i] for i in range(1, k + 1))
        psi[k] = R @ u
        if k:
            psi[k] -= sum(np.vdot(P[i], psi[k - i]) for i in range(1, k + 1)) * P[0]
    return psi
