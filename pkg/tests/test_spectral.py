import math

import numpy as np
import pytest

from adiabound import hamiltonians as hm
from adiabound import schedules as sch
from adiabound import spectral as sp
from adiabound.spectral import decompose, fix_gauge, gap_profile, track


def _frames_with_derivative(ham, grid):
    frames = track(ham, grid)
    return frames, [sp.target_derivative(f, ham(f.tau, 1)) for f in frames]


def test_decompose_diag():
    fr = decompose(np.diag([0.0, 1.0]))
    assert np.allclose(fr.energies, [0, 1])
    assert np.allclose(fr.Gr, 1j * np.diag([0, 1]))


def test_decompose_sigma_x():
    fr = decompose(hm.pauli_matrix("X"))
    assert np.allclose(fr.energies, [-1, 1])
    assert hm.operator_norm(fr.Gr) == pytest.approx(0.5)


def test_decompose_grover():
    fr = decompose(hm.grover_hamiltonian(2, 0, 0.5))
    assert hm.operator_norm(fr.Gr) == pytest.approx(2.0)


def test_decompose_errors():
    with pytest.raises(sp.DegenerateTargetError):
        decompose(np.eye(2))
    # a hint halfway between two eigenvectors is ambiguous
    with pytest.raises(sp.TrackingError):
        decompose(np.diag([0.0, 1.0, 2.0]), np.array([1, 1, 1]) / math.sqrt(3))


def test_reduced_resolvent_conventions():
    fr = decompose(hm.grover_hamiltonian(2, 1, 0.3))
    bare = sp.reduced_resolvent(fr, include_i=False)
    assert np.allclose(sp.reduced_resolvent(fr), 1j * bare)
    H = hm.grover_hamiltonian(2, 1, 0.3)
    K = H - fr.E * np.eye(4)
    assert np.allclose(bare @ K, fr.Pperp)


@pytest.mark.parametrize("ham", [hm.x_to_z(1), hm.grover(3, 2, sch.smooth_poly(2)),
                                 hm.build(hm.random_2local_spec(3, 5, sch.smooth_poly(1)))], ids=["xz1", "grover3", "rand3"])
def test_frame_identities(ham):
    for t in np.linspace(0, 1, 17):
        H = ham(t)
        fr = decompose(H, tau=t)
        V = fr.vectors
        assert np.allclose(V.conj().T @ V, np.eye(len(V)), atol=1e-10)
        assert np.allclose(fr.P + fr.Pperp, np.eye(len(V)))
        G = fr.Gr
        assert np.abs(G @ fr.P).max() < 1e-12 and np.abs(fr.P @ G).max() < 1e-12
        K = H - fr.E * np.eye(len(V))
        assert np.linalg.norm(G @ K - 1j * fr.Pperp, 2) <= 1e-9
        assert hm.operator_norm(G) * fr.delta0 == pytest.approx(1.0, abs=1e-10)
        assert np.allclose(G @ fr.Pperp, G, atol=1e-10) and np.allclose(fr.Pperp @ G, G, atol=1e-10)


def test_fix_gauge_constant_and_idempotent():
    const = [decompose(np.diag([0.0, 2.0]), tau=t) for t in np.linspace(0, 1, 5)]
    fixed = fix_gauge(const)
    for a, b in zip(const, fixed):
        assert np.allclose(a.vectors, b.vectors)
    frames = track(hm.x_to_z(1), np.linspace(0, 1, 64))
    again = fix_gauge(frames)
    for a, b in zip(frames, again):
        assert np.allclose(a.vectors, b.vectors)


def test_fix_gauge_parallel_transport():
    frames = track(hm.x_to_z(1), np.linspace(0, 1, 256))
    berry = sp.berry_phase_estimate(frames)
    assert np.abs(berry).max() < 1e-6
    rng = np.random.default_rng(3)
    scrambled = [f.with_phases(np.exp(2j * np.pi * rng.random(2))) for f in frames]
    assert np.abs(sp.berry_phase_estimate(fix_gauge(scrambled))).max() < 1e-6


def test_fix_gauge_coarse_grid():
    a = decompose(np.diag([0.0, 1.0]))
    b = sp.SpectralFrame(1.0, np.array([0.0, 1.0]), np.array([[0, 1], [1, 0]], dtype=complex), 0)
    with pytest.raises(sp.GridTooCoarseError):
        fix_gauge([a, b])


def test_gap_profile_examples():
    gp = gap_profile(track(hm.grover(4, 0), np.linspace(0, 1, 257)))
    assert gp.Delta == pytest.approx(0.25, abs=1e-12)
    assert gp.argmin_tau == pytest.approx(0.5)
    assert gp.A * gp.Delta == pytest.approx(1.0)
    fr = decompose(np.diag([0.0, 3.0, 7.0]))
    assert fr.delta0 == 3.0
    grid = np.linspace(0, 1, 512)
    gp = gap_profile(track(hm.x_to_z(1), grid), J=3.0)
    scan = min(np.diff(np.linalg.eigvalsh((1 - x) * hm.pauli_matrix("X") + x * hm.pauli_matrix("Z")))[0] for x in grid)
    assert abs(gp.Delta - scan) < 1e-9
    assert gp.d == pytest.approx(3.0 * gp.Delta)
    with pytest.raises(sp.SpectralError):
        gap_profile(track(hm.x_to_z(1), [0.5]))


def test_gap_profile_csv(tmp_path):
    gp = gap_profile(track(hm.x_to_z(1), np.linspace(0, 1, 9)))
    path = tmp_path / "gap.csv"
    sp.write_gap_csv(gp, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau,delta0,Emin_index"
    assert len(lines) == 10
    summary = sp.gap_summary(gp)
    assert set(summary) == {"Delta", "A", "d", "argmin_tau"}


def test_target_derivative_examples():
    fr = decompose(hm.pauli_matrix("Z"))
    assert np.allclose(sp.target_derivative(fr, np.zeros((2, 2))), 0)
    assert np.allclose(sp.target_derivative(fr, np.diag([1.0, 3.0])), 0)


def test_target_derivative_finite_difference():
    ham = hm.x_to_z(1)
    h = 1e-4
    grid = [0.5 - h, 0.5, 0.5 + h]
    frames = track(ham, grid)
    fd = (frames[2].phi - frames[0].phi) / (2 * h)
    pd = sp.target_derivative(frames[1], ham(0.5, 1))
    assert np.linalg.norm(fd - pd) < 1e-5
    assert abs(np.vdot(frames[1].phi, pd)) < 1e-10


def test_hellmann_feynman_examples():
    fr = decompose(np.diag([0.0, 1.0]))
    hf = sp.hellmann_feynman(fr, np.zeros((2, 2)), np.zeros((2, 2)))
    assert hf.Edot == 0 and hf.Eddot == 0 and np.allclose(hf.Pperp_phiddot, 0)
    Z = hm.pauli_matrix("Z")
    for tau in (0.5, 1.3):
        fr = decompose(tau * Z)
        hf = sp.hellmann_feynman(fr, Z, np.zeros((2, 2)))
        assert hf.Edot == pytest.approx(-1.0) and hf.Eddot == pytest.approx(0.0, abs=1e-14)


def test_hellmann_feynman_random_finite_difference():
    ham = hm.build(hm.random_2local_spec(2, 11, sch.smooth_poly(2)))
    h = 1e-4
    E = [np.linalg.eigvalsh(ham(t))[0] for t in (0.3 - h, 0.3, 0.3 + h)]
    fr = decompose(ham(0.3), tau=0.3)
    hf = sp.hellmann_feynman(fr, ham(0.3, 1), ham(0.3, 2))
    fd1 = (E[2] - E[0]) / (2 * h)
    fd2 = (E[2] - 2 * E[1] + E[0]) / h**2
    assert abs(hf.Edot - fd1) <= 1e-6 * (1 + abs(hf.Edot))
    assert abs(hf.Eddot - fd2) <= 1e-4 * (1 + abs(hf.Eddot))
    assert abs(hf.Edot) <= hm.operator_norm(ham(0.3, 1))


def test_pperp_phi_ddot_finite_difference():
    ham = hm.build(hm.random_2local_spec(2, 2, sch.smooth_poly(2)))
    h = 1e-3
    frames = track(ham, [0.4 - h, 0.4, 0.4 + h])
    fd = (frames[2].phi - 2 * frames[1].phi + frames[0].phi) / h**2
    hf = sp.hellmann_feynman(frames[1], ham(0.4, 1), ham(0.4, 2))
    assert np.linalg.norm(frames[1].Pperp @ fd - hf.Pperp_phiddot) < 1e-4 * (1 + np.linalg.norm(fd))


def test_resolvent_derivative_identities():
    ham = hm.build(hm.random_2local_spec(2, 4, sch.smooth_poly(1)))
    tau, h = 0.35, 1e-4
    fr = decompose(ham(tau), tau=tau)
    pd = sp.target_derivative(fr, ham(tau, 1))
    Gp = decompose(ham(tau + h), fr.phi, tau=tau + h).Gr
    Gm = decompose(ham(tau - h), fr.phi, tau=tau - h).Gr
    dG = (Gp - Gm) / (2 * h)
    # d/dtau G_r |Phi> = -G_r |Phi'>
    assert np.linalg.norm(dG @ fr.phi + fr.Gr @ pd) < 1e-5
    assert np.linalg.norm(dG - sp.reduced_resolvent_derivative(fr, ham(tau, 1))) < 1e-5 * (1 + np.linalg.norm(dG))
    z = 0.3 + 0.7j
    fd = (sp.resolvent(ham(tau + h), z) - sp.resolvent(ham(tau - h), z)) / (2 * h)
    exact = sp.resolvent_derivative(ham(tau), ham(tau, 1), z)
    assert np.linalg.norm(fd - exact) <= 1e-5 * np.linalg.norm(exact)


@pytest.mark.parametrize("Nb", [1, 2, 3])
def test_endpoint_derivatives_vanish(Nb):
    ham = hm.x_to_z(2, sch.smooth_poly(Nb))
    for t in (0.0, 1.0):
        fr = decompose(ham(t), tau=t)
        pd = sp.target_derivative(fr, ham(t, 1))
        hf = sp.hellmann_feynman(fr, ham(t, 1), ham(t, 2), pd)
        assert abs(hf.Edot) <= 1e-6 and np.linalg.norm(pd) <= 1e-6
        assert hm.operator_norm(sp.projector_derivative(fr, pd)) <= 1e-6
        assert hm.operator_norm(sp.reduced_resolvent_derivative(fr, ham(t, 1))) <= 1e-5
        if Nb >= 2:
            assert abs(hf.Eddot) <= 1e-6
    # one-sided finite difference of G_r at tau = 0
    h = 1e-4
    G = [decompose(ham(t), tau=t).Gr for t in (0.0, h, 2 * h)]
    dG = (-3 * G[0] + 4 * G[1] - G[2]) / (2 * h)
    assert hm.operator_norm(dG) <= 1e-5


def test_corollary_bounds_constant():
    const = hm.InterpolatingHamiltonian([(hm.Coefficient(sch.constant(1.0)), hm.pauli_matrix("Z"))])
    rep = sp.corollary_bounds(const, track(const, np.linspace(0, 1, 33)))
    assert all(np.allclose(v, 0) for v in rep.measured.values())
    assert rep.passed


@pytest.mark.parametrize("ham", [hm.x_to_z(1), hm.grover(3, 1, sch.smooth_poly(2)), hm.x_to_z(2, sch.smooth_poly(1)),
                                 hm.build(hm.random_2local_spec(3, 1, sch.smooth_poly(2)))],
                         ids=["xz1", "grover3", "xz2", "rand3"])
def test_corollary_bounds_hold(ham):
    rep = sp.corollary_bounds(ham, track(ham, np.linspace(0, 1, 401)))
    assert rep.passed, rep.ratios
    assert np.all(rep.measured["phi_dot"] <= rep.A * rep.beta * (1 + 1e-12))
