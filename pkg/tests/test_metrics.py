import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adiabound import hamiltonians as hm
from adiabound import metrics as me
from adiabound import propagator as pr
from adiabound import schedules as sch
from adiabound.metrics import BoundInputError, BoundInputs
from adiabound.spectral import track
from adiabound.superadiabatic import a_bound, expand

G = 1 / 14


def _fake_result(psi0, psi1, chi=0.0):
    """Two-sample trajectory on a constant Z Hamiltonian, for metric-only tests."""
    ham = hm.InterpolatingHamiltonian([(hm.Coefficient(sch.constant(1.0)), hm.pauli_matrix("Z"))])
    return pr.EvolutionResult(np.array([0.0, 1.0]), np.array([psi0, psi1], dtype=complex), 1.0, 1.0, 1.0,
                              np.array([0.0, chi]), ham=ham)


def test_error_report_identical():
    ground = np.array([0, 1], dtype=complex)
    rep = me.error_report(_fake_result(ground, ground), phase=0.0)
    assert rep.delta == 0.0 and rep.fidelity == 1.0 and rep.fs_distance == 0.0


def test_error_report_orthogonal():
    ground, excited = np.array([0, 1], dtype=complex), np.array([1, 0], dtype=complex)
    rep = me.error_report(_fake_result(ground, excited), phase=0.0)
    assert rep.fidelity == 0.0
    assert rep.fs_distance == pytest.approx(math.pi / 2)
    assert rep.delta == pytest.approx(math.sqrt(2))


def test_error_report_matches_raw_vectors():
    ham = hm.x_to_z(1, sch.smooth_poly(2))
    res = pr.evolve(ham, 100.0, tol=1e-10)
    frames = track(ham, res.grid)
    rep = me.error_report(res, frames=frames)
    phi0, phi1 = frames[0].phi, frames[-1].phi
    ov = np.vdot(phi0, res.psi[0])
    psi1 = res.psi[-1] * np.conj(ov) / abs(ov)
    chi = pr.dynamical_phase(res, frames)
    oracle = np.linalg.norm(psi1 - np.exp(-1j * chi) * phi1)
    assert abs(rep.delta - oracle) < 1e-12
    psi = res.psi[-1]
    perp = psi - np.vdot(phi1, psi) * phi1
    # infidelity from the orthogonal component avoids cancellation near 1
    assert math.sin(rep.fs_distance) ** 2 == pytest.approx(np.vdot(perp, perp).real, rel=1e-6)
    assert rep.fidelity == pytest.approx(abs(np.vdot(phi1, psi)), abs=1e-13)
    assert rep.delta1 is None and rep.delta2 is None


def test_phase_robustness():
    ham = hm.x_to_z(1, sch.smooth_poly(1))
    res = pr.evolve(ham, 40.0, tol=1e-10, grid=257)
    frames = track(ham, res.grid)
    chi = pr.dynamical_phase(res, frames)
    a = me.error_report(res, frames=frames, phase=chi)
    b = me.error_report(res, frames=frames, phase=chi + 2 * math.pi)
    assert a.delta == pytest.approx(b.delta, abs=1e-13)
    assert a.fidelity == me.error_report(res, frames=frames, phase=chi + 1.0).fidelity


@pytest.mark.parametrize("N", [1, 2, 3])
def test_split_and_closure(N):
    ham = hm.x_to_z(1, sch.smooth_poly(N + 1))
    series = expand(ham, N)
    numeric, _ = a_bound(series)
    for T in (50.0, 100.0):
        eps = 1 / T
        res = pr.evolve_adiabatic(ham, T, series, tol=1e-10)
        rep = me.error_report(res, series=series)
        assert rep.delta <= rep.delta1 + rep.delta2 + 1e-12
        assert rep.delta1 <= numeric * eps ** (N + 1)
        assert rep.delta2 <= 1e-6
        gp_inputs = BoundInputs(N=N, q=2.0, xi=hm.norm_profile(ham).xi, d=math.sqrt(2))
        assert rep.delta1 <= me.analytic_delta1_bound(gp_inputs, T)
        assert 0 <= rep.fidelity <= 1


def test_lab_frame_split_with_series():
    ham = hm.x_to_z(1)
    series = expand(ham, 1)
    T = 40.0
    th = series.theta(1 / T)
    res = pr.evolve(ham, T, tol=1e-11, psi0=th / abs(th) * series.phi(0.0))
    rep = me.error_report(res, series=series)
    assert rep.delta <= rep.delta1 + rep.delta2 + 1e-12
    assert rep.delta2 > 1e-4  # linear schedule: no final collapse


def test_theorem1_time_examples():
    inp = BoundInputs(N=1, q=2.0, gamma=G, xi=1.0, d=1.0)
    assert me.theorem1_time(inp) == pytest.approx(28.0)
    doubled = BoundInputs(N=3, q=4.0, xi=2.5, d=0.7)
    assert me.theorem1_time(doubled) / me.theorem1_time(BoundInputs(N=3, q=2.0, xi=2.5, d=0.7)) == 2.0
    with pytest.warns(UserWarning):
        assert me.theorem1_time(BoundInputs(N=0)) == 0.0
    with pytest.raises(BoundInputError):
        BoundInputs(q=1.0)


def test_dimensional_consistency():
    # scaling both energies by J leaves JT unchanged
    a = BoundInputs(N=2, xi=3.0, d=0.5, J=1.0)
    b = BoundInputs(N=2, xi=6.0, d=1.0, J=2.0)
    assert me.theorem1_time(a) * a.J == pytest.approx(me.theorem1_time(b) * b.J)
    d = b.to_dict()
    assert d["beta"] == 3.0 and d["Delta"] == 0.5 and d["xi"] == 6.0


def test_error_bound_examples():
    assert me.theorem1_error_bound(BoundInputs(N=0, q=2.0)) == 1.0
    assert me.theorem1_error_bound(BoundInputs(N=10, q=math.e)) == pytest.approx(11 ** (15 / 14) * math.exp(-10))
    for N in range(1, 6):
        assert me.theorem1_error_bound(BoundInputs(N=N, q=4.0)) < me.theorem1_error_bound(BoundInputs(N=N, q=2.0))


def test_decreasing_threshold():
    for N in range(0, 8):
        q = me.decreasing_threshold(N, G) * 1.01
        assert me.theorem1_error_bound(BoundInputs(N=N + 1, q=q)) < me.theorem1_error_bound(BoundInputs(N=N, q=q))


def test_corollary_exponential():
    c, env = me.corollary_exponential(0.0, BoundInputs())
    assert c == pytest.approx(1 / (14 * math.e)) and env == 1.0
    inp = BoundInputs(xi=1.3, d=0.4)
    c, _ = me.corollary_exponential(1.0, inp)
    Ts = np.linspace((G + 1) / c, 50 / c, 200)
    envs = [me.corollary_exponential(T, inp)[1] for T in Ts]
    assert np.all(np.diff(envs) < 0)
    with pytest.raises(BoundInputError):
        me.corollary_exponential(-1.0, inp)


def test_corollary_fixed_error():
    base = dict(N=20, xi=1.0, d=1.0)
    T_half = me.corollary_fixed_error(BoundInputs(delta_u=0.5, **base))
    T_one = me.corollary_fixed_error(BoundInputs(delta_u=1 - 1e-15, **base))
    assert T_half / T_one == pytest.approx(2 ** (1 / 20), rel=1e-12)
    for N, du in ((1, 0.3), (3, 1e-4), (7, 0.05)):
        inp = BoundInputs(N=N, xi=2.0, d=0.3, delta_u=du)
        T = me.corollary_fixed_error(inp)
        q = me.implied_q(T, inp)
        back = me.theorem1_error_bound(BoundInputs(N=N, q=q, xi=2.0, d=0.3))
        assert back == pytest.approx(du, rel=1e-12)
        assert me.theorem1_time(BoundInputs(N=N, q=q, xi=2.0, d=0.3)) == pytest.approx(T, rel=1e-12)
    assert 0.5 ** (-1 / 10**6) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(BoundInputError):
        me.corollary_fixed_error(BoundInputs(delta_u=1.0))


def test_jrs_constant_profiles():
    grid = np.linspace(0, 1, 101)
    p = me.JRSProfiles(grid, np.full(101, 2.0), np.zeros(101), np.full(101, 0.5))
    T_int, T_sup = me.jrs_time(p, 3.0)
    assert T_int == pytest.approx(7 * 3.0 * 4.0 / 0.125)
    assert T_int == pytest.approx(T_sup)


def test_jrs_multiplicity_scaling():
    grid = np.linspace(0, 1, 101)
    only_dd = me.JRSProfiles(grid, np.zeros(101), np.ones(101), np.ones(101))
    only_d = me.JRSProfiles(grid, np.ones(101), np.zeros(101), np.ones(101))
    assert me.jrs_time(only_dd, 2.0, m=4)[0] == pytest.approx(4 * me.jrs_time(only_dd, 2.0, m=1)[0])
    assert me.jrs_time(only_d, 2.0, m=4)[0] == pytest.approx(8 * me.jrs_time(only_d, 2.0, m=1)[0])


def test_jrs_grover():
    prof = me.jrs_profiles(hm.grover(3, 0, sch.smooth_poly(1)))
    T_int, T_sup = me.jrs_time(prof, 2.0)
    assert T_int < T_sup
    assert me.jrs_error_bound(4.0) == 1 / 16


def test_qpt_time():
    base = dict(N=2, q=2.0, J=1.0)
    T1 = me.qpt_time(BoundInputs(n=10, z=1.0, **base), 0.3)
    T2 = me.qpt_time(BoundInputs(n=20, z=1.0, **base), 0.3)
    assert T2 / T1 == pytest.approx(2.0)
    assert me.qpt_time(BoundInputs(n=5, z=4 / 3, **base), 0.3) == pytest.approx(
        me.qpt_time(BoundInputs(n=50, z=4 / 3, **base), 0.3))
    r = me.qpt_time(BoundInputs(n=16, z=0.5, **base), 0.3) / me.qpt_time(BoundInputs(n=8, z=0.5, **base), 0.3)
    assert r == pytest.approx(2**2.5)
    with pytest.raises(BoundInputError):
        me.qpt_time(BoundInputs(n=4, z=0.0, **base), 1.0)


def test_grover_gap():
    assert me.grover_gap(2, 0.5) == pytest.approx(0.5)
    assert me.grover_gap(2, 0.0) == pytest.approx(1.0)
    e = np.linalg.eigvalsh(hm.grover_hamiltonian(6, 5, 0.5))
    assert abs(me.grover_gap(6, 0.5) - (e[1] - e[0])) < 1e-10
    for n in range(1, 9):
        assert me.grover_gap(n, 0.5, J=3.0) == pytest.approx(3.0 * 2 ** (-n / 2), abs=1e-10)
    with pytest.raises(BoundInputError):
        me.grover_gap(2, 1.5)


def test_trace_distance_pure_helper():
    rng = np.random.default_rng(0)
    for _ in range(10):
        a = rng.normal(size=3) + 1j * rng.normal(size=3)
        b = rng.normal(size=3) + 1j * rng.normal(size=3)
        a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
        b = b * np.exp(-1j * np.angle(np.vdot(a, b)))  # optimal phase
        D = 0.5 * np.abs(np.linalg.eigvalsh(np.outer(a, a.conj()) - np.outer(b, b.conj()))).sum()
        assert me.trace_distance_pure(np.linalg.norm(a - b)) == pytest.approx(D, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.floats(1.01, 20), st.floats(0.01, 1), st.floats(0.1, 10), st.floats(0.01, 5))
def test_bound_properties(N, q, gamma, xi, d):
    inp = BoundInputs(N=N, q=q, gamma=gamma, xi=xi, d=d)
    T = me.theorem1_time(inp)
    assert me.implied_q(T, inp) == pytest.approx(q, rel=1e-12)
    assert 0 < me.theorem1_error_bound(inp) <= (N + 1) ** (gamma + 1)


def test_bound_summary_schema():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s = me.bound_summary(BoundInputs(N=3, xi=6.84, d=0.892))
    assert {"T", "delta_bound", "c", "inputs_echo"} <= set(s)
    assert s["c"] == pytest.approx(G * 0.892**3 / (math.e * 6.84**2))
