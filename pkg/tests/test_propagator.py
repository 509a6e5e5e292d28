import numpy as np
import pytest
from hypothesis import given, strategies as st

from bohmtraj.errors import NumericalError
from bohmtraj.field import (Potential1D, WaveField, box_grid, energy_expectation, make_grid, momentum_expectation,
                            norm, position_moments)
from bohmtraj.propagator import (SpectralCoeffs, SplitStepPropagator, billiard_energies, billiard_eval,
                                 billiard_evolve, billiard_mode, billiard_project, dump_coeffs, evolve_split_step,
                                 fidelity, free_gaussian_width, init_gaussian, load_coeffs, split_step_frames,
                                 stability_bound)


def free_gaussian_exact(q, t, q0, k0, sigma, hbar=1.0, mass=1.0):
    """Closed-form free evolution of exp(-(q-q0)^2/(4 sigma^2) + i k0 q)."""
    s = 1.0 + 1j * hbar * t / (2 * mass * sigma**2)
    v = hbar * k0 / mass
    x = q - q0 - v * t
    amp = (2 * np.pi * sigma**2) ** -0.25 / np.sqrt(s)
    return amp * np.exp(-x**2 / (4 * sigma**2 * s) + 1j * k0 * (q - v * t / 2))


def line(L=40.0, n=1024):
    return make_grid(1, [(-L / 2, L / 2)], n)


def test_gaussian_momentum_and_energy():
    g = make_grid(1, [(-10.0, 10.0)], 1024)
    f = init_gaussian(g, [0.0], [20.0], 0.5)
    assert momentum_expectation(f)[0] == pytest.approx(20.0, abs=1e-6)
    assert energy_expectation(f) == pytest.approx(200.0 + 1 / (8 * 0.25), rel=1e-9)


def test_under_resolved_packet_rejected():
    with pytest.raises(ValueError, match="under-resolved packet"):
        init_gaussian(make_grid(1, [(0.0, 1.0)], 64), [0.5], [0.0], 0.02)


def test_free_evolution_matches_closed_form():
    g = line(40.0, 256)
    q = g.axis(0)
    f = init_gaussian(g, [-3.0], [2.0], 0.7)
    out = evolve_split_step(f, None, 0.002, 1000)
    exact = free_gaussian_exact(q, 2.0, -3.0, 2.0, 0.7)
    assert np.max(np.abs(out.values - exact * (exact.conj() @ out.values) / abs(exact.conj() @ out.values))) < 1e-10
    width = position_moments(out)[1][0]
    assert width == pytest.approx(free_gaussian_width(0.7, 2.0), rel=1e-9)


def test_stability_bound_is_enforced():
    g = line()
    bound = stability_bound(g, 0.0, 1.0, 1.0)
    assert bound == pytest.approx(0.5 / (0.5 * (np.pi / g.spacing[0]) ** 2), rel=1e-12)
    with pytest.raises(ValueError, match="exceeds stability bound"):
        SplitStepPropagator(g, None, 1.01 * bound)


def test_non_finite_values_abort():
    g = line(n=64)
    f = init_gaussian(g, [0.0], [0.0], 2.0)
    prop = SplitStepPropagator(g, None, 0.001)
    bad = f.values.copy()
    bad[0] = np.inf
    with np.errstate(invalid="ignore"), pytest.raises(NumericalError, match="non-finite wave function at step 1"):
        prop.run(bad, 3)


@given(seed=st.integers(0, 10**6), V1=st.floats(0.0, 20.0), steps=st.integers(1, 50))
def test_split_step_is_unitary_and_reversible(seed, V1, steps):
    r = np.random.default_rng(seed)
    g = line(20.0, 256)
    f = init_gaussian(g, [r.uniform(-3, 3)], [r.uniform(-5, 5)], 1.0)
    V = Potential1D.soft_step(0.0, V1, 0.0, 0.5)
    dt = 0.5 * stability_bound(g, V1, 1.0, 1.0)
    fwd = evolve_split_step(f, V, dt, steps)
    assert norm(fwd) == pytest.approx(1.0, abs=1e-12)
    back = evolve_split_step(fwd, V, -dt, steps)
    assert np.max(np.abs(back.values - f.values)) < 1e-11


def test_energy_conserved_in_harmonic_well():
    g = line(20.0, 256)
    V = Potential1D.harmonic(1.0)
    f = init_gaussian(g, [2.0], [0.0], 0.5)
    E0 = energy_expectation(f, V)
    frames = split_step_frames(f, V, 5e-4, 8000, frame_every=2000)
    for fr in frames:
        assert energy_expectation(fr, V) == pytest.approx(E0, rel=1e-5)


def test_coherent_state_follows_classical_orbit():
    # sigma = sqrt(hbar/(2 m omega)) keeps its shape; the centre moves as x0 cos(omega t)
    omega = 2.0
    g = line(16.0, 256)
    V = Potential1D.harmonic(omega)
    f = init_gaussian(g, [1.5], [0.0], np.sqrt(0.5 / omega))
    for fr in split_step_frames(f, V, 2.5e-4, 12000, frame_every=1200):
        mean, std = position_moments(fr)
        assert mean[0] == pytest.approx(1.5 * np.cos(omega * fr.time), abs=1e-5)
        assert std[0] == pytest.approx(0.5, abs=1e-5)


def test_strang_splitting_is_second_order():
    g = line(20.0, 128)
    V = Potential1D.harmonic(1.0)
    f = init_gaussian(g, [1.0], [1.0], 0.6)
    T = 1.0
    ref = evolve_split_step(f, V, T / 25600, 25600)
    errs = [np.sqrt(np.sum(np.abs(evolve_split_step(f, V, T / n, n).values - ref.values) ** 2) * g.spacing[0])
            for n in (1600, 3200, 6400)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2.0) < 0.1)


def test_billiard_energies_and_degeneracy():
    E = billiard_energies(4)
    assert E[0, 0] == pytest.approx(np.pi**2)
    assert E[0, 1] == E[1, 0] == pytest.approx(2.5 * np.pi**2)


def test_billiard_mode_only_picks_up_a_phase():
    g = box_grid(1.0, 64)
    psi = billiard_mode(g, 3, 2)
    c = billiard_project(psi, 16)
    assert c.residual < 1e-20
    assert abs(c.coeffs[2, 1]) == pytest.approx(1.0, abs=1e-12)
    t = 0.37
    out = billiard_evolve(c, t, g)
    E = 6.5 * np.pi**2
    assert np.max(np.abs(out.values - np.exp(-1j * E * t) * psi.values)) < 1e-12


def test_projection_residual_bound_suggests_n_max():
    g = box_grid(1.0, 128)
    f = init_gaussian(g, [0.5, 0.5], [30.0, 0.0], 0.06)
    with pytest.raises(ValueError, match="projection residual .* try n_max >= "):
        billiard_project(f, 10)
    with pytest.raises(ValueError, match="n_max must be >= 8"):
        billiard_project(f, 4)


@given(seed=st.integers(0, 10**6), t=st.floats(-5.0, 5.0))
def test_billiard_evolution_is_unitary(seed, t):
    r = np.random.default_rng(seed)
    c = SpectralCoeffs(1.0, r.normal(size=(10, 10)) + 1j * r.normal(size=(10, 10))).normalized()
    assert c.norm2() == pytest.approx(1.0, abs=1e-14)
    assert np.sum(np.abs(c.at(t)) ** 2) == pytest.approx(1.0, abs=1e-13)
    f = billiard_evolve(c, t)
    assert norm(f) == pytest.approx(1.0, abs=1e-12)


def test_billiard_eval_matches_grid_synthesis_and_derivatives():
    r = np.random.default_rng(3)
    c = SpectralCoeffs(1.0, (r.normal(size=(12, 12)) + 1j * r.normal(size=(12, 12))) * 0.05)
    t = 0.01
    grid_field = billiard_evolve(c, t, box_grid(1.0, 32))
    X, Y = grid_field.grid.mesh()
    pts = np.column_stack([X.ravel(), Y.ravel()])
    psi, grad, lap = billiard_eval(c, t, pts, laplacian=True)
    assert np.max(np.abs(psi - grid_field.values.ravel())) < 1e-12
    # central finite differences as an independent check on the gradient
    h = 1e-6
    p = np.array([[0.31, 0.72], [0.5, 0.05]])
    for ax in (0, 1):
        e = np.zeros(2)
        e[ax] = h
        fd = (billiard_eval(c, t, p + e)[0] - billiard_eval(c, t, p - e)[0]) / (2 * h)
        assert np.allclose(billiard_eval(c, t, p)[1][:, ax], fd, atol=1e-6)
    fd_lap = sum(billiard_eval(c, t, p + s * np.eye(2)[ax] * 1e-4)[0] for ax in (0, 1) for s in (1, -1))
    fd_lap = (fd_lap - 4 * billiard_eval(c, t, p)[0]) / 1e-8
    assert np.allclose(billiard_eval(c, t, p, laplacian=True)[2], fd_lap, rtol=1e-4, atol=1e-3)


def test_coefficient_roundtrip(tmp_path):
    r = np.random.default_rng(5)
    c = SpectralCoeffs(2.0, r.normal(size=(9, 9)) + 1j * r.normal(size=(9, 9)), hbar=0.5, mass=3.0, t0=0.25)
    dump_coeffs(c, tmp_path / "c.txt")
    back = load_coeffs(tmp_path / "c.txt")
    assert np.array_equal(back.coeffs, c.coeffs)
    assert (back.L, back.hbar, back.mass, back.t0) == (2.0, 0.5, 3.0, 0.25)


def test_fidelity_is_phase_blind():
    g = line(20.0, 128)
    f = init_gaussian(g, [0.0], [1.0], 1.0)
    assert fidelity(f, WaveField(g, 1j * f.values)) == pytest.approx(1.0, abs=1e-14)
