import numpy as np
import pytest
from hypothesis import given, strategies as st

from bohmtraj.field import Potential1D, WaveField, box_grid, make_grid, normalize
from bohmtraj.madelung import (continuity_residual, export_flow_text, hamilton_jacobi_residual, node_mask,
                               polar_decompose, probability_current, quantum_potential)
from bohmtraj.propagator import billiard_mode, init_gaussian, split_step_frames


def line(L=20.0, n=256):
    return make_grid(1, [(-L / 2, L / 2)], n)


def test_plane_wave_flows_uniformly_without_quantum_potential():
    g = line()
    k = 2 * np.pi * 7 / 20.0
    f = normalize(WaveField(g, np.exp(1j * k * g.axis(0))))
    flow = polar_decompose(f)
    assert np.allclose(flow.velocity[0], k, atol=1e-12)
    assert np.max(np.abs(flow.qpot)) < 1e-10
    assert not flow.node_mask.any()


def test_gaussian_quantum_potential_closed_form():
    # R = exp(-q^2/(4 s^2)) gives Q = -(1/2)(q^2/(4 s^4) - 1/(2 s^2)) for hbar = m = 1
    s = 0.8
    g = line()
    q = g.axis(0)
    flow = polar_decompose(init_gaussian(g, [0.0], [0.0], s))
    exact = -0.5 * (q**2 / (4 * s**4) - 1 / (2 * s**2))
    off = ~flow.node_mask
    assert np.max(np.abs(flow.qpot[off] - exact[off]) / (1 + np.abs(exact[off]))) < 1e-7
    assert np.all(np.isnan(flow.qpot[flow.node_mask]))
    assert np.all(flow.velocity[0][flow.node_mask] == 0)


@given(n=st.integers(-6, 6), theta=st.floats(-3.0, 3.0))
def test_gauge_shift_adds_momentum_and_leaves_q(n, theta):
    g = line()
    k = 2 * np.pi * n / 20.0
    f = init_gaussian(g, [0.5], [1.0], 1.2)
    shifted = f.replace(values=f.values * np.exp(1j * (k * g.axis(0) + theta)))
    a, b = polar_decompose(f), polar_decompose(shifted)
    assert np.array_equal(a.node_mask, b.node_mask)
    # compare where the packet carries weight; the far tails only hold spectral round-off
    off = a.rho > 1e-3 * a.rho.max()
    assert np.allclose(b.velocity[0][off], a.velocity[0][off] + k, atol=1e-8)
    assert np.allclose(b.qpot[off], a.qpot[off], atol=1e-6)


def test_billiard_mode_is_at_rest_with_nodal_line():
    g = box_grid(1.0, 64)
    f = normalize(billiard_mode(g, 2, 1))
    flow = polar_decompose(f)
    assert flow.max_speed() == 0.0
    X, _ = g.mesh()
    assert flow.node_mask[np.isclose(X, 0.5)].all()
    off = ~flow.node_mask
    # stationary real mode: Q equals the eigenvalue everywhere off the nodes
    assert np.allclose(flow.qpot[off], 2.5 * np.pi**2, rtol=1e-8)
    assert flow.total_probability() == pytest.approx(1.0, abs=1e-12)


def test_node_mask_threshold():
    rho = np.array([1.0, 1e-6, 0.99e-6, 0.0])
    assert node_mask(rho).tolist() == [False, False, True, True]


def test_null_field_rejected():
    g = line(n=32)
    with pytest.raises(ValueError):
        polar_decompose(WaveField(g, np.zeros(32, complex)))


def test_current_is_density_times_velocity():
    g = line()
    f = init_gaussian(g, [0.0], [3.0], 1.0)
    flow = polar_decompose(f)
    J = probability_current(f)
    off = ~flow.node_mask
    assert np.allclose(J[0][off], flow.rho[off] * flow.velocity[0][off], atol=1e-12)


def test_continuity_and_hamilton_jacobi_hold_along_evolution():
    g = line(30.0, 256)
    V = Potential1D.harmonic(0.7)
    dt = 1e-3
    f = init_gaussian(g, [1.0], [1.5], 0.9)
    frames = split_step_frames(f, V, dt, 400, frame_every=1)
    for i in (100, 250, 399):
        assert continuity_residual(frames[i - 1], frames[i], frames[i + 1], dt) < 1e-4
        assert hamilton_jacobi_residual(frames[i - 1], frames[i], frames[i + 1], dt, V) < 1e-4


def test_quantum_potential_wrapper_and_export(tmp_path):
    g = line(n=64)
    f = init_gaussian(g, [0.0], [0.0], 1.0)
    Q = quantum_potential(f)
    assert Q.shape == (64,)
    export_flow_text(polar_decompose(f), tmp_path / "flow.txt")
    data = np.loadtxt(tmp_path / "flow.txt")
    assert data.shape == (64, 5)
