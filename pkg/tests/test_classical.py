import numpy as np
import pytest
from hypothesis import given, strategies as st

from bohmtraj.classical import (ObservableFunction as OF, PhasePoint, billiard_trajectory,
                                bohmian_momentum_variation, constancy_check, integrate_1d, poisson_bracket)
from bohmtraj.field import Potential1D

coords = st.floats(-3.0, 3.0)


def test_canonical_brackets():
    x = PhasePoint([0.3, -0.2], [1.1, 0.7])
    p1, q1, q2 = OF.momentum(0), OF.position(0), OF.position(1)
    assert poisson_bracket(p1, q1, x) == pytest.approx(1.0, abs=1e-9)
    assert poisson_bracket(p1, q2, x) == pytest.approx(0.0, abs=1e-9)
    assert poisson_bracket(q1, q2, x) == pytest.approx(0.0, abs=1e-9)


@given(q=coords, p=coords)
def test_bracket_antisymmetry(q, p):
    x = PhasePoint([q], [p])
    V = Potential1D.harmonic(1.3)
    H = OF.hamiltonian(potential=V)
    F = OF("F", lambda q, p: np.sin(q[0]) * p[0] ** 2)
    assert poisson_bracket(F, H, x) == pytest.approx(-poisson_bracket(H, F, x), abs=1e-7)
    assert poisson_bracket(F, F, x) == 0.0


@given(q=coords, p=coords)
def test_bracket_with_hamiltonian_is_time_derivative(q, p):
    # {H, q} = dq/dt = p/m and {H, p} = dp/dt = -V'(q) in the p-first convention
    V = Potential1D.harmonic(2.0)
    x = PhasePoint([q], [p])
    H = OF.hamiltonian(potential=V)
    assert poisson_bracket(H, OF.position(0), x, richardson=True) == pytest.approx(p, abs=1e-7)
    assert poisson_bracket(H, OF.momentum(0), x, richardson=True) == pytest.approx(-4.0 * q, abs=1e-6)


def test_kinked_and_wall_stencils_rejected():
    with pytest.raises(ValueError, match="straddles p1 = 0"):
        poisson_bracket(OF.abs_momentum(0), OF.position(0), PhasePoint([0.5, 0.5], [0.0, 1.0]))
    with pytest.raises(ValueError, match="discontinuity"):
        poisson_bracket(OF.momentum(0, box=1.0), OF.position(0), PhasePoint([1e-7, 0.5], [1.0, 1.0]))


def test_leapfrog_harmonic_period_and_energy():
    V = Potential1D.harmonic(1.0)
    tr = integrate_1d(V, PhasePoint([1.0], [0.0]), (0.0, 2 * np.pi), 1e-3)
    assert tr.q[-1, 0] == pytest.approx(1.0, abs=1e-6)
    assert constancy_check(OF.hamiltonian(potential=V), tr) < 1e-6


def test_leapfrog_is_second_order():
    V = Potential1D.harmonic(1.0)
    x0 = PhasePoint([1.0], [0.5])
    exact = np.cos(1.0) + 0.5 * np.sin(1.0)
    errs = [abs(integrate_1d(V, x0, (0.0, 1.0), dt).q[-1, 0] - exact) for dt in (0.02, 0.01, 0.005)]
    assert np.allclose(np.log2(np.array(errs[:-1]) / errs[1:]), 2.0, atol=0.05)


@given(q=st.floats(-2, 2), p=st.floats(-2, 2), n=st.integers(10, 400))
def test_leapfrog_time_reversible(q, p, n):
    V = Potential1D.linear(0.8)
    fwd = integrate_1d(V, PhasePoint([q], [p]), (0.0, n * 0.01), 0.01)
    back = integrate_1d(V, fwd.point(-1), (n * 0.01, 0.0), 0.01)
    assert back.q[-1, 0] == pytest.approx(q, abs=1e-11)
    assert back.p[-1, 0] == pytest.approx(p, abs=1e-11)


def test_linear_potential_is_exact():
    # constant force: leapfrog reproduces the parabola to round-off
    V = Potential1D.linear(2.0)
    tr = integrate_1d(V, PhasePoint([0.0], [3.0]), (0.0, 1.5), 0.05)
    t = tr.times
    assert np.allclose(tr.q[:, 0], 3 * t - t**2, atol=1e-12)


def test_billiard_bounce_times_and_conserved_speeds():
    tr = billiard_trajectory(PhasePoint([0.25, 0.5], [1.0, 0.3]), (0.0, 5.0))
    xs = [e[1] for e in tr.events if 0 in e[2]]
    assert np.allclose(xs[:3], [0.75, 1.75, 2.75])
    assert np.allclose(np.abs(tr.p), [1.0, 0.3])
    assert np.all((tr.q >= 0) & (tr.q <= 1))
    # unfolded image moves on a straight line
    assert np.allclose(tr.unfolded[-1], [0.25 + 5.0, 0.5 + 1.5])
    for F in (OF.abs_momentum(0), OF.abs_momentum(1), OF.hamiltonian()):
        assert constancy_check(F, tr) == 0.0


def test_billiard_corner_and_sampling():
    tr = billiard_trajectory(PhasePoint([0.5, 0.5], [1.0, 1.0]), (0.0, 1.0))
    assert tr.events[0][0] == "corner"
    assert np.allclose(tr.p[1], [-1.0, -1.0])
    s = billiard_trajectory(PhasePoint([0.5, 0.5], [1.0, 0.0]), (0.0, 2.0), sample_times=[0.25, 0.5, 1.0, 2.0])
    assert np.allclose(s.q[:, 0], [0.75, 1.0, 0.5, 0.5])
    with pytest.raises(ValueError, match="initial position must be interior"):
        billiard_trajectory(PhasePoint([0.0, 0.5], [1.0, 0.0]), (0.0, 1.0))


def test_momentum_variation_measure():
    v = np.zeros((3, 2, 2))
    v[:, 0] = [1.0, 0.0]
    v[:, 1] = [[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]
    out = bohmian_momentum_variation(v)
    assert out[0] == 0.0
    assert out[1] == pytest.approx(1.0)
