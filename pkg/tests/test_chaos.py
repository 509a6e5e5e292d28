import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bohmtraj.bohm import BilliardFlow
from bohmtraj.chaos import (BohmianPairSource, ClassicalBilliardSource, FreeParticleSource, crossing_time,
                            finite_time_lyapunov)
from bohmtraj.field import box_grid
from bohmtraj.propagator import billiard_mode, billiard_project


class SaddleSource:
    """Linear hyperbolic flow dq1/dt = a q1, dq2/dt = -a q2 with exponent a."""

    kind = "saddle"
    length_scale = 1.0

    def __init__(self, a):
        self.a = a

    def advance(self, s, t, h):
        return s * np.array([np.exp(self.a * h), np.exp(-self.a * h)])

    def offset(self, s, v):
        return s + v

    def difference(self, x, y):
        return y - x


@settings(max_examples=20)
@given(a=st.floats(0.1, 3.0), seed=st.integers(0, 1000))
def test_saddle_exponent_recovered(a, seed):
    x0 = np.zeros((3, 2))
    res = finite_time_lyapunov(SaddleSource(a), x0, 1e-7, (0.0, 40.0), 0.5, seed=seed)
    # the estimate converges as (log of the initial unstable component) / t
    assert res.final == pytest.approx(a, abs=1.0 / 40.0 * 12)
    assert abs(res.final - a) < abs(res.mean[9] - a) + 1e-12


def test_tau_halving_leaves_saddle_estimate_unchanged():
    x0 = np.zeros((2, 2))
    src = SaddleSource(0.8)
    a = finite_time_lyapunov(src, x0, 1e-7, (0.0, 20.0), 0.5, direction=[1.0, 0.0])
    b = finite_time_lyapunov(src, x0, 1e-7, (0.0, 20.0), 0.25, direction=[1.0, 0.0])
    assert a.final == pytest.approx(0.8, rel=1e-10)
    assert b.final == pytest.approx(a.final, rel=1e-10)


def test_free_particle_exponent_decays_to_zero():
    src = FreeParticleSource(dim=1)
    x0 = np.array([[0.0, 1.0], [0.5, -2.0]])
    res = finite_time_lyapunov(src, x0, 1e-7, (0.0, 500.0), 1.0, seed=3)
    assert 0 <= res.final < 0.02
    assert np.all(np.diff(res.mean[50:]) < 0)


def test_classical_billiard_shared_momentum_has_zero_exponent():
    src = ClassicalBilliardSource(L=1.0)
    states = src.states([[0.3, 0.4], [0.7, 0.2]], [20.0, 13.0])
    res = finite_time_lyapunov(src, states, 1e-7, (0.0, 0.5), 0.02, seed=1)
    assert abs(res.final) < 1e-6


def test_frozen_eigenstate_has_no_positive_exponent():
    c = billiard_project(billiard_mode(box_grid(1.0, 64), 2, 3), 8)
    src = BohmianPairSource(BilliardFlow(c), dt_traj=1e-3)
    res = finite_time_lyapunov(src, [[0.3, 0.2], [0.6, 0.55]], 1e-7, (0.0, 0.1), 0.02, seed=2)
    assert res.final <= 1e-9


def test_seeded_directions_are_reproducible():
    x0 = np.zeros((4, 2))
    a = finite_time_lyapunov(SaddleSource(1.0), x0, 1e-7, (0.0, 2.0), 0.5, seed=9)
    b = finite_time_lyapunov(SaddleSource(1.0), x0, 1e-7, (0.0, 2.0), 0.5, seed=9)
    assert np.array_equal(a.lam, b.lam)


def test_invalid_parameters_rejected():
    src = SaddleSource(1.0)
    with pytest.raises(ValueError, match="outside"):
        finite_time_lyapunov(src, np.zeros((1, 2)), 1e-3, (0.0, 1.0), 0.1)
    with pytest.raises(ValueError, match="tau too long"):
        finite_time_lyapunov(src, np.zeros((1, 2)), 1e-7, (0.0, 40.0), 20.0, direction=[1.0, 0.0])
    with pytest.raises(ValueError):
        finite_time_lyapunov(src, np.zeros((1, 2)), 1e-7, (0.0, 1.0), 0.0)


def test_series_export_and_statistics(tmp_path):
    res = finite_time_lyapunov(SaddleSource(0.5), np.zeros((5, 2)), 1e-7, (0.0, 4.0), 0.5, seed=0)
    res.export(tmp_path / "l.txt")
    assert np.loadtxt(tmp_path / "l.txt").shape == (8, 3)
    mean, spread = res.plateau()
    assert np.isfinite(mean) and spread >= 0 and res.spread() >= 0
    assert crossing_time(4.0, 2.0) == 0.5
