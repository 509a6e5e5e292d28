import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bohmtraj.dos import (billiard_spectrum, cutoff_epsilon, length_spectrum, level_count, microcanonical_weights,
                          orbit_lengths, oscillatory_residual, smoothed_classical_term, smoothed_dos, weyl_slope_fit,
                          weyl_term)

UNIT = np.pi**2 / 2


@pytest.fixture(scope="module")
def spec64():
    return billiard_spectrum(n_max=64)


def brute_count(s_max, n_max):
    return sum(1 for n in range(1, n_max + 1) for m in range(1, n_max + 1) if n * n + m * m <= s_max)


def test_levels_and_degeneracies():
    sp = billiard_spectrum(n_max=10)
    assert sp.levels[0] == pytest.approx(2 * UNIT)
    s = np.rint(sp.levels / UNIT).astype(int)
    assert np.count_nonzero(s == 25) == 2   # (3,4), (4,3)
    assert np.count_nonzero(s == 50) == 3   # (1,7), (7,1), (5,5)
    assert np.count_nonzero(s == 65) == 4   # (1,8), (8,1), (4,7), (7,4)
    assert np.all(np.diff(sp.levels) >= 0)


@settings(max_examples=30)
@given(s=st.integers(2, 4000))
def test_level_count_matches_brute_force(s):
    sp = billiard_spectrum(n_max=64)
    assert level_count(sp, (s + 0.5) * UNIT) == brute_count(s, 64)


def test_integrated_density_counts_levels(spec64):
    # Gaussian kernel: window edges sit half a unit from any level, five widths away
    a, b = 100.5 * UNIT, 400.5 * UNIT
    E = np.linspace(a, b, 200001)
    d = smoothed_dos(spec64, 0.5, E, kernel="gaussian").values
    integral = np.sum(0.5 * (d[1:] + d[:-1]) * np.diff(E))
    assert integral == pytest.approx(brute_count(400, 64) - brute_count(100, 64), abs=1e-4)


def test_microcanonical_weights_sum_to_smoothed_density(spec64):
    E, eps = 300.0, 1.5
    w = microcanonical_weights(spec64, E, eps)
    assert w.total == pytest.approx(smoothed_dos(spec64, eps, [E]).values[0], rel=1e-12)
    n, m = spec64.n[: w.weights.size], spec64.m[: w.weights.size]
    i = int(np.flatnonzero((n == 3) & (m == 4))[0])
    j = int(np.flatnonzero((n == 4) & (m == 3))[0])
    assert w.ratio(i, j) == 1.0


def test_microcanonical_density_is_normalized(spec64):
    w = microcanonical_weights(spec64, 150.0, 2.0)
    rho = w.position_density(n_points=128)
    assert np.sum(rho) * (1 / 128) ** 2 == pytest.approx(1.0, rel=1e-10)


def test_weyl_slope_with_perimeter_term(spec64):
    fit = weyl_slope_fit(billiard_spectrum(n_max=200), (100.0, 1000.0))
    assert fit.expected == pytest.approx(1 / (2 * np.pi))
    assert abs(fit.relative_error) < 0.01
    raw = weyl_slope_fit(billiard_spectrum(n_max=200), (100.0, 1000.0), perimeter_correction=False)
    assert abs(raw.relative_error) > abs(fit.relative_error)


def test_residual_decreases_with_smoothing(spec64):
    r = [oscillatory_residual(spec64, eps, n_points=101) for eps in (1.0, 3.0, 10.0, 30.0)]
    assert np.all(np.diff(r) < 0)


def test_smoothed_classical_term_approaches_area_term(spec64):
    E = np.array([2000.0])
    area = smoothed_classical_term(spec64, 5.0, E, boundary=False)[0]
    assert area == pytest.approx(weyl_term(spec64, 2000.0), rel=1e-3)
    full = smoothed_classical_term(spec64, 5.0, E)[0]
    k = np.sqrt(2 * 2000.0)
    assert area - full == pytest.approx(4 / (4 * np.pi * k), rel=1e-2)


def test_cutoff_is_the_bounce_time_scale():
    assert cutoff_epsilon(200.0) == pytest.approx(np.sqrt(400.0) / 2)


def test_orbit_lengths_for_unit_box():
    assert np.allclose(orbit_lengths(1.0, 6.0), 2 * np.sqrt([1, 2, 4, 5, 8, 9]))


def test_length_spectrum_peaks_at_shortest_orbits():
    sp = billiard_spectrum(n_max=70)
    ls = length_spectrum(sp, 5.0, (2000.0, 20000.0), max_length=6.0, n_k=4096)
    for ell in (2.0, 2 * np.sqrt(2)):
        assert np.min(np.abs(ls.peaks - ell)) < ls.bin_width
    assert ls.height_near(2.0) > 3 * np.median(ls.magnitude)


def test_guards(spec64):
    with pytest.raises(ValueError, match="too close to the completeness bound"):
        smoothed_dos(spec64, 1.0, [spec64.completeness_bound])
    with pytest.raises(ValueError, match="insufficient resolution"):
        length_spectrum(spec64, 1.0, (200.0, 210.0))
    with pytest.raises(ValueError, match="empty window"):
        microcanonical_weights(spec64, 2.5 * UNIT + 0.7, 1e-300)
    with pytest.raises(ValueError):
        billiard_spectrum(n_max=4)
