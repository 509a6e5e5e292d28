"""Square-billiard spectrum and smoothed level densities.

Smoothed density (Lorentzian kernel by default):

    delta_eps(E) = sum_k (1/pi) eps / (eps^2 + (E - E_k)^2)

Only levels below the completeness bound E_comp = hbar^2 pi^2 (n_max^2 + 1)/(2 m L^2)
enter the sums: below it no (n, m) pair is missing.  The smooth classical part
of the Dirichlet square's density is

    rho_bar(E) = m A/(2 pi hbar^2) - P sqrt(2m) / (8 pi hbar sqrt(E))

(area term plus the Dirichlet perimeter correction, A = L^2, P = 4L).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal
from scipy.special import erf

from .field import Grid, box_grid

CHUNK = 1 << 22  # max elements of one (E grid x levels) block
TAIL_MARGIN = 10.0


@dataclass(frozen=True)
class Spectrum:
    levels: np.ndarray  # ascending, degeneracies retained
    n: np.ndarray
    m: np.ndarray
    L: float
    hbar: float
    mass: float
    n_max: int

    @property
    def unit(self) -> float:
        return self.hbar**2 * np.pi**2 / (2 * self.mass * self.L**2)

    @property
    def completeness_bound(self) -> float:
        return self.unit * (self.n_max**2 + 1)

    @property
    def retained(self) -> np.ndarray:
        """Levels at or below the completeness bound."""
        return self.levels[: np.searchsorted(self.levels, self.completeness_bound, side="right")]

    @property
    def mean_density(self) -> float:
        return weyl_term(self, 1.0)

    def dump(self, path) -> None:
        np.savetxt(path, np.column_stack([self.n, self.m, self.levels]), header="n m E",
                   fmt=["%d", "%d", "%.17g"])


def billiard_spectrum(L: float = 1.0, hbar: float = 1.0, mass: float = 1.0, n_max: int = 64) -> Spectrum:
    if n_max < 8:
        raise ValueError("n_max must be >= 8")
    k = np.arange(1, n_max + 1)
    N, M = np.meshgrid(k, k, indexing="ij")
    s = (N**2 + M**2).ravel()
    order = np.argsort(s, kind="stable")
    unit = hbar**2 * np.pi**2 / (2 * mass * L**2)
    levels = unit * s[order].astype(float)
    return Spectrum(levels, N.ravel()[order], M.ravel()[order], float(L), float(hbar), float(mass), int(n_max))


# ---------------------------------------------------------------------------
# smoothing


def _kernel(kind: str):
    if kind == "lorentzian":
        return lambda x, eps: (eps / np.pi) / (eps**2 + x**2)
    if kind == "gaussian":
        return lambda x, eps: np.exp(-0.5 * (x / eps) ** 2) / (eps * np.sqrt(2 * np.pi))
    raise ValueError(f"unknown kernel {kind!r}")


@dataclass
class SmoothedDOS:
    E: np.ndarray
    values: np.ndarray
    epsilon: float
    kernel: str
    tail: np.ndarray  # estimated contribution of the omitted levels above the bound

    def export(self, path) -> None:
        np.savetxt(path, np.column_stack([self.E, self.values]), header=f"E dos  eps={self.epsilon!r}",
                   fmt="%.17g")


def smoothed_dos(spectrum: Spectrum, epsilon: float, E_grid, kernel: str = "lorentzian",
                 workers: int = 1) -> SmoothedDOS:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    E = np.atleast_1d(np.asarray(E_grid, float))
    bound = spectrum.completeness_bound
    if E.max() > bound - TAIL_MARGIN * epsilon:
        raise ValueError(f"E grid reaches {E.max():.6g}, too close to the completeness bound {bound:.6g} "
                         f"(need <= bound - {TAIL_MARGIN:g} eps); increase n_max")
    lev = spectrum.retained
    f = _kernel(kernel)
    step = max(1, CHUNK // max(lev.size, 1))
    chunks = [slice(i, i + step) for i in range(0, E.size, step)]

    def block(sl):
        return f(E[sl, None] - lev[None, :], epsilon).sum(axis=1)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(block, chunks))
    else:
        parts = [block(sl) for sl in chunks]
    vals = np.concatenate(parts)
    rho = weyl_term(spectrum, 1.0)
    if kernel == "lorentzian":
        tail = rho / np.pi * (0.5 * np.pi - np.arctan((bound - E) / epsilon))
    else:
        tail = 0.5 * rho * (1.0 - erf((bound - E) / (np.sqrt(2) * epsilon)))
    return SmoothedDOS(E, vals, float(epsilon), kernel, tail)


def weyl_term(spectrum: Spectrum, E, boundary: bool = False):
    """Smooth level density: area term m A/(2 pi hbar^2), plus the perimeter term if asked."""
    E = np.asarray(E, float)
    if np.any(E <= 0):
        raise ValueError("E must be positive")
    rho = spectrum.mass * spectrum.L**2 / (2 * np.pi * spectrum.hbar**2)
    out = np.full(E.shape, rho)
    if boundary:
        out = out - boundary_term(spectrum, E)
    return float(out) if out.ndim == 0 else out


def boundary_term(spectrum: Spectrum, E):
    """Magnitude of the Dirichlet perimeter correction to the density, P sqrt(2m)/(8 pi hbar sqrt(E))."""
    P = 4 * spectrum.L
    return P * np.sqrt(2 * spectrum.mass) / (8 * np.pi * spectrum.hbar * np.sqrt(np.asarray(E, float)))


def smoothed_classical_term(spectrum: Spectrum, epsilon: float, E_grid, kernel: str = "lorentzian",
                            boundary: bool = True) -> np.ndarray:
    """The smooth density over [0, E_comp] convolved with the same kernel as ``smoothed_dos``."""
    E = np.atleast_1d(np.asarray(E_grid, float))
    Ec = spectrum.completeness_bound
    rho = weyl_term(spectrum, 1.0)
    if kernel == "lorentzian":
        area = rho / np.pi * (np.arctan((Ec - E) / epsilon) + np.arctan(E / epsilon))
    else:
        area = 0.5 * rho * (erf((Ec - E) / (np.sqrt(2) * epsilon)) + erf(E / (np.sqrt(2) * epsilon)))
    if not boundary:
        return area
    f = _kernel(kernel)
    # substitute E' = u^2 to remove the 1/sqrt(E') end-point singularity
    c = 2.0 * 4 * spectrum.L * np.sqrt(2 * spectrum.mass) / (8 * np.pi * spectrum.hbar)
    uc = np.sqrt(Ec)
    edge = np.empty(E.size)
    for i, e in enumerate(E):
        pts = [np.sqrt(e)] if 0 < e < Ec else None
        edge[i] = integrate.quad(lambda u: f(e - u * u, epsilon), 0.0, uc, points=pts, limit=400,
                                 epsabs=0.0, epsrel=1e-11)[0]
    return area - c * edge


def oscillatory_residual(spectrum: Spectrum, epsilon: float, E_window=(200.0, 400.0), n_points: int = 201,
                         reference: str = "smoothed", kernel: str = "lorentzian") -> float:
    """mean_E |delta_eps - reference| / (m A / 2 pi hbar^2) over the window.

    ``reference`` is "smoothed" (area plus perimeter, smoothed like the sum) or
    "weyl" (the constant area term alone).
    """
    E = np.linspace(E_window[0], E_window[1], n_points)
    d = smoothed_dos(spectrum, epsilon, E, kernel).values
    rho = weyl_term(spectrum, 1.0)
    if reference == "smoothed":
        ref = smoothed_classical_term(spectrum, epsilon, E, kernel)
    elif reference == "weyl":
        ref = rho
    else:
        raise ValueError(f"unknown reference {reference!r}")
    return float(np.mean(np.abs(d - ref)) / rho)


def cutoff_epsilon(E: float, L: float = 1.0, hbar: float = 1.0, mass: float = 1.0) -> float:
    """hbar v / (2L): the smoothing width whose time scale hbar/eps equals the bounce period 2L/v."""
    return hbar * np.sqrt(2 * E / mass) / (2 * L)


# ---------------------------------------------------------------------------
# counting


def level_count(spectrum: Spectrum, E) -> np.ndarray:
    return np.searchsorted(spectrum.levels, np.asarray(E, float), side="right")


@dataclass(frozen=True)
class WeylFit:
    slope: float
    intercept: float
    expected: float
    perimeter_corrected: bool

    @property
    def relative_error(self) -> float:
        return self.slope / self.expected - 1.0


def weyl_slope_fit(spectrum: Spectrum, E_range=(100.0, 1000.0), n_points: int = 4001,
                   perimeter_correction: bool = True) -> WeylFit:
    """Least-squares slope of the counting staircase N(E) on a uniform E grid.

    With ``perimeter_correction`` the known Dirichlet edge term P k/(4 pi) is
    added back to N(E) before the straight-line fit, so the slope estimates the
    area coefficient alone.
    """
    if E_range[1] > spectrum.completeness_bound:
        raise ValueError("fit range exceeds the completeness bound; increase n_max")
    E = np.linspace(E_range[0], E_range[1], n_points)
    N = level_count(spectrum, E).astype(float)
    if perimeter_correction:
        k = np.sqrt(2 * spectrum.mass * E) / spectrum.hbar
        N = N + 4 * spectrum.L * k / (4 * np.pi)
    A = np.column_stack([E, np.ones_like(E)])
    (a, c), *_ = np.linalg.lstsq(A, N, rcond=None)
    return WeylFit(float(a), float(c), weyl_term(spectrum, 1.0), perimeter_correction)


# ---------------------------------------------------------------------------
# length spectrum


@dataclass
class LengthSpectrum:
    lengths: np.ndarray
    magnitude: np.ndarray
    peaks: np.ndarray         # peak positions
    heights: np.ndarray
    bin_width: float
    epsilon: float

    def export(self, path) -> None:
        np.savetxt(path, np.column_stack([self.lengths, self.magnitude]), header=f"length magnitude  eps={self.epsilon!r}",
                   fmt="%.17g")

    def height_near(self, ell: float) -> float:
        """Largest transform magnitude within one bin of ``ell``."""
        m = np.abs(self.lengths - ell) <= self.bin_width
        return float(self.magnitude[m].max())


def orbit_lengths(L: float, max_length: float) -> np.ndarray:
    """Distinct periodic-orbit family lengths 2L sqrt(a^2 + b^2) up to max_length."""
    r = int(np.ceil(max_length / (2 * L))) + 1
    a, b = np.meshgrid(np.arange(r + 1), np.arange(r + 1))
    s = np.unique((a**2 + b**2).ravel())
    ell = 2 * L * np.sqrt(s[s > 0])
    return ell[ell <= max_length]


def length_spectrum(spectrum: Spectrum, epsilon: float, E_window, max_length: float | None = None,
                    n_k: int = 8192, oversample: int = 8, prominence: float = 0.2) -> LengthSpectrum:
    """|Fourier transform in k| of the oscillatory density, as a function of length.

    The oscillatory part delta_eps - smoothed classical term is resampled on a
    uniform grid in k = sqrt(2 m E)/hbar (as a density per unit k), Hann
    windowed and transformed; peaks are located with ``find_peaks``.
    """
    L, hbar, m = spectrum.L, spectrum.hbar, spectrum.mass
    k_a, k_b = (np.sqrt(2 * m * e) / hbar for e in E_window)
    dk = k_b - k_a
    shortest = 2 * L
    if dk < 2 * np.pi / shortest:
        raise ValueError(f"insufficient resolution: k window {dk:.4g} < 2 pi / {shortest:g}")
    k = np.linspace(k_a, k_b, n_k)
    E = (hbar * k) ** 2 / (2 * m)
    osc = smoothed_dos(spectrum, epsilon, E).values - smoothed_classical_term(spectrum, epsilon, E)
    dens_k = osc * hbar**2 * k / m
    w = np.hanning(n_k)
    bin_width = 2 * np.pi / dk
    if max_length is None:
        max_length = 6 * L
    ell = np.arange(0.0, max_length + bin_width, bin_width / oversample)
    step = max(1, CHUNK // n_k)
    mag = np.empty(ell.size)
    dx = k[1] - k[0]
    g = dens_k * w
    for i in range(0, ell.size, step):
        ph = np.exp(-1j * np.outer(ell[i:i + step], k))
        mag[i:i + step] = np.abs(ph @ g) * dx
    lo = ell > 0.5 * shortest
    idx, _ = signal.find_peaks(np.where(lo, mag, 0.0), prominence=prominence * mag[lo].max())
    return LengthSpectrum(ell, mag, ell[idx], mag[idx], bin_width, float(epsilon))


# ---------------------------------------------------------------------------
# microcanonical weights


@dataclass
class MicrocanonicalWeights:
    E: float
    epsilon: float
    weights: np.ndarray   # per retained level, same order as spectrum.retained
    spectrum: Spectrum

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    def ratio(self, i: int, j: int) -> float:
        return float(self.weights[i] / self.weights[j])

    def position_density(self, grid: Grid | None = None, n_points: int = 128) -> np.ndarray:
        """sum_k w_k |phi_k(q)|^2 / sum_k w_k sampled on a billiard grid."""
        sp = self.spectrum
        grid = grid or box_grid(sp.L, n_points)
        nr = sp.n[: self.weights.size]
        mr = sp.m[: self.weights.size]
        nm = int(max(nr.max(), mr.max()))
        W = np.zeros((nm, nm))
        np.add.at(W, (nr - 1, mr - 1), self.weights)
        x = grid.axis(0)
        y = grid.axis(1)
        Sx = np.sin(np.outer(x, np.arange(1, nm + 1) * np.pi / sp.L)) ** 2
        Sy = np.sin(np.outer(y, np.arange(1, nm + 1) * np.pi / sp.L)) ** 2
        return (2.0 / sp.L) ** 2 * (Sx @ W @ Sy.T) / self.total


def microcanonical_weights(spectrum: Spectrum, E: float, epsilon: float) -> MicrocanonicalWeights:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    lev = spectrum.retained
    if not (lev[0] - 10 * epsilon <= E <= spectrum.completeness_bound):
        raise ValueError(f"E={E} outside the covered range")
    w = (epsilon / np.pi) / (epsilon**2 + (E - lev) ** 2)
    if np.all(w < 1e-300):
        raise ValueError("empty window: all weights below 1e-300")
    return MicrocanonicalWeights(float(E), float(epsilon), w, spectrum)
