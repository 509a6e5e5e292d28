"""Time evolution of wave fields.

Two propagators:

* Strang split-operator stepping for 1D potentials on a periodic grid, with an
  optional absorbing layer for scattering runs.
* Exact sine-basis eigenexpansion for the hard-wall square billiard
  ``[0, L]^2`` (no time-stepping error; only truncation).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.special import erfc

from .errors import NumericalError
from .field import (
    Grid,
    WaveField,
    _sine_coeffs,
    box_grid,
    ensure_normalized,
    norm,
    normalize,
    potential_values,
)

log = logging.getLogger(__name__)

BILLIARD_RESIDUAL_BOUND = 1e-6
TAIL_WARN = 1e-8


def init_gaussian(grid: Grid, q0, p0, sigma: float, hbar: float = 1.0, mass: float = 1.0) -> WaveField:
    """Normalized Gaussian packet exp(-|q-q0|^2/(4 sigma^2) + i p0.q/hbar).

    On a hard-wall grid the samples are the packet's sine-basis projection
    (wall values are zero); a warning is issued if more than 1e-8 of the
    probability lies outside the box.
    """
    q0 = np.atleast_1d(np.asarray(q0, float))
    p0 = np.atleast_1d(np.asarray(p0, float))
    if q0.size != grid.dim or p0.size != grid.dim:
        raise ValueError("q0 and p0 must have one entry per grid axis")
    if sigma <= 2.0 * max(grid.spacing):
        raise ValueError(f"under-resolved packet: sigma={sigma} <= 2*dq={2 * max(grid.spacing)}")
    for i, (a, b) in enumerate(grid.extents):
        if not a < q0[i] < b:
            raise ValueError("q0 must be interior to the grid")
    if grid.boundary == "dirichlet":
        # |psi|^2 has standard deviation sigma on each axis
        tail = sum(
            0.5 * erfc((q0[i] - a) / (sigma * np.sqrt(2))) + 0.5 * erfc((b - q0[i]) / (sigma * np.sqrt(2)))
            for i, (a, b) in enumerate(grid.extents)
        )
        if tail > TAIL_WARN:
            warnings.warn(f"Gaussian tail mass outside the box is {tail:.2e}", RuntimeWarning, stacklevel=2)
    mesh = grid.mesh()
    r2 = sum((q - c) ** 2 for q, c in zip(mesh, q0))
    phase = sum(p * q for p, q in zip(p0, mesh)) / hbar
    vals = np.exp(-r2 / (4.0 * sigma**2) + 1j * phase)
    return normalize(WaveField(grid, vals, hbar, mass))


def free_gaussian_width(sigma0: float, t, hbar: float = 1.0, mass: float = 1.0):
    """Position spread of a freely evolving minimum-uncertainty packet."""
    return sigma0 * np.sqrt(1.0 + (hbar * np.asarray(t) / (2.0 * mass * sigma0**2)) ** 2)


# ---------------------------------------------------------------------------
# split-operator


@dataclass(frozen=True)
class Absorber:
    """cos^2-ramp imaginary potential -i*W(q) over the outer ``fraction`` of each end."""

    strength: float = 50.0
    fraction: float = 0.1

    def profile(self, grid: Grid) -> np.ndarray:
        (a, b), = grid.extents
        q = grid.axis(0)
        width = self.fraction * (b - a)
        s = np.zeros_like(q)
        left = q < a + width
        right = q > b - width
        s[left] = (a + width - q[left]) / width
        s[right] = (q[right] - (b - width)) / width
        return self.strength * np.cos(0.5 * np.pi * (1.0 - s)) ** 2


def stability_bound(grid: Grid, vmax: float, hbar: float, mass: float) -> float:
    """Largest dt keeping the per-step phase below 0.5 rad."""
    kin = hbar**2 * grid.k_max() ** 2 / (2.0 * mass)
    return 0.5 * hbar / max(vmax, kin)


class SplitStepPropagator:
    """Strang splitting exp(-iV dt/2) exp(-iT dt) exp(-iV dt/2) on a periodic 1D grid."""

    def __init__(self, grid: Grid, potential, dt: float, hbar: float = 1.0, mass: float = 1.0,
                 absorber: Absorber | None = None):
        if grid.dim != 1 or grid.boundary != "periodic":
            raise ValueError("split-step propagation needs a periodic 1D grid")
        self.grid = grid
        self.hbar = hbar
        self.mass = mass
        self.dt = float(dt)
        V = potential_values(potential, grid)
        W = absorber.profile(grid) if absorber is not None else np.zeros(grid.shape)
        if absorber is not None and dt < 0:
            raise ValueError("backward propagation with an absorber is ill-posed")
        bound = stability_bound(grid, float(np.max(np.abs(V) + W)), hbar, mass)
        if abs(dt) > bound * (1 + 1e-12):
            raise ValueError(f"dt={dt} exceeds stability bound {bound:.3e}")
        k = grid.wavenumbers(0)
        self._kin = np.exp(-1j * hbar * k**2 * self.dt / (2.0 * mass))
        self._half = np.exp((-1j * V - W) * self.dt / (2.0 * hbar))
        self._full = self._half**2

    def run(self, values: np.ndarray, n_steps: int, first_step: int = 0) -> np.ndarray:
        psi = self._half * values
        for i in range(n_steps):
            psi = sfft.ifft(self._kin * sfft.fft(psi))
            psi *= self._full if i < n_steps - 1 else self._half
            if not np.isfinite(psi.sum()):
                raise NumericalError(f"non-finite wave function at step {first_step + i + 1}")
        return psi


def evolve_split_step(field: WaveField, potential, dt: float, n_steps: int,
                      absorber: Absorber | None = None) -> WaveField:
    prop = SplitStepPropagator(field.grid, potential, dt, field.hbar, field.mass, absorber)
    psi = prop.run(field.values, int(n_steps))
    return field.replace(values=psi, time=field.time + n_steps * dt)


def split_step_frames(field: WaveField, potential, dt: float, n_steps: int, frame_every: int = 1,
                      absorber: Absorber | None = None) -> list[WaveField]:
    """Evolve and keep a frame every ``frame_every`` steps (initial frame included)."""
    prop = SplitStepPropagator(field.grid, potential, dt, field.hbar, field.mass, absorber)
    frames = [field]
    psi = field.values
    done = 0
    while done < n_steps:
        m = min(frame_every, n_steps - done)
        psi = prop.run(psi, m, first_step=done)
        done += m
        frames.append(field.replace(values=psi, time=field.time + done * dt))
    return frames


def fidelity(a: WaveField, b: WaveField) -> float:
    return float(abs(np.sum(np.conj(a.values) * b.values) * a.grid.cell_volume))


# ---------------------------------------------------------------------------
# scattering measurements


def reflected_probability(field: WaveField, q_split: float) -> float:
    q = field.grid.axis(0)
    return float(np.sum(field.density[q < q_split]) * field.grid.cell_volume)


def resolved_reflection(initial: WaveField, final: WaveField, q_split: float, k: float) -> float:
    """Energy-resolved reflection coefficient |B(k)|^2.

    Each momentum component scatters independently, so the reflected packet's
    momentum density at -k divided by the incident density at +k is the
    stationary reflection probability at energy (hbar k)^2/2m.
    """
    q = initial.grid.axis(0)
    refl = np.where(q < q_split, final.values, 0.0)
    out = np.sum(refl * np.exp(1j * k * q))
    inc = np.sum(initial.values * np.exp(-1j * k * q))
    return float(abs(out) ** 2 / abs(inc) ** 2)


# ---------------------------------------------------------------------------
# square billiard


def billiard_energies(n_max: int, L: float = 1.0, hbar: float = 1.0, mass: float = 1.0) -> np.ndarray:
    n = np.arange(1, n_max + 1)
    return hbar**2 * np.pi**2 * (n[:, None] ** 2 + n[None, :] ** 2) / (2.0 * mass * L**2)


@dataclass(frozen=True)
class SpectralCoeffs:
    """Sine-basis coefficients c[n-1, m-1] of a billiard state at time t0.

    Basis functions are (2/L) sin(n pi x/L) sin(m pi y/L), orthonormal on [0, L]^2.
    """

    L: float
    coeffs: np.ndarray
    hbar: float = 1.0
    mass: float = 1.0
    t0: float = 0.0
    residual: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("coefficients must be a square n_max x n_max array")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def n_max(self) -> int:
        return self.coeffs.shape[0]

    @property
    def energies(self) -> np.ndarray:
        return billiard_energies(self.n_max, self.L, self.hbar, self.mass)

    def at(self, t: float) -> np.ndarray:
        if not np.isfinite(t):
            raise ValueError("non-finite time")
        return self.coeffs * np.exp(-1j * self.energies * (t - self.t0) / self.hbar)

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def normalized(self) -> "SpectralCoeffs":
        return SpectralCoeffs(self.L, self.coeffs / np.sqrt(self.norm2()), self.hbar, self.mass,
                              self.t0, self.residual)

    def populated(self, threshold: float = 1e-12) -> np.ndarray:
        return np.abs(self.coeffs) ** 2 > threshold * np.max(np.abs(self.coeffs) ** 2)

    def max_frequency(self, threshold: float = 1e-10) -> float:
        """Largest Bohr frequency |E_a - E_b|/hbar among populated modes."""
        E = self.energies[self.populated(threshold)]
        return float((E.max() - E.min()) / self.hbar) if E.size > 1 else 0.0

    def energy(self) -> float:
        w = np.abs(self.coeffs) ** 2
        return float(np.sum(w * self.energies) / np.sum(w))


def check_billiard_grid(grid: Grid) -> float:
    if grid.dim != 2 or grid.boundary != "dirichlet":
        raise ValueError("billiard fields need a 2D hard-wall grid")
    (a0, b0), (a1, b1) = grid.extents
    if a0 != 0.0 or a1 != 0.0 or b0 != b1 or grid.n_points[0] != grid.n_points[1]:
        raise ValueError("billiard grid must be [0, L] x [0, L] with equal resolution")
    return b0


def billiard_mode(grid: Grid, n: int, m: int, hbar: float = 1.0, mass: float = 1.0) -> WaveField:
    L = check_billiard_grid(grid)
    X, Y = grid.mesh()
    vals = (2.0 / L) * np.sin(n * np.pi * X / L) * np.sin(m * np.pi * Y / L)
    return WaveField(grid, vals, hbar, mass)


def billiard_project(field: WaveField, n_max: int, bound: float = BILLIARD_RESIDUAL_BOUND) -> SpectralCoeffs:
    """Project a hard-wall 2D field onto the first n_max x n_max sine modes.

    Discrete orthogonality of the sine basis on the grid makes the projection
    exact for grid samples; the residual is the norm^2 lost to truncation.
    """
    L = check_billiard_grid(field.grid)
    if n_max < 8:
        raise ValueError("n_max must be >= 8")
    if n_max > field.grid.n_points[0] - 1:
        raise ValueError(f"n_max={n_max} exceeds grid resolution ({field.grid.n_points[0] - 1} modes)")
    b = _sine_coeffs(_sine_coeffs(field.values, 0), 1)
    c_full = b * (L / 2.0)
    total = float(np.sum(np.abs(c_full) ** 2))
    kept = float(np.sum(np.abs(c_full[:n_max, :n_max]) ** 2))
    residual = max(total - kept, 0.0)
    if residual > bound:
        w = np.abs(c_full) ** 2
        need = None
        for n in range(n_max + 1, c_full.shape[0] + 1):
            if total - np.sum(w[:n, :n]) <= bound:
                need = n
                break
        hint = f"n_max >= {need}" if need else "a finer grid"
        raise ValueError(f"projection residual {residual:.2e} exceeds bound {bound:.1e}; try {hint}")
    return SpectralCoeffs(L, c_full[:n_max, :n_max], field.hbar, field.mass, field.time, residual)


def _sine_table(x: np.ndarray, n_max: int, L: float, with_cos: bool = False):
    arg = np.outer(np.asarray(x, float), np.arange(1, n_max + 1) * (np.pi / L))
    if with_cos:
        return np.sin(arg), np.cos(arg)
    return np.sin(arg)


def _rmatmul(S: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Real (P, n) times complex (n, n) as one real product on a contiguous block."""
    n = C.shape[1]
    R = S @ _stack(C)
    return R[:, :n] + 1j * R[:, n:]


def _stack(C: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.hstack([C.real, C.imag]))


def _rowdot(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", A, B)


def billiard_evolve(coeffs: SpectralCoeffs, t: float, grid: Grid | None = None) -> WaveField:
    """psi(q, t) = sum c_nm exp(-i E_nm (t - t0)/hbar) phi_nm(q) synthesized on a grid."""
    if grid is None:
        n = 16
        while n < 2 * coeffs.n_max + 2:
            n *= 2
        grid = box_grid(coeffs.L, n)
    else:
        check_billiard_grid(grid)
    C = coeffs.at(t)
    S = _sine_table(grid.axis(0), coeffs.n_max, coeffs.L)
    vals = (2.0 / coeffs.L) * (_rmatmul(S, C) @ S.T)
    return WaveField(grid, vals, coeffs.hbar, coeffs.mass, t)


def billiard_eval(coeffs: SpectralCoeffs, t: float, points, laplacian: bool = False):
    """Exact psi, grad psi (and optionally laplacian) at arbitrary points.

    Returns ``(psi, grad)`` with grad of shape (P, 2), plus the Laplacian when
    requested.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    L = coeffs.L
    nm = coeffs.n_max
    C = coeffs.at(t)
    kn = np.arange(1, nm + 1) * (np.pi / L)
    sx, cx = _sine_table(pts[:, 0], nm, L, with_cos=True)
    sy, cy = _sine_table(pts[:, 1], nm, L, with_cos=True)
    B = _stack(C)
    A = sx @ B                # (P, 2n): real block | imaginary block
    Ax = (cx * kn) @ B
    cyk = cy * kn
    pref = 2.0 / L

    def contract(M, T):
        return pref * (_rowdot(M[:, :nm], T) + 1j * _rowdot(M[:, nm:], T))

    psi = contract(A, sy)
    grad = np.stack([contract(Ax, sy), contract(A, cyk)], axis=1)
    if not laplacian:
        return psi, grad
    k2 = kn[:, None] ** 2 + kn[None, :] ** 2
    lap = -contract(sx @ _stack(C * k2), sy)
    return psi, grad, lap


def dump_coeffs(coeffs: SpectralCoeffs, path) -> None:
    n = np.arange(1, coeffs.n_max + 1)
    N, M = np.meshgrid(n, n, indexing="ij")
    c = coeffs.coeffs
    header = (f"L {coeffs.L!r}\nhbar {coeffs.hbar!r}\nmass {coeffs.mass!r}\n"
              f"n_max {coeffs.n_max}\nt0 {coeffs.t0!r}\nn m re im")
    np.savetxt(path, np.column_stack([N.ravel(), M.ravel(), c.real.ravel(), c.imag.ravel()]),
               header=header, fmt=["%d", "%d", "%.17g", "%.17g"])


def load_coeffs(path) -> SpectralCoeffs:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            parts = line[1:].split()
            if len(parts) == 2:
                meta[parts[0]] = parts[1]
    data = np.loadtxt(path, ndmin=2)
    n_max = int(meta["n_max"])
    c = np.zeros((n_max, n_max), complex)
    c[data[:, 0].astype(int) - 1, data[:, 1].astype(int) - 1] = data[:, 2] + 1j * data[:, 3]
    return SpectralCoeffs(float(meta["L"]), c, float(meta["hbar"]), float(meta["mass"]), float(meta["t0"]))


__all__ = [
    "init_gaussian", "evolve_split_step", "split_step_frames", "SplitStepPropagator", "Absorber",
    "SpectralCoeffs", "billiard_mode", "billiard_project", "billiard_evolve", "billiard_eval",
    "fidelity", "norm", "ensure_normalized",
]
