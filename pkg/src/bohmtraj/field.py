"""Uniform-grid wave functions, spectral derivatives and basic observables.

Two boundary models are supported:

* ``"periodic"``: samples at ``q_min + j*dq`` for ``j = 0..N-1``; derivatives
  by FFT.
* ``"dirichlet"``: hard walls at ``q_min`` and ``q_max``.  Samples sit at the
  same positions, so ``values[0]`` is the wall (always zero) and the other wall
  ``q_max`` is implicit.  Derivatives are taken in the sine basis
  ``sin(n*pi*(q - q_min)/L)``, ``n = 1..N-1``, which is exact for billiard
  eigenmodes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

MIN_POINTS = 16
NORM_TOL = 1e-8

BOUNDARIES = ("periodic", "dirichlet")


@dataclass(frozen=True)
class Grid:
    extents: tuple[tuple[float, float], ...]
    n_points: tuple[int, ...]
    boundary: str = "periodic"

    @property
    def dim(self) -> int:
        return len(self.n_points)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.n_points)

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in self.extents)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / n for (a, b), n in zip(self.extents, self.n_points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, i: int = 0) -> np.ndarray:
        a, _ = self.extents[i]
        return a + np.arange(self.n_points[i]) * self.spacing[i]

    def axes(self) -> list[np.ndarray]:
        return [self.axis(i) for i in range(self.dim)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def wavenumbers(self, i: int = 0) -> np.ndarray:
        """Angular wavenumbers of the axis-``i`` transform (FFT order or sine order)."""
        n = self.n_points[i]
        if self.boundary == "periodic":
            return 2.0 * np.pi * sfft.fftfreq(n, self.spacing[i])
        return np.pi * np.arange(1, n) / self.lengths[i]

    def k_max(self) -> float:
        """Largest representable wavenumber magnitude over all axes."""
        return max(np.pi / d for d in self.spacing)

    def contains(self, q, tol: float = 0.0) -> np.ndarray:
        q = np.atleast_2d(np.asarray(q, float))
        ok = np.ones(q.shape[0], bool)
        for i, (a, b) in enumerate(self.extents):
            ok &= (q[:, i] >= a - tol) & (q[:, i] <= b + tol)
        return ok


def make_grid(dim: int, extents, n_points, boundary: str = "periodic") -> Grid:
    """Build a uniform grid.

    ``extents`` is ``(a, b)`` (1D) or a sequence of such pairs, one per axis;
    ``n_points`` is an int (shared) or one int per axis.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if boundary not in BOUNDARIES:
        raise ValueError(f"unknown boundary {boundary!r}")
    ext = np.asarray(extents, dtype=float)
    if ext.ndim == 1:
        ext = np.tile(ext, (dim, 1))
    if ext.shape != (dim, 2):
        raise ValueError(f"extents must give {dim} (min, max) pairs")
    if np.isscalar(n_points):
        n = (int(n_points),) * dim
    else:
        n = tuple(int(v) for v in n_points)
    if len(n) != dim:
        raise ValueError(f"n_points must have {dim} entries")
    for a, b in ext:
        if not (np.isfinite(a) and np.isfinite(b)):
            raise ValueError("non-finite extent")
        if b < a:
            raise ValueError(f"inverted extent [{a}, {b}]")
        if b == a:
            raise ValueError(f"non-positive extent [{a}, {b}]")
    for v in n:
        if v < MIN_POINTS:
            raise ValueError(f"n_points must be >= {MIN_POINTS}, got {v}")
    return Grid(tuple((float(a), float(b)) for a, b in ext), n, boundary)


def box_grid(L: float, n_points: int, dim: int = 2) -> Grid:
    """Hard-wall grid on ``[0, L]^dim``."""
    return make_grid(dim, (0.0, L), n_points, boundary="dirichlet")


@dataclass(frozen=True)
class WaveField:
    grid: Grid
    values: np.ndarray
    hbar: float = 1.0
    mass: float = 1.0
    time: float = 0.0

    def __post_init__(self):
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        vals = np.array(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if self.grid.boundary == "dirichlet":
            _zero_walls(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def replace(self, values=None, time=None) -> "WaveField":
        return WaveField(
            self.grid,
            self.values if values is None else values,
            self.hbar,
            self.mass,
            self.time if time is None else time,
        )

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def _zero_walls(vals: np.ndarray) -> None:
    for ax in range(vals.ndim):
        idx = [slice(None)] * vals.ndim
        idx[ax] = 0
        vals[tuple(idx)] = 0.0


def norm(field: WaveField) -> float:
    vals = field.values
    if not np.all(np.isfinite(vals)):
        raise ValueError("field contains non-finite values")
    return float(np.sqrt(np.sum(np.abs(vals) ** 2) * field.grid.cell_volume))


def normalize(field: WaveField) -> WaveField:
    nrm = norm(field)
    if nrm == 0.0:
        raise ValueError("cannot normalize a null field")
    return field.replace(values=field.values / nrm)


def ensure_normalized(field: WaveField, tol: float = NORM_TOL) -> None:
    nrm = norm(field)
    if abs(nrm - 1.0) > tol:
        raise ValueError(f"field is not normalized (norm = {nrm:.12g})")


def inner(a: WaveField, b: WaveField) -> complex:
    """<a|b> by grid quadrature."""
    return complex(np.sum(np.conj(a.values) * b.values) * a.grid.cell_volume)


# ---------------------------------------------------------------------------
# spectral calculus


def _sine_coeffs(f: np.ndarray, axis: int) -> np.ndarray:
    n = f.shape[axis]
    interior = np.take(f, np.arange(1, n), axis=axis)
    return sfft.dst(interior, type=1, axis=axis) / n


def _sine_synth(b: np.ndarray, axis: int) -> np.ndarray:
    n = b.shape[axis] + 1
    interior = sfft.dst(b, type=1, axis=axis) / 2.0
    pad = [(0, 0)] * b.ndim
    pad[axis] = (1, 0)
    return np.pad(interior, pad)


def _cosine_synth(b: np.ndarray, axis: int) -> np.ndarray:
    """Evaluate sum_n b_n cos(n pi j/N) at j = 0..N-1 (b indexed n = 1..N-1)."""
    pad = [(0, 0)] * b.ndim
    pad[axis] = (1, 1)
    full = np.pad(b, pad)
    out = sfft.dct(full, type=1, axis=axis) / 2.0
    return np.take(out, np.arange(full.shape[axis] - 1), axis=axis)


def _kshape(k: np.ndarray, ndim: int, axis: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = k.size
    return k.reshape(shape)


def derivative(f: np.ndarray, grid: Grid, axis: int = 0, order: int = 1) -> np.ndarray:
    """Spectral derivative of grid samples along one axis (order 1 or 2)."""
    f = np.asarray(f)
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    k = grid.wavenumbers(axis)
    if grid.boundary == "periodic":
        n = grid.n_points[axis]
        kk = k.copy()
        if order == 1 and n % 2 == 0:
            kk[n // 2] = 0.0
        fk = sfft.fft(f, axis=axis)
        fk = fk * _kshape((1j * kk) ** order, f.ndim, axis)
        out = sfft.ifft(fk, axis=axis)
        return out.real if np.isrealobj(f) else out
    b = _sine_coeffs(f, axis)
    kk = _kshape(k, f.ndim, axis)
    if order == 1:
        return _cosine_synth(b * kk, axis)
    return _sine_synth(-b * kk**2, axis)


def gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Stack of first derivatives, shape ``(dim,) + grid.shape``."""
    return np.stack([derivative(f, grid, ax, 1) for ax in range(grid.dim)])


def laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    return sum(derivative(f, grid, ax, 2) for ax in range(grid.dim))


def spectral_norm(field: WaveField) -> float:
    """Norm computed from transform coefficients (Parseval partner of ``norm``)."""
    vals = field.values
    g = field.grid
    if g.boundary == "periodic":
        c = sfft.fftn(vals)
        return float(np.sqrt(np.sum(np.abs(c) ** 2) / vals.size * g.cell_volume))
    b = vals
    for ax in range(vals.ndim):
        b = _sine_coeffs(b, ax)
    # sine modes have squared norm L/2 per axis
    w = np.prod([ln / 2.0 for ln in g.lengths])
    return float(np.sqrt(np.sum(np.abs(b) ** 2) * w))


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class Potential1D:
    """Piecewise-smooth 1D potential.

    kinds and parameters:
      constant  V0
      sharp     V0, V1, q_step          (V1 for q >= q_step)
      soft      V0, dV, q_step, width   (V0 + dV / (1 + exp(-(q - q_step)/width)))
      linear    slope, V0               (V0 + slope * q)
      harmonic  omega, mass, center     (mass omega^2 (q - center)^2 / 2)
    """

    kind: str
    params: dict = dc_field(default_factory=dict)

    KINDS = ("constant", "sharp", "soft", "linear", "harmonic")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "soft" and not self.params.get("width", 0) > 0:
            raise ValueError("soft step needs width > 0")

    @classmethod
    def constant(cls, V0: float = 0.0):
        return cls("constant", {"V0": float(V0)})

    @classmethod
    def sharp_step(cls, V0: float, V1: float, q_step: float = 0.0):
        return cls("sharp", {"V0": float(V0), "V1": float(V1), "q_step": float(q_step)})

    @classmethod
    def soft_step(cls, V0: float, dV: float, q_step: float, width: float):
        return cls("soft", {"V0": float(V0), "dV": float(dV), "q_step": float(q_step), "width": float(width)})

    @classmethod
    def linear(cls, slope: float, V0: float = 0.0):
        return cls("linear", {"slope": float(slope), "V0": float(V0)})

    @classmethod
    def harmonic(cls, omega: float, mass: float = 1.0, center: float = 0.0):
        return cls("harmonic", {"omega": float(omega), "mass": float(mass), "center": float(center)})

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full_like(q, p["V0"])
        if self.kind == "sharp":
            return np.where(q >= p["q_step"], p["V1"], p["V0"])
        if self.kind == "soft":
            x = (q - p["q_step"]) / p["width"]
            return p["V0"] + p["dV"] * 0.5 * (1.0 + np.tanh(0.5 * x))
        if self.kind == "linear":
            return p["V0"] + p["slope"] * q
        return 0.5 * p["mass"] * p["omega"] ** 2 * (q - p["center"]) ** 2

    def derivative(self, q) -> np.ndarray:
        """dV/dq; the sharp step has no classical force away from the jump."""
        q = np.asarray(q, dtype=float)
        p = self.params
        if self.kind in ("constant", "sharp"):
            return np.zeros_like(q)
        if self.kind == "soft":
            x = (q - p["q_step"]) / p["width"]
            return p["dV"] * 0.25 / np.cosh(0.5 * x) ** 2 / p["width"]
        if self.kind == "linear":
            return np.full_like(q, p["slope"])
        return p["mass"] * p["omega"] ** 2 * (q - p["center"])

    def breakpoints(self) -> list[float]:
        return [self.params["q_step"]] if self.kind == "sharp" else []

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}


def potential_values(potential, grid: Grid) -> np.ndarray:
    """Sample a potential (None, scalar, array, Potential1D or callable) on a grid."""
    if potential is None:
        return np.zeros(grid.shape)
    if np.isscalar(potential):
        return np.full(grid.shape, float(potential))
    if isinstance(potential, np.ndarray):
        if potential.shape != grid.shape:
            raise ValueError("potential array does not match grid")
        return potential.astype(float)
    if callable(potential):
        return np.asarray(potential(*grid.mesh()), dtype=float)
    raise TypeError(f"unsupported potential {type(potential).__name__}")


def apply_hamiltonian(field: WaveField, potential=None) -> np.ndarray:
    """H psi on the grid with the spectral Laplacian."""
    kin = -(field.hbar**2) / (2.0 * field.mass) * laplacian(field.values, field.grid)
    return kin + potential_values(potential, field.grid) * field.values


def energy_expectation(field: WaveField, potential=None, imag_tol: float = 1e-10) -> float:
    """<psi|H|psi> for a normalized field."""
    ensure_normalized(field)
    h_psi = apply_hamiltonian(field, potential)
    e = np.sum(np.conj(field.values) * h_psi) * field.grid.cell_volume
    if abs(e.imag) > imag_tol * max(1.0, abs(e.real)):
        raise ArithmeticError(f"energy expectation not real: {e}")
    return float(e.real)


def momentum_expectation(field: WaveField) -> np.ndarray:
    """<p> per axis, from spectral derivatives."""
    ensure_normalized(field)
    g = gradient(field.values, field.grid)
    dv = field.grid.cell_volume
    return np.array([
        (np.sum(np.conj(field.values) * (-1j * field.hbar) * g[ax]) * dv).real
        for ax in range(field.grid.dim)
    ])


def position_moments(field: WaveField) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation of |psi|^2 per axis."""
    rho = field.density * field.grid.cell_volume
    total = rho.sum()
    means, stds = [], []
    for q in field.grid.mesh():
        mu = np.sum(rho * q) / total
        means.append(mu)
        stds.append(np.sqrt(np.sum(rho * (q - mu) ** 2) / total))
    return np.array(means), np.array(stds)


def plane_wave(grid: Grid, p, hbar: float = 1.0, mass: float = 1.0) -> WaveField:
    """Normalized exp(i p.q/hbar) on a periodic grid."""
    p = np.atleast_1d(np.asarray(p, float))
    phase = sum(pi * qi for pi, qi in zip(p, grid.mesh())) / hbar
    f = WaveField(grid, np.exp(1j * phase), hbar, mass)
    return normalize(f)


def from_function(grid: Grid, func: Callable, hbar: float = 1.0, mass: float = 1.0,
                  time: float = 0.0, normalized: bool = True) -> WaveField:
    f = WaveField(grid, np.asarray(func(*grid.mesh()), dtype=complex), hbar, mass, time)
    return normalize(f) if normalized else f


# ---------------------------------------------------------------------------
# binary dump / text export
#
# header (little endian): int64 dim, int64 n_points[dim], float64 extents[2*dim],
# float64 hbar, mass, time; payload: complex128 (interleaved re, im) row-major.


def dump_field(field: WaveField, path) -> None:
    g = field.grid
    head = struct.pack(f"<q{g.dim}q", g.dim, *g.n_points)
    head += struct.pack(f"<{2 * g.dim}d", *[v for ab in g.extents for v in ab])
    head += struct.pack("<3d", field.hbar, field.mass, field.time)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(field.values, dtype="<c16").tobytes(order="C"))


def load_field(path, boundary: str = "periodic") -> WaveField:
    with open(path, "rb") as fh:
        buf = fh.read()
    (dim,) = struct.unpack_from("<q", buf, 0)
    off = 8
    n = struct.unpack_from(f"<{dim}q", buf, off)
    off += 8 * dim
    ext = struct.unpack_from(f"<{2 * dim}d", buf, off)
    off += 16 * dim
    hbar, mass, time = struct.unpack_from("<3d", buf, off)
    off += 24
    vals = np.frombuffer(buf, dtype="<c16", offset=off).reshape(n)
    grid = Grid(tuple((ext[2 * i], ext[2 * i + 1]) for i in range(dim)), tuple(n), boundary)
    return WaveField(grid, vals.copy(), hbar, mass, time)


def export_field_text(field: WaveField, path) -> None:
    cols = [q.ravel() for q in field.grid.mesh()]
    cols += [field.values.real.ravel(), field.values.imag.ravel()]
    names = ["q", "q2"][: field.grid.dim] + ["re", "im"]
    np.savetxt(path, np.column_stack(cols), header=" ".join(names), fmt="%.17g")


def as_points(q, dim: int) -> np.ndarray:
    """Coerce positions to shape (N, dim)."""
    q = np.asarray(q, dtype=float)
    if dim == 1 and q.ndim <= 1:
        return q.reshape(-1, 1)
    return np.atleast_2d(q).reshape(-1, dim)


__all__: Sequence[str] = [
    "Grid", "WaveField", "Potential1D", "make_grid", "box_grid", "norm", "normalize",
    "energy_expectation", "momentum_expectation", "derivative", "gradient", "laplacian",
    "dump_field", "load_field", "export_field_text", "plane_wave", "from_function",
]
