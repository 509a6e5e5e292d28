"""Bohmian trajectory ensembles.

Flow sources supply the guidance field v(q, t):

``BilliardFlow``
    exact sine-basis synthesis at particle positions and substep times.
``GridFlow``
    cached split-step frames, cubic splines in space, linear in time.
``StationaryFlow``
    a single snapshot, valid for all t (eigenstates: psi(t) = exp(-iEt) psi).

Node policy: a particle whose interpolation cell touches the node mask is
moved with the velocity of the nearest non-masked sample and flagged.  Wall
policy (billiard): positions are clamped to [eps, L - eps] and each clamp is
counted.
"""
from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.interpolate import CubicSpline, RectBivariateSpline, RegularGridInterpolator

from ._rng import make_rng
from .errors import NumericalError
from .field import Grid, WaveField, as_points, derivative, normalize, potential_values
from .madelung import EPS_NODE, FlowSnapshot, polar_decompose
from .propagator import SpectralCoeffs, billiard_eval, billiard_evolve
from .field import box_grid

log = logging.getLogger(__name__)

WALL_EPS = 1e-10      # clamp margin, in units of L
RESOLUTION_LIMIT = 1.0  # max allowed omega_max * dt_traj
POPULATED_WEIGHT = 1e-8  # relative |c|^2 counted when estimating omega_max


@dataclass
class TrajectoryEnsemble:
    times: np.ndarray
    positions: np.ndarray  # (T, N, dim)
    kind: str = "bohmian"
    seed: int | None = None
    velocities: np.ndarray | None = None
    node_flags: np.ndarray | None = None
    clamp_counts: np.ndarray | None = None
    escaped: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.positions = np.asarray(self.positions, float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        n = self.n_particles
        if self.node_flags is None:
            self.node_flags = np.zeros(n, int)
        if self.clamp_counts is None:
            self.clamp_counts = np.zeros(n, int)
        if self.escaped is None:
            self.escaped = np.zeros(n, bool)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    def at(self, i: int) -> np.ndarray:
        return self.positions[i]

    def displacement(self) -> np.ndarray:
        """Max distance from the starting point over time, per particle."""
        d = np.linalg.norm(self.positions - self.positions[0], axis=2)
        return d.max(axis=0)

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "n_particles": int(self.n_particles),
            "n_times": int(self.times.size),
            "seed": self.seed,
            "flagged_particles": int(np.count_nonzero(self.node_flags)),
            "node_flag_events": int(self.node_flags.sum()),
            "clamp_events": int(self.clamp_counts.sum()),
            "escaped": int(np.count_nonzero(self.escaped)),
        }


# ---------------------------------------------------------------------------
# snapshot interpolation


class SnapshotInterpolator:
    """Cubic-spline velocity field of one FlowSnapshot with the node policy."""

    def __init__(self, flow: FlowSnapshot):
        self.flow = flow
        g = flow.grid
        self.grid = g
        self.periodic = g.boundary == "periodic"
        axes = []
        vel = flow.velocity
        mask = flow.node_mask
        # close the grid: periodic wrap or the implicit far wall
        for ax in range(g.dim):
            a = g.axis(ax)
            axes.append(np.append(a, g.extents[ax][1]))
            if self.periodic:
                vel = np.concatenate([vel, np.take(vel, [0], axis=ax + 1)], axis=ax + 1)
                mask = np.concatenate([mask, np.take(mask, [0], axis=ax)], axis=ax)
            else:
                pad = [(0, 0)] * (g.dim + 1)
                pad[ax + 1] = (0, 1)
                vel = np.pad(vel, pad)
                mask = np.pad(mask, [p for p in pad[1:]], constant_values=True)
        self.axes = axes
        self.mask = mask
        if g.dim == 1:
            bc = "periodic" if self.periodic else "not-a-knot"
            self._splines = [CubicSpline(axes[0], vel[0], bc_type=bc)]
        else:
            self._splines = [RectBivariateSpline(axes[0], axes[1], vel[c], kx=3, ky=3) for c in range(2)]
        # index of nearest non-masked sample, for the node policy
        if mask.all():
            raise ValueError("degenerate flow: every sample is a node")
        _, idx = ndimage.distance_transform_edt(mask, return_indices=True)
        self._nearest = idx
        self._vel = vel

    def wrap(self, pts: np.ndarray) -> np.ndarray:
        if not self.periodic:
            return pts
        out = pts.copy()
        for ax, (a, b) in enumerate(self.grid.extents):
            out[:, ax] = a + np.mod(out[:, ax] - a, b - a)
        return out

    def __call__(self, pts: np.ndarray):
        pts = self.wrap(pts)
        g = self.grid
        if not np.all(g.contains(pts, tol=1e-12 * max(g.lengths))):
            raise ValueError("position outside the grid extent")
        if g.dim == 1:
            v = self._splines[0](pts[:, 0])[:, None]
        else:
            v = np.stack([s.ev(pts[:, 0], pts[:, 1]) for s in self._splines], axis=1)
        # cell corners touching the node mask
        cell = []
        for ax in range(g.dim):
            i = np.floor((pts[:, ax] - g.extents[ax][0]) / g.spacing[ax]).astype(int)
            cell.append(np.clip(i, 0, len(self.axes[ax]) - 2))
        flagged = np.zeros(len(pts), bool)
        for corner in np.ndindex(*(2,) * g.dim):
            flagged |= self.mask[tuple(c + o for c, o in zip(cell, corner))]
        if flagged.any():
            for j in np.flatnonzero(flagged):
                near = []
                for ax in range(g.dim):
                    r = (pts[j, ax] - g.extents[ax][0]) / g.spacing[ax]
                    near.append(int(np.clip(np.rint(r), 0, len(self.axes[ax]) - 1)))
                src = tuple(self._nearest[(ax,) + tuple(near)] for ax in range(g.dim))
                v[j] = self._vel[(slice(None),) + src]
        return v, flagged


def velocity_at(flow: FlowSnapshot, q):
    """Interpolated velocity at points q; returns (v, flagged)."""
    pts = as_points(q, flow.grid.dim)
    return SnapshotInterpolator(flow)(pts)


# ---------------------------------------------------------------------------
# flow sources


class StationaryFlow:
    """Time-independent guidance field from one snapshot."""

    def __init__(self, flow: FlowSnapshot | WaveField, eps_node: float = EPS_NODE):
        if isinstance(flow, WaveField):
            flow = polar_decompose(flow, eps_node)
        self.snapshot = flow
        self.dim = flow.grid.dim
        self.grid = flow.grid
        self._interp = SnapshotInterpolator(flow)
        self.walls = None if flow.grid.boundary == "periodic" else flow.grid.extents

    def velocity(self, pts, t):
        return self._interp(pts)

    def max_frequency(self) -> float:
        return 0.0

    def flow_at(self, t) -> FlowSnapshot:
        return self.snapshot


class GridFlow:
    """Split-step frames with spline-in-space, linear-in-time interpolation.

    Interpolators are built lazily per frame and memoized; the frame list is
    never mutated after construction.
    """

    def __init__(self, frames: list[WaveField], eps_node: float = EPS_NODE, periodic: bool | None = None,
                 cache_size: int = 16):
        if len(frames) < 1:
            raise ValueError("need at least one frame")
        self.frames = list(frames)
        self.times = np.array([f.time for f in frames])
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("frame times must increase")
        self.grid = frames[0].grid
        self.dim = self.grid.dim
        self.eps_node = eps_node
        self.periodic = (self.grid.boundary == "periodic") if periodic is None else periodic
        self.walls = None
        self._lock = threading.Lock()
        self._interp = lru_cache(maxsize=cache_size)(self._build)

    def _build(self, i: int) -> SnapshotInterpolator:
        s = SnapshotInterpolator(polar_decompose(normalize(self.frames[i]), self.eps_node))
        if not self.periodic:
            s.periodic = False
        return s

    def interpolator(self, i: int) -> SnapshotInterpolator:
        with self._lock:
            return self._interp(i)

    def flow_at(self, t) -> FlowSnapshot:
        i = int(np.argmin(np.abs(self.times - t)))
        return self.interpolator(i).flow

    def velocity(self, pts, t):
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ValueError(f"t={t} outside cached frames [{times[0]}, {times[-1]}]")
        if len(times) == 1:
            return self.interpolator(0)(pts)
        i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        w = (t - times[i]) / (times[i + 1] - times[i])
        v0, f0 = self.interpolator(i)(pts)
        if w == 0.0:
            return v0, f0
        v1, f1 = self.interpolator(i + 1)(pts)
        return (1 - w) * v0 + w * v1, f0 | f1

    def max_frequency(self, threshold: float = POPULATED_WEIGHT) -> float:
        f = self.frames[0]
        k = f.grid.wavenumbers(0)
        w = np.abs(np.fft.fft(f.values)) ** 2
        k = k[w > threshold * w.max()]
        e = f.hbar * k**2 / (2 * f.mass)
        return float(e.max() - e.min())


class BilliardFlow:
    """Exact guidance field of a square-billiard state."""

    def __init__(self, coeffs: SpectralCoeffs, eps_node: float = EPS_NODE, probe_points: int | None = None):
        self.coeffs = coeffs
        self.L = coeffs.L
        self.dim = 2
        self.eps_node = eps_node
        self.walls = ((0.0, coeffs.L), (0.0, coeffs.L))
        n = probe_points or 2 * coeffs.n_max
        self._probe = (np.arange(n) + 0.5) * coeffs.L / n
        self._rho_max: dict[float, float] = {}
        self._lock = threading.Lock()
        step = coeffs.L / (8 * coeffs.n_max)
        ang = np.arange(8) * (np.pi / 4)
        ring = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        self._offsets = np.concatenate([r * step * ring for r in range(1, 9)])
        self.grid = box_grid(coeffs.L, 16)

    def rho_max(self, t: float) -> float:
        with self._lock:
            if t in self._rho_max:
                return self._rho_max[t]
        from .propagator import _rmatmul, _sine_table
        S = _sine_table(self._probe, self.coeffs.n_max, self.L)
        psi = (2.0 / self.L) * (_rmatmul(S, self.coeffs.at(t)) @ S.T)
        val = float(np.max(np.abs(psi) ** 2))
        with self._lock:
            if len(self._rho_max) > 64:
                self._rho_max.clear()
            self._rho_max[t] = val
        return val

    def density(self, pts, t: float) -> np.ndarray:
        psi, _ = billiard_eval(self.coeffs, t, pts)
        return np.abs(psi) ** 2

    def _raw(self, pts, t):
        psi, grad = billiard_eval(self.coeffs, t, pts)
        rho = np.abs(psi) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            v = (self.coeffs.hbar / self.coeffs.mass) * np.imag(grad / psi[:, None])
        return v, rho

    def velocity(self, pts, t):
        pts = np.asarray(pts, float)
        v, rho = self._raw(pts, t)
        thresh = self.eps_node * self.rho_max(t)
        flagged = rho < thresh
        if flagged.any():
            idx = np.flatnonzero(flagged)
            cand = pts[idx, None, :] + self._offsets[None, :, :]
            cand = np.clip(cand, 0.0, self.L)
            cv, crho = self._raw(cand.reshape(-1, 2), t)
            cv = cv.reshape(len(idx), -1, 2)
            ok = crho.reshape(len(idx), -1) >= thresh
            first = np.argmax(ok, axis=1)
            has = ok.any(axis=1)
            v[idx] = np.where(has[:, None], cv[np.arange(len(idx)), first], 0.0)
        return v, flagged

    def max_frequency(self) -> float:
        return self.coeffs.max_frequency(POPULATED_WEIGHT)

    def field_at(self, t: float, n_points: int = 256) -> WaveField:
        return billiard_evolve(self.coeffs, t, box_grid(self.L, n_points))

    def flow_at(self, t: float, n_points: int = 256) -> FlowSnapshot:
        return polar_decompose(normalize(self.field_at(t, n_points)), self.eps_node)


# ---------------------------------------------------------------------------
# integration


def _schedule(t0: float, sample_times: np.ndarray, dt: float):
    steps = []
    t = t0
    for ts in sample_times:
        span = ts - t
        n = int(np.ceil(span / dt - 1e-9)) if span > 0 else 0
        steps.append((t, span / n if n else 0.0, n))
        t = ts
    return steps


def _integrate_chunk(source, q0: np.ndarray, t0: float, sample_times: np.ndarray, dt: float,
                     ids: np.ndarray, store_velocities: bool):
    q = q0.copy()
    n, dim = q.shape
    out = np.empty((len(sample_times) + 1, n, dim))
    vout = np.empty_like(out) if store_velocities else None
    out[0] = q
    flags = np.zeros(n, int)
    clamps = np.zeros(n, int)
    escaped = np.zeros(n, bool)
    walls = getattr(source, "walls", None)
    grid = getattr(source, "grid", None)
    bounded = walls is None and grid is not None and not getattr(source, "periodic", True)

    def vel(x, t):
        if bounded:
            inside = grid.contains(x)
            v = np.zeros_like(x)
            f = np.zeros(len(x), bool)
            if inside.any():
                v[inside], f[inside] = source.velocity(x[inside], t)
            return v, f, ~inside
        v, f = source.velocity(x, t)
        return v, f, None

    if store_velocities:
        vout[0] = vel(q, t0)[0]
    for k, (ta, h, nsteps) in enumerate(_schedule(t0, sample_times, dt)):
        t = ta
        for _ in range(nsteps):
            k1, f1, e1 = vel(q, t)
            k2, f2, _ = vel(q + 0.5 * h * k1, t + 0.5 * h)
            k3, f3, _ = vel(q + 0.5 * h * k2, t + 0.5 * h)
            k4, f4, _ = vel(q + h * k3, t + h)
            step = (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if e1 is not None:
                escaped |= e1
                step[escaped] = 0.0
            q = q + step
            flags += f1 | f2 | f3 | f4
            t += h
            bad = ~np.isfinite(q).all(axis=1)
            if bad.any():
                raise NumericalError(f"particle {int(ids[np.argmax(bad)])} non-finite at t={t:.6g}")
            if walls is not None:
                for ax, (a, b) in enumerate(walls):
                    eps = WALL_EPS * (b - a)
                    lo, hi = q[:, ax] < a + eps, q[:, ax] > b - eps
                    clamps += lo | hi
                    q[:, ax] = np.clip(q[:, ax], a + eps, b - eps)
        out[k + 1] = q
        if store_velocities:
            vout[k + 1] = vel(q, sample_times[k])[0]
    return out, vout, flags, clamps, escaped


def integrate_ensemble(source, initial, t_span, dt_traj: float, sample_times=None, seed: int | None = None,
                       store_velocities: bool = False, workers: int = 1, kind: str = "bohmian",
                       check_resolution: bool = True) -> TrajectoryEnsemble:
    """Fourth-order Runge-Kutta integration of dq/dt = v(q, t) for every particle.

    ``sample_times`` (within ``t_span``) are hit exactly; by default only the
    end point is stored in addition to the start.
    """
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    if dt_traj <= 0:
        raise ValueError("dt_traj must be positive")
    q0 = as_points(initial, source.dim)
    if check_resolution:
        w = source.max_frequency()
        if w * dt_traj > RESOLUTION_LIMIT:
            raise ValueError(f"dt_traj={dt_traj} does not resolve the fastest field oscillation "
                             f"(omega_max={w:.4g}; need dt_traj <= {RESOLUTION_LIMIT / w:.3g})")
    if sample_times is None:
        st = np.array([t1])
    else:
        st = np.asarray(sample_times, float)
        st = st[st > t0]
        if st.size == 0 or st[-1] < t1:
            st = np.append(st, t1)
    ids = np.arange(len(q0))
    if workers > 1 and len(q0) > 1:
        chunks = np.array_split(ids, workers)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda c: _integrate_chunk(source, q0[c], t0, st, dt_traj, c, store_velocities),
                                chunks))
        pos = np.concatenate([p[0] for p in parts], axis=1)
        vel = np.concatenate([p[1] for p in parts], axis=1) if store_velocities else None
        flags, clamps, esc = (np.concatenate([p[i] for p in parts]) for i in (2, 3, 4))
    else:
        pos, vel, flags, clamps, esc = _integrate_chunk(source, q0, t0, st, dt_traj, ids, store_velocities)
    if clamps.sum():
        log.info("wall clamps: %d events on %d particles", clamps.sum(), np.count_nonzero(clamps))
    return TrajectoryEnsemble(np.concatenate([[t0], st]), pos, kind, seed, vel, flags, clamps, esc)


# ---------------------------------------------------------------------------
# sampling and equivariance


def _closed_axis(grid: Grid, ax: int) -> np.ndarray:
    return np.append(grid.axis(ax), grid.extents[ax][1])


def _close_periodic(arr: np.ndarray, grid: Grid, ax: int) -> np.ndarray:
    if grid.boundary == "periodic":
        return np.concatenate([arr, np.take(arr, [0], axis=ax)], axis=ax)
    pad = [(0, 0)] * arr.ndim
    pad[ax] = (0, 1)
    return np.pad(arr, pad)


def _cdf_nodes(x: np.ndarray, dens: np.ndarray) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x))])
    return c / c[-1]


def marginal_cdf(flow: FlowSnapshot, ax: int):
    """(nodes, cdf) of the axis-``ax`` marginal of the snapshot density."""
    g = flow.grid
    rho = flow.rho
    for other in range(g.dim - 1, -1, -1):
        if other != ax:
            rho = rho.sum(axis=other) * g.spacing[other]
    x = _closed_axis(g, ax)
    return x, _cdf_nodes(x, _close_periodic(rho, g, 0))


def sample_initial(flow: FlowSnapshot, N: int, seed: int, density=None, envelope: float = 1.2) -> np.ndarray:
    """Draw N i.i.d. positions from the snapshot density.

    1D: inverse CDF of the piecewise-linear CDF through the grid nodes.
    2D: rejection sampling of the bilinear interpolant of rho, or of an exact
    ``density(points)`` callable when supplied, under a per-cell envelope.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    g = flow.grid
    if not np.any(flow.rho > 0):
        raise ValueError("degenerate density: all nodes")
    rng = make_rng(seed)
    if g.dim == 1:
        x, cdf = marginal_cdf(flow, 0)
        u = rng.random(N)
        return np.interp(u, cdf, x)[:, None]
    axes = [_closed_axis(g, ax) for ax in range(2)]
    rho = _close_periodic(_close_periodic(flow.rho, g, 0), g, 1)
    if density is None:
        # the bilinear interpolant never exceeds its cell's corner maximum
        density, envelope = RegularGridInterpolator(axes, rho, method="linear"), 1.0
    return _rejection_cells(rng, axes, rho, density, envelope, N)


def _rejection_cells(rng, axes, rho: np.ndarray, density, envelope: float, N: int) -> np.ndarray:
    """Rejection sampling of an exact density under a per-cell constant envelope.

    The envelope on each grid cell is ``envelope`` times the largest corner
    density plus a floor of 1e-6 of the peak; a proposal that exceeds it means
    the snapshot grid under-resolves the density and raises.
    """
    corner = np.maximum.reduce([rho[:-1, :-1], rho[1:, :-1], rho[:-1, 1:], rho[1:, 1:]])
    env = envelope * corner + 1e-6 * rho.max()
    hx, hy = np.diff(axes[0]), np.diff(axes[1])
    mass = (env * hx[:, None] * hy[None, :]).ravel()
    cum = np.cumsum(mass)
    cum /= cum[-1]
    ny = hy.size
    accepted: list[np.ndarray] = []
    have = 0
    while have < N:
        batch = int(min(2_000_000, max(1024, 1.3 * (N - have) * envelope)))
        cell = np.minimum(np.searchsorted(cum, rng.random(batch), side="right"), cum.size - 1)
        i, j = np.divmod(cell, ny)
        u = rng.random((batch, 2))
        prop = np.column_stack([axes[0][i] + u[:, 0] * hx[i], axes[1][j] + u[:, 1] * hy[j]])
        d = density(prop)
        e = env.ravel()[cell]
        if np.any(d > e):
            raise ValueError("rejection envelope violated; increase `envelope` or the snapshot resolution")
        keep = rng.random(batch) * e < d
        accepted.append(prop[keep])
        have += int(keep.sum())
    return np.concatenate(accepted)[:N]


def ks_statistic(samples: np.ndarray, cdf) -> float:
    x = np.sort(np.asarray(samples, float))
    n = x.size
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


@dataclass
class EquivarianceResult:
    statistic: float
    components: dict = dc_field(default_factory=dict)

    def threshold(self, n: int, factor: float = 1.0) -> float:
        return factor * 1.36 / np.sqrt(n)


def equivariance_test(positions, flow: FlowSnapshot) -> EquivarianceResult:
    """Kolmogorov-Smirnov distance between particle positions and |psi|^2.

    2D: the maximum over both marginals and the radial distance from the
    density centroid.
    """
    g = flow.grid
    pts = as_points(positions, g.dim)
    comps = {}
    for ax in range(g.dim):
        x, cdf = marginal_cdf(flow, ax)
        xs = pts[:, ax]
        if g.boundary == "periodic":
            a, b = g.extents[ax]
            xs = a + np.mod(xs - a, b - a)
        comps[f"axis{ax}"] = ks_statistic(xs, lambda s, x=x, c=cdf: np.interp(s, x, c))
    if g.dim == 2:
        mesh = g.mesh()
        w = flow.rho * g.cell_volume
        c = np.array([np.sum(w * m) / w.sum() for m in mesh])
        rs, cw = _radial_cdf(flow, c)
        rr = np.linalg.norm(pts - c, axis=1)
        comps["radial"] = ks_statistic(rr, lambda s: np.interp(s, rs, cw, left=0.0, right=1.0))
    return EquivarianceResult(max(comps.values()), comps)


RADIAL_POINTS = 1024  # per-axis resolution of the radial reference CDF


def _radial_cdf(flow: FlowSnapshot, center) -> tuple[np.ndarray, np.ndarray]:
    """CDF of |q - center| under rho, by midpoint sampling of the bilinear density.

    Counting grid nodes inside a disk carries a lattice error of order the
    spacing; sub-cell midpoints bring it down to RADIAL_POINTS resolution.
    """
    g = flow.grid
    axes = [_closed_axis(g, ax) for ax in range(2)]
    rho = _close_periodic(_close_periodic(flow.rho, g, 0), g, 1)
    sub = max(1, int(np.ceil(RADIAL_POINTS / max(g.shape))))
    frac = (np.arange(sub) + 0.5) / sub
    fine = [(a[:-1, None] + np.diff(a)[:, None] * frac).ravel() for a in axes]
    vals = RegularGridInterpolator(axes, rho, method="linear")(
        np.stack(np.meshgrid(*fine, indexing="ij"), axis=-1).reshape(-1, 2))
    X, Y = np.meshgrid(fine[0] - center[0], fine[1] - center[1], indexing="ij")
    r = np.hypot(X, Y).ravel()
    order = np.argsort(r)
    cw = np.cumsum(vals[order])
    return r[order], cw / cw[-1]


# ---------------------------------------------------------------------------
# bipolar decomposition


def bipolar_decompose_1d(field: WaveField, E: float, potential=None, interval=None):
    """Split a real stationary state into two counter-propagating components.

    psi = R exp(i theta) with real R and constant theta; the components are
    psi_pm = (R -/+ i hbar R'/p) exp(i theta) / 2 with the local classical
    momentum p = sqrt(2m(E - V)), so psi_+ + psi_- = psi exactly and for a
    constant potential they are the two plane waves of the standing wave.
    """
    g = field.grid
    if g.dim != 1:
        raise ValueError("bipolar decomposition is one-dimensional")
    q = g.axis(0)
    V = potential_values(potential, g)
    sel = np.ones(q.size, bool) if interval is None else (q >= interval[0]) & (q <= interval[1])
    if np.any(E - V[sel] <= 0):
        raise ValueError("classically forbidden: E <= V on the requested interval")
    psi = field.values
    theta = 0.5 * np.angle(np.sum(psi**2))
    R = psi * np.exp(-1j * theta)
    if np.max(np.abs(R.imag)) > 1e-8 * np.max(np.abs(R)):
        raise ValueError("field is not real up to a global phase (not stationary)")
    R = R.real
    dR = derivative(R, g, 0, 1)
    p = np.sqrt(2.0 * field.mass * np.clip(E - V, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(p > 0, field.hbar * dR / p, 0.0)
    plus = 0.5 * (R - 1j * corr) * np.exp(1j * theta)
    minus = 0.5 * (R + 1j * corr) * np.exp(1j * theta)
    return field.replace(values=plus), field.replace(values=minus)


# ---------------------------------------------------------------------------
# export


def export_trajectories(ens: TrajectoryEnsemble, path, stride: int = 1) -> None:
    rows = []
    for i in range(0, ens.times.size, stride):
        t = ens.times[i]
        for pid in range(ens.n_particles):
            rows.append([t, pid, *ens.positions[i, pid]])
    names = ["t", "particle_id"] + ["q", "q2"][: ens.dim]
    fmt = ["%.17g", "%d"] + ["%.17g"] * ens.dim
    np.savetxt(path, np.array(rows), header=" ".join(names) + f"  kind={ens.kind}", fmt=fmt)
