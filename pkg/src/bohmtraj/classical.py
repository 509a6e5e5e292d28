"""Classical dynamics and integrability diagnostics.

Bracket convention used throughout:

    {F, G} = sum_m (dF/dp_m dG/dq_m - dF/dq_m dG/dp_m)

so that {p_1, q_1} = +1.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .errors import NumericalError

log = logging.getLogger(__name__)

CORNER_TOL = 1e-12


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, float)).copy()
        p = np.atleast_1d(np.asarray(self.p, float)).copy()
        if q.shape != p.shape:
            raise ValueError("q and p must have the same shape")
        if not (np.isfinite(q).all() and np.isfinite(p).all()):
            raise ValueError("phase point has non-finite components")
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return self.q.size

    def shifted(self, dq=None, dp=None) -> "PhasePoint":
        q = self.q if dq is None else self.q + dq
        p = self.p if dp is None else self.p + dp
        return PhasePoint(q, p)


@dataclass
class PhaseTrajectory:
    times: np.ndarray
    q: np.ndarray          # (T, dim)
    p: np.ndarray          # (T, dim)
    mass: float = 1.0
    unfolded: np.ndarray | None = None  # billiard only: straight-line image of q
    events: list = dc_field(default_factory=list)
    kind: str = "classical"

    def point(self, i: int) -> PhasePoint:
        return PhasePoint(self.q[i], self.p[i])

    def __len__(self) -> int:
        return self.times.size

    @property
    def n_bounces(self) -> int:
        return sum(1 for e in self.events if e[0] in ("bounce", "corner"))

    def to_ensemble(self):
        from .bohm import TrajectoryEnsemble
        return TrajectoryEnsemble(self.times, self.q[:, None, :], kind="classical",
                                  velocities=(self.p / self.mass)[:, None, :])


# ---------------------------------------------------------------------------
# observables


class ObservableFunction:
    """A phase-space function F(q, p) with a tag and a natural scale.

    ``box`` marks functions only defined inside a billiard of side L; a bracket
    stencil reaching the wall is rejected.
    """

    def __init__(self, tag: str, func: Callable[[np.ndarray, np.ndarray], float], scale: float = 1.0,
                 box: float | None = None, kink_momenta: tuple[int, ...] = ()):
        self.tag = tag
        self.func = func
        self.scale = float(scale)
        self.box = box
        self.kink_momenta = kink_momenta

    def __call__(self, x: PhasePoint) -> float:
        return float(self.func(x.q, x.p))

    def along(self, traj: PhaseTrajectory) -> np.ndarray:
        return np.array([self.func(traj.q[i], traj.p[i]) for i in range(len(traj))])

    def __repr__(self):
        return f"ObservableFunction({self.tag!r})"

    @classmethod
    def hamiltonian(cls, mass: float = 1.0, potential=None, box: float | None = None, scale: float = 1.0):
        if potential is None:
            f = lambda q, p: float(np.dot(p, p)) / (2 * mass)
        else:
            f = lambda q, p: float(np.dot(p, p)) / (2 * mass) + float(np.sum(potential(q)))
        return cls("H", f, scale, box)

    @classmethod
    def momentum(cls, i: int, box: float | None = None, scale: float = 1.0):
        return cls(f"p{i + 1}", lambda q, p: p[i], scale, box)

    @classmethod
    def abs_momentum(cls, i: int, box: float | None = None, scale: float = 1.0):
        return cls(f"|p{i + 1}|", lambda q, p: abs(p[i]), scale, box, kink_momenta=(i,))

    @classmethod
    def momentum_squared(cls, i: int, box: float | None = None, scale: float = 1.0):
        return cls(f"p{i + 1}^2", lambda q, p: p[i] ** 2, scale, box)

    @classmethod
    def position(cls, i: int, box: float | None = None, scale: float = 1.0):
        return cls(f"q{i + 1}", lambda q, p: q[i], scale, box)

    @classmethod
    def grid_sampled(cls, axes, values, tag: str = "F", box: float | None = None):
        """Smooth (cubic-spline) interpolant of a position-space function on a grid."""
        values = np.asarray(values, float)
        if len(axes) == 1:
            s = CubicSpline(axes[0], values)
            f = lambda q, p: float(s(q[0]))
        else:
            s = RectBivariateSpline(axes[0], axes[1], values, kx=3, ky=3)
            f = lambda q, p: float(s.ev(q[0], q[1]))
        scale = float(np.max(np.abs(values))) or 1.0
        return cls(tag, f, scale, box)


def _stencil_ok(F: ObservableFunction, x: PhasePoint, h: float) -> None:
    if F.box is not None:
        if np.any(x.q - h <= 0.0) or np.any(x.q + h >= F.box):
            raise ValueError(f"{F.tag}: bracket stencil reaches the billiard wall (discontinuity)")
    for i in F.kink_momenta:
        if abs(x.p[i]) <= h:
            raise ValueError(f"{F.tag}: bracket stencil straddles p{i + 1} = 0 (non-differentiable)")


def _partials(F: ObservableFunction, x: PhasePoint, h: float, richardson: bool):
    def d(vec_q: bool, m: int, step: float) -> float:
        e = np.zeros(x.dim)
        e[m] = step
        if vec_q:
            return (F(x.shifted(dq=e)) - F(x.shifted(dq=-e))) / (2 * step)
        return (F(x.shifted(dp=e)) - F(x.shifted(dp=-e))) / (2 * step)

    out = np.empty((2, x.dim))
    for m in range(x.dim):
        for k, on_q in enumerate((True, False)):
            a = d(on_q, m, h)
            if richardson:
                a = (4 * d(on_q, m, h / 2) - a) / 3
            out[k, m] = a
    return out  # [dF/dq, dF/dp]


def poisson_bracket(F: ObservableFunction, G: ObservableFunction, x: PhasePoint, h: float | None = None,
                    richardson: bool = False) -> float:
    """Central-difference Poisson bracket {F, G} at x."""
    if h is None:
        scale = max(1.0, float(np.max(np.abs(np.concatenate([x.q, x.p])))))
        h = 1e-5 * scale
    for f in (F, G):
        _stencil_ok(f, x, h)
    if F is G:
        return 0.0
    dF = _partials(F, x, h, richardson)
    dG = _partials(G, x, h, richardson)
    return float(np.sum(dF[1] * dG[0] - dF[0] * dG[1]))


def constancy_check(F: ObservableFunction, traj: PhaseTrajectory, scale: float | None = None) -> float:
    """max_t |F(x(t)) - F(x(0))| / scale."""
    vals = F.along(traj)
    if scale is None:
        scale = max(abs(vals[0]), F.scale, np.finfo(float).tiny)
    return float(np.max(np.abs(vals - vals[0])) / scale)


# ---------------------------------------------------------------------------
# 1D leapfrog


def integrate_1d(potential, x0: PhasePoint, t_span, dt: float, mass: float = 1.0,
                 store_every: int = 1) -> PhaseTrajectory:
    """Kick-drift-kick leapfrog for H = p^2/2m + V(q).

    ``potential`` needs a ``derivative`` method (e.g. ``Potential1D``).  A
    negative span (t1 < t0) integrates backward.
    """
    t0, t1 = map(float, t_span)
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = int(round(abs(t1 - t0) / dt))
    if n == 0:
        raise ValueError("t_span shorter than one step")
    h = (t1 - t0) / n
    force = lambda q: -float(potential.derivative(q))
    q = float(x0.q[0])
    p = float(x0.p[0])
    n_out = n // store_every + 1 + (n % store_every != 0)
    ts = np.empty(n_out)
    qs = np.empty(n_out)
    ps = np.empty(n_out)
    ts[0], qs[0], ps[0] = t0, q, p
    j = 1
    f = force(q)
    half = 0.5 * h
    for k in range(1, n + 1):
        p += half * f
        q += h * p / mass
        f = force(q)
        p += half * f
        if k % store_every == 0 or k == n:
            ts[j], qs[j], ps[j] = t0 + k * h, q, p
            j += 1
        if k % 4096 == 0 and not (np.isfinite(q) and np.isfinite(p)):
            raise NumericalError(f"non-finite phase point at step {k}")
    if not (np.isfinite(q) and np.isfinite(p)):
        raise NumericalError(f"non-finite phase point at step {n}")
    return PhaseTrajectory(ts[:j], qs[:j, None], ps[:j, None], mass)


# ---------------------------------------------------------------------------
# event-driven square billiard


def billiard_trajectory(x0: PhasePoint, t_span, L: float = 1.0, mass: float = 1.0, sample_times=None,
                        max_bounces: int | None = None) -> PhaseTrajectory:
    """Exact free flight with specular reflection in the box [0, L]^2.

    Without ``sample_times`` the trajectory is recorded at the start, at every
    wall event and at the end.  ``max_bounces`` stops at that many events.
    The unfolded (straight-line) position is carried alongside for
    separation measurements.
    """
    t0, t1 = map(float, t_span)
    q = np.array(x0.q, float)
    p = np.array(x0.p, float)
    if q.size != 2 or np.any(q <= 0) or np.any(q >= L):
        raise ValueError("initial position must be interior to the billiard")
    v0 = p / mass
    u = q.copy()
    t = t0
    events: list = []
    samples = None if sample_times is None else np.sort(np.asarray(sample_times, float))
    out_t, out_q, out_p, out_u = [t0], [q.copy()], [p.copy()], [u.copy()]
    si = 0
    if samples is not None:
        out_t, out_q, out_p, out_u = [], [], [], []

    def emit_samples(upto: float):
        nonlocal si
        while si < samples.size and samples[si] <= upto:
            s = samples[si] - t
            out_t.append(samples[si])
            out_q.append(q + (p / mass) * s)
            out_p.append(p.copy())
            out_u.append(u + v0 * s)
            si += 1

    tol_t = CORNER_TOL * L
    while True:
        v = p / mass
        with np.errstate(divide="ignore"):
            hit = np.where(v > 0, (L - q) / v, np.where(v < 0, -q / v, np.inf))
        dt_hit = float(hit.min())
        t_hit = t + dt_hit
        if t_hit > t1 or (max_bounces is not None and len(events) >= max_bounces):
            break
        if samples is not None:
            emit_samples(t_hit)
        axes = np.flatnonzero(hit - dt_hit <= tol_t / max(np.abs(v).max(), 1e-300))
        q = q + v * dt_hit
        u = u + v0 * dt_hit
        for ax in axes:
            q[ax] = L if v[ax] > 0 else 0.0
            p[ax] = -p[ax]
        t = t_hit
        kind = "corner" if axes.size > 1 else "bounce"
        if kind == "corner":
            log.info("corner hit at t=%.17g resolved by simultaneous reflection", t)
        events.append((kind, t, tuple(int(a) for a in axes)))
        if samples is None:
            out_t.append(t)
            out_q.append(q.copy())
            out_p.append(p.copy())
            out_u.append(u.copy())
    if samples is not None:
        emit_samples(t1)
    else:
        s = max(t1, t) - t if max_bounces is None else 0.0
        if s > 0:
            out_t.append(t1)
            out_q.append(q + (p / mass) * s)
            out_p.append(p.copy())
            out_u.append(u + v0 * s)
    return PhaseTrajectory(np.array(out_t), np.array(out_q), np.array(out_p), mass, np.array(out_u), events)


def bohmian_momentum_variation(velocities: np.ndarray, mass: float = 1.0, axis: int = 0) -> np.ndarray:
    """Per-particle variation of |m v_i| along trajectories.

    Returns max_t | |m v_i(t)| - |m v_i(0)| | divided by the particle's largest
    speed times m.  For a classical billiard orbit |p_i| is conserved and this
    is zero.
    """
    v = np.asarray(velocities, float)
    mv = np.abs(mass * v[..., axis])
    scale = mass * np.linalg.norm(v, axis=-1).max(axis=0)
    return np.max(np.abs(mv - mv[0]), axis=0) / np.where(scale > 0, scale, 1.0)
