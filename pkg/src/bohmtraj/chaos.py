"""Finite-time Lyapunov exponents by two-trajectory (Benettin) renormalization.

A pair source advances batches of states over a window and measures their
separation.  The estimator evolves reference and partner states over windows
of length tau, accumulates log(|delta|/delta0) and rescales the partner back
to distance delta0 along the current separation direction.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .bohm import integrate_ensemble
from .classical import PhasePoint, billiard_trajectory

log = logging.getLogger(__name__)

DELTA0_RANGE = (1e-9, 1e-6)  # allowed delta0 / length scale
SATURATION = 0.1             # separation / length scale counted as "domain scale"


@dataclass
class LyapunovSeries:
    times: np.ndarray        # renormalization times
    lam: np.ndarray          # (T, K) running estimate per reference state
    separation: np.ndarray   # (T, K) separation just before each renormalization
    tau: float
    delta0: float
    seed: int
    kind: str = ""
    reference: np.ndarray | None = None  # (T, K, state) reference states at each renormalization

    @property
    def mean(self) -> np.ndarray:
        return self.lam.mean(axis=1)

    @property
    def final(self) -> float:
        return float(self.mean[-1])

    def plateau(self, fraction: float = 0.5) -> tuple[float, float]:
        """Mean and spread of the ensemble-mean estimate over the last ``fraction`` of the run."""
        m = self.mean
        tail = m[int((1 - fraction) * m.size):]
        return float(tail.mean()), float(tail.std())

    def spread(self) -> float:
        """Standard error of the final estimate across reference states."""
        k = self.lam.shape[1]
        return float(self.lam[-1].std(ddof=1) / np.sqrt(k)) if k > 1 else 0.0

    def export(self, path) -> None:
        np.savetxt(path, np.column_stack([self.times, self.mean, self.separation.mean(axis=1)]),
                   header=f"t lambda separation  tau={self.tau!r} delta0={self.delta0!r} seed={self.seed}",
                   fmt="%.17g")


# ---------------------------------------------------------------------------
# pair sources


class BohmianPairSource:
    """Bohmian trajectories of one flow source; states are positions (K, dim)."""

    kind = "bohmian"

    def __init__(self, flow, dt_traj: float, length_scale: float = 1.0):
        self.flow = flow
        self.dt_traj = dt_traj
        self.length_scale = length_scale
        self._checked = False

    def advance(self, states: np.ndarray, t: float, h: float) -> np.ndarray:
        ens = integrate_ensemble(self.flow, states, (t, t + h), self.dt_traj, check_resolution=not self._checked)
        self._checked = True
        return ens.positions[-1]

    def offset(self, states, vec):
        return states + vec

    def difference(self, a, b) -> np.ndarray:
        return b - a


class ClassicalBilliardSource:
    """Event-driven billiard orbits measured in unfolded coordinates.

    States are (K, 4) rows (u1, u2, p1, p2) with u the unfolded position and p
    the unfolded (constant) momentum.  Partners share the reference momentum,
    so the offset lies in position only.
    """

    kind = "classical"

    def __init__(self, L: float = 1.0, mass: float = 1.0):
        self.L = L
        self.mass = mass
        self.length_scale = L

    def fold(self, u: np.ndarray, p: np.ndarray):
        L = self.L
        r = np.mod(u, 2 * L)
        back = r > L
        return np.where(back, 2 * L - r, r), np.where(back, -p, p)

    def advance(self, states: np.ndarray, t: float, h: float) -> np.ndarray:
        out = states.copy()
        for i, s in enumerate(states):
            q, p = self.fold(s[:2], s[2:])
            q = np.clip(q, 1e-300, self.L * (1 - 1e-16))
            traj = billiard_trajectory(PhasePoint(q, p), (t, t + h), self.L, self.mass, sample_times=[t + h])
            # the folded frame is a mirror image of the unfolded one on flipped axes
            mirror = np.where(p == s[2:], 1.0, -1.0)
            out[i, :2] = s[:2] + mirror * (traj.unfolded[-1] - q)
        return out

    def offset(self, states, vec):
        out = states.copy()
        out[:, :2] += vec
        return out

    def difference(self, a, b) -> np.ndarray:
        return b[:, :2] - a[:, :2]

    @staticmethod
    def states(q, p) -> np.ndarray:
        q = np.atleast_2d(q)
        p = np.broadcast_to(np.atleast_2d(p), q.shape)
        return np.concatenate([q, p], axis=1)


class FreeParticleSource:
    """Free flight in phase space (q, p); separation in the full phase space."""

    kind = "free"

    def __init__(self, dim: int = 1, mass: float = 1.0, length_scale: float = 1.0):
        self.dim = dim
        self.mass = mass
        self.length_scale = length_scale

    def advance(self, states, t, h):
        out = states.copy()
        out[:, : self.dim] += states[:, self.dim:] * h / self.mass
        return out

    def offset(self, states, vec):
        return states + vec

    def difference(self, a, b):
        return b - a


# ---------------------------------------------------------------------------
# estimator


def finite_time_lyapunov(source, x0, delta0: float, t_span, tau: float, seed: int = 0,
                         direction=None) -> LyapunovSeries:
    """Benettin estimate lambda(t) = (1/t) sum log(|delta_k| / delta0).

    ``x0`` holds K reference states (rows).  The initial offset direction is
    drawn from ``seed`` unless ``direction`` is given; ``delta0`` is absolute
    and must lie in [1e-9, 1e-6] times the source length scale.
    """
    x0 = np.atleast_2d(np.asarray(x0, float))
    scale = source.length_scale
    lo, hi = DELTA0_RANGE
    if not (lo * scale * (1 - 1e-12) <= delta0 <= hi * scale * (1 + 1e-12)):
        raise ValueError(f"delta0={delta0} outside [{lo}, {hi}] x length scale")
    t0, t1 = map(float, t_span)
    if tau <= 0 or t1 <= t0:
        raise ValueError("need tau > 0 and an increasing t_span")
    k = x0.shape[0]
    ndim = source.difference(x0, x0).shape[1]
    if direction is None:
        d = make_rng(seed, stream=7).standard_normal((k, ndim))
    else:
        d = np.broadcast_to(np.asarray(direction, float), (k, ndim)).copy()
    d /= np.linalg.norm(d, axis=1)[:, None]
    a = x0.copy()
    b = source.offset(a, delta0 * d)
    n_win = int(np.ceil((t1 - t0) / tau - 1e-9))
    times = np.empty(n_win)
    lam = np.empty((n_win, k))
    seps = np.empty((n_win, k))
    refs = np.empty((n_win,) + a.shape)
    logs = np.zeros(k)
    t = t0
    for w in range(n_win):
        h = min(tau, t1 - t)
        both = source.advance(np.concatenate([a, b]), t, h)
        a, b = both[:k], both[k:]
        t = t0 + min((w + 1) * tau, t1 - t0)
        diff = source.difference(a, b)
        sep = np.linalg.norm(diff, axis=1)
        if np.any(sep >= SATURATION * scale):
            if w == 0:
                raise ValueError(f"tau too long: separation reached {sep.max():.3g} (domain scale {scale}) "
                                 "before the first renormalization")
            log.warning("separation saturated in window %d; estimate biased low", w)
        if np.any(sep == 0):
            raise ArithmeticError("pair collapsed to zero separation; delta0 below round-off")
        logs += np.log(sep / delta0)
        seps[w] = sep
        lam[w] = logs / (t - t0)
        times[w] = t
        refs[w] = a
        b = source.offset(a, diff * (delta0 / sep)[:, None])
    return LyapunovSeries(times, lam, seps, tau, delta0, seed, getattr(source, "kind", ""), refs)


def crossing_time(speed: float, L: float = 1.0) -> float:
    return L / speed
