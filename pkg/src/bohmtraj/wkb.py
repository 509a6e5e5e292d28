"""One-dimensional semiclassical waves and exact comparison solutions.

Conventions for a single turning point q_tp with the classically allowed
region on one side:

    W(q)  = |int_q^q_tp p dq'| / hbar            (allowed side)
    K(q)  = |int_q_tp^q |p| dq'| / hbar          (forbidden side)
    psi   = [exp(-iW) + B exp(+iW)] / sqrt(p)    allowed, B = -i
    psi   = T exp(-K) / sqrt(|p|)                forbidden, T = exp(-i pi/4)

exp(-iW) is the wave travelling toward the turning point.  A hard wall in
place of the ramp gives B = -1 (the standing wave vanishing at the wall).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.special import airy

from .field import Potential1D, WaveField
from .madelung import EPS_NODE, polar_decompose

QUAD_EPSREL = 1e-12
N_SCAN = 4097


@dataclass(frozen=True)
class ScatteringAmplitudes:
    B: complex
    T: complex
    E: float
    p1: float
    p2: complex  # imaginary when the transmitted channel is closed
    potential: dict | None = None

    @property
    def R(self) -> float:
        return float(abs(self.B) ** 2)

    @property
    def transmission(self) -> float:
        if np.isreal(self.p2) and np.real(self.p2) > 0:
            return float(np.real(self.p2) / self.p1 * abs(self.T) ** 2)
        return 0.0

    @property
    def flux_residual(self) -> float:
        return abs(self.R + self.transmission - 1.0)


# ---------------------------------------------------------------------------
# actions


def _momentum(potential, E: float, mass: float):
    return lambda x: np.sqrt(max(2.0 * mass * (E - float(potential(x))), 0.0))


def _interior_turning(potential, E: float, a: float, b: float) -> bool:
    x = np.linspace(a, b, N_SCAN)[1:-1]
    return bool(np.any(E - np.asarray(potential(x), float) <= 0.0))


def action_integral(potential, E: float, q0: float, q: float, mass: float = 1.0) -> float:
    """S = int_q0^q sqrt(2m(E - V)) dq' by adaptive quadrature.

    The end points may sit on turning points; an interior turning point is an
    error (use ``wkb_wave`` for the connection).
    """
    a, b = sorted((float(q0), float(q)))
    if a == b:
        return 0.0
    if _interior_turning(potential, E, a, b):
        raise ValueError(f"turning point inside [{a}, {b}]: primitive WKB is singular there; "
                         "use wkb_wave for the connection")
    pts = None
    if isinstance(potential, Potential1D):
        pts = [x for x in potential.breakpoints() if a < x < b] or None
    val, _ = integrate.quad(_momentum(potential, E, mass), a, b, epsabs=0.0, epsrel=QUAD_EPSREL,
                            limit=400, points=pts)
    return float(val if q >= q0 else -val)


def turning_point(potential, E: float, a: float, b: float) -> float:
    """Root of E = V(q) bracketed in [a, b]."""
    return float(optimize.brentq(lambda x: E - float(potential(x)), a, b, xtol=1e-15, rtol=1e-15))


def turning_points(potential, E: float, a: float, b: float) -> list[float]:
    x = np.linspace(a, b, N_SCAN)
    d = E - np.asarray(potential(x), float)
    out = []
    for i in np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0):
        out.append(turning_point(potential, E, x[i], x[i + 1]))
    out += [float(x[i]) for i in np.flatnonzero(d == 0.0)]
    return sorted(out)


def libration_action(potential, E: float, bracket, mass: float = 1.0) -> float:
    """Closed-orbit action, the loop integral of p dq, between the two turning points in ``bracket``."""
    tps = turning_points(potential, E, *bracket)
    if len(tps) != 2:
        raise ValueError(f"expected two turning points in {bracket}, found {len(tps)}")
    return 2.0 * action_integral(potential, E, tps[0], tps[1], mass)


def _cumulative_action(potential, E: float, q: np.ndarray, q_ref: float, mass: float, forbidden: bool):
    """|int_{q_ref}^{q_i} |p|| for sorted q on one side of q_ref."""
    if forbidden:
        f = lambda x: np.sqrt(max(2.0 * mass * (float(potential(x)) - E), 0.0))
    else:
        f = _momentum(potential, E, mass)
    order = np.argsort(np.abs(q - q_ref))
    out = np.empty(q.size)
    acc, last = 0.0, q_ref
    for i in order:
        lo, hi = sorted((last, q[i]))
        if hi > lo:
            acc += integrate.quad(f, lo, hi, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200)[0]
        out[i] = acc
        last = q[i]
    return out


# ---------------------------------------------------------------------------
# WKB waves


@dataclass
class WKBWave:
    q: np.ndarray
    psi: np.ndarray
    incident: np.ndarray
    reflected: np.ndarray
    allowed: np.ndarray
    kind: str                 # "plane", "turning", "wall"
    B: complex = 0.0
    T: complex = 0.0
    q_tp: float | None = None
    airy_length: float | None = None

    def valid(self, n_lengths: float = 2.0) -> np.ndarray:
        """Points farther than n_lengths Airy lengths from the turning point."""
        if self.q_tp is None or self.airy_length is None:
            return np.ones(self.q.size, bool)
        return np.abs(self.q - self.q_tp) > n_lengths * self.airy_length


def airy_length(slope: float, hbar: float = 1.0, mass: float = 1.0) -> float:
    return float((hbar**2 / (2.0 * mass * abs(slope))) ** (1.0 / 3.0))


def wkb_wave(potential, E: float, q, hbar: float = 1.0, mass: float = 1.0, wall: float | None = None,
             direction: int = 1) -> WKBWave:
    """Primitive semiclassical wave on the sample points ``q``.

    No turning point and no wall: plane wave exp(i direction S/hbar)/sqrt(p).
    ``wall``: hard wall at that position; reflection B = -1.
    One turning point: standard linear connection.  Two or more: error.
    """
    q = np.asarray(q, float)
    a, b = float(q.min()), float(q.max())
    V = np.asarray(potential(q), float)
    if wall is not None:
        if np.any(E <= V):
            raise ValueError("hard-wall wave requires E > V on the whole range")
        p = np.sqrt(2.0 * mass * (E - V))
        W = _cumulative_action(potential, E, q, wall, mass, False) / hbar
        inc = np.exp(-1j * W) / np.sqrt(p)
        ref = -np.exp(1j * W) / np.sqrt(p)
        return WKBWave(q, inc + ref, inc, ref, np.ones(q.size, bool), "wall", -1.0, 0.0, wall)
    tps = turning_points(potential, E, a, b)
    if len(tps) > 1:
        raise ValueError(f"{len(tps)} turning points in range; only a single turning point is supported")
    if not tps:
        if np.any(E <= V):
            raise ValueError("no propagating region on the requested range")
        p = np.sqrt(2.0 * mass * (E - V))
        S = _cumulative_action(potential, E, q, a, mass, False)
        inc = np.exp(1j * direction * S / hbar) / np.sqrt(p)
        return WKBWave(q, inc, inc, np.zeros_like(inc), np.ones(q.size, bool), "plane", 0.0, 1.0)
    qt = tps[0]
    allowed = E - V > 0
    slope = float(potential.derivative(qt)) if hasattr(potential, "derivative") else \
        (float(potential(qt + 1e-6)) - float(potential(qt - 1e-6))) / 2e-6
    ell = airy_length(slope, hbar, mass)
    B = -1j
    T = np.exp(-0.25j * np.pi)
    psi = np.zeros(q.size, complex)
    inc = np.zeros(q.size, complex)
    ref = np.zeros(q.size, complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        if allowed.any():
            qa = q[allowed]
            p = np.sqrt(2.0 * mass * (E - V[allowed]))
            W = _cumulative_action(potential, E, qa, qt, mass, False) / hbar
            inc[allowed] = np.exp(-1j * W) / np.sqrt(p)
            ref[allowed] = B * np.exp(1j * W) / np.sqrt(p)
            psi[allowed] = inc[allowed] + ref[allowed]
        fb = ~allowed
        if fb.any():
            qf = q[fb]
            kap = np.sqrt(2.0 * mass * (V[fb] - E))
            K = _cumulative_action(potential, E, qf, qt, mass, True) / hbar
            psi[fb] = T * np.exp(-K) / np.sqrt(kap)
    psi[~np.isfinite(psi)] = np.nan
    return WKBWave(q, psi, inc, ref, allowed, "turning", B, T, qt, ell)


# ---------------------------------------------------------------------------
# exact linear-ramp solution


def airy_ramp_exact(slope: float, E: float, q, hbar: float = 1.0, mass: float = 1.0, V0: float = 0.0):
    """Exact stationary state of V = V0 + slope*q (slope > 0), normalized so that
    its incident part matches exp(-iW)/sqrt(p) far from the turning point.

    Returns (psi, incident) where incident is the exact travelling component
    on the allowed side, built from the modulus-phase form Ai(-z) = M sin(theta),
    Bi(-z) = M cos(theta).
    """
    if slope <= 0:
        raise ValueError("slope must be positive (barrier to the right)")
    q = np.asarray(q, float)
    ell = airy_length(slope, hbar, mass)
    qt = (E - V0) / slope
    x = (q - qt) / ell
    C = 2.0 * np.sqrt(np.pi) * np.exp(-0.25j * np.pi) * np.sqrt(ell / hbar)
    ai, _, bi, _ = airy(x)
    psi = C * ai
    inc = np.zeros(q.size, complex)
    left = x < 0
    if left.any():
        M = np.hypot(ai[left], bi[left])
        z = -x[left]
        order = np.argsort(z)
        theta = np.empty(z.size)
        theta[order] = np.unwrap(np.arctan2(ai[left], bi[left])[order])
        inc[left] = 0.5j * C * M * np.exp(-1j * theta)
    return psi, inc


@dataclass
class AiryComparison:
    hbar: float
    q: np.ndarray
    z: np.ndarray               # (q_tp - q)/ell
    amplitude_error: np.ndarray  # | |inc_exact| / |inc_wkb| - 1 |
    phase_error: np.ndarray      # |arg(inc_exact / inc_wkb)| in radians
    relative_phase_error: np.ndarray  # phase_error / (W + pi/4)
    forbidden_amplitude_error: np.ndarray
    psi_exact: np.ndarray
    psi_wkb: np.ndarray

    @property
    def max_amplitude_error(self) -> float:
        return float(np.max(self.amplitude_error)) if self.amplitude_error.size else 0.0

    @property
    def max_phase_error(self) -> float:
        return float(np.max(self.relative_phase_error)) if self.relative_phase_error.size else 0.0

    @property
    def max_forbidden_error(self) -> float:
        e = self.forbidden_amplitude_error
        return float(np.max(e)) if e.size else 0.0

    def export(self, path) -> None:
        m = self.z > 0
        cols = np.column_stack([self.q[m], np.abs(self.psi_exact[m]), np.abs(self.psi_wkb[m]),
                                self.phase_error, self.amplitude_error])
        np.savetxt(path, cols, header="q abs_psi_exact abs_psi_wkb phase_difference amplitude_error",
                   fmt="%.17g")


def compare_airy(slope: float, E: float, q, hbar: float = 1.0, mass: float = 1.0, min_lengths: float = 2.0,
                 forbidden_range: float = 6.0) -> AiryComparison:
    """WKB wave against the exact ramp solution at the allowed points of ``q``
    farther than ``min_lengths`` Airy lengths from the turning point.

    The forbidden side is sampled separately over [min_lengths, forbidden_range]
    Airy lengths.
    """
    pot = Potential1D.linear(slope)
    ell = airy_length(slope, hbar, mass)
    qt = E / slope
    q = np.asarray(q, float)
    q = q[(qt - q) > min_lengths * ell]
    if q.size == 0:
        raise ValueError("no sample points beyond the exclusion zone")
    w = wkb_wave(pot, E, np.append(q, qt + ell * np.array([min_lengths, forbidden_range])), hbar, mass)
    exact, inc = airy_ramp_exact(slope, E, q, hbar, mass)
    n = q.size
    ratio = inc / w.incident[:n]
    amp = np.abs(np.abs(ratio) - 1.0)
    ph = np.abs(np.angle(ratio))
    z = (qt - q) / ell
    acc = (2.0 / 3.0) * z**1.5 + 0.25 * np.pi
    zf = np.linspace(min_lengths, forbidden_range, 200)
    qf = qt + ell * zf
    wf = wkb_wave(pot, E, np.concatenate([[q.min()], qf]), hbar, mass).psi[1:]
    ef, _ = airy_ramp_exact(slope, E, qf, hbar, mass)
    ferr = np.abs(np.abs(wf) / np.abs(ef) - 1.0)
    return AiryComparison(hbar, q, z, amp, ph, ph / acc, ferr, exact, w.psi[:n])


def hbar_error_scan(slope: float, E: float, hbars, window: tuple[float, float], mass: float = 1.0,
                    n_points: int = 400):
    """Max amplitude and relative phase error over a fixed physical window,
    given as distances (d_near, d_far) from the turning point, for each hbar.

    d_near should be at least two Airy lengths at the largest hbar.
    """
    qt = E / slope
    q = np.linspace(qt - window[1], qt - window[0], n_points)
    out = []
    for h in hbars:
        c = compare_airy(slope, E, q, h, mass, min_lengths=0.0)
        out.append((float(h), c.max_amplitude_error, c.max_phase_error))
    return np.array(out)


# ---------------------------------------------------------------------------
# step scattering


def _log_sinh(x):
    x = np.asarray(x, float)
    small = x < 20.0
    with np.errstate(over="ignore", divide="ignore"):
        return np.where(small, np.log(np.sinh(np.where(small, x, 1.0))),
                        x + np.log1p(-np.exp(-2.0 * x)) - np.log(2.0))


def step_scattering_exact(V0: float, V1: float, E: float, profile: str = "sharp", width: float = 0.0,
                          hbar: float = 1.0, mass: float = 1.0) -> ScatteringAmplitudes:
    """Analytic amplitudes for a wave incident from the V0 side.

    sharp: B = (p1 - p2)/(p1 + p2), T = 2 p1/(p1 + p2).
    soft: Fermi-function step V0 + (V1 - V0)/(1 + exp(-q/width)); only the
    magnitudes have a closed form, returned as real non-negative B and T.
    """
    if E <= min(V0, V1):
        raise ValueError("E below both plateaus: no propagating channel")
    if E <= V0:
        raise ValueError("incident channel closed (E <= V0)")
    desc = {"V0": V0, "V1": V1, "profile": profile, "width": width}
    p1 = np.sqrt(2.0 * mass * (E - V0))
    if E <= V1:
        kappa = np.sqrt(2.0 * mass * (V1 - E))
        p2 = 1j * kappa
        if profile == "sharp" or width == 0.0:
            return ScatteringAmplitudes(complex((p1 - p2) / (p1 + p2)), complex(2 * p1 / (p1 + p2)), E, p1, p2, desc)
        return ScatteringAmplitudes(1.0 + 0j, 0.0 + 0j, E, p1, p2, desc)
    p2 = np.sqrt(2.0 * mass * (E - V1))
    if V1 == V0:
        return ScatteringAmplitudes(0j, 1 + 0j, E, p1, p2, desc)
    if profile == "sharp" or width == 0.0:
        return ScatteringAmplitudes(complex((p1 - p2) / (p1 + p2)), complex(2 * p1 / (p1 + p2)), E, p1, p2, desc)
    if profile != "soft":
        raise ValueError(f"unknown profile {profile!r}")
    if width < 0:
        raise ValueError("width must be non-negative")
    k1, k2 = p1 / hbar, p2 / hbar
    a = np.pi * width
    lsum = _log_sinh(a * (k1 + k2))
    absB = np.exp(_log_sinh(a * abs(k1 - k2)) - lsum)
    trans = np.exp(_log_sinh(2 * a * k1) + _log_sinh(2 * a * k2) - 2 * lsum)
    absT = np.sqrt(trans * p1 / p2)
    return ScatteringAmplitudes(complex(absB), complex(absT), E, p1, p2, desc)


def soft_step_curve(V0: float, V1: float, E: float, widths, hbar: float = 1.0, mass: float = 1.0):
    """(p1*width/hbar, |B|) over a list of step widths."""
    p1 = np.sqrt(2.0 * mass * (E - V0))
    w = np.asarray(widths, float)
    b = np.array([abs(step_scattering_exact(V0, V1, E, "soft", x, hbar, mass).B) for x in w])
    return p1 * w / hbar, b


# ---------------------------------------------------------------------------
# freeze diagnostics


@dataclass(frozen=True)
class FreezeReport:
    E: float
    max_q_deviation: float  # max off-node |Q - (E - V)|
    max_speed: float
    n_nodes: int

    @property
    def relative_deviation(self) -> float:
        return self.max_q_deviation / abs(self.E)


def frozen_q_check(field: WaveField, E: float, potential=None, eps_node: float = EPS_NODE) -> FreezeReport:
    from .field import potential_values
    flow = polar_decompose(field, eps_node)
    V = potential_values(potential, field.grid)
    off = ~flow.node_mask
    dev = np.abs(flow.qpot[off] - (E - V[off]))
    return FreezeReport(float(E), float(dev.max()), flow.max_speed(), int(flow.node_mask.sum()))
