"""Polar (hydrodynamic) decomposition of wave fields.

Everything is computed from spectral derivatives of psi itself, never from
|psi| or an unwrapped phase:

    v   = (hbar/m) Im(grad psi / psi)
    Q   = -(hbar^2/2m) lap R / R
        = -(hbar^2/2m) [Re(lap psi / psi) + |Im(grad psi / psi)|^2]

The second form of Q is an identity for psi = R exp(iS/hbar).  It avoids the
kinks of |psi| at nodal lines, which would otherwise pollute a spectral
Laplacian of R over the whole grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import Grid, WaveField, ensure_normalized, gradient, laplacian, potential_values

EPS_NODE = 1e-6


@dataclass(frozen=True)
class FlowSnapshot:
    grid: Grid
    time: float
    rho: np.ndarray
    velocity: np.ndarray  # (dim,) + grid.shape; zero on the node mask
    qpot: np.ndarray      # NaN on the node mask
    node_mask: np.ndarray
    hbar: float = 1.0
    mass: float = 1.0

    def total_probability(self) -> float:
        return float(np.sum(self.rho) * self.grid.cell_volume)

    def max_speed(self) -> float:
        speed = np.sqrt(np.sum(self.velocity**2, axis=0))
        off = ~self.node_mask
        return float(speed[off].max()) if off.any() else 0.0


def _log_derivatives(field: WaveField, mask: np.ndarray):
    psi = field.values
    safe = np.where(mask, 1.0, psi)
    g = gradient(psi, field.grid) / safe
    lap = laplacian(psi, field.grid) / safe
    return g, lap


def node_mask(rho: np.ndarray, eps_node: float = EPS_NODE) -> np.ndarray:
    return rho < eps_node * rho.max()


def polar_decompose(field: WaveField, eps_node: float = EPS_NODE) -> FlowSnapshot:
    ensure_normalized(field)
    rho = field.density
    if rho.max() == 0.0:
        raise ValueError("null amplitude")
    mask = node_mask(rho, eps_node)
    glog, laplog = _log_derivatives(field, mask)
    coef = field.hbar / field.mass
    vel = coef * glog.imag
    vel[:, mask] = 0.0
    q = -(field.hbar**2) / (2.0 * field.mass) * (laplog.real + np.sum(glog.imag**2, axis=0))
    q[mask] = np.nan
    for arr in (rho, vel, q, mask):
        arr.setflags(write=False)
    return FlowSnapshot(field.grid, field.time, rho, vel, q, mask, field.hbar, field.mass)


def quantum_potential(field: WaveField, eps_node: float = EPS_NODE) -> np.ndarray:
    """Q on the grid; NaN (excluded from statistics) where the node mask is set."""
    return polar_decompose(field, eps_node).qpot


def probability_current(field: WaveField) -> np.ndarray:
    psi = field.values
    return (field.hbar / field.mass) * np.imag(np.conj(psi) * gradient(psi, field.grid))


def continuity_residual(before: WaveField, now: WaveField, after: WaveField, dt: float) -> float:
    """||d rho/dt + div J|| / ||d rho/dt|| with a centred time difference."""
    drho = (after.density - before.density) / (2.0 * dt)
    J = probability_current(now)
    div = sum(gradient(J[ax], now.grid)[ax] for ax in range(now.grid.dim))
    scale = np.sqrt(np.sum(drho**2))
    return float(np.sqrt(np.sum((drho + div) ** 2)) / scale)


def hamilton_jacobi_residual(before: WaveField, now: WaveField, after: WaveField, dt: float,
                             potential=None, energy_scale: float | None = None,
                             eps_node: float = EPS_NODE) -> float:
    """rho-weighted L2 norm of -dS/dt - (m v^2/2 + V + Q), relative to an energy scale.

    dS/dt comes from the phase of psi(t+dt)/psi(t-dt), which needs no unwrapping
    as long as the phase advance over 2 dt stays below pi.
    """
    flow = polar_decompose(now, eps_node)
    off = ~flow.node_mask
    ratio = after.values[off] / before.values[off]
    dSdt = now.hbar * np.angle(ratio) / (2.0 * dt)
    V = potential_values(potential, now.grid)[off]
    ke = 0.5 * now.mass * np.sum(flow.velocity[:, off] ** 2, axis=0)
    r = -dSdt - (ke + V + flow.qpot[off])
    w = flow.rho[off]
    if energy_scale is None:
        energy_scale = abs(np.sum(w * (ke + V + flow.qpot[off])) / np.sum(w))
    return float(np.sqrt(np.sum(w * r**2) / np.sum(w)) / energy_scale)


def export_flow_text(flow: FlowSnapshot, path) -> None:
    cols = [q.ravel() for q in flow.grid.mesh()]
    cols.append(flow.rho.ravel())
    cols += [flow.velocity[ax].ravel() for ax in range(flow.grid.dim)]
    cols += [flow.qpot.ravel(), flow.node_mask.ravel().astype(float)]
    names = ["q", "q2"][: flow.grid.dim] + ["rho"] + ["v", "v2"][: flow.grid.dim] + ["Q", "node"]
    np.savetxt(path, np.column_stack(cols), header=" ".join(names) + f"  t={flow.time!r}", fmt="%.17g")
