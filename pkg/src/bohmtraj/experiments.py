"""Experiment runners behind the command line.

Each runner reads a validated ``ExperimentConfig``, writes its data files
through a ``RunWriter`` and returns a JSON-able summary.  ``run`` stages all
output in a scratch directory and only moves it into place on success, so an
aborted run leaves nothing behind.
"""
from __future__ import annotations

import hashlib
import json
import logging
import platform
import shutil
import tempfile
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import bohm, chaos, classical, dos, wkb
from .config import ExperimentConfig
from .field import (Potential1D, box_grid, dump_field, energy_expectation, from_function, make_grid, norm,
                    normalize, position_moments, potential_values)
from .madelung import polar_decompose
from .propagator import (Absorber, billiard_evolve, billiard_project, evolve_split_step, init_gaussian,
                         resolved_reflection, split_step_frames, stability_bound)

log = logging.getLogger(__name__)

DT_SAFETY = 0.9  # fraction of the stability bound used when dt = 0 (auto)


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


PLOT_STUB = """\
# Plots the columnar outputs of this run: python plot.py [--save]
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent
TABLES = {tables!r}
TRACES = {traces!r}


def header(path):
    with open(path) as fh:
        line = fh.readline()
    return line.lstrip("# ").split("  ")[0].split() if line.startswith("#") else []


def plot_table(name):
    data = np.loadtxt(HERE / name, ndmin=2)
    cols = header(HERE / name)
    fig, ax = plt.subplots()
    for j in range(1, data.shape[1]):
        ax.plot(data[:, 0], data[:, j], label=cols[j] if j < len(cols) else f"col{{j}}")
    ax.set_xlabel(cols[0] if cols else "col0")
    ax.legend()
    ax.set_title(name)
    return fig


def plot_trace(name):
    data = np.loadtxt(HERE / name, ndmin=2)
    fig, ax = plt.subplots()
    for pid in np.unique(data[:, 1]):
        sel = data[:, 1] == pid
        if data.shape[1] > 3:
            ax.plot(data[sel, 2], data[sel, 3], lw=0.7)
        else:
            ax.plot(data[sel, 0], data[sel, 2], lw=0.7)
    ax.set_title(name)
    return fig


if __name__ == "__main__":
    figs = [(n, plot_table(n)) for n in TABLES] + [(n, plot_trace(n)) for n in TRACES]
    if "--save" in sys.argv:
        for n, fig in figs:
            fig.savefig(HERE / (Path(n).stem + ".png"), dpi=120)
    else:
        plt.show()
"""


class RunWriter:
    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []
        self.tables: list[str] = []
        self.traces: list[str] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        if name not in self.files:
            self.files.append(name)
        return p

    def table(self, name: str, columns, header: str, fmt="%.17g") -> None:
        np.savetxt(self.path(name), np.column_stack(columns), header=header, fmt=fmt)
        self.tables.append(name)

    def columnar(self, name: str) -> Path:
        """Path for a text table written by an ``export`` method."""
        self.tables.append(name)
        return self.path(name)

    def json(self, name: str, obj) -> None:
        self.path(name).write_text(dumps(obj))

    def trajectories(self, name: str, ens, stride: int = 1) -> None:
        bohm.export_trajectories(ens, self.path(name), stride)
        self.traces.append(name)

    def plot_stub(self) -> None:
        """A standalone matplotlib script drawing every columnar file of the run."""
        if self.tables or self.traces:
            self.path("plot.py").write_text(PLOT_STUB.format(tables=sorted(self.tables), traces=sorted(self.traces)))

    def checksums(self) -> dict[str, str]:
        out = {}
        for name in sorted(self.files):
            out[name] = hashlib.sha256((self.root / name).read_bytes()).hexdigest()
        return out


# ---------------------------------------------------------------------------
# helpers


def _potential(cfg: ExperimentConfig) -> Potential1D:
    p = cfg.section("potential")
    kind = p["kind"]
    if kind == "constant":
        return Potential1D.constant(p["V0"])
    if kind == "sharp":
        return Potential1D.sharp_step(p["V0"], p["V1"], p["q_step"])
    if kind == "soft":
        return Potential1D.soft_step(p["V0"], p["V1"] - p["V0"], p["q_step"], p["width"])
    if kind == "linear":
        return Potential1D.linear(p["slope"], p["V0"])
    return Potential1D.harmonic(p["omega"], cfg.section("system")["mass"])


def _line_grid(sys: dict, boundary: str = "periodic"):
    L = sys["L"]
    return make_grid(1, [(-0.5 * L, 0.5 * L)], sys["n_points"], boundary)


def _resolve_dt(dt: float, grid, V, hbar, mass, absorber) -> float:
    vmax = float(np.max(np.abs(V)))
    if absorber is not None:
        vmax += absorber.strength
    bound = stability_bound(grid, vmax, hbar, mass)
    return DT_SAFETY * bound if dt == 0 else dt


def _steps(t_end: float, dt: float, n_frames: int = 1) -> tuple[int, float]:
    """Steps per frame and the adjusted dt so frames land exactly on t_end."""
    per = int(np.ceil(t_end / (dt * n_frames) - 1e-9))
    return per, t_end / (per * n_frames)


def _billiard_setup(cfg: ExperimentConfig):
    sys, st = cfg.section("system"), cfg.section("state")
    grid = box_grid(sys["L"], sys["n_points"])
    psi0 = init_gaussian(grid, st["q0"], st["p0"], st["sigma"], sys["hbar"], sys["mass"])
    return grid, billiard_project(psi0, st["n_max"])


# ---------------------------------------------------------------------------
# runners


def run_evolve(cfg: ExperimentConfig, w: RunWriter, threads: int) -> dict:
    sys, st, it = cfg.section("system"), cfg.section("state"), cfg.section("integration")
    nf = it["n_frames"]
    rows = []
    if sys["geometry"] == "box":
        grid, coeffs = _billiard_setup(cfg)
        w.table("coefficients.txt", _coeff_columns(coeffs), "n m re im")
        for i, t in enumerate(np.linspace(0.0, it["t_end"], nf + 1)):
            f = billiard_evolve(coeffs, t, grid)
            dump_field(f, w.path(f"frames/frame_{i:04d}.bin"))
            mean, _ = position_moments(f)
            rows.append([t, norm(f), *mean, coeffs.energy()])
        extra = {"projection_residual": coeffs.residual, "dt_resolved": None}
    else:
        grid = _line_grid(sys)
        pot = _potential(cfg)
        absorber = Absorber() if it["absorber"] else None
        psi0 = init_gaussian(grid, st["q0"], st["p0"], st["sigma"], sys["hbar"], sys["mass"])
        dt = _resolve_dt(it["dt"], grid, potential_values(pot, grid), sys["hbar"], sys["mass"], absorber)
        per, dt = _steps(it["t_end"], dt, nf)
        frames = split_step_frames(psi0, pot, dt, per * nf, per, absorber)
        for i, f in enumerate(frames):
            dump_field(f, w.path(f"frames/frame_{i:04d}.bin"))
            mean, _ = position_moments(normalize(f)) if norm(f) > 0 else (np.array([np.nan]), None)
            rows.append([f.time, norm(f), *mean, energy_expectation(normalize(f), pot)])
        extra = {"dt_resolved": dt, "steps": per * nf}
    rows = np.array(rows)
    names = "t norm " + " ".join(f"mean_q{i + 1}" for i in range(rows.shape[1] - 3)) + " energy"
    w.table("observables.txt", rows.T, names)
    return {"final_norm": float(rows[-1, 1]), "norm_drift": float(np.max(np.abs(rows[:, 1] - rows[0, 1]))), **extra}


def _coeff_columns(coeffs):
    n = np.arange(1, coeffs.n_max + 1)
    N, M = np.meshgrid(n, n, indexing="ij")
    c = coeffs.coeffs
    return [N.ravel(), M.ravel(), c.real.ravel(), c.imag.ravel()]


def run_bohm_trace(cfg: ExperimentConfig, w: RunWriter, threads: int) -> dict:
    sys, st, it = cfg.section("system"), cfg.section("state"), cfg.section("integration")
    n = cfg.section("ensemble")["n_particles"]
    stride = cfg.section("output")["stride"]
    samples = np.linspace(0.0, it["t_end"], it["n_samples"] + 1)[1:]
    out = {}
    if sys["geometry"] == "box":
        _, coeffs = _billiard_setup(cfg)
        flow = bohm.BilliardFlow(coeffs)
        norm2 = coeffs.norm2()
        snap = lambda t: flow.flow_at(t, sys["n_points"])
        x0 = bohm.sample_initial(snap(0.0), n, cfg.seed, density=lambda p: flow.density(p, 0.0) / norm2)
    else:
        grid = _line_grid(sys)
        pot = _potential(cfg)
        absorber = Absorber() if it["absorber"] else None
        psi0 = init_gaussian(grid, st["q0"], st["p0"], st["sigma"], sys["hbar"], sys["mass"])
        dt = _resolve_dt(it["dt"], grid, potential_values(pot, grid), sys["hbar"], sys["mass"], absorber)
        # frames every half trajectory step, so RK4 midpoints land on stored frames
        n_frames = int(np.ceil(2 * it["t_end"] / it["dt_traj"] - 1e-9))
        per, dt = _steps(it["t_end"], min(dt, it["t_end"] / n_frames), n_frames)
        frames = split_step_frames(psi0, pot, dt, per * n_frames, per, absorber)
        flow = bohm.GridFlow(frames, periodic=absorber is None)
        snap = lambda t: flow.flow_at(t)
        x0 = bohm.sample_initial(snap(0.0), n, cfg.seed)
        out["dt_resolved"] = dt
    ens = bohm.integrate_ensemble(flow, x0, (0.0, it["t_end"]), it["dt_traj"], sample_times=samples,
                                  seed=cfg.seed, workers=threads)
    w.trajectories("trajectories.txt", ens, stride)
    if cfg.section("diagnostics")["equivariance"]:
        ks = []
        for i, t in enumerate(ens.times):
            keep = ~ens.escaped if i else np.ones(ens.n_particles, bool)
            ks.append(bohm.equivariance_test(ens.positions[i][keep], snap(t)).statistic)
        w.table("equivariance.txt", [ens.times, ks], "t ks_statistic")
        out["ks_max"] = float(max(ks))
        out["ks_line"] = 1.36 / np.sqrt(n)
    out.update(ens.summary())
    return out


def run_freeze_check(cfg: ExperimentConfig, w: RunWriter, threads: int) -> dict:
    sys, st, it = cfg.section("system"), cfg.section("state"), cfg.section("integration")
    hbar, mass, L = sys["hbar"], sys["mass"], sys["L"]
    n = cfg.section("ensemble")["n_particles"]
    if sys["geometry"] == "box":
        from .propagator import billiard_mode, SpectralCoeffs
        a, b = st["mode"]
        grid = box_grid(L, sys["n_points"])
        field = normalize(billiard_mode(grid, a, b, hbar, mass))
        E = hbar**2 * np.pi**2 * (a * a + b * b) / (2 * mass * L * L)
        c = np.zeros((max(a, b), max(a, b)), complex)
        c[a - 1, b - 1] = 1.0
        flow = bohm.BilliardFlow(SpectralCoeffs(L, c, hbar, mass))
    else:
        (a,) = st["mode"]
        grid = make_grid(1, [(0.0, L)], sys["n_points"], "dirichlet")
        field = normalize(from_function(grid, lambda q: np.sin(a * np.pi * q / L) + 0j, hbar, mass))
        E = hbar**2 * np.pi**2 * a * a / (2 * mass * L * L)
        flow = bohm.StationaryFlow(field)
    rep = wkb.frozen_q_check(field, E, None)
    t_end = it["periods"] * hbar / E
    dt_traj = it["dt_traj"] or t_end / 1000
    x0 = bohm.sample_initial(polar_decompose(field), n, cfg.seed)
    ens = bohm.integrate_ensemble(flow, x0, (0.0, t_end), dt_traj, sample_times=np.linspace(0, t_end, 11)[1:],
                                  seed=cfg.seed, workers=threads)
    w.trajectories("trajectories.txt", ens, cfg.section("output")["stride"])
    summary = {"E": E, "t_end": t_end, "dt_traj": dt_traj, "max_speed_grid": rep.max_speed,
               "q_deviation_relative": rep.relative_deviation,
               "max_displacement": float(ens.displacement().max()),
               "max_displacement_over_L": float(ens.displacement().max() / L), **ens.summary()}
    w.json("report.json", summary)
    return summary


def run_lyapunov(cfg: ExperimentConfig, w: RunWriter, threads: int) -> dict:
    sys, st, ly, it = (cfg.section(s) for s in ("system", "state", "lyapunov", "integration"))
    L = sys["L"]
    _, coeffs = _billiard_setup(cfg)
    flow = bohm.BilliardFlow(coeffs)
    norm2 = coeffs.norm2()
    refs = bohm.sample_initial(flow.flow_at(0.0), ly["n_reference"], cfg.seed,
                               density=lambda p: flow.density(p, 0.0) / norm2)
    src = chaos.BohmianPairSource(flow, it["dt_traj"], L)
    ser = chaos.finite_time_lyapunov(src, refs, ly["delta0"] * L, (0.0, it["t_end"]), ly["tau"], cfg.seed)
    ser.export(w.columnar("lyapunov_bohmian.txt"))
    k = refs.shape[0]
    t_col = np.repeat(ser.times, k)
    id_col = np.tile(np.arange(k), ser.times.size)
    pos = ser.reference.reshape(-1, 2)
    w.table("reference_trajectories.txt", [t_col, id_col, pos[:, 0], pos[:, 1]], "t particle_id q q2",
            fmt=["%.17g", "%d", "%.17g", "%.17g"])
    plateau, plateau_sd = ser.plateau()
    out = {"lambda_bohmian": ser.final, "lambda_bohmian_stderr": ser.spread(),
           "plateau": plateau, "plateau_sd": plateau_sd, "n_windows": int(ser.times.size)}
    if ly["classical_baseline"]:
        cs = chaos.ClassicalBilliardSource(L, sys["mass"])
        ser_c = chaos.finite_time_lyapunov(cs, cs.states(refs, st["p0"]), ly["delta0"] * L, (0.0, it["t_end"]),
                                           ly["tau"], cfg.seed)
        ser_c.export(w.columnar("lyapunov_classical.txt"))
        out["lambda_classical"] = ser_c.final
        out["ratio_to_classical"] = ser.final / max(abs(ser_c.final), np.finfo(float).tiny)
    return out


def run_wkb_compare(cfg: ExperimentConfig, w: RunWriter, threads: int) -> dict:
    sys, p = cfg.section("system"), cfg.section("wkb")
    hbar, mass = sys["hbar"], sys["mass"]
    F, E = p["slope"], p["E"]
    qt = E / F
    ell = wkb.airy_length(F, hbar, mass)
    q = np.linspace(qt - p["window_far"], qt - p["min_lengths"] * ell, p["n_points"])
    c = wkb.compare_airy(F, E, q, hbar, mass, p["min_lengths"] * (1 - 1e-9))
    c.export(w.columnar("comparison.txt"))
    hs = p["hbar_values"]
    near = p["min_lengths"] * wkb.airy_length(F, max(hs), mass)
    scan = wkb.hbar_error_scan(F, E, sorted(hs, reverse=True), (near, p["window_far"]), mass)
    w.table("hbar_scan.txt", scan.T, "hbar max_amplitude_error max_relative_phase_error")
    mono = bool(np.all(np.diff(scan[:, 1]) < 0) and np.all(np.diff(scan[:, 2]) < 0))
    return {"airy_length": ell, "turning_point": qt, "max_amplitude_error": c.max_amplitude_error,
            "max_relative_phase_error": c.max_phase_error, "forbidden_amplitude_error": c.max_forbidden_error,
            "monotone_in_hbar": mono}


def run_step_scan(cfg: ExperimentConfig, w: RunWriter, threads: int) -> dict:
    sys, s = cfg.section("system"), cfg.section("scan")
    hbar, mass = sys["hbar"], sys["mass"]
    grid = _line_grid(sys)
    p1 = np.sqrt(2 * mass * (s["E"] - s["V0"]))
    psi0 = init_gaussian(grid, [s["q0"]], [p1], s["sigma"], hbar, mass)
    rows = []
    for width in s["widths"]:
        if s["profile"] == "sharp" or width == 0:
            pot = Potential1D.sharp_step(s["V0"], s["V1"], 0.0)
            exact = wkb.step_scattering_exact(s["V0"], s["V1"], s["E"], "sharp", 0.0, hbar, mass)
        else:
            pot = Potential1D.soft_step(s["V0"], s["V1"] - s["V0"], 0.0, width)
            exact = wkb.step_scattering_exact(s["V0"], s["V1"], s["E"], "soft", width, hbar, mass)
        dt = _resolve_dt(s["dt"], grid, potential_values(pot, grid), hbar, mass, None)
        nsteps, dt = _steps(s["t_end"], dt)
        final = evolve_split_step(psi0, pot, dt, nsteps)
        R = resolved_reflection(psi0, final, 0.0, p1 / hbar)
        rows.append([width, p1 * width / hbar, exact.R, R, dt])
    rows = np.array(rows)
    w.table("scan.txt", rows.T, "width p_width_over_hbar R_exact R_split_step dt")
    rel = np.abs(rows[:, 3] / rows[:, 2] - 1)
    return {"max_relative_error": float(rel.max()), "R_exact": rows[:, 2].tolist(), "R_numeric": rows[:, 3].tolist()}


def _spectrum(cfg):
    sys, sp = cfg.section("system"), cfg.section("spectrum")
    return dos.billiard_spectrum(sys["L"], sys["hbar"], sys["mass"], sp["n_max"])


def run_dos(cfg: ExperimentConfig, w: RunWriter, threads: int) -> dict:
    sp = cfg.section("spectrum")
    spec = _spectrum(cfg)
    spec.dump(w.path("spectrum.txt"))
    E = np.linspace(sp["E_min"], sp["E_max"], sp["n_E"])
    d = dos.smoothed_dos(spec, sp["epsilon"], E, sp["kernel"], workers=threads)
    cl = dos.smoothed_classical_term(spec, sp["epsilon"], E, sp["kernel"])
    rho = dos.weyl_term(spec, 1.0)
    w.table("dos.txt", [E, d.values, cl, np.full(E.size, rho), d.tail], "E dos smoothed_classical weyl tail_estimate")
    fit = dos.weyl_slope_fit(spec, (sp["fit_E_min"], sp["fit_E_max"]))
    return {"weyl_density": rho, "fit_slope": fit.slope, "fit_relative_error": fit.relative_error,
            "residual_vs_smoothed": float(np.mean(np.abs(d.values - cl)) / rho),
            "residual_vs_weyl": float(np.mean(np.abs(d.values - rho)) / rho),
            "cutoff_epsilon_at_E_max": dos.cutoff_epsilon(sp["E_max"], spec.L, spec.hbar, spec.mass),
            "completeness_bound": spec.completeness_bound, "max_tail_estimate": float(d.tail.max())}


def run_length_spectrum(cfg: ExperimentConfig, w: RunWriter, threads: int) -> dict:
    sp = cfg.section("spectrum")
    spec = _spectrum(cfg)
    ls = dos.length_spectrum(spec, sp["epsilon"], (sp["E_min"], sp["E_max"]), sp["max_length"], n_k=sp["n_k"])
    ls.export(w.columnar("length_spectrum.txt"))
    expected = dos.orbit_lengths(spec.L, sp["max_length"])
    near = [expected[np.argmin(np.abs(expected - p))] for p in ls.peaks]
    w.table("peaks.txt", [ls.peaks, ls.heights, near], "length height nearest_orbit_length")
    return {"bin_width": ls.bin_width, "peaks": ls.peaks.tolist(), "expected": expected.tolist()}


def run_microcanonical(cfg: ExperimentConfig, w: RunWriter, threads: int) -> dict:
    sys, sp = cfg.section("system"), cfg.section("spectrum")
    spec = _spectrum(cfg)
    mw = dos.microcanonical_weights(spec, sp["E"], sp["epsilon"])
    k = mw.weights.size
    w.table("weights.txt", [spec.n[:k], spec.m[:k], spec.levels[:k], mw.weights], "n m E weight",
            fmt=["%d", "%d", "%.17g", "%.17g"])
    grid = box_grid(spec.L, sys["n_points"])
    rho = mw.position_density(grid)
    X, Y = grid.mesh()
    w.table("density.txt", [X.ravel(), Y.ravel(), rho.ravel()], "q q2 rho")
    ref = float(dos.smoothed_dos(spec, sp["epsilon"], [sp["E"]]).values[0]) \
        if sp["E"] <= spec.completeness_bound - 10 * sp["epsilon"] else None
    return {"weight_sum": mw.total, "smoothed_dos": ref,
            "density_integral": float(rho.sum() * grid.cell_volume)}


def run_bipolar_demo(cfg: ExperimentConfig, w: RunWriter, threads: int) -> dict:
    sys, st, it = cfg.section("system"), cfg.section("state"), cfg.section("integration")
    hbar, mass = sys["hbar"], sys["mass"]
    grid = _line_grid(sys)
    p = hbar * 2 * np.pi * st["wavenumber_index"] / sys["L"]
    field = normalize(from_function(grid, lambda q: 2 * np.cos(p * q / hbar) + 0j, hbar, mass))
    E = p * p / (2 * mass)
    plus, minus = bohm.bipolar_decompose_1d(field, E)
    recomposition = float(np.max(np.abs(plus.values + minus.values - field.values)))
    n = cfg.section("ensemble")["n_particles"]
    x0 = bohm.sample_initial(polar_decompose(field), n, cfg.seed)
    span = (0.0, it["t_end"])
    res = {"momentum": p, "energy": E, "recomposition_error": recomposition}
    for tag, f, kind in (("plus", plus, "bipolar+"), ("minus", minus, "bipolar-"), ("monopolar", field, "bohmian")):
        ens = bohm.integrate_ensemble(bohm.StationaryFlow(normalize(f)), x0, span, it["dt_traj"], seed=cfg.seed,
                                      kind=kind, workers=threads)
        w.trajectories(f"trajectories_{tag}.txt", ens)
        if tag == "monopolar":
            res["monopolar_max_displacement"] = float(ens.displacement().max())
        else:
            sign = 1.0 if tag == "plus" else -1.0
            moved = ens.positions[-1, :, 0] - ens.positions[0, :, 0]
            res[f"{tag}_max_error"] = float(np.max(np.abs(moved - sign * p * it["t_end"] / mass)))
    return res


def run_perturbative_phase(cfg: ExperimentConfig, w: RunWriter, threads: int) -> dict:
    """First-order test: Q and -dQ/dq integrated along the unperturbed classical path."""
    sys, st, it = cfg.section("system"), cfg.section("state"), cfg.section("integration")
    hbar, mass = sys["hbar"], sys["mass"]
    grid = _line_grid(sys)
    psi0 = init_gaussian(grid, [st["q0"]], [st["p0"]], st["sigma"], hbar, mass)
    n_frames = int(np.ceil(it["t_end"] / it["dt"] - 1e-9))
    inner = DT_SAFETY * stability_bound(grid, 0.0, hbar, mass)
    per, dt = _steps(it["t_end"], min(inner, it["t_end"] / n_frames), n_frames)
    frames = split_step_frames(psi0, None, dt, per * n_frames, per)
    flow = bohm.GridFlow(frames)
    n = cfg.section("ensemble")["n_particles"]
    x0 = bohm.sample_initial(flow.flow_at(0.0), n, cfg.seed)[:, 0]
    ens = bohm.integrate_ensemble(flow, x0, (0.0, it["t_end"]), it["dt_traj"],
                                  sample_times=[f.time for f in frames[1:]], seed=cfg.seed, workers=threads)
    t = ens.times
    qc = x0[None, :] + st["p0"] * t[:, None] / mass
    q_axis = grid.axis(0)
    Qs = np.empty_like(qc)
    Fs = np.empty_like(qc)
    for i, f in enumerate(frames):
        snap = polar_decompose(normalize(f))
        Q = snap.qpot
        force = -np.gradient(Q, grid.spacing[0])
        Qs[i] = np.interp(qc[i], q_axis, Q)
        Fs[i] = np.interp(qc[i], q_axis, force)
    from scipy.integrate import cumulative_trapezoid
    phase = -cumulative_trapezoid(Qs, t, axis=0, initial=0.0)
    vel = cumulative_trapezoid(Fs / mass, t, axis=0, initial=0.0)
    disp = cumulative_trapezoid(vel, t, axis=0, initial=0.0)
    qp = qc + disp
    qb = ens.positions[:, :, 0]
    T, N = qb.shape
    w.table("comparison.txt", [np.repeat(t, N), np.tile(np.arange(N), T), qb.ravel(), qc.ravel(), qp.ravel(),
                               phase.ravel()], "t particle_id q_bohm q_classical q_perturbative phase_perturbative",
            fmt=["%.17g", "%d", "%.17g", "%.17g", "%.17g", "%.17g"])
    return {"max_bohm_minus_classical": float(np.nanmax(np.abs(qb - qc))),
            "max_bohm_minus_perturbative": float(np.nanmax(np.abs(qb - qp))),
            "dt_resolved": dt}


RUNNERS = {
    "evolve": run_evolve, "bohm-trace": run_bohm_trace, "freeze-check": run_freeze_check,
    "lyapunov": run_lyapunov, "wkb-compare": run_wkb_compare, "step-scan": run_step_scan, "dos": run_dos,
    "length-spectrum": run_length_spectrum, "microcanonical": run_microcanonical,
    "bipolar-demo": run_bipolar_demo, "perturbative-phase": run_perturbative_phase,
}


def run(cfg: ExperimentConfig, out_dir, threads: int = 1) -> dict:
    """Execute one experiment; returns the manifest written to ``out_dir/manifest.json``."""
    out_dir = Path(out_dir)
    created = not out_dir.exists()
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    t0 = time.perf_counter()
    try:
        writer = RunWriter(stage)
        summary = RUNNERS[cfg.kind](cfg, writer, max(1, int(threads)))
        writer.plot_stub()
        sums = writer.checksums()
        manifest = {
            "kind": cfg.kind,
            "seed": cfg.seed,
            "parameters": cfg.echo(),
            "versions": {"package": package_version(), "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "files": sums,
            "summary": summary,
            "wall_time_s": round(time.perf_counter() - t0, 3),
        }
        (stage / "manifest.json").write_text(dumps(manifest))
        for name in writer.files + ["manifest.json"]:
            dest = out_dir / name
            dest.parent.mkdir(parents=True, exist_ok=True)
            if dest.exists():
                dest.unlink()
            (stage / name).replace(dest)
        return manifest
    finally:
        shutil.rmtree(stage, ignore_errors=True)
        if created and not any(out_dir.iterdir()):
            out_dir.rmdir()
