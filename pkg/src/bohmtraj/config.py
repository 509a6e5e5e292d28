"""Strict INI experiment configuration.

Every experiment kind has a fixed schema of sections and typed keys with
defaults.  Unknown sections or keys are errors, every problem is collected
before raising, and the resolved configuration (defaults included) is what
gets echoed into the run manifest.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError

KINDS = ("evolve", "bohm-trace", "freeze-check", "lyapunov", "wkb-compare", "step-scan", "dos",
         "length-spectrum", "microcanonical", "bipolar-demo", "perturbative-phase")


@dataclass(frozen=True)
class Param:
    kind: str                  # float, int, bool, str, floats, ints
    default: Any
    check: Callable[[Any], str | None] | None = None
    choices: tuple | None = None


def positive(x):
    return None if x > 0 else "must be > 0"


def non_negative(x):
    return None if x >= 0 else "must be >= 0"


def at_least(n):
    return lambda x: None if x >= n else f"must be >= {n}"


def all_positive(xs):
    return None if xs and all(x > 0 for x in xs) else "must be a non-empty list of positive values"


def seed_check(x):
    return None if 0 <= x < 2**64 else "must be an unsigned 64-bit integer"


# fragments shared across kinds
SYSTEM = {
    "hbar": Param("float", 1.0, positive),
    "mass": Param("float", 1.0, positive),
    "L": Param("float", 1.0, positive),
}
GRID = {"n_points": Param("int", 128, at_least(16))}
POTENTIAL = {
    "kind": Param("str", "constant", choices=("constant", "sharp", "soft", "linear", "harmonic")),
    "V0": Param("float", 0.0),
    "V1": Param("float", 0.0),
    "q_step": Param("float", 0.0),
    "width": Param("float", 0.1, positive),
    "slope": Param("float", 0.0),
    "omega": Param("float", 1.0, positive),
}
PACKET = {
    "q0": Param("floats", [0.5, 0.5]),
    "p0": Param("floats", [10.0, 6.0]),
    "sigma": Param("float", 0.08, positive),
}


def _schema() -> dict[str, dict[str, dict[str, Param]]]:
    s: dict[str, dict[str, dict[str, Param]]] = {}
    geometry = {"geometry": Param("str", "box", choices=("box", "line"))}
    s["evolve"] = {
        "system": {**geometry, **SYSTEM, **GRID},
        "potential": POTENTIAL,
        "state": {**PACKET, "n_max": Param("int", 32, at_least(1))},
        "integration": {"t_end": Param("float", 0.1, positive), "dt": Param("float", 0.0, non_negative),
                        "n_frames": Param("int", 10, at_least(1)), "absorber": Param("bool", False)},
    }
    s["bohm-trace"] = {
        "system": {**geometry, **SYSTEM, **GRID},
        "potential": POTENTIAL,
        "state": {**PACKET, "n_max": Param("int", 30, at_least(1))},
        "ensemble": {"n_particles": Param("int", 1024, at_least(1))},
        "integration": {"t_end": Param("float", 0.02, positive), "dt": Param("float", 0.0, non_negative),
                        "dt_traj": Param("float", 5e-4, positive), "n_samples": Param("int", 4, at_least(1)),
                        "absorber": Param("bool", False)},
        "output": {"stride": Param("int", 1, at_least(1))},
        "diagnostics": {"equivariance": Param("bool", True)},
    }
    s["freeze-check"] = {
        "system": {**geometry, **SYSTEM, **GRID},
        "state": {"mode": Param("ints", [1, 1], all_positive)},
        "ensemble": {"n_particles": Param("int", 64, at_least(1))},
        "integration": {"periods": Param("float", 10.0, positive), "dt_traj": Param("float", 0.0, non_negative)},
        "output": {"stride": Param("int", 1, at_least(1))},
    }
    s["lyapunov"] = {
        "system": {**SYSTEM, "n_points": Param("int", 128, at_least(16))},
        "state": {"q0": Param("floats", [0.35, 0.45]), "p0": Param("floats", [20.0, 13.0]),
                  "sigma": Param("float", 0.06, positive), "n_max": Param("int", 48, at_least(8))},
        "lyapunov": {"delta0": Param("float", 1e-7, positive), "tau": Param("float", 0.02, positive),
                     "n_reference": Param("int", 6, at_least(1)), "classical_baseline": Param("bool", True)},
        "integration": {"t_end": Param("float", 0.5, positive), "dt_traj": Param("float", 2.5e-4, positive)},
    }
    s["wkb-compare"] = {
        "system": {"hbar": Param("float", 1.0, positive), "mass": Param("float", 1.0, positive)},
        "wkb": {"slope": Param("float", 1.0, positive), "E": Param("float", 5.0),
                "hbar_values": Param("floats", [1.0, 0.5, 0.25, 0.125], all_positive),
                "window_far": Param("float", 10.0, positive), "min_lengths": Param("float", 2.0, positive),
                "n_points": Param("int", 400, at_least(16))},
    }
    s["step-scan"] = {
        "system": {"hbar": Param("float", 1.0, positive), "mass": Param("float", 1.0, positive),
                   "L": Param("float", 60.0, positive), "n_points": Param("int", 4096, at_least(16))},
        "scan": {"E": Param("float", 50.0, positive), "V0": Param("float", 0.0), "V1": Param("float", 37.5),
                 "profile": Param("str", "sharp", choices=("sharp", "soft")),
                 "widths": Param("floats", [0.0]), "sigma": Param("float", 2.0, positive),
                 "q0": Param("float", -12.0), "t_end": Param("float", 2.4, positive),
                 "dt": Param("float", 0.0, non_negative)},
    }
    spectrum = {"n_max": Param("int", 200, at_least(8)), "epsilon": Param("float", 1.0, positive),
                "kernel": Param("str", "lorentzian", choices=("lorentzian", "gaussian"))}
    s["dos"] = {
        "system": SYSTEM,
        "spectrum": {**spectrum, "E_min": Param("float", 200.0, positive), "E_max": Param("float", 400.0, positive),
                     "n_E": Param("int", 201, at_least(2)), "fit_E_min": Param("float", 100.0, positive),
                     "fit_E_max": Param("float", 1000.0, positive)},
    }
    s["length-spectrum"] = {
        "system": SYSTEM,
        "spectrum": {**spectrum, "n_max": Param("int", 70, at_least(8)), "epsilon": Param("float", 5.0, positive),
                     "E_min": Param("float", 2000.0, positive), "E_max": Param("float", 20000.0, positive),
                     "max_length": Param("float", 6.0, positive), "n_k": Param("int", 8192, at_least(64))},
    }
    s["microcanonical"] = {
        "system": {**SYSTEM, **GRID},
        "spectrum": {"n_max": Param("int", 32, at_least(8)), "epsilon": Param("float", 1.0, positive),
                     "E": Param("float", 100.0, positive)},
    }
    s["bipolar-demo"] = {
        "system": {"hbar": Param("float", 1.0, positive), "mass": Param("float", 1.0, positive),
                   "L": Param("float", 20.0, positive), "n_points": Param("int", 512, at_least(16))},
        "state": {"wavenumber_index": Param("int", 10, at_least(1))},
        "ensemble": {"n_particles": Param("int", 16, at_least(1))},
        "integration": {"t_end": Param("float", 1.0, positive), "dt_traj": Param("float", 1e-3, positive)},
    }
    s["perturbative-phase"] = {
        "system": {"hbar": Param("float", 1.0, positive), "mass": Param("float", 1.0, positive),
                   "L": Param("float", 40.0, positive), "n_points": Param("int", 1024, at_least(16))},
        "state": {"q0": Param("float", 0.0), "p0": Param("float", 0.0), "sigma": Param("float", 0.5, positive)},
        "ensemble": {"n_particles": Param("int", 8, at_least(1))},
        "integration": {"t_end": Param("float", 2.0, positive), "dt": Param("float", 0.005, positive),
                        "dt_traj": Param("float", 0.005, positive)},
    }
    for kind in s:
        s[kind] = {"experiment": {"kind": Param("str", kind, choices=KINDS), "seed": Param("int", 0, seed_check)},
                   **s[kind]}
    return s


SCHEMA = _schema()


def _convert(raw: str, p: Param):
    raw = raw.strip()
    if p.kind == "float":
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("not finite")
        return v
    if p.kind == "int":
        return int(raw, 0)
    if p.kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")
    if p.kind == "str":
        return raw
    items = [x for x in raw.replace(",", " ").split() if x]
    if p.kind == "floats":
        vals = [float(x) for x in items]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("not finite")
        return vals
    if p.kind == "ints":
        return [int(x, 0) for x in items]
    raise AssertionError(p.kind)


@dataclass
class ExperimentConfig:
    kind: str
    params: dict[str, dict[str, Any]]
    source: str | None = None

    @property
    def seed(self) -> int:
        return self.params["experiment"]["seed"]

    def section(self, name: str) -> dict[str, Any]:
        return self.params[name]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        if seed_check(seed):
            raise ConfigError(["experiment.seed: must be an unsigned 64-bit integer"])
        params = {k: dict(v) for k, v in self.params.items()}
        params["experiment"]["seed"] = int(seed)
        return ExperimentConfig(self.kind, params, self.source)

    def echo(self) -> dict:
        return {k: dict(v) for k, v in self.params.items()}


def _cross_checks(kind: str, p: dict) -> list[str]:
    out = []
    if kind in ("evolve", "bohm-trace"):
        geom = p["system"]["geometry"]
        dim = 2 if geom == "box" else 1
        for key in ("q0", "p0"):
            if len(p["state"][key]) != dim:
                out.append(f"state.{key}: needs {dim} component(s) for geometry={geom}")
        if geom == "box" and p["potential"]["kind"] != "constant":
            out.append("potential.kind: only 'constant' is supported in the box")
    if kind == "freeze-check":
        geom = p["system"]["geometry"]
        need = 2 if geom == "box" else 1
        if len(p["state"]["mode"]) != need:
            out.append(f"state.mode: needs {need} quantum number(s) for geometry={geom}")
    if kind in ("dos", "length-spectrum"):
        s = p["spectrum"]
        if s["E_max"] <= s["E_min"]:
            out.append("spectrum.E_max: must exceed spectrum.E_min")
    if kind == "dos" and p["spectrum"]["fit_E_max"] <= p["spectrum"]["fit_E_min"]:
        out.append("spectrum.fit_E_max: must exceed spectrum.fit_E_min")
    if kind == "lyapunov":
        d0 = p["lyapunov"]["delta0"]
        if not (1e-9 <= d0 <= 1e-6):
            out.append("lyapunov.delta0: must lie in [1e-9, 1e-6] (units of L)")
    if kind == "step-scan":
        s = p["scan"]
        if s["E"] <= s["V0"]:
            out.append("scan.E: must exceed V0 (incident channel open)")
        if any(w < 0 for w in s["widths"]):
            out.append("scan.widths: must be >= 0")
        if s["profile"] == "soft" and any(w == 0 for w in s["widths"]):
            out.append("scan.widths: soft profile needs positive widths")
    if kind == "wkb-compare" and p["wkb"]["E"] <= 0:
        out.append("wkb.E: must be > 0 (turning point at positive q)")
    return out


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case sensitive
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as e:
        raise ConfigError([f"syntax: {e}"]) from None
    if not cp.has_option("experiment", "kind"):
        raise ConfigError(["experiment.kind: required"])
    kind = cp.get("experiment", "kind").strip()
    if kind not in SCHEMA:
        raise ConfigError([f"experiment.kind: unknown experiment {kind!r} (choose from {', '.join(KINDS)})"])
    schema = SCHEMA[kind]
    problems: list[str] = []
    for sec in cp.sections():
        if sec not in schema:
            problems.append(f"{sec}: unknown section for kind={kind}")
            continue
        for key in cp[sec]:
            if key not in schema[sec]:
                problems.append(f"{sec}.{key}: unknown key")
    params: dict[str, dict[str, Any]] = {}
    for sec, keys in schema.items():
        params[sec] = {}
        for key, p in keys.items():
            value = p.default
            if cp.has_option(sec, key):
                try:
                    value = _convert(cp.get(sec, key), p)
                except ValueError as e:
                    problems.append(f"{sec}.{key}: cannot parse {cp.get(sec, key)!r} as {p.kind} ({e})")
                    continue
            if p.choices and value not in p.choices:
                problems.append(f"{sec}.{key}: {value!r} not one of {p.choices}")
            elif p.check and (msg := p.check(value)):
                problems.append(f"{sec}.{key}: {msg}")
            params[sec][key] = value
    try:
        problems += _cross_checks(kind, params)
    except (KeyError, TypeError):
        pass  # a field involved in a cross check failed to parse and is already reported
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(kind, params, source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError([f"config: cannot read {path} ({e.strerror})"]) from None
    return parse_config(text, str(path))


def template(kind: str) -> str:
    """Config text listing every key of ``kind`` at its default."""
    lines = []
    for sec, keys in SCHEMA[kind].items():
        lines.append(f"[{sec}]")
        for key, p in keys.items():
            v = p.default
            if isinstance(v, list):
                v = ", ".join(repr(x) for x in v)
            elif isinstance(v, bool):
                v = str(v).lower()
            lines.append(f"{key} = {v}")
        lines.append("")
    return "\n".join(lines)
