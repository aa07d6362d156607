"""Experiment configuration: INI files, presets, validation and hashing."""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificateRejectedError, ConfigError, InvalidGridError, InvalidPotentialError
from .excess import BOX_FRACTION
from .operators import FAMILIES, Grid, Potential, with_certificate
from .resolvent import TransformParams, beta_window


def _floats(text):
    return [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


def _auto_float(text):
    return None if str(text).strip().lower() == "auto" else float(text)


def _auto_int(text):
    return None if str(text).strip().lower() == "auto" else int(text)


# section -> key -> (parser, default as text)
SCHEMA = {
    "experiment": {"dimension": (int, "1"), "seed": (int, "0"),
                   "lambdas": (_floats, "0.25, 0.5, 1.0, 2.0, 4.0")},
    "grid": {"half_width": (float, "20"), "points": (int, "2000")},
    "potential": {"family": (str, "gaussian"), "depth": (float, "-1"), "range": (float, "1"),
                  "alpha": (_auto_float, "auto")},
    "transform": {"shift": (_auto_float, "auto"), "power": (int, "1")},
    "ssf": {"eta_factors": (_floats, "10, 5, 2.5"), "quad_tol": (float, "1e-9")},
    "excess": {"radii": (_floats, "1, 2, 4, 8"), "plateau": (float, "0.5"),
               "noise": (float, "1e-3"), "double_box": (int, "0")},
    "scattering": {"k_min": (float, "0.01"), "l_max": (_auto_int, "auto")},
    "krein": {"heat_t": (_floats, "0.2, 0.5, 1.0"), "bump_center": (float, "2.0"),
              "bump_width": (float, "1.5"), "tail": (float, "1e-15")},
    "probes": {"beta": (_auto_float, "auto"), "lam": (float, "1.0"),
               "w_half_width": (float, "10"), "w_points": (_ints, "99, 199, 399, 799"),
               "eta0": (float, "0.1"), "eta_steps": (int, "7")},
    "tolerances": {"stone": (float, "1e-6"), "route": (float, "1e-8"),
                   "invariance": (float, "1e-4"), "krein": (float, "1e-3"),
                   "friedel": (float, "0.05"), "phase_oracle": (float, "1e-6"),
                   "levinson": (float, "0.15"), "cutoff_residual": (float, "0.1"),
                   "doubling": (float, "0.02"), "w_relative": (float, "0.02"),
                   "boundary_ratio": (float, "1.5")},
    "output": {"directory": (str, "out")},
}

PRESETS = {
    "zero-1d": {"potential": {"family": "zero", "depth": "0"},
                "grid": {"half_width": "20", "points": "2000"},
                "excess": {"radii": "1, 2, 4, 8"}},
    "gaussian-1d": {"grid": {"half_width": "100", "points": "8000"},
                    "excess": {"radii": "5, 10, 20, 40"},
                    "experiment": {"lambdas": "0.25, 0.786, 1.32, 1.86, 2.39, 2.93, 3.46, 4.0"}},
    "gaussian-1d-small": {"grid": {"half_width": "20", "points": "2000"},
                          "excess": {"radii": "1, 2, 4, 8"}},
    "square-well-1d": {"potential": {"family": "square_well", "depth": "-2"},
                       "grid": {"half_width": "20", "points": "2000"},
                       "excess": {"radii": "1, 2, 4, 8"}},
    "square-well-3d": {"experiment": {"dimension": "3",
                                      "lambdas": "0.25, 0.786, 1.32, 1.86, 2.39, 2.93, 3.46, 4.0"},
                       "potential": {"family": "square_well", "depth": "-4"},
                       "grid": {"half_width": "50", "points": "2024"},
                       "transform": {"shift": "6"},
                       "excess": {"radii": "2.5, 3.5355339, 5, 7.0710678, 10"},
                       "tolerances": {"friedel": "0.08"}},
    "probe": {"grid": {"half_width": "10", "points": "399"},
              "excess": {"radii": "0.5, 1, 2, 4"}},
}


@dataclass
class ExperimentConfig:
    """Validated experiment settings; ``values`` mirrors the INI sections."""

    values: dict
    text: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def __getitem__(self, section):
        return self.values[section]

    @property
    def dimension(self) -> int:
        return self.values["experiment"]["dimension"]

    @property
    def lambdas(self) -> np.ndarray:
        return np.asarray(self.values["experiment"]["lambdas"], dtype=float)

    def grid(self, ang_momentum: int = 0, half_width: float | None = None,
             points: int | None = None) -> Grid:
        g = self.values["grid"]
        kind = "line" if self.dimension == 1 else "radial"
        return Grid(kind, half_width or g["half_width"], points or g["points"], ang_momentum)

    def potential(self) -> Potential:
        p = self.values["potential"]
        pot = Potential(p["family"], p["depth"], p["range"])
        if pot.is_zero:
            return pot
        return with_certificate(pot, self.dimension, p["alpha"], seed=self.values["experiment"]["seed"])

    def transform(self, lam_min: float) -> TransformParams:
        t = self.values["transform"]
        shift = t["shift"] if t["shift"] is not None else 2.0 + max(0.0, -lam_min)
        return TransformParams(shift, t["power"])

    @property
    def output_dir(self) -> str:
        return self.values["output"]["directory"]

    def tol(self, key: str) -> float:
        return self.values["tolerances"][key]

    def beta(self) -> float:
        b = self.values["probes"]["beta"]
        if b is not None:
            return b
        lo, hi = beta_window(self.alpha(), self.dimension)
        return 0.5 * (lo + hi)

    def alpha(self) -> float:
        a = self.values["potential"]["alpha"]
        return a if a is not None else self.dimension + 7.0

    def serialize(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for section in SCHEMA:
            cp[section] = {k: self.text[section][k] for k in sorted(SCHEMA[section])}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]


def _merge(text, updates, origin):
    for section, items in updates.items():
        if section not in SCHEMA:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        for key, value in items.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"{origin}: unknown key {section}.{key}")
            text[section][key] = str(value)


def load_config(path: str | None = None, preset: str | None = None, overrides=(),
                text: str | None = None) -> ExperimentConfig:
    """Defaults <- preset <- file (or ``text``) <- ``tolerances`` overrides (KEY=VAL)."""
    raw = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        _merge(raw, PRESETS[preset], f"preset {preset}")
    source = preset or "<defaults>"
    if path is not None or text is not None:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            if path is not None:
                with open(path) as fh:
                    cp.read_file(fh)
                source = path
            else:
                cp.read_string(text)
                source = "<string>"
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"{source}: cannot read config: {exc}") from exc
        _merge(raw, {s: dict(cp[s]) for s in cp.sections()}, source)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"tolerance override {item!r} is not KEY=VAL")
        key = key.strip()
        if key.startswith("tolerances."):
            key = key[len("tolerances."):]
        _merge(raw, {"tolerances": {key: value.strip()}}, "--tolerance-override")
    values = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (parse, _) in keys.items():
            try:
                values[section][key] = parse(raw[section][key])
            except ValueError as exc:
                raise ConfigError(f"{source}: {section}.{key} = {raw[section][key]!r}: {exc}") from exc
    cfg = ExperimentConfig(values, raw, source)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Parse-time preconditions; each message names the offending key."""
    v = cfg.values
    where = cfg.source

    def fail(key, msg):
        raise ConfigError(f"{where}: {key}: {msg}")

    if cfg.dimension not in (1, 3):
        fail("experiment.dimension", "must be 1 or 3")
    lam = cfg.lambdas
    if lam.size == 0 or not np.all(np.isfinite(lam)) or np.any(np.diff(lam) <= 0):
        fail("experiment.lambdas", "must be a nonempty strictly increasing list")
    try:
        grid = cfg.grid()
    except InvalidGridError as exc:
        fail("grid", str(exc))
    if v["potential"]["family"] not in FAMILIES:
        fail("potential.family", f"must be one of {FAMILIES}")
    try:
        cfg.potential()
    except (InvalidPotentialError, CertificateRejectedError) as exc:
        fail("potential", str(exc))
    t = v["transform"]
    if t["power"] < 1:
        fail("transform.power", "must be a positive integer")
    if t["shift"] is not None and not t["shift"] > 1.0:
        # the full bound M > 1 + max(0, -inf spec H) needs the spectrum and is rechecked later
        fail("transform.shift", f"shift M={t['shift']} violates M > 1 + max(0, -inf spec(H)) >= 1")
    eta = np.asarray(v["ssf"]["eta_factors"])
    if eta.size < 3 or np.any(eta <= 0) or np.any(np.diff(eta) >= 0):
        fail("ssf.eta_factors", "need >= 3 strictly decreasing positive factors")
    radii = np.asarray(v["excess"]["radii"])
    if radii.size < 4 or np.any(np.diff(radii) <= 0):
        fail("excess.radii", "need >= 4 strictly increasing radii")
    ratios = radii[1:] / radii[:-1]
    if np.ptp(ratios) > 0.1 * ratios.mean():
        fail("excess.radii", "radii must be geometrically spaced")
    if radii[-1] > grid.length / BOX_FRACTION:
        fail("excess.radii", f"R_max={radii[-1]} exceeds box length/{BOX_FRACTION:g}")
    if not 0 < v["excess"]["plateau"] < 1:
        fail("excess.plateau", "must lie in (0, 1)")
    if v["scattering"]["k_min"] <= 0:
        fail("scattering.k_min", "must be positive")
    if v["scattering"]["l_max"] is not None and v["scattering"]["l_max"] < 2:
        fail("scattering.l_max", "need at least three channels for the tail bound")
    if any(tt <= 0 for tt in v["krein"]["heat_t"]):
        fail("krein.heat_t", "heat-kernel times must be positive")
    lo, hi = beta_window(cfg.alpha(), cfg.dimension)
    if not lo < cfg.beta() < hi:
        fail("probes.beta", f"beta={cfg.beta()} outside the admissible window ({lo}, {hi})")
    if len(v["probes"]["w_points"]) < 3:
        fail("probes.w_points", "need at least three grid refinements")
    if v["probes"]["eta_steps"] < 3:
        fail("probes.eta_steps", "need at least three eta values")
    for key, val in v["tolerances"].items():
        if not val > 0:
            fail(f"tolerances.{key}", "must be positive")
