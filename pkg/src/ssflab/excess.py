"""Cutoff excess charge Z_R(lambda) and its R -> infinity limit."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import BoxContaminationError, DegenerateEnergyError, ExtrapolationError
from .operators import Grid
from .resolvent import TransformParams, smoothed_occupation
from .spectral import EigenSystem

BOX_FRACTION = 5.0
EPS_BOUNDS = (1e-6, 3.0)
MAX_REACH = 2.0


def _smoothstep(t):
    """C-infinity step from 0 (t <= 0) to 1 (t >= 1)."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        g = lambda s: np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        return g(t) / (g(t) + g(1.0 - t))


@dataclass(frozen=True)
class CutoffProfile:
    """theta_R(x) = theta(x/R): 1 on |x| <= plateau, smooth decay to 0 at |x| = 1."""

    radius: float
    plateau: float = 0.5
    kind: str = "smooth"

    def __post_init__(self):
        if self.kind != "smooth":
            raise ValueError(f"unknown cutoff profile {self.kind!r}")
        if not 0.0 < self.plateau < 1.0:
            raise ValueError("plateau must lie in (0, 1)")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def theta(self, u):
        u = np.abs(np.asarray(u, dtype=float))
        return 1.0 - _smoothstep((u - self.plateau) / (1.0 - self.plateau))

    def __call__(self, x):
        return self.theta(np.asarray(x, dtype=float) / self.radius)

    def with_radius(self, radius: float) -> "CutoffProfile":
        return CutoffProfile(radius, self.plateau, self.kind)


def cutoff_weights(grid: Grid, profile: CutoffProfile, guard: bool = True) -> np.ndarray:
    """theta_R(x_i)^2 on the grid nodes."""
    if guard and profile.radius > grid.length / BOX_FRACTION:
        raise BoxContaminationError(
            f"cutoff radius {profile.radius} exceeds box length / {BOX_FRACTION:g}"
            f" = {grid.length / BOX_FRACTION:g}")
    return profile(grid.nodes) ** 2


def vector_weights(eigsys: EigenSystem, weights: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """<v_j, diag(w) v_j> for every eigenvector; ``weights`` may hold several columns."""
    w = np.asarray(weights, dtype=float)
    single = w.ndim == 1
    w = w.reshape(w.shape[0], -1)
    V = eigsys.vectors
    out = np.empty((V.shape[1], w.shape[1]))
    for j in range(0, V.shape[1], chunk):
        block = V[:, j:j + chunk]
        out[j:j + chunk] = (block * block).T @ w
    return out[:, 0] if single else out


def occupations(values, lam: float, params: TransformParams | None = None,
                eta: float | None = None) -> np.ndarray:
    """Sharp (eta None) or contour-smoothed occupation of each level at ``lam``."""
    values = np.asarray(values, dtype=float)
    if eta is None:
        return (values <= lam).astype(float)
    return smoothed_occupation(values, lam, params, eta)


def charge_from_weights(values, local, values0, local0, lam: float,
                        params: TransformParams | None = None, eta: float | None = None):
    """Z from per-level local weights (one column per cutoff, or a single vector)."""
    return occupations(values, lam, params, eta) @ local - occupations(values0, lam, params, eta) @ local0


def excess_charge_R(eigH: EigenSystem, eigH0: EigenSystem, lam: float, profile: CutoffProfile,
                    params: TransformParams | None = None, eta: float | None = None,
                    guard: bool = True) -> float:
    """Tr[theta_R (E_H(lam) - E_H0(lam)) theta_R] from eigenvector weighted sums.

    With ``eta`` (a height in the transformed variable, as for the contour
    route) the spectral projections are replaced by their contour-smoothed
    counterparts.
    """
    if eta is None:
        tol = 1e-12 * max(eigH.scale, eigH0.scale, 1.0)
        for s in (eigH, eigH0):
            if np.abs(s.values - lam).min() < tol:
                raise DegenerateEnergyError(f"energy {lam!r} coincides with an eigenvalue")
    w = cutoff_weights(eigH.grid, profile, guard)
    return float(charge_from_weights(eigH.values, vector_weights(eigH, w),
                                     eigH0.values, vector_weights(eigH0, w), lam, params, eta))


@dataclass
class ExcessResult:
    lam: float
    radii: np.ndarray
    charges: np.ndarray
    limit: float
    exponent: float
    amplitude: float
    residual: float
    diagnostics: dict = field(default_factory=dict)


def extrapolate_R(radii, charges, lam: float = float("nan"), rel_threshold: float = 0.1,
                  noise: float = 0.0) -> ExcessResult:
    """Fit Z_R = Z_inf + c R^-eps with eps in (0, 3).

    Rejects tails that change direction by more than ``noise``, fits whose
    worst residual exceeds ``rel_threshold * |Z_Rmin - Z_inf|`` (or ``noise``,
    whichever is larger), and limits further than ``MAX_REACH`` times the data
    spread beyond Z_Rmax (near-zero exponents fitted to oscillations).
    """
    R = np.asarray(radii, dtype=float)
    Z = np.asarray(charges, dtype=float)
    if R.size < 4 or R.size != Z.size:
        raise ValueError("need at least four (R, Z_R) pairs")
    if np.any(np.diff(R) <= 0):
        raise ValueError("radii must be strictly increasing")
    ratios = R[1:] / R[:-1]
    if np.ptp(ratios) > 0.1 * ratios.mean():
        raise ValueError("radii must be geometrically spaced")
    scale = max(1.0, np.abs(Z).max())
    if np.ptp(Z) <= 1e-14 * scale:
        return ExcessResult(lam, R, Z, float(Z[-1]), float("nan"), 0.0, 0.0)

    diffs = np.diff(Z)
    tail = diffs[-2:]
    if tail[0] * tail[1] < 0 and min(abs(tail[0]), abs(tail[1])) > noise:
        raise ExtrapolationError("cutoff sequence is not monotone in its tail",
                                 {"radii": R.tolist(), "charges": Z.tolist()})

    x = R / R[0]

    def resid(p):
        return p[0] + p[1] * x ** (-p[2]) - Z

    best = None
    for eps0 in (0.5, 1.0, 2.0, 2.9):
        c0 = (Z[0] - Z[-1]) / max(1.0 - x[-1] ** (-eps0), 1e-12)
        p0 = [Z[0] - c0, c0, eps0]
        fit = least_squares(resid, p0, bounds=([-np.inf, -np.inf, EPS_BOUNDS[0]],
                                               [np.inf, np.inf, EPS_BOUNDS[1]]),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        if best is None or fit.cost < best.cost:
            best = fit
    z_inf, c, eps = best.x
    residual = float(np.abs(resid(best.x)).max())
    amplitude = float(c * R[0] ** eps)
    diag = {"radii": R.tolist(), "charges": Z.tolist(), "residual": residual}
    threshold = max(rel_threshold * abs(Z[0] - z_inf), noise, 1e-12 * scale)
    if residual > threshold:
        raise ExtrapolationError(f"fit residual {residual:.2e} exceeds {threshold:.2e}", diag)
    reach = abs(z_inf - Z[-1])
    if reach > MAX_REACH * np.ptp(Z):
        raise ExtrapolationError(f"limit lies {reach:.2e} beyond Z_Rmax, more than "
                                 f"{MAX_REACH:g} x the data spread", diag)
    return ExcessResult(lam, R, Z, float(z_inf), float(eps), amplitude, residual, diag)


def assemble_channels(channel_values, tol: float = 1e-4, min_channels: int = 1):
    """Sum (2l+1) Z^(l) over channels, stopping at the first channel below ``tol``.

    Returns (total, channels_used).  ``channel_values`` is indexed by l.
    """
    total = 0.0
    used = 0
    for l, value in enumerate(channel_values):
        total += (2 * l + 1) * value
        used = l + 1
        if used >= min_channels and abs(value) < tol:
            break
    return total, used
