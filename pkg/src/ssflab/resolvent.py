"""SSF from boundary values of the transformed resolvent trace.

The pair (H, H0) is mapped to bounded operators A = (H+M)^-l, A0 = (H0+M)^-l
with transformed energy mu(z) = (z+M)^-l.  On a grid all traces are finite
sums over eigenvalues, so the contour integral of
Tr[(A-w)^-1 - (A0-w)^-1] and the perturbation determinant can be evaluated
exactly; only the z -> mu(lambda) + i0 limit needs extrapolation.

Sign convention: every xi returned here is xi(lambda; H, H0), i.e. already
negated from the transformed pair.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.linalg import svdvals
from scipy.sparse.linalg import svds

from .curves import SSFCurve
from .errors import (BoundaryLimitUnstableError, InvalidBetaError, PathRefinementError,
                     PoleProximityError, QuadratureError, ShiftTooSmallError)
from .operators import Grid, Potential, build_free, build_perturbed
from .spectral import EigenSystem, eigendecompose

DEFAULT_ETA_FACTORS = (10.0, 5.0, 2.5)
K_FLOOR = 0.1
MAX_BREAKPOINTS = 2000


@dataclass(frozen=True)
class TransformParams:
    shift: float
    power: int = 1

    def __post_init__(self):
        if int(self.power) != self.power or self.power < 1:
            raise ValueError("power must be a positive integer")

    def mu(self, z):
        return (np.asarray(z) + self.shift) ** (-self.power)

    def dmu(self, lam):
        """|d mu / d lambda| at real lambda."""
        return self.power * (np.asarray(lam, dtype=float) + self.shift) ** (-self.power - 1)

    def check(self, lam_min: float) -> None:
        floor = 1.0 + max(0.0, -lam_min)
        if not self.shift > floor:
            raise ShiftTooSmallError(
                f"shift M={self.shift} must exceed 1 + max(0, -inf spec(H)) = {floor:.6g}")


def default_shift(eigH: EigenSystem) -> float:
    return 2.0 + max(0.0, -float(eigH.values[0]))


def admissible_power(n: int) -> int:
    """Smallest power used for dimension n: 1 for n <= 3, else l with n/2-1 < l <= n/2."""
    return 1 if n <= 3 else n // 2


def transform_spectrum(eigsys: EigenSystem, params: TransformParams) -> np.ndarray:
    params.check(min(float(eigsys.values[0]), 0.0))
    return params.mu(eigsys.values)


def _pair(eigH, eigH0, params):
    lam_min = min(float(eigH.values[0]), float(eigH0.values[0]), 0.0)
    params.check(lam_min)
    return params.mu(eigH.values), params.mu(eigH0.values), lam_min


def trace_resolvent_diff(eigH: EigenSystem, eigH0: EigenSystem, params: TransformParams, w):
    """Tr[(A-w)^-1 - (A0-w)^-1] as an exact finite sum; ``w`` may be an array."""
    a, a0, _ = _pair(eigH, eigH0, params)
    return _trace(a, a0, w)


def _trace(a, a0, w):
    w = np.asarray(w, dtype=complex)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    dist = np.minimum(np.abs(a[:, None] - w[None, :]).min(axis=0),
                      np.abs(a0[:, None] - w[None, :]).min(axis=0))
    if np.any(dist < 1e-14):
        raise PoleProximityError("evaluation point coincides with a transformed eigenvalue")
    out = (1.0 / (a[:, None] - w[None, :])).sum(axis=0) - (1.0 / (a0[:, None] - w[None, :])).sum(axis=0)
    return complex(out[0]) if scalar else out


@dataclass(frozen=True)
class Contour:
    """Polyline from a real start above both transformed spectra to mu + i eta."""

    start: float
    end: complex
    eta: float
    nodes: np.ndarray


def make_contour(eigH: EigenSystem, eigH0: EigenSystem, params: TransformParams,
                 lam: float, eta: float) -> Contour:
    """Vertical lift at w0 = (lam_min + M - 1)^-l, then horizontal to mu(lam) + i eta."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    a, a0, lam_min = _pair(eigH, eigH0, params)
    w0 = (lam_min + params.shift - 1.0) ** (-params.power)
    if not w0 > max(a.max(), a0.max()):
        raise ShiftTooSmallError("contour start is not above both transformed spectra")
    end = complex(params.mu(lam)) + 1j * eta
    return Contour(w0, end, eta, np.array([w0, w0 + 1j * eta, end]))


@dataclass
class ContourSSF:
    lam: float
    xi: float
    err: float
    etas: np.ndarray
    values: np.ndarray
    quad_errors: np.ndarray = field(default_factory=lambda: np.empty(0))


def contour_integral(a, a0, contour: Contour, tol: float = 1e-9) -> complex:
    """Imaginary part of int_gamma Tr[(A-w)^-1 - (A0-w)^-1] dw, returned with its error."""
    w0, eta = contour.start, contour.eta
    x_end = contour.end.real
    # vertical leg w = w0 + i t: Im(T i dt) = Re T
    vert, err_v = _quad(lambda t: _trace(a, a0, w0 + 1j * t).real, 0.0, eta, tol, [])
    lo, hi = sorted((x_end, w0))
    poles = np.concatenate([a, a0])
    poles = np.unique(poles[(poles > lo) & (poles < hi)])
    pts = list(poles) if poles.size <= MAX_BREAKPOINTS else []
    horiz, err_h = _quad(lambda x: _trace(a, a0, x + 1j * eta).imag, lo, hi, tol, pts)
    if x_end < w0:
        horiz = -horiz
    return vert + horiz, err_v + err_h


def _quad(fn, lo, hi, tol, points):
    if hi <= lo:
        return 0.0, 0.0
    limit = max(200, 8 * len(points) + 50)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IntegrationWarning)
        val, err = quad(lambda s: float(fn(s)), lo, hi, epsabs=tol, epsrel=1e-12,
                        limit=limit, points=points or None)
    if caught and err > 10 * tol:
        raise QuadratureError(f"contour quadrature did not converge (error {err:.2e})")
    return val, err


def extrapolate_to_zero(etas, values, degree: int | None = None):
    """Polynomial extrapolation to eta = 0 over the smallest etas.

    Returns (value, spread) where spread compares the final extrapolant with
    the one from the previous window (or one degree lower when the schedule
    has no spare point).
    """
    etas = np.asarray(etas, dtype=float)
    values = np.asarray(values, dtype=float)
    n = etas.size
    d = min(2, n - 1) if degree is None else degree
    if n < d + 1 or d < 1:
        raise ValueError("need at least two eta values")
    final = np.polyval(np.polyfit(etas[-(d + 1):], values[-(d + 1):], d), 0.0)
    if n >= d + 2:
        prev = np.polyval(np.polyfit(etas[-(d + 2):-1], values[-(d + 2):-1], d), 0.0)
    else:
        prev = np.polyval(np.polyfit(etas[-d:], values[-d:], d - 1), 0.0)
    return float(final), float(abs(final - prev))


def ssf_contour(eigH: EigenSystem, eigH0: EigenSystem, params: TransformParams, lam: float,
                eta_schedule, tol: float = 1e-9, spread_tol: float | None = None) -> ContourSSF:
    """xi(lam; H, H0) from the contour representation, extrapolated eta -> 0.

    ``eta_schedule`` holds heights in the transformed variable, decreasing.
    """
    etas = np.asarray(eta_schedule, dtype=float)
    if etas.size < 3 or np.any(np.diff(etas) >= 0) or np.any(etas <= 0):
        raise ValueError("eta schedule needs >= 3 strictly decreasing positive entries")
    a, a0, lam_min = _pair(eigH, eigH0, params)
    if not lam > lam_min - params.shift:
        raise ValueError("lambda lies outside the domain of the transform")
    vals, qerr = [], []
    for eta in etas:
        contour = make_contour(eigH, eigH0, params, lam, eta)
        im, err = contour_integral(a, a0, contour, tol)
        vals.append(-im / np.pi)
        qerr.append(err / np.pi)
    xi, spread = extrapolate_to_zero(etas, vals)
    if spread_tol is not None and spread > spread_tol:
        raise BoundaryLimitUnstableError(
            f"eta -> 0 extrapolation spread {spread:.2e} exceeds {spread_tol:.2e}", vals, spread)
    return ContourSSF(lam, xi, spread, etas, np.array(vals), np.array(qerr))


def _log_modulus(a, a0, w):
    return np.log(np.abs(a - w)).sum() - np.log(np.abs(a0 - w)).sum()


def _wrap(x):
    return (x + np.pi) % (2 * np.pi) - np.pi


def log_perturbation_determinant(eigH: EigenSystem, eigH0: EigenSystem, params: TransformParams,
                                 path: Contour, refine: bool = True, max_depth: int = 60) -> complex:
    """Continuous branch of log det[(A-z)(A0-z)^-1] at the end of ``path``.

    The branch starts at the real point ``path.start`` above both spectra,
    where the determinant is positive.  Every factor log(a_j - w) is tracked
    separately, so a leg passing many poles cannot alias by multiples of
    2 pi; legs are bisected until no factor turns by pi/2 or more.  With
    ``refine=False`` a factor turning by more than pi raises instead.
    """
    a, a0, _ = _pair(eigH, eigH0, params)
    nodes = np.asarray(path.nodes, dtype=complex)
    if nodes[0].imag != 0.0 or nodes[0].real <= max(a.max(), a0.max()):
        raise PathRefinementError("path must start on the real axis above both spectra")
    angles = lambda w: (np.angle(a - w), np.angle(a0 - w))
    im_total = 0.0
    for p, q in zip(nodes[:-1], nodes[1:]):
        stack = [(p, q, angles(p), angles(q), 0)]
        while stack:
            u, v, au, av, depth = stack.pop()
            inc = _wrap(av[0] - au[0])
            inc0 = _wrap(av[1] - au[1])
            worst = max(np.abs(inc).max(initial=0.0), np.abs(inc0).max(initial=0.0))
            if worst < np.pi / 2 or (not refine and worst <= np.pi):
                im_total += inc.sum() - inc0.sum()
                continue
            if not refine or depth >= max_depth:
                raise PathRefinementError(
                    f"branch jump {worst:.3f} between path nodes {u:.6g} and {v:.6g}")
            m = 0.5 * (u + v)
            am = angles(m)
            # pop order keeps the walk running from u to v
            stack.append((m, v, am, av, depth + 1))
            stack.append((u, m, au, am, depth + 1))
    return complex(_log_modulus(a, a0, nodes[-1]), im_total)


def ssf_determinant(eigH: EigenSystem, eigH0: EigenSystem, params: TransformParams,
                    lam: float, eta: float) -> float:
    """xi(lam; H, H0) at smoothing height ``eta`` from the perturbation determinant."""
    contour = make_contour(eigH, eigH0, params, lam, eta)
    return log_perturbation_determinant(eigH, eigH0, params, contour).imag / np.pi


def smoothed_occupation(values, lam: float, params: TransformParams, eta: float) -> np.ndarray:
    """Per-eigenvalue weight in (0, 1) contributed to xi at height ``eta``.

    Closed form of the contour integral for one pole: 1 + Arg(mu(lam_j) - z)/pi
    with z = mu(lam) + i eta; tends to the indicator of lam_j <= lam.
    """
    z = complex(params.mu(lam)) + 1j * eta
    return 1.0 + np.angle(params.mu(np.asarray(values, dtype=float)) - z) / np.pi


def level_spacing(grid: Grid, lam: float) -> float:
    """Free level spacing near ``lam``: pi k/L on lines, 2 pi k/L radially.

    k = sqrt(lam) is floored at ``K_FLOOR`` so points at or below threshold
    still get a finite smoothing height.
    """
    k = max(np.sqrt(max(lam, 0.0)), K_FLOOR)
    factor = np.pi if grid.kind == "line" else 2 * np.pi
    return factor * k / grid.half_width


def smoothing_schedule(grid: Grid, lam: float, params: TransformParams,
                       factors=DEFAULT_ETA_FACTORS) -> tuple[np.ndarray, np.ndarray]:
    """Energy-unit etas tied to the level spacing, and their transformed heights."""
    eta_e = np.asarray(factors, dtype=float) * level_spacing(grid, lam)
    return eta_e, eta_e * params.dmu(lam)


def stone_schedule(eigH: EigenSystem, eigH0: EigenSystem, params: TransformParams, lam: float,
                   fractions=(1e-3, 5e-4, 2.5e-4)) -> np.ndarray:
    """Transformed heights far below the gap between mu(lam) and the nearest pole.

    With these the eta -> 0 extrapolant reproduces the exact eigenvalue count
    of the discrete pair at an energy off both spectra.
    """
    a, a0, _ = _pair(eigH, eigH0, params)
    gap = float(np.abs(np.concatenate([a, a0]) - params.mu(lam)).min())
    if gap == 0.0:
        raise PoleProximityError("energy coincides with an eigenvalue")
    return gap * np.asarray(fractions, dtype=float)


def ssf_curve(eigH: EigenSystem, eigH0: EigenSystem, params: TransformParams, lambdas,
              grid: Grid, route: str = "contour", eta_factors=DEFAULT_ETA_FACTORS,
              tol: float = 1e-9) -> SSFCurve:
    """Smoothed-then-extrapolated xi on an energy grid (continuum approximation)."""
    lambdas = np.asarray(lambdas, dtype=float)
    xi, err, eta_min = [], [], []
    for lam in lambdas:
        eta_e, eta_a = smoothing_schedule(grid, lam, params, eta_factors)
        if route == "contour":
            res = ssf_contour(eigH, eigH0, params, lam, eta_a, tol=tol)
            value, spread = res.xi, res.err
        elif route == "determinant":
            vals = [ssf_determinant(eigH, eigH0, params, lam, e) for e in eta_a]
            value, spread = extrapolate_to_zero(eta_a, vals)
        else:
            raise ValueError(f"unknown route {route!r}")
        xi.append(value)
        err.append(spread)
        eta_min.append(eta_e[-1])
    return SSFCurve(lambdas, np.array(xi), route, eta=np.array(eta_min), err=np.array(err),
                    meta={"shift": params.shift, "power": params.power,
                          "eta_factors": list(eta_factors)})


@dataclass
class WeightProbe:
    beta: float
    spacings: np.ndarray = field(default_factory=lambda: np.empty(0))
    sums: np.ndarray = field(default_factory=lambda: np.empty(0))
    etas: np.ndarray = field(default_factory=lambda: np.empty(0))
    norms: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def differences(self) -> np.ndarray:
        return np.abs(np.diff(self.sums))


def beta_window(alpha: float, n: int) -> tuple[float, float]:
    return 1.5, (alpha - n) / 2.0


def check_beta(beta: float, alpha: float, n: int) -> None:
    lo, hi = beta_window(alpha, n)
    if not lo < beta < hi:
        raise InvalidBetaError(f"beta={beta} outside the admissible window ({lo}, {hi})")


def _weights(grid: Grid, beta: float) -> np.ndarray:
    x = grid.nodes
    return (1.0 + x * x) ** (beta / 2.0)


def w_trace_probe(grids, potential: Potential, params: TransformParams, beta: float,
                  alpha: float | None = None) -> WeightProbe:
    """Singular-value sums of <x>^b (A - A0) <x>^b over a ladder of grids."""
    grids = list(grids)
    n = grids[0].dimension
    alpha = alpha if alpha is not None else (potential.alpha or n + 7.0)
    check_beta(beta, alpha, n)
    sums, spacings = [], []
    for g in grids:
        eH = eigendecompose(build_perturbed(g, potential))
        eH0 = eigendecompose(build_free(g))
        a, a0, _ = _pair(eH, eH0, params)
        diff = (eH.vectors * a) @ eH.vectors.T - (eH0.vectors * a0) @ eH0.vectors.T
        d = _weights(g, beta)
        W = d[:, None] * diff * d[None, :]
        sums.append(svdvals(W).sum())
        spacings.append(g.spacing)
    return WeightProbe(beta, np.array(spacings), np.array(sums))


def boundary_limit_probe(eigH: EigenSystem, eigH0: EigenSystem, params: TransformParams,
                         lam: float, beta: float, eta_schedule) -> np.ndarray:
    """||<x>^-b (A0 - mu(z))^-1 (A - mu(z))^-1 <x>^-b|| for z = lam + i eta."""
    if eigH.vectors is None or eigH0.vectors is None or eigH.grid is None:
        raise ValueError("boundary_limit_probe needs eigenvectors and a grid")
    a, a0, _ = _pair(eigH, eigH0, params)
    d = 1.0 / _weights(eigH.grid, beta)
    overlap = eigH0.vectors.T @ eigH.vectors
    left = d[:, None] * eigH0.vectors
    right = eigH.vectors.T * d[None, :]
    norms = []
    for eta in np.asarray(eta_schedule, dtype=float):
        m = complex(params.mu(lam + 1j * eta))
        K = (left / (a0 - m)[None, :]) @ overlap @ (right / (a - m)[:, None])
        if K.shape[0] <= 800:
            norms.append(svdvals(K)[0])
        else:
            v0 = np.ones(K.shape[0]) / np.sqrt(K.shape[0])
            norms.append(svds(K, k=1, v0=v0, return_singular_vectors=False)[0])
    return np.array(norms, dtype=float)
