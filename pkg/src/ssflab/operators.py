"""Finite-difference Schroedinger operators on a 1D box or a radial half-line.

Units are hbar^2/2m = 1, so the free operator is exactly -d^2/dx^2 and
energies are measured in inverse length squared.  Dirichlet conditions are
imposed at the box edge (and at r = 0 for radial grids).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import CertificateRejectedError, InvalidGridError, InvalidPotentialError

FAMILIES = ("gaussian", "square_well", "smooth_bump", "zero")


@dataclass(frozen=True)
class Grid:
    """Uniform grid; ``half_width`` is L (line: [-L, L], radial: [0, L])."""

    kind: str
    half_width: float
    points: int
    ang_momentum: int = 0

    def __post_init__(self):
        if self.kind not in ("line", "radial"):
            raise InvalidGridError(f"unknown grid kind {self.kind!r}")
        if not self.half_width > 0:
            raise InvalidGridError("half_width must be positive")
        if self.points < 3:
            raise InvalidGridError("need at least 3 interior points")
        if self.ang_momentum < 0 or int(self.ang_momentum) != self.ang_momentum:
            raise InvalidGridError("angular momentum must be a nonnegative integer")
        if self.kind == "line" and self.ang_momentum:
            raise InvalidGridError("angular momentum is only meaningful on radial grids")

    @property
    def length(self) -> float:
        return 2 * self.half_width if self.kind == "line" else self.half_width

    @property
    def spacing(self) -> float:
        return self.length / (self.points + 1)

    @property
    def nodes(self) -> np.ndarray:
        i = np.arange(1, self.points + 1)
        if self.kind == "line":
            return -self.half_width + i * self.spacing
        return i * self.spacing

    @property
    def dimension(self) -> int:
        return 1 if self.kind == "line" else 3

    def with_channel(self, ang_momentum: int) -> "Grid":
        return Grid(self.kind, self.half_width, self.points, ang_momentum)

    def refined(self, level: int = 1) -> "Grid":
        """Grid with the spacing halved ``level`` times (nodes are nested)."""
        return Grid(self.kind, self.half_width, (self.points + 1) * 2**level - 1,
                    self.ang_momentum)


@dataclass(frozen=True)
class Potential:
    """Radially symmetric potential V(x) = depth * g(|x - center| / range).

    ``alpha`` and ``decay_constant`` form the decay certificate
    |V(x)| <= C <x>^-alpha; both may be left unset and filled in by
    :func:`certify_decay`.
    """

    family: str
    depth: float = 0.0
    range: float = 1.0
    center: float = 0.0
    alpha: float | None = None
    decay_constant: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidPotentialError(f"unknown potential family {self.family!r}")
        if not np.isfinite(self.depth):
            raise InvalidPotentialError("depth must be finite")
        if self.family != "zero" and not self.range > 0:
            raise InvalidPotentialError("range must be positive")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.abs(x - self.center) / self.range
        if self.family == "zero" or self.depth == 0.0:
            return np.zeros_like(x)
        if self.family == "gaussian":
            return self.depth * np.exp(-u * u)
        if self.family == "square_well":
            return np.where(u < 1.0, self.depth, 0.0)
        # smooth_bump: C-infinity, compact support, peak value = depth at the center
        inside = u < 1.0
        safe = np.where(inside, u, 0.0)
        return np.where(inside, self.depth * np.exp(1.0 - 1.0 / (1.0 - safe * safe)), 0.0)

    @property
    def is_zero(self) -> bool:
        return self.family == "zero" or self.depth == 0.0

    @property
    def is_even(self) -> bool:
        return self.center == 0.0 or self.is_zero

    @property
    def breakpoints(self) -> tuple:
        """Radii (from the center) where V jumps."""
        if self.family == "square_well" and not self.is_zero:
            return (self.range,)
        return ()

    @property
    def sup(self) -> float:
        return 0.0 if self.is_zero else abs(self.depth)

    def effective_radius(self, tol: float = 1e-10) -> float:
        """Smallest r beyond which |V(r)| r^2 < tol (measured from the origin)."""
        if self.is_zero:
            return 0.0
        if self.family in ("square_well", "smooth_bump"):
            return self.range + abs(self.center)
        g = lambda r: abs(self.depth) * np.exp(-(r / self.range) ** 2) * r * r - tol
        lo = self.range
        if g(lo) <= 0:
            return lo + abs(self.center)
        hi = 2 * lo
        while g(hi) > 0:
            hi *= 2
        return brentq(g, lo, hi, xtol=1e-12) + abs(self.center)

    def core_radius(self, rel: float = 1e-3) -> float:
        """Radius outside which |V| stays below ``rel`` times its peak."""
        if self.is_zero:
            return 0.0
        if self.family == "square_well":
            return self.range
        if self.family == "gaussian":
            return self.range * np.sqrt(np.log(1.0 / rel))
        # smooth_bump: exp(1 - 1/(1-u^2)) = rel
        s = 1.0 / (1.0 - np.log(rel))
        return self.range * np.sqrt(1.0 - s)


@dataclass(frozen=True)
class HamiltonianMatrix:
    """Real symmetric tridiagonal matrix stored by its two bands."""

    grid: Grid
    diagonal: np.ndarray
    offdiagonal: np.ndarray
    label: str = "free"

    @property
    def size(self) -> int:
        return self.diagonal.size

    def dense(self) -> np.ndarray:
        return (np.diag(self.diagonal) + np.diag(self.offdiagonal, 1)
                + np.diag(self.offdiagonal, -1))

    def norm_bound(self) -> float:
        """Gershgorin bound on the spectral norm."""
        off = np.abs(self.offdiagonal)
        rows = np.abs(self.diagonal).copy()
        rows[:-1] += off
        rows[1:] += off
        return float(rows.max())


def build_free(grid: Grid) -> HamiltonianMatrix:
    h = grid.spacing
    diag = np.full(grid.points, 2.0 / h**2)
    if grid.kind == "radial" and grid.ang_momentum:
        l = grid.ang_momentum
        diag = diag + l * (l + 1) / grid.nodes**2
    off = np.full(grid.points - 1, -1.0 / h**2)
    return HamiltonianMatrix(grid, diag, off, "free")


def build_perturbed(grid: Grid, potential: Potential) -> HamiltonianMatrix:
    free = build_free(grid)
    values = potential(grid.nodes)
    if grid.kind == "line" and not np.allclose(values, values[::-1], rtol=0,
                                               atol=1e-12 * max(potential.sup, 1.0)):
        raise InvalidPotentialError("1D potentials must be even about the box center")
    return HamiltonianMatrix(grid, free.diagonal + values, free.offdiagonal, "perturbed")


@dataclass(frozen=True)
class DecayCertificate:
    alpha: float
    dimension: int
    decay_constant: float
    passed: bool
    half_range_constant: float


def certify_decay(potential: Potential | Callable, alpha: float, n: int,
                  sample_count: int = 4096, sample_range: float = 20.0,
                  seed: int = 0) -> DecayCertificate:
    """Fit C in |V(x)| <= C <x>^-alpha from dense radial samples.

    The fit passes when it is finite and does not grow when the sampling
    range doubles from ``sample_range / 2`` to ``sample_range``; a bound
    that is only met because sampling stopped early is rejected.
    """
    if not alpha > n + 3:
        raise CertificateRejectedError(f"decay exponent alpha={alpha} must exceed n + 3 = {n + 3}")
    if sample_count < 1000:
        raise ValueError("sample_count must be at least 1000")
    rng = np.random.default_rng(seed)
    r = np.concatenate([np.linspace(0.0, sample_range, sample_count),
                        rng.uniform(0.0, sample_range, sample_count // 4)])
    weighted = np.abs(np.asarray(potential(r), dtype=float)) * (1.0 + r * r) ** (alpha / 2)
    c_fit = float(weighted.max())
    c_half = float(weighted[r <= sample_range / 2].max())
    passed = bool(np.isfinite(c_fit) and c_fit <= c_half * (1 + 1e-9))
    return DecayCertificate(alpha, n, c_fit, passed, c_half)


def with_certificate(potential: Potential, n: int, alpha: float | None = None,
                     seed: int = 0) -> Potential:
    """Return ``potential`` with (alpha, C) filled in; raises if uncertifiable."""
    alpha = potential.alpha if alpha is None else alpha
    if alpha is None:
        alpha = n + 7.0
    cert = certify_decay(potential, alpha, n, seed=seed)
    if not cert.passed:
        raise CertificateRejectedError(
            f"|V| <x>^{alpha} keeps growing with the sample range (C_fit={cert.decay_constant:.3g})")
    return Potential(potential.family, potential.depth, potential.range, potential.center,
                     alpha, cert.decay_constant)
