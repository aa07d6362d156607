"""Eigendecomposition, counting functions and the Krein trace formula."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .curves import SSFCurve
from .errors import DegenerateEnergyError, DomainCoverageError, ResolutionError, SolverFailureError
from .operators import Grid, HamiltonianMatrix

FULL_CHECK_SIZE = 1024
SAMPLED_CHECKS = 64


@dataclass
class EigenSystem:
    """Ascending eigenvalues and (optionally) orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray | None = None
    label: str = "free"
    grid: Grid | None = None
    scale: float = 1.0

    @classmethod
    def from_values(cls, values, label="free", scale=None):
        values = np.sort(np.asarray(values, dtype=float))
        if scale is None:
            scale = float(np.abs(values).max()) if values.size else 1.0
        return cls(values, None, label, None, scale)

    @property
    def size(self) -> int:
        return self.values.size


def _tridiag_matvec(d, e, v):
    out = d[:, None] * v
    out[:-1] += e[:, None] * v[1:]
    out[1:] += e[:, None] * v[:-1]
    return out


def eigendecompose(H: HamiltonianMatrix, vectors: bool = True, check: bool = True) -> EigenSystem:
    d, e = H.diagonal, H.offdiagonal
    scale = H.norm_bound()
    try:
        if not np.any(e):
            order = np.argsort(d, kind="stable")
            w = d[order]
            v = np.eye(d.size)[:, order] if vectors else None
        elif vectors:
            w, v = eigh_tridiagonal(d, e)
        else:
            w, v = eigh_tridiagonal(d, e, eigvals_only=True), None
    except LinAlgError as exc:
        raise SolverFailureError(f"tridiagonal eigensolver failed: {exc}") from exc
    if check and v is not None:
        _check_eigenpairs(d, e, w, v, scale)
    return EigenSystem(w, v, H.label, H.grid, max(scale, 1e-300))


def _check_eigenpairs(d, e, w, v, scale):
    n = w.size
    if n <= FULL_CHECK_SIZE:
        cols = np.arange(n)
    else:
        # deterministic sample keeps the check O(N) for large grids
        rng = np.random.default_rng(0)
        cols = np.unique(np.concatenate([[0, n - 1], rng.choice(n, SAMPLED_CHECKS, replace=False)]))
    vs = v[:, cols]
    resid = np.linalg.norm(_tridiag_matvec(d, e, vs) - vs * w[cols], axis=0).max()
    if resid > 1e-8 * max(scale, 1.0):
        raise SolverFailureError(f"eigen-residual {resid:.3e} exceeds 1e-8 ||H||", resid)
    gram = vs.T @ vs if n > FULL_CHECK_SIZE else v.T @ v
    orth = np.abs(gram - np.eye(gram.shape[0])).max()
    if orth > 1e-10:
        raise SolverFailureError(f"eigenvectors not orthonormal (deviation {orth:.3e})", orth)


def _guard(*systems) -> float:
    return 1e-12 * max(max(s.scale for s in systems), 1.0)


def count_below(eig: EigenSystem, lam) -> np.ndarray:
    return np.searchsorted(eig.values, lam, side="right")


def counting_difference(eigH: EigenSystem, eigH0: EigenSystem, lam: float) -> int:
    """#{lambda_j(H) <= lam} - #{lambda_j(H0) <= lam}."""
    guard = _guard(eigH, eigH0)
    for s in (eigH, eigH0):
        if s.size and np.abs(s.values - lam).min() < guard:
            raise DegenerateEnergyError(f"energy {lam!r} lies within {guard:.1e} of an eigenvalue")
    return int(count_below(eigH, lam) - count_below(eigH0, lam))


def counting_curve(eigH: EigenSystem, eigH0: EigenSystem, lo: float, hi: float,
                   max_step: float) -> SSFCurve:
    """Exact counting-difference SSF on [lo, hi], with a break at every eigenvalue.

    Each inter-eigenvalue segment gets an even number of Simpson panels no
    wider than ``max_step``; segment ends are pulled in by twice the
    degenerate-energy guard.
    """
    if not hi > lo:
        raise ValueError("counting curve needs lo < hi")
    guard = _guard(eigH, eigH0)
    pad = 2 * guard
    ev = np.concatenate([eigH.values, eigH0.values])
    ev = np.unique(ev[(ev > lo) & (ev < hi)])
    if ev.size:
        keep = np.concatenate([[True], np.diff(ev) > 4 * pad])
        ev = ev[keep]
    edges = np.concatenate([[lo], ev, [hi]])
    chunks = []
    for a, b in zip(edges[:-1], edges[1:]):
        a_in = a + pad if a > lo else a
        b_in = b - pad if b < hi else b
        if b_in <= a_in:
            continue
        m = max(2, int(np.ceil((b_in - a_in) / max_step)))
        m += m % 2
        chunks.append(np.linspace(a_in, b_in, m + 1))
    lam = np.concatenate(chunks)
    xi = (count_below(eigH, lam) - count_below(eigH0, lam)).astype(float)
    floor = min(eigH.values[0], eigH0.values[0])
    return SSFCurve(lam, xi, "counting", eta=0.0, err=np.zeros_like(xi), breaks=ev,
                    zero_below=floor, meta={"lo": lo, "hi": hi})


@dataclass(frozen=True)
class TestFunction:
    """Smooth test function f with closed-form derivative.

    ``gaussian``: exp(-(x-center)^2 / (2 width^2)); ``heat``: exp(-t x);
    ``bump``: exp(1 - 1/(1-u^2)) for |u| < 1, u = (x-center)/width.
    """

    __test__ = False  # not a pytest class

    family: str
    center: float = 0.0
    width: float = 1.0
    t: float = 1.0

    def __post_init__(self):
        if self.family not in ("gaussian", "heat", "bump"):
            raise ValueError(f"unknown test function family {self.family!r}")
        if self.family == "heat" and not self.t > 0:
            raise ValueError("heat kernel needs t > 0")
        if self.family != "heat" and not self.width > 0:
            raise ValueError("width must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "heat":
            return np.exp(-self.t * x)
        u = (x - self.center) / self.width
        if self.family == "gaussian":
            return np.exp(-0.5 * u * u)
        inside = np.abs(u) < 1
        s = np.where(inside, u, 0.0)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - s * s)), 0.0)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "heat":
            return -self.t * np.exp(-self.t * x)
        u = (x - self.center) / self.width
        if self.family == "gaussian":
            return -u / self.width * np.exp(-0.5 * u * u)
        inside = np.abs(u) < 1
        s = np.where(inside, u, 0.0)
        q = 1.0 - s * s
        return np.where(inside, np.exp(1.0 - 1.0 / q) * (-2.0 * s / q**2) / self.width, 0.0)

    @property
    def scale(self) -> float:
        """Length scale of f' used for sampling-density checks."""
        if self.family == "heat":
            return 1.0 / self.t
        if self.family == "gaussian":
            return self.width
        return self.width / 4.0

    def support(self, tail: float = 1e-15) -> tuple[float, float]:
        """Interval outside which |f'| is below ``tail`` times its scale."""
        if self.family == "heat":
            return -np.inf, np.log(1.0 / tail) / self.t
        if self.family == "gaussian":
            r = self.width * np.sqrt(2 * np.log(1.0 / tail) + 2 * np.log(np.log(1.0 / tail)))
            return self.center - r, self.center + r
        return self.center - self.width, self.center + self.width


def krein_lhs(eigH: EigenSystem, eigH0: EigenSystem, f: TestFunction) -> float:
    return float(np.sum(f(eigH.values)) - np.sum(f(eigH0.values)))


def krein_rhs(curve: SSFCurve, f: TestFunction, tail: float = 1e-15) -> float:
    """-int f'(lam) xi(lam) dlam by composite Simpson, segment by segment."""
    lo, hi = f.support(tail)
    need_lo = lo if curve.zero_below is None else max(lo, curve.zero_below)
    if hi <= need_lo:
        return 0.0
    if not (curve.lam[0] <= need_lo and curve.lam[-1] >= hi):
        raise DomainCoverageError(
            f"f' is supported on [{need_lo:.4g}, {hi:.4g}] but the curve covers "
            f"[{curve.lam[0]:.4g}, {curve.lam[-1]:.4g}]")
    total = 0.0
    limit = f.scale / 20.0
    for seg in curve.segments():
        x, y = curve.lam[seg], curve.xi[seg]
        if x.size < 2:
            continue
        inside = (x[1:] > need_lo) & (x[:-1] < hi)
        if inside.any() and np.diff(x)[inside].max() > limit * (1 + 1e-9):
            raise ResolutionError(f"curve spacing exceeds {limit:.3g} (scale of f'/20)")
        total += simpson(f.derivative(x) * y, x=x)
    return -float(total)
