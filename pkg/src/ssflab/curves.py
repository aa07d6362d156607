"""Sampled SSF curves shared by the spectral, resolvent and pipeline modules."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROUTES = ("contour", "determinant", "counting", "phase", "excess")


@dataclass
class SSFCurve:
    """xi(lambda) sampled on a strictly increasing energy grid.

    ``breaks`` lists energies where the curve jumps (piecewise-constant
    counting curves); quadrature never straddles a break.  ``zero_below``
    records an energy under which the curve is known to vanish.
    """

    lam: np.ndarray
    xi: np.ndarray
    route: str
    eta: np.ndarray | float | None = None
    err: np.ndarray | None = None
    breaks: np.ndarray = field(default_factory=lambda: np.empty(0))
    zero_below: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.breaks = np.sort(np.asarray(self.breaks, dtype=float))
        if self.route not in ROUTES:
            raise ValueError(f"unknown route {self.route!r}")
        if self.lam.shape != self.xi.shape or self.lam.ndim != 1:
            raise ValueError("lam and xi must be 1D arrays of equal length")
        if not np.all(np.isfinite(self.xi)):
            raise ValueError("SSF samples must be finite")
        if np.any(np.diff(self.lam) <= 0):
            raise ValueError("energy grid must be strictly increasing")
        if self.err is not None:
            self.err = np.asarray(self.err, dtype=float)

    def __len__(self):
        return self.lam.size

    def segments(self):
        """Index slices of the maximal runs of samples not separated by a break."""
        cuts = np.searchsorted(self.lam, self.breaks)
        edges = np.unique(np.concatenate([[0], cuts, [self.lam.size]]))
        return [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]
