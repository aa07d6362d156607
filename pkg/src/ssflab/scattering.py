"""Partial-wave and parity-channel phase shifts, total phase, Levinson check.

Phases follow the convention u(r) ~ sin(kr - l pi/2 + delta) (radial),
cos(kx + delta) (1D even) and sin(kx + delta) (1D odd), so an attractive
well gives delta(0+) = pi * (number of bound states) and the total phase
theta = sum_channels weight * delta / pi.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import spherical_jn, spherical_yn

from .errors import (InvalidPotentialError, RefineGridError, ResonantMatchingError,
                     TruncationError)
from .operators import Grid, Potential, build_perturbed
from .spectral import eigendecompose

MAX_STEP = 0.01
STEP_PHASE = 0.015
WAVELENGTH_CAP = 2 * np.pi
ANCHOR_TOL = 0.2
PHASE_NOISE = 1e-9


def _channel_key(channel):
    if channel in ("even", "odd"):
        return channel
    l = int(channel)
    if l < 0:
        raise ValueError("angular momentum must be nonnegative")
    return l


def _piece(potential: Potential, r: np.ndarray, inner: bool) -> np.ndarray:
    """Potential continued smoothly from one side of its (single) jump."""
    if potential.family == "square_well":
        return np.full_like(r, potential.depth if inner else 0.0)
    return potential(r)


def matching_radius(potential: Potential, k: float) -> float:
    """Smallest r with |V| r^2 < 1e-10, plus one wavelength (capped at 2 pi)."""
    return potential.effective_radius(1e-10) + min(2 * np.pi / k, WAVELENGTH_CAP)


def default_step(potential: Potential, k_max: float) -> float:
    k_loc = np.sqrt(k_max**2 + potential.sup)
    h = min(MAX_STEP, STEP_PHASE / k_loc)
    for b in potential.breakpoints:
        h = b / np.ceil(b / h)
    return h


def _free_pair(channel, k, r):
    """Free regular/irregular solutions and their r-derivatives at r."""
    x = k * r
    if channel == "even":
        return np.cos(x), -k * np.sin(x), np.sin(x), k * np.cos(x)
    if channel == "odd":
        channel = 0
    l = channel
    j, jp = spherical_jn(l, x), spherical_jn(l, x, derivative=True)
    y, yp = spherical_yn(l, x), spherical_yn(l, x, derivative=True)
    return x * j, k * (j + x * jp), x * y, k * (y + x * yp)


def _raw_phases(potential: Potential, channel, ks, r_m=None, step=None):
    channel = _channel_key(channel)
    if channel in ("even", "odd") and not potential.is_even:
        raise InvalidPotentialError("parity channels need an even potential")
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    if np.any(ks <= 0):
        raise ValueError("k must be positive")
    if potential.is_zero:
        return np.zeros_like(ks), 0.0
    if r_m is None:
        r_m = matching_radius(potential, ks.min())
    if abs(potential(np.array([r_m]))[0]) * r_m**2 >= 1e-10:
        raise ValueError(f"matching radius {r_m} is inside the potential range")
    h = default_step(potential, ks.max()) if step is None else step
    m = int(np.ceil(r_m / h - 1e-9))
    r_match = m * h
    u, du = _match_values(potential, channel, ks, h, m)
    jh, djh, yh, dyh = _free_pair(channel, ks, r_match)
    num = du * jh - u * djh
    den = du * yh - u * dyh
    size = np.hypot(du, ks * u)
    if np.any(np.hypot(num, den) < 1e-14 * size):
        raise ResonantMatchingError("matching system is singular; retry at a shifted radius")
    delta = np.arctan2(num, den)
    delta = np.where(delta > np.pi / 2, delta - np.pi, delta)
    delta = np.where(delta <= -np.pi / 2, delta + np.pi, delta)
    return delta, r_match


def _match_values(potential, channel, ks, h, m):
    """(u, u') at node m via the fourth-order Numerov derivative formula."""
    l = 0 if channel in ("even", "odd") else channel
    c = h * h / 12.0
    u_m1, u_0, u_p1, _ = _numerov_states(potential, channel, ks, h, m)
    r = h * np.array([m - 1, m + 1])
    f_m1 = l * (l + 1) / r[0] ** 2 + potential(r[:1])[0] - ks**2
    f_p1 = l * (l + 1) / r[1] ** 2 + potential(r[1:])[0] - ks**2
    du = ((1 - 2 * c * f_p1) * u_p1 - (1 - 2 * c * f_m1) * u_m1) / (2 * h)
    return u_0, du


def _numerov_states(potential, channel, ks, h, m):
    """Return u at nodes m-1, m, m+1 for each k."""
    l = 0 if channel in ("even", "odd") else channel
    k2 = ks**2
    c = h * h / 12.0
    r = h * np.arange(m + 2)
    cent = np.zeros(m + 2)
    cent[1:] = l * (l + 1) / r[1:] ** 2
    V = potential(r)
    jumps = sorted(n for n in (int(round(b / h)) for b in potential.breakpoints) if 0 < n <= m)
    V_in = _piece(potential, r, True) if jumps else None
    V_out = _piece(potential, r, False) if jumps else None
    for n in jumps:
        # the step landing on a jump node still belongs to the inner piece
        V[n] = V_in[n]

    if channel == "even":
        f0 = cent[0] + V[0] - k2
        f1 = cent[1] + V[1] - k2
        u0 = np.ones_like(ks)
        u1 = u0 * (1 + 5 * c * f0) / (1 - c * f1)
        w0 = (1 - c * f0) * u0
    else:
        u0 = np.zeros_like(ks)
        u1 = np.ones_like(ks)
        # (f u) at r = 0 equals u''(0), nonzero only for l = 1 where u ~ r^2
        w0 = -u1 / 6.0 if l == 1 else np.zeros_like(ks)
    # state: u_prev = u_{n-1}, u_cur = u_n, w_prev = (1 - c f_{n-1}) u_{n-1}
    u_prev, u_cur, w_prev = u0, u1, w0
    for n in range(1, m + 1):
        if n in jumps:
            fi = [cent[n + d] + V_in[n + d] - k2 for d in (-1, 0, 1)]
            u_next_in = (2 * (1 + 5 * c * fi[1]) * u_cur - w_prev) / (1 - c * fi[2])
            du = ((1 - 2 * c * fi[2]) * u_next_in - (1 - 2 * c * fi[0]) * u_prev) / (2 * h)
            fo = [cent[n + d] + V_out[n + d] - k2 for d in (-1, 0, 1)]
            a1, b1 = 1 - 2 * c * fo[2], -(1 - 2 * c * fo[0])
            a2, b2 = 1 - c * fo[2], 1 - c * fo[0]
            rhs1, rhs2 = 2 * h * du, 2 * (1 + 5 * c * fo[1]) * u_cur
            det = a1 * b2 - a2 * b1
            u_next = (rhs1 * b2 - rhs2 * b1) / det
            u_back = (a1 * rhs2 - a2 * rhs1) / det
            # from here on the outer piece applies, including at the jump node
            V = np.where(np.arange(m + 2) >= n, V_out, V)
            u_prev_out = u_back
        else:
            fn = cent[n] + V[n] - k2
            fn1 = cent[n + 1] + V[n + 1] - k2
            u_next = (2 * (1 + 5 * c * fn) * u_cur - w_prev) / (1 - c * fn1)
            u_prev_out = None
        if n == m:
            return u_prev if u_prev_out is None else u_prev_out, u_cur, u_next, None
        fn = cent[n] + V[n] - k2
        w_prev = (1 - c * fn) * u_cur
        u_prev, u_cur = u_cur, u_next
        big = np.abs(u_cur) > 1e150
        if big.any():
            s = np.where(big, 1e-150, 1.0)
            u_prev, u_cur, w_prev = u_prev * s, u_cur * s, w_prev * s
    raise RuntimeError("unreachable")


def phase_shift_radial(potential: Potential, l: int, k: float, r_m: float | None = None,
                       step: float | None = None) -> float:
    """delta_l(k) mod pi, in (-pi/2, pi/2]."""
    return float(_raw_phases(potential, int(l), [k], r_m, step)[0][0])


def phase_shift_1d_parity(potential: Potential, parity: str, k: float, r_m: float | None = None,
                          step: float | None = None) -> float:
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    return float(_raw_phases(potential, parity, [k], r_m, step)[0][0])


@dataclass
class PhaseCurve:
    channel: object
    k: np.ndarray
    delta: np.ndarray
    r_m: float = float("nan")

    def at(self, k: float) -> float:
        idx = np.flatnonzero(np.isclose(self.k, k, rtol=1e-12, atol=0))
        if idx.size == 0:
            raise ValueError(f"k = {k} is not on the grid of channel {self.channel}")
        return float(self.delta[idx[0]])


def unwrap_phase(k, raw, anchor: float | None = 0.0, channel=None, r_m: float = float("nan"),
                 ambiguity: float = 0.1) -> PhaseCurve:
    """Continuous representative of mod-pi phases, built downward from the largest k.

    The top sample is shifted by a multiple of pi to lie nearest ``anchor``;
    each lower sample then takes the branch with the smallest jump.
    """
    k = np.asarray(k, dtype=float)
    raw = np.asarray(raw, dtype=float)
    if k.size != raw.size or np.any(np.diff(k) <= 0):
        raise ValueError("k must be strictly increasing and match the phase samples")
    out = np.empty_like(raw)
    target = 0.0 if anchor is None else anchor
    out[-1] = raw[-1] + np.pi * np.round((target - raw[-1]) / np.pi)
    for i in range(raw.size - 2, -1, -1):
        base = raw[i] + np.pi * np.round((out[i + 1] - raw[i]) / np.pi)
        jumps = np.abs(base + np.pi * np.array([-1, 0, 1]) - out[i + 1])
        order = np.sort(jumps)
        if order[1] - order[0] < ambiguity:
            raise RefineGridError(f"ambiguous branch between k={k[i]:.6g} and k={k[i + 1]:.6g}")
        out[i] = base + np.pi * (np.argmin(jumps) - 1)
    if anchor == 0.0 and abs(out[-1]) >= ANCHOR_TOL:
        raise RefineGridError(f"phase at k_max={k[-1]:.4g} is {out[-1]:.3f}; raise k_max")
    return PhaseCurve(channel, k, out, r_m)


def born_k_max(potential: Potential, target: float = 0.05) -> float:
    """Momentum above which the Born estimate of |delta| drops below ``target``."""
    if potential.is_zero:
        return 1.0
    r_eff = potential.effective_radius(1e-10)
    brk = list(potential.breakpoints)
    integral = quad(lambda r: abs(float(potential(np.array([r]))[0])), 0.0, r_eff,
                    points=brk or None, limit=200)[0]
    # first-order estimate: delta ~ -(1/2k) int V dr
    return max(integral / (2 * target), 4.0)


def phase_curve(potential: Potential, channel, k_points, k_min: float = 0.01,
                k_max: float | None = None, n_base: int = 160, max_jump: float = 0.3,
                max_rounds: int = 14, step: float | None = None) -> PhaseCurve:
    """Unwrapped channel phase on a grid containing ``k_points``, refined until smooth."""
    channel = _channel_key(channel)
    k_points = np.atleast_1d(np.asarray(k_points, dtype=float))
    if k_max is None:
        k_max = max(born_k_max(potential), 2 * k_points.max())
    k_min = min(k_min, k_points.min())
    base = np.geomspace(k_min, k_max, n_base)
    k = np.unique(np.concatenate([base, k_points]))
    raw, r_m = _raw_phases(potential, channel, k, step=step)
    r_m_fixed = matching_radius(potential, k_min) if not potential.is_zero else 0.0
    for _ in range(max_rounds):
        try:
            curve = unwrap_phase(k, raw, channel=channel, r_m=r_m)
            jumps = np.abs(np.diff(curve.delta))
        except RefineGridError as exc:
            if "k_max" in str(exc):
                raise
            jumps = np.full(k.size - 1, np.inf)
            curve = None
        bad = np.flatnonzero(jumps > max_jump)
        if curve is not None and bad.size == 0:
            return curve
        mids = 0.5 * (k[bad] + k[bad + 1]) if bad.size < k.size - 1 else 0.5 * (k[:-1] + k[1:])
        new_raw, _ = _raw_phases(potential, channel, mids, r_m=r_m_fixed or None, step=step)
        k = np.concatenate([k, mids])
        raw = np.concatenate([raw, new_raw])
        order = np.argsort(k)
        k, raw = k[order], raw[order]
    raise RefineGridError(f"phase curve for channel {channel} did not become smooth")


@dataclass
class TotalPhase:
    lam: np.ndarray
    theta: np.ndarray
    l_max: int
    tail: np.ndarray = field(default_factory=lambda: np.empty(0))


def default_l_max(potential: Potential, k: float) -> int:
    """ceil(k a_eff) + 8 with a_eff the core radius of the potential."""
    return int(np.ceil(k * potential.core_radius())) + 8


def total_phase(channels: dict, lam, tol: float | None = None) -> TotalPhase:
    """theta(lam) = sum over channels of weight * delta / pi; zero for lam <= 0.

    ``channels`` maps 'even'/'odd' (1D) or l (radial) to unwrapped curves.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    keys = list(channels)
    radial = all(isinstance(key, (int, np.integer)) for key in keys)
    if radial:
        keys = sorted(keys)
        if keys != list(range(len(keys))):
            raise ValueError("radial channels must be l = 0 .. l_max without gaps")
    elif set(keys) != {"even", "odd"}:
        raise ValueError("1D channels must be exactly 'even' and 'odd'")
    theta = np.zeros_like(lam)
    tail = np.zeros_like(lam)
    for i, e in enumerate(lam):
        if e <= 0:
            continue
        k = np.sqrt(e)
        if not radial:
            theta[i] = (channels["even"].at(k) + channels["odd"].at(k)) / np.pi
            continue
        terms = np.array([(2 * l + 1) * channels[l].at(k) / np.pi for l in keys])
        theta[i] = terms.sum()
        tail[i] = _tail_bound(np.abs(terms))
    if tol is not None and np.any(tail > tol):
        raise TruncationError(f"channel truncation tail {tail.max():.2e} exceeds {tol:.2e}")
    return TotalPhase(lam, theta, max(k for k in keys) if radial else 0, tail)


def _tail_bound(terms: np.ndarray) -> float:
    """Geometric extrapolation of the last three |channel terms|.

    Terms at the integrator noise floor count as converged; their sum is
    returned as the bound.
    """
    if terms.size < 3:
        return float("inf")
    t2, t1, t0 = terms[-3:]
    l = terms.size - 1
    if max(t2, t1, t0) < PHASE_NOISE * (2 * l + 1):
        return float(t2 + t1 + t0)
    ratios = [t1 / t2 if t2 else 1.0, t0 / t1 if t1 else 1.0]
    q = max(ratios)
    if q >= 1.0:
        return float("inf")
    return float(t0 * q / (1.0 - q))


def levinson_check(curve: PhaseCurve, count: int, tol: float = 0.15, offset: float = 0.0):
    """Compare delta(k_min) with (count - offset) pi; returns (passed, residual)."""
    residual = float(abs(curve.delta[0] - (count - offset) * np.pi))
    return residual < tol, residual


def bound_state_count(potential: Potential, channel=0, half_width: float = 40.0,
                      points: int = 4000) -> int:
    """Negative eigenvalues in one channel, counted on a Dirichlet grid.

    Parity channels use the full line: bound states alternate in parity
    starting from an even ground state.
    """
    channel = _channel_key(channel)
    if channel in ("even", "odd"):
        grid = Grid("line", half_width, 2 * points + 1)
    else:
        grid = Grid("radial", half_width, points, channel)
    eig = eigendecompose(build_perturbed(grid, potential), vectors=False)
    total = int(np.count_nonzero(eig.values < 0))
    if channel == "even":
        return (total + 1) // 2
    if channel == "odd":
        return total // 2
    return total


def levinson_offset(potential: Potential, channel) -> float:
    """Threshold offset in units of pi: 1/2 for the 1D even channel of a nonzero potential."""
    return 0.5 if channel == "even" and not potential.is_zero else 0.0
