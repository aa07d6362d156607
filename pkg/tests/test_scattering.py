import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssflab.errors import InvalidPotentialError, RefineGridError, TruncationError
from ssflab.operators import Potential
from ssflab.resolvent import TransformParams, ssf_curve
from ssflab.scattering import (PhaseCurve, bound_state_count, default_l_max, default_step,
                               levinson_check, levinson_offset, phase_curve, phase_shift_1d_parity,
                               phase_shift_radial, total_phase, unwrap_phase, _raw_phases)

WELL = Potential("square_well", -4.0, 1.0)


def _mod_pi(x):
    return (np.asarray(x) + np.pi / 2) % np.pi - np.pi / 2


# closed-form square-well oracles, written independently of the integrator
def _radial_s(k, v0, a):
    kp = np.sqrt(k * k + v0)
    return -k * a + np.arctan(k / kp * np.tan(kp * a))


def _even_1d(k, v0, a):
    kp = np.sqrt(k * k + v0)
    return np.arctan(kp / k * np.tan(kp * a)) - k * a


def _odd_1d(k, v0, a):
    kp = np.sqrt(k * k + v0)
    return np.arctan(k / kp * np.tan(kp * a)) - k * a


def test_zero_potential_phases_vanish():
    zero = Potential("zero")
    assert phase_shift_radial(zero, 3, 1.7) == 0.0
    assert phase_shift_1d_parity(zero, "even", 0.4) == 0.0
    curve = phase_curve(zero, 0, [1.0])
    assert np.all(curve.delta == 0.0)


def test_square_well_s_wave_example():
    assert _mod_pi(phase_shift_radial(WELL, 0, 1.0) - _radial_s(1.0, 4.0, 1.0)) == pytest.approx(0, abs=1e-6)


def test_square_well_oracles_over_k_range():
    ks = np.linspace(0.1, 10, 50)
    d0, _ = _raw_phases(WELL, 0, ks)
    assert np.abs(_mod_pi(d0 - _radial_s(ks, 4.0, 1.0))).max() < 1e-6
    well1 = Potential("square_well", -2.0, 1.0)
    de, _ = _raw_phases(well1, "even", ks)
    do, _ = _raw_phases(well1, "odd", ks)
    assert np.abs(_mod_pi(de - _even_1d(ks, 2.0, 1.0))).max() < 1e-6
    assert np.abs(_mod_pi(do - _odd_1d(ks, 2.0, 1.0))).max() < 1e-6


def test_fourth_order_convergence():
    gauss = Potential("gaussian", -1.0, 1.0)
    k = np.array([0.5, 1.0, 3.0])
    for pot, steps in ((gauss, (0.04, 0.02, 0.01)), (WELL, (1 / 25, 1 / 50, 1 / 100))):
        d = [_raw_phases(pot, 0, k, r_m=8.0, step=h)[0] for h in steps]
        ratio = (d[0] - d[1]) / (d[1] - d[2])
        assert np.all((ratio > 12) & (ratio < 20))


def test_default_step_halving_is_converged():
    gauss = Potential("gaussian", -1.0, 1.0)
    for k in (0.5, 1.0, 2.0):
        full = phase_shift_radial(gauss, 0, k, r_m=8.0)
        h = default_step(gauss, k)
        m = int(np.ceil(8.0 / h))
        half = phase_shift_radial(gauss, 0, k, r_m=m * h, step=h / 2)
        assert abs(_mod_pi(full - half)) < 1e-8


def test_higher_partial_waves_decay():
    gauss = Potential("gaussian", -1.0, 1.0)
    for k in (0.5, 1.0, 2.0):
        l0 = int(np.ceil(k * 1.0 + 8))
        for l in (l0, l0 + 2):
            assert abs(phase_shift_radial(gauss, l, k)) < 1e-6


def test_parity_channels_need_even_potential():
    with pytest.raises(InvalidPotentialError):
        phase_shift_1d_parity(Potential("gaussian", -1.0, 1.0, center=0.3), "even", 1.0)
    with pytest.raises(ValueError):
        phase_shift_1d_parity(WELL, "both", 1.0)


def test_matching_radius_must_clear_potential():
    with pytest.raises(ValueError):
        phase_shift_radial(Potential("gaussian", -1.0, 1.0), 0, 1.0, r_m=2.0)


def test_unwrap_all_zero():
    k = np.linspace(0.1, 5, 20)
    assert np.all(unwrap_phase(k, np.zeros(20)).delta == 0.0)


def test_unwrap_synthetic_sawtooth():
    k = np.linspace(0.05, 20, 400)
    raw = np.arctan(np.tan(0.6 * k))
    curve = unwrap_phase(k, raw, anchor=0.6 * k[-1])
    assert np.allclose(curve.delta, 0.6 * k, atol=1e-12)


def test_unwrap_anchor_and_ambiguity():
    k = np.linspace(0.1, 5, 10)
    with pytest.raises(RefineGridError):
        unwrap_phase(k, np.full(10, 1.0))
    raw = np.array([0.0, np.pi / 2 - 0.01, 0.0])
    with pytest.raises(RefineGridError):
        unwrap_phase(np.array([1.0, 2.0, 3.0]), raw)


@settings(max_examples=25, deadline=None)
@given(slope=st.floats(-1.0, 1.0), offset=st.integers(-3, 3))
def test_unwrap_recovers_lines(slope, offset):
    k = np.linspace(0.1, 3.0, 200)
    true = slope * (k - k[-1]) + offset * np.pi
    curve = unwrap_phase(k, _mod_pi(true), anchor=offset * np.pi)
    assert np.allclose(curve.delta, true, atol=1e-9)


def test_levinson_square_well():
    curve = phase_curve(WELL, 0, [1.0], k_min=0.01)
    count = bound_state_count(WELL, 0)
    assert count == 1
    ok, resid = levinson_check(curve, count)
    assert ok and resid < 0.15
    assert curve.delta[0] == pytest.approx(np.pi, abs=0.15)


def test_levinson_deep_well_against_grid_count():
    deep = Potential("square_well", -30.0, 1.0)
    count = bound_state_count(deep, 0)
    # transcendental count: sqrt(30) = 5.48 lies in (3 pi/2, 5 pi/2)
    assert count == 2
    ok, _ = levinson_check(phase_curve(deep, 0, [1.0]), count)
    assert ok


def test_levinson_zero_potential():
    ok, resid = levinson_check(PhaseCurve(0, np.array([0.01, 1.0]), np.zeros(2)), 0)
    assert ok and resid == 0.0


def test_one_dimensional_levinson_offsets():
    gauss = Potential("gaussian", -1.0, 1.0)
    assert bound_state_count(gauss, "even") == 1 and bound_state_count(gauss, "odd") == 0
    assert levinson_offset(gauss, "even") == 0.5 and levinson_offset(gauss, "odd") == 0.0
    for ch in ("even", "odd"):
        curve = phase_curve(gauss, ch, [1.0])
        ok, _ = levinson_check(curve, bound_state_count(gauss, ch), offset=levinson_offset(gauss, ch))
        assert ok


def test_total_phase_definitions():
    k = np.array([0.5, 1.0, 2.0])
    zero = {key: PhaseCurve(key, k, np.zeros(3)) for key in ("even", "odd")}
    assert np.all(total_phase(zero, k**2).theta == 0.0)
    single = {0: PhaseCurve(0, k, np.array([0.3, 0.2, 0.1]))}
    single.update({l: PhaseCurve(l, k, np.zeros(3)) for l in (1, 2)})
    tp = total_phase(single, k**2)
    assert np.allclose(tp.theta, np.array([0.3, 0.2, 0.1]) / np.pi)
    assert total_phase(zero, np.array([-1.0, 0.0])).theta.tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        total_phase(zero, [0.3])


def test_truncation_tail_bound():
    k = np.array([1.0])
    chans = {l: PhaseCurve(l, k, np.array([0.5 ** l])) for l in range(4)}
    with pytest.raises(TruncationError):
        total_phase(chans, [1.0], tol=1e-3)
    tp = total_phase(chans, [1.0])
    assert 0 < tp.tail[0] < np.inf


def test_default_l_max_policy():
    assert default_l_max(WELL, 2.0) == 10


def test_phase_matches_ssf_for_gaussian(gaussian_small):
    grid, pot, eH, eH0 = gaussian_small
    curves = {ch: phase_curve(pot, ch, [1.0]) for ch in ("even", "odd")}
    theta = total_phase(curves, [1.0]).theta[0]
    xi = ssf_curve(eH, eH0, TransformParams(2.5), [1.0], grid)
    assert theta == pytest.approx(xi.xi[0], abs=3 * xi.err[0] + 0.01)
