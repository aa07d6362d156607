import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssflab.errors import BoxContaminationError, DegenerateEnergyError, ExtrapolationError
from ssflab.excess import (CutoffProfile, assemble_channels, charge_from_weights,
                           cutoff_weights, excess_charge_R, extrapolate_R, vector_weights)
from ssflab.operators import Grid, Potential, build_free, build_perturbed
from ssflab.resolvent import TransformParams, default_shift
from ssflab.spectral import counting_difference, eigendecompose


def test_profile_shape():
    prof = CutoffProfile(4.0, plateau=0.5)
    x = np.array([0.0, 1.9, 2.0, 3.0, 4.0, 5.0, -3.0])
    th = prof(x)
    assert th[0] == 1.0 and th[1] == 1.0 and th[2] == 1.0
    assert 0.0 < th[3] < 1.0 and th[4] == 0.0 and th[5] == 0.0
    assert th[6] == th[3]
    with pytest.raises(ValueError):
        CutoffProfile(1.0, plateau=1.2)


@settings(max_examples=40, deadline=None)
@given(u=st.floats(0.0, 1.5), du=st.floats(0.0, 0.5), plateau=st.floats(0.1, 0.9))
def test_profile_monotone_and_bounded(u, du, plateau):
    prof = CutoffProfile(1.0, plateau)
    a, b = prof.theta(u), prof.theta(u + du)
    assert 0.0 <= b <= a <= 1.0


def test_box_guard():
    g = Grid("line", 20.0, 400)
    cutoff_weights(g, CutoffProfile(8.0))
    with pytest.raises(BoxContaminationError):
        cutoff_weights(g, CutoffProfile(8.5))
    assert cutoff_weights(g, CutoffProfile(8.5), guard=False).shape == (400,)


def test_vector_weights_orthonormal_columns(tiny_pair):
    _, _, _, _, eH, _ = tiny_pair
    ones = np.ones(eH.size)
    assert np.allclose(vector_weights(eH, ones, chunk=17), 1.0)
    two = vector_weights(eH, np.column_stack([ones, 2 * ones]))
    assert two.shape == (eH.size, 2) and np.allclose(two[:, 1], 2.0)


def test_zero_potential_has_no_excess_charge():
    g = Grid("line", 10.0, 200)
    e = eigendecompose(build_free(g))
    assert excess_charge_R(e, e, 1.03, CutoffProfile(3.0)) == 0.0


def test_full_cutoff_reproduces_counting(tiny_pair):
    grid, _, _, _, eH, eH0 = tiny_pair
    prof = CutoffProfile(1e3)
    ev = np.sort(np.concatenate([eH.values, eH0.values]))
    for i in (5, 17, 40):
        lam = 0.5 * (ev[i] + ev[i + 1])
        z = excess_charge_R(eH, eH0, lam, prof, guard=False)
        assert z == pytest.approx(counting_difference(eH, eH0, lam), abs=1e-10)


def test_sharp_energy_on_eigenvalue_rejected(tiny_pair):
    _, _, _, _, eH, eH0 = tiny_pair
    with pytest.raises(DegenerateEnergyError):
        excess_charge_R(eH, eH0, float(eH.values[4]), CutoffProfile(1.0))


def test_smoothed_charge_tends_to_sharp(tiny_pair):
    _, _, _, _, eH, eH0 = tiny_pair
    p = TransformParams(default_shift(eH))
    ev = np.sort(np.concatenate([eH.values, eH0.values]))
    lam = 0.5 * (ev[20] + ev[21])
    prof = CutoffProfile(2.0)
    sharp = excess_charge_R(eH, eH0, lam, prof)
    smooth = excess_charge_R(eH, eH0, lam, prof, params=p, eta=1e-9)
    assert smooth == pytest.approx(sharp, abs=1e-6)


def test_charge_from_weights_multiple_columns():
    vals = np.array([-1.0, 0.5, 2.0])
    local = np.array([[1.0, 0.5], [1.0, 0.5], [1.0, 0.5]])
    z = charge_from_weights(vals, local, np.array([0.4, 3.0, 4.0]), local, 1.0)
    assert np.allclose(z, [1.0, 0.5])


def test_extrapolate_recovers_power_law():
    R = np.array([5.0, 10.0, 20.0, 40.0, 80.0])
    Z = 0.3 + 0.7 * (R / 5.0) ** -1.3
    fit = extrapolate_R(R, Z)
    assert fit.limit == pytest.approx(0.3, abs=1e-8)
    assert fit.exponent == pytest.approx(1.3, abs=1e-6)
    assert fit.residual < 1e-9


def test_extrapolate_constant_sequence():
    fit = extrapolate_R([1, 2, 4, 8], [0.25] * 4)
    assert fit.limit == 0.25 and np.isnan(fit.exponent)


def test_extrapolate_rejections():
    R = [1.0, 2.0, 4.0, 8.0]
    with pytest.raises(ExtrapolationError):
        extrapolate_R(R, [0.0, 1.0, 0.5, 0.9])
    with pytest.raises(ValueError):
        extrapolate_R([1.0, 2.0, 3.0, 10.0], [0, 1, 2, 3])
    with pytest.raises(ValueError):
        extrapolate_R(R[:3], [0, 1, 2])
    with pytest.raises(ExtrapolationError):
        # slow drift: any admissible fit lands far outside the data
        extrapolate_R(R, [1.0, 1.1, 1.2, 1.3])


def test_assemble_channels():
    total, used = assemble_channels([0.5, 0.1, 1e-6, 0.3], tol=1e-4)
    assert used == 3 and total == pytest.approx(0.5 + 0.3 + 5e-6)
    total, used = assemble_channels([0.5, 1e-6, 0.2], tol=1e-4, min_channels=3)
    assert used == 3
