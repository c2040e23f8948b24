import numpy as np
import pytest

from hydrosta.trajectory import (HorizonError, ReferenceProfile, Segment, max_abs_derivative,
                                 paper_profile, sample, step_profile)


def quintic(a=0.0, b=0.1, t0=0.0, t1=2.0):
    return ReferenceProfile((Segment(t0, t1, "quintic", a, b),))


def test_quintic_midpoint_and_boundaries():
    p = quintic()
    assert sample(p, 1.0) == pytest.approx(0.05)
    for t in (0.0, 2.0):
        assert sample(p, t, 1) == pytest.approx(0.0, abs=1e-15)
        assert sample(p, t, 2) == pytest.approx(0.0, abs=1e-14)


def test_quintic_constant_when_endpoints_equal():
    p = quintic(0.03, 0.03)
    t = np.linspace(0, 2, 11)
    assert all(sample(p, x) == 0.03 for x in t)
    assert all(sample(p, x, 3) == 0.0 for x in t)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_quintic_derivatives_by_central_difference(k):
    p = quintic()
    h = 1e-5
    # relative to the derivative's magnitude; zero crossings would defeat a pointwise ratio
    scale = max_abs_derivative(p, k + 1)
    for t in np.linspace(0.2, 1.8, 9):
        fd = (sample(p, t + h, k) - sample(p, t - h, k)) / (2 * h)
        exact = sample(p, t, k + 1)
        assert abs(fd - exact) <= 1e-6 * scale


def test_paper_profile_values():
    p = paper_profile()
    assert sample(p, 0.0) == 0.0
    assert sample(p, 2.0) == pytest.approx(0.1)
    assert sample(p, 2.5) == pytest.approx(0.1)
    assert sample(p, 5.0) == pytest.approx(0.02)
    assert sample(p, 1.0) == pytest.approx(0.05)
    assert sample(p, 9.0) == pytest.approx(0.1)
    assert sample(p, 9.0 - 1e-9) == pytest.approx(0.06)
    assert 9.0 in p.discontinuities(0)
    assert not p.is_smooth_at(9.0)
    assert p.t_end >= 14.0


def test_derivative_orders_on_hold_and_ramp():
    p = paper_profile()
    assert sample(p, 2.5, 1) == 0.0
    assert sample(p, 7.0, 1) == pytest.approx((0.06 - 0.02) / 2.0)
    # derivative across the step is reported from the right segment, not as an impulse
    assert sample(p, 9.0, 1) == 0.0


def test_out_of_horizon_and_order():
    p = paper_profile()
    with pytest.raises(HorizonError):
        sample(p, 14.5)
    with pytest.raises(HorizonError):
        sample(p, -0.1)
    with pytest.raises(ValueError):
        sample(p, 1.0, 5)


def test_profile_structure_validation():
    with pytest.raises(ValueError):
        ReferenceProfile((Segment(0.0, 1.0, "hold", 0, 0), Segment(1.5, 2.0, "hold", 0, 0)))
    with pytest.raises(ValueError):
        Segment(0.0, 1.0, "spline", 0, 1)
    with pytest.raises(ValueError):
        Segment(0.0, 1.0, "hold", 0, 1)


def test_round_trip_and_step_profile():
    p = paper_profile()
    assert ReferenceProfile.from_list(p.to_list()) == p
    s = step_profile(0.0, 0.05, 0.5, 4.0)
    assert sample(s, 0.49) == 0.0 and sample(s, 0.5) == 0.05


def test_acceleration_bound_of_quintic():
    # max |r''| of a rest-to-rest quintic is 10/sqrt(3) h/T^2
    p = quintic()
    assert max_abs_derivative(p, 2) == pytest.approx(10 / np.sqrt(3) * 0.1 / 4, rel=1e-4)
