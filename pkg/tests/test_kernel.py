import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from obstacle_ridge.errors import DimensionError, ParamError, ShapeError
from obstacle_ridge.kernel import (EuclideanGreenKernel, GreenKernel, SpaceParams, green_constant, green_eval,
                                   level_radius, truncated_eval)


def test_green_constant_closed_forms():
    assert green_constant(3) == pytest.approx(1 / (2 * math.pi), rel=1e-14)
    assert green_constant(4) == pytest.approx(1 / (2 * math.pi**2), rel=1e-14)
    assert green_constant(3) == pytest.approx(0.159154943, abs=1e-9)
    assert green_constant(4) == pytest.approx(0.050660592, abs=1e-9)


@pytest.mark.parametrize("d", [2, 1, 0, 2.5])
def test_green_constant_rejects_recurrent_dimensions(d):
    with pytest.raises(DimensionError):
        green_constant(d)


def test_green_constant_large_d_branch_is_continuous():
    # both evaluation branches agree where they overlap
    from scipy import special
    d = 299
    direct = special.gamma(d / 2 - 1) / (2 * math.pi ** (d / 2))
    assert green_constant(d) == pytest.approx(direct, rel=1e-12)
    assert green_constant(400) > 0


def test_green_eval_examples(k3):
    x = np.zeros(3)
    assert green_eval(k3, x, np.array([1.0, 0, 0])) == pytest.approx(0.1591549, abs=1e-7)
    assert green_eval(k3, x, np.array([0, 0.5, 0])) == pytest.approx(1 / math.pi, rel=1e-14)
    assert green_eval(k3, x, x) == math.inf


def test_green_eval_dimension_mismatch(k3):
    with pytest.raises(ShapeError):
        green_eval(k3, np.zeros(3), np.zeros(2))
    with pytest.raises(ShapeError):
        green_eval(k3, 1.0, np.zeros(3))


def test_level_radius_examples(k3):
    c3 = green_constant(3)
    assert level_radius(k3, c3) == pytest.approx(1.0, rel=1e-15)
    assert level_radius(k3, 2 * c3) == pytest.approx(0.5, rel=1e-15)
    assert level_radius(EuclideanGreenKernel(4), green_constant(4)) == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("gamma", [0.0, -1.0, math.inf, math.nan])
def test_level_radius_rejects_bad_gamma(k3, gamma):
    with pytest.raises(ParamError):
        level_radius(k3, gamma)


def test_truncated_eval_examples(k3):
    x, y = np.zeros(3), np.array([0, 0, 1.0])
    assert truncated_eval(k3, x, y, 0.1) == 0.1
    assert truncated_eval(k3, x, x, 5.0) == 5.0
    assert truncated_eval(k3, x, y, 1.0) == pytest.approx(0.1591549, abs=1e-7)


class _Radial(GreenKernel):
    """Same profile as the Euclidean kernel but without the closed-form level set."""

    def __init__(self, d):
        self.params = SpaceParams(d)

    def profile(self, r):
        return EuclideanGreenKernel(self.dimension).profile(r)


@given(d=st.integers(3, 8), gamma=st.floats(1e-6, 1e6))
def test_level_radius_round_trip(d, gamma):
    k = EuclideanGreenKernel(d)
    R = k.level_radius(gamma)
    assert k.profile(R) == pytest.approx(gamma, rel=1e-12)
    # generic root finder agrees with the closed form
    assert _Radial(d).level_radius(gamma) == pytest.approx(R, rel=1e-12)


points = st.lists(st.floats(-5, 5), min_size=3, max_size=3).map(np.array)


@given(x=points, y=points, gamma=st.floats(1e-3, 1e3))
def test_truncation_symmetric_and_bounded(x, y, gamma):
    k = EuclideanGreenKernel(3)
    a, b = truncated_eval(k, x, y, gamma), truncated_eval(k, y, x, gamma)
    assert a == b
    assert 0 < a <= gamma


@given(x=points, u=points, r1=st.floats(1e-3, 10), r2=st.floats(1e-3, 10),
       g1=st.floats(1e-3, 1e3), g2=st.floats(1e-3, 1e3))
def test_truncation_monotone(x, u, r1, r2, g1, g2):
    k = EuclideanGreenKernel(3)
    n = np.linalg.norm(u)
    if n < 1e-6:
        return
    u = u / n
    (r1, r2), (g1, g2) = sorted([r1, r2]), sorted([g1, g2])
    assert truncated_eval(k, x, x + r1 * u, g1) >= truncated_eval(k, x, x + r2 * u, g1)
    assert truncated_eval(k, x, x + r1 * u, g1) <= truncated_eval(k, x, x + r1 * u, g2)


def test_space_params_defaults():
    sp = SpaceParams(5)
    assert sp.volume_exponent == 5.0 and sp.walk_exponent == 2.0
    assert sp.green_constant == green_constant(5)
    with pytest.raises(DimensionError):
        SpaceParams(2)
