import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rdopt.domain import BoxDomain
from rdopt.errors import ShapeError, UnsupportedDimensionError
from rdopt.sobol import MAX_DIM, scale_to_domain, sobol_in_domain, sobol_sequence


def test_first_points_1d():
    np.testing.assert_array_equal(sobol_sequence(1, 4).ravel(), [0.0, 0.5, 0.75, 0.25])


def test_first_point_is_origin_then_center():
    pts = sobol_sequence(3, 2)
    np.testing.assert_array_equal(pts[0], 0.0)
    np.testing.assert_array_equal(pts[1], 0.5)


def test_prefix_and_skip():
    full = sobol_sequence(5, 64)
    np.testing.assert_array_equal(sobol_sequence(5, 16), full[:16])
    np.testing.assert_array_equal(sobol_sequence(5, 16, skip=16), full[16:32])


def test_one_point_per_stratum():
    # every 1-D projection of the first 2^k points hits each 1/2^k bin once
    k = 6
    pts = sobol_sequence(4, 2 ** k)
    for j in range(4):
        counts = np.bincount((pts[:, j] * 2 ** k).astype(int), minlength=2 ** k)
        assert np.all(counts == 1)


def test_dimension_limit():
    with pytest.raises(UnsupportedDimensionError):
        sobol_sequence(MAX_DIM + 1, 2)
    with pytest.raises(ValueError):
        sobol_sequence(0, 2)


def test_scaling():
    dom = BoxDomain([56.0, -1.0], [616.0, 1.0])
    pts = sobol_in_domain(dom, 8)
    assert dom.contains(pts).all()
    np.testing.assert_array_equal(pts[1], dom.center)
    with pytest.raises(ShapeError):
        scale_to_domain(np.zeros((3, 3)), dom)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(1, 200), st.integers(0, 100))
def test_unit_cube(dim, count, skip):
    pts = sobol_sequence(dim, count, skip)
    assert pts.shape == (count, dim)
    assert np.all((pts >= 0) & (pts < 1))
