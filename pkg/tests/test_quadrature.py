import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsjd.quadrature import (fibonacci_sphere, gauss_kronrod, shell_integral, sphere_area,
                             sphere_rule)


def test_gauss_kronrod_smooth():
    res = gauss_kronrod(np.exp, 0.0, 2.0, 1e-14, 1e-13)
    assert res.converged
    assert abs(res.value - (math.e ** 2 - 1)) < 1e-12


def test_gauss_kronrod_endpoint_singularity():
    res = gauss_kronrod(lambda t: 1 / np.sqrt(t), 0.0, 1.0, 1e-10, 1e-10)
    assert abs(res.value - 2.0) < 1e-8
    assert res.error >= 0


def test_gauss_kronrod_break_points():
    res = gauss_kronrod(np.abs, -1.0, 2.0, 1e-13, points=[0.0])
    assert abs(res.value - 2.5) < 1e-12


@given(p=st.integers(0, 12), b=st.floats(0.1, 3.0))
@settings(max_examples=50, deadline=None)
def test_polynomials(p, b):
    res = gauss_kronrod(lambda t: t ** p, 0.0, b, 1e-13, 1e-12)
    assert abs(res.value - b ** (p + 1) / (p + 1)) <= 1e-11 * max(1.0, b ** (p + 1))


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_sphere_rule_area_and_second_moment(dim):
    dirs, w, wc = sphere_rule(dim, 32)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)
    assert abs(w.sum() - sphere_area(dim)) < 1e-12
    assert abs(wc.sum() - sphere_area(dim)) < 1e-12
    assert abs(w @ dirs[:, 0] ** 2 - sphere_area(dim) / dim) < 1e-12


def test_sphere_rule_cone_panels():
    dirs, w, _ = sphere_rule(2, 64, focus=np.array([0.0, 1.0]), cone=0.3)
    assert abs(w.sum() - 2 * math.pi) < 1e-12
    assert abs(w @ np.cos(np.arctan2(dirs[:, 1], dirs[:, 0])) ** 2 - math.pi) < 1e-10


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_shell_volume(dim):
    res = shell_integral(lambda z: np.ones(z.shape[:-1]), dim, 1.0, 2.0, 1e-12, 1e-12)
    exact = sphere_area(dim) * (2.0 ** dim - 1.0) / dim
    assert abs(res.value - exact) < 1e-10


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_shell_power_law(dim):
    alpha = 0.7
    g = lambda z: np.linalg.norm(z, axis=-1) ** (2 - dim - alpha)
    res = shell_integral(g, dim, 1e-12, 1.0, 1e-13, 1e-12)
    exact = sphere_area(dim) * (1 - 1e-12 ** (2 - alpha)) / (2 - alpha)
    assert abs(res.value - exact) < 1e-9


def test_unsupported_dimension():
    with pytest.raises(NotImplementedError):
        sphere_rule(4, 16)
    with pytest.raises(NotImplementedError):
        fibonacci_sphere(10, 4)


def test_fibonacci_directions_are_unit():
    for dim in (2, 3):
        d = fibonacci_sphere(64, dim)
        assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
