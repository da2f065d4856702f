import math

import numpy as np
import pytest

from hermite_hjb.quadrature import edge_rule, quadrature, triangle_rule


@pytest.mark.parametrize("degree", [1, 2, 5, 8, 12])
def test_triangle_weights_sum_to_reference_area(degree):
    assert triangle_rule(degree).weights.sum() == pytest.approx(0.5, abs=1e-14)


def test_x_squared_on_reference_triangle():
    r = triangle_rule(2)
    x = r.points[:, 1]  # barycentric -> cartesian: x = lambda_1
    assert (r.weights * x**2).sum() == pytest.approx(1 / 12, abs=1e-15)


@pytest.mark.parametrize("i,j", [(0, 0), (3, 2), (4, 4), (0, 8), (7, 1)])
def test_triangle_monomials_exact_to_degree_8(i, j):
    r = triangle_rule(8)
    x, y = r.points[:, 1], r.points[:, 2]
    exact = math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)
    assert (r.weights * x**i * y**j).sum() == pytest.approx(exact, rel=1e-13)


def test_edge_cubic():
    r = edge_rule(3)
    t = r.points[:, 1]
    assert (r.weights * t**3).sum() == pytest.approx(0.25, abs=1e-15)


def test_dispatch_and_rejects():
    assert quadrature("edge", 4).domain == "edge"
    with pytest.raises(ValueError):
        quadrature("triangle", 0)
    with pytest.raises(ValueError):
        quadrature("triangle", 1000)
    with pytest.raises(ValueError):
        quadrature("square", 2)
