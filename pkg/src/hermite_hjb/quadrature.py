"""Gauss quadrature on the reference triangle and the unit interval.

Triangle rules are collapsed (Duffy) tensor products of Gauss-Jacobi and
Gauss-Legendre points, so any polynomial degree is available.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 30


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature rule in barycentric form.

    ``points`` has shape ``(nq, 3)`` for triangles (barycentric coordinates)
    and ``(nq, 2)`` for edges; ``weights`` sum to the reference measure
    (1/2 for the triangle, 1 for the edge).
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int
    domain: str

    def __len__(self):
        return len(self.weights)


def _check_degree(degree):
    if not isinstance(degree, (int, np.integer)) or degree < 1 or degree > MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree!r} (1..{MAX_DEGREE})")


def edge_rule(degree):
    _check_degree(degree)
    n = degree // 2 + 1
    s, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (s + 1.0)
    return QuadratureRule(np.column_stack([1.0 - t, t]), 0.5 * w, int(degree), "edge")


def triangle_rule(degree):
    _check_degree(degree)
    n = degree // 2 + 1
    # Gauss-Jacobi with weight (1 - s) absorbs the collapsed-coordinate Jacobian.
    sa, wa = roots_jacobi(n, 1.0, 0.0)
    sb, wb = np.polynomial.legendre.leggauss(n)
    a = 0.5 * (sa + 1.0)
    b = 0.5 * (sb + 1.0)
    x = np.outer(a, np.ones(n)).ravel()
    y = np.outer(1.0 - a, b).ravel()
    w = np.outer(wa, wb).ravel() / 8.0
    bary = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(bary, w, int(degree), "triangle")


def quadrature(domain, degree):
    """Return a rule exact for polynomials of ``degree`` on ``domain``."""
    if domain == "triangle":
        return triangle_rule(degree)
    if domain == "edge":
        return edge_rule(degree)
    raise ValueError(f"unknown quadrature domain {domain!r}")
