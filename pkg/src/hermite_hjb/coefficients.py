"""Frozen PDE coefficients and the Cordes normalisation."""
from dataclasses import dataclass
from typing import Callable

import numpy as np


class AssemblyError(RuntimeError):
    pass


def frobenius_sq(A):
    return A[..., 0, 0] ** 2 + A[..., 1, 1] ** 2 + 2.0 * A[..., 0, 1] ** 2


def gamma(A, b, c, lam):
    """Cordes normaliser ``(tr A + c/lam) / (|A|^2 + |b|^2/(2 lam) + (c/lam)^2)``.

    Broadcasts over leading axes; ``A`` has trailing shape ``(2, 2)`` and
    ``b`` trailing shape ``(2,)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    cl = c / lam
    num = A[..., 0, 0] + A[..., 1, 1] + cl
    den = frobenius_sq(A) + (b**2).sum(-1) / (2.0 * lam) + cl**2
    return num / den


def cordes_quotient(A, b, c, lam):
    """Left-hand side of the Cordes condition; must stay <= 1/(2 + eps)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    cl = np.asarray(c, dtype=float) / lam
    num = frobenius_sq(A) + (b**2).sum(-1) / (2.0 * lam) + cl**2
    return num / (A[..., 0, 0] + A[..., 1, 1] + cl) ** 2


@dataclass
class FrozenCoefficients:
    """Coefficients of ``A:D^2u + b.grad u - c u = f`` at a frozen control.

    Each callable maps points ``(..., 2)`` to ``A (..., 2, 2)``,
    ``b (..., 2)``, ``c (...)`` and ``f (...)``.
    """

    A: Callable
    b: Callable
    c: Callable
    f: Callable
    lam: float
    eps: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")

    def evaluate(self, points):
        """Coefficient arrays and ``gamma`` at ``points``.

        Raises :class:`AssemblyError` naming the first point where a
        coefficient is not finite.
        """
        vals = {}
        for name in ("A", "b", "c", "f"):
            try:
                v = np.asarray(getattr(self, name)(points), dtype=float)
            except Exception as exc:  # noqa: BLE001
                raise AssemblyError(f"coefficient {name} failed: {exc}") from exc
            bad = ~np.isfinite(v)
            if bad.any():
                idx = np.argwhere(bad)[0]
                pt = np.asarray(points)[tuple(idx[:np.ndim(points) - 1])]
                raise AssemblyError(f"coefficient {name} is not finite at point {pt.tolist()}")
            vals[name] = v
        vals["gamma"] = gamma(vals["A"], vals["b"], vals["c"], self.lam)
        return vals

    def check_ellipticity(self, points):
        """Return ``(nu_min, nu_max, c_min)`` sampled at ``points``."""
        A = np.asarray(self.A(points), dtype=float)
        eig = np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, -1, -2)))
        return float(eig.min()), float(eig.max()), float(np.min(self.c(points)))


class TabulatedCoefficients:
    """Coefficients already tabulated at one fixed array of points.

    Used for the frozen Newton coefficients, whose control selection is
    only defined at the quadrature points it was computed on.
    """

    def __init__(self, values, points, lam, eps):
        if not lam > 0:
            raise ValueError("lambda must be positive")
        if not 0 < eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        self.values = dict(values)
        self.points = np.asarray(points)
        self.lam = float(lam)
        self.eps = float(eps)
        if "gamma" not in self.values:
            v = self.values
            self.values["gamma"] = gamma(v["A"], v["b"], v["c"], self.lam)

    def evaluate(self, points):
        points = np.asarray(points)
        if points.shape != self.points.shape or not np.array_equal(points, self.points):
            raise AssemblyError("tabulated coefficients requested at points they were not built on")
        return self.values
