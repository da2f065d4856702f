import numpy as np
import pytest

from hermite_hjb.coefficients import (AssemblyError, FrozenCoefficients, TabulatedCoefficients,
                                      cordes_quotient, frobenius_sq, gamma)


def test_gamma_of_the_laplacian_is_one():
    assert gamma(np.eye(2), np.zeros(2), 0.0, 1.0) == pytest.approx(1.0)


def test_gamma_hand_computed():
    # tr A + c/lam = 5 + 1, |A|^2 + |b|^2/2 + 1 = 4 + 9 + 2 + 1 + 1
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert gamma(A, np.array([1.0, 1.0]), 1.0, 1.0) == pytest.approx(6 / 17)
    # lam = 2: num 2 + 2 + 1, den 4 + 4 + 16/4 + 1
    assert gamma(2 * np.eye(2), np.array([0.0, 4.0]), 2.0, 2.0) == pytest.approx(5 / 13)


def test_gamma_broadcasts():
    A = np.broadcast_to(np.eye(2), (3, 4, 2, 2))
    out = gamma(A, np.zeros((3, 4, 2)), np.zeros((3, 4)), 1.0)
    assert out.shape == (3, 4) and np.allclose(out, 1.0)


def test_frobenius_and_cordes_quotient():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert frobenius_sq(A) == pytest.approx(15.0)
    # the identity sits exactly on the boundary 1/2 of the admissible range
    assert cordes_quotient(np.eye(2), np.zeros(2), 0.0, 1.0) == pytest.approx(0.5)
    q = cordes_quotient(np.eye(2), np.zeros(2), 1.0, 1.0)
    assert q == pytest.approx(3 / 9)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_frozen_validation_and_nonfinite():
    ok = dict(A=lambda p: np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)),
              b=lambda p: np.zeros(p.shape), c=lambda p: np.zeros(p.shape[:-1]))
    with pytest.raises(ValueError):
        FrozenCoefficients(f=lambda p: p[..., 0], lam=0.0, eps=0.5, **ok)
    with pytest.raises(ValueError):
        FrozenCoefficients(f=lambda p: p[..., 0], lam=1.0, eps=1.5, **ok)
    bad = FrozenCoefficients(f=lambda p: 1.0 / p[..., 0], lam=1.0, eps=0.5, **ok)
    pts = np.array([[[0.5, 0.5], [0.0, 0.25]]])
    with pytest.raises(AssemblyError, match=r"\[0.0, 0.25\]"):
        bad.evaluate(pts)
    good = FrozenCoefficients(f=lambda p: p[..., 0], lam=1.0, eps=0.5, **ok)
    assert np.allclose(good.evaluate(pts)["gamma"], 1.0)
    assert good.check_ellipticity(pts) == (1.0, 1.0, 0.0)


def test_tabulated_rejects_other_points():
    pts = np.zeros((2, 3, 2))
    vals = dict(A=np.broadcast_to(np.eye(2), (2, 3, 2, 2)), b=np.zeros((2, 3, 2)),
                c=np.zeros((2, 3)), f=np.ones((2, 3)))
    tab = TabulatedCoefficients(vals, pts, 1.0, 0.5)
    assert np.allclose(tab.evaluate(pts)["gamma"], 1.0)
    with pytest.raises(AssemblyError):
        tab.evaluate(pts + 1.0)
