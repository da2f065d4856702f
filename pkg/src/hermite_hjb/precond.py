"""Additive and multiplicative auxiliary-space preconditioners for ``A_{lam,h}``."""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .assembly import assemble_A, assemble_inner_pieces, assemble_p1
from .fespace import P1Space, build_transfer_Pi0
from .krylov import lanczos_extremes
from .smoothers import CoarseSmoother, GaussSeidel, jacobi_apply


class Preconditioner:
    """Common surface: ``apply(r)`` (also via ``P(r)`` and ``P @ r``)."""

    def __init__(self, A, Pi0, coarse, sweeps=3, order=None):
        self.A = sp.csr_matrix(A)
        self.Pi0 = sp.csr_matrix(Pi0)
        self.Pi0T = self.Pi0.T.tocsr()
        self.coarse = coarse
        self.smoother = GaussSeidel(self.A, sweeps, order)

    @property
    def shape(self):
        return self.A.shape

    def coarse_correction(self, r):
        if self.coarse is None:
            return np.zeros_like(r)
        return self.Pi0 @ self.coarse.apply(self.Pi0T @ r)

    def apply(self, r):
        raise NotImplementedError

    def __call__(self, r):
        return self.apply(r)

    def __matmul__(self, r):
        return self.apply(r)

    def aslinearoperator(self):
        return LinearOperator(self.shape, matvec=self.apply, matmat=self.apply, dtype=float)


class AdditivePreconditioner(Preconditioner):
    """``P_a r = R_bar r + omega Pi0 R0 Pi0^T r``; ``smoother="jacobi"`` swaps in ``D^{-1}``."""

    def __init__(self, A, Pi0, coarse, omega=1.0, smoother="gs", sweeps=3, order=None):
        super().__init__(A, Pi0, coarse, sweeps, order)
        if omega < 0:
            raise ValueError("omega must be nonnegative")
        if smoother not in ("gs", "jacobi"):
            raise ValueError(f"unknown smoother {smoother!r}")
        self.omega = float(omega)
        self.kind = smoother

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        fine = self.smoother.apply_symmetric(r) if self.kind == "gs" else jacobi_apply(self.A, r)
        if self.omega == 0.0:
            return fine
        return fine + self.omega * self.coarse_correction(r)


class MultiplicativePreconditioner(Preconditioner):
    """Backward smoothing, coarse correction, forward smoothing."""

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        x = self.smoother.apply_adjoint(r)
        x = x + self.coarse_correction(r - self.A @ x)
        return x + self.smoother.apply(r - self.A @ x)


def additive_apply(p, r):
    return p.apply(r)


def multiplicative_apply(p, r):
    return p.apply(r)


class DirectSolvePreconditioner:
    """``P = A^{-1}`` by sparse LU; a reference point for diagnostics."""

    def __init__(self, A):
        from scipy.sparse.linalg import splu
        self.A = sp.csr_matrix(A)
        self._lu = splu(self.A.tocsc())

    def apply(self, r):
        return self._lu.solve(np.asarray(r, dtype=float))

    __call__ = apply

    def __matmul__(self, r):
        return self.apply(r)


class AuxiliarySetup:
    """Everything needed to build preconditioners on one Hermite space.

    Caches the ``lam``-independent pieces (inner-product splits, P1 matrices,
    ``Pi0``) so a ``lam`` sweep only re-sums and refactorises.
    """

    def __init__(self, space):
        self.space = space
        self.p1 = P1Space(space.mesh)
        self.pieces = assemble_inner_pieces(space)
        self.K, self.M = assemble_p1(self.p1)
        self.Pi0 = build_transfer_Pi0(space, self.p1)

    def A(self, lam):
        return assemble_A(self.space, lam, self.pieces)

    def coarse(self, lam, method="direct"):
        return CoarseSmoother(self.K, self.M, lam, method=method)

    def preconditioner(self, lam, variant="multiplicative", omega=1.0, smoother="gs", sweeps=3,
                       coarse_method="direct", ordering="bubble_first", A=None):
        A = self.A(lam) if A is None else A
        coarse = self.coarse(lam, coarse_method)
        order = self.space.sweep_order(ordering)
        if variant in ("multiplicative", "mul"):
            return MultiplicativePreconditioner(A, self.Pi0, coarse, sweeps, order)
        if variant in ("additive", "add"):
            return AdditivePreconditioner(A, self.Pi0, coarse, omega=omega, smoother=smoother,
                                          sweeps=sweeps, order=order)
        raise ValueError(f"unknown preconditioner variant {variant!r}")


def fov_constants(P, B, seed=0, maxiter=200):
    """Field-of-values constants of ``P B`` in the ``P^{-1}`` inner product.

    ``gamma`` is the smallest eigenvalue of ``P sym(B)`` (self-adjoint in the
    ``sym(B)`` inner product) and ``Gamma`` the square root of the largest
    eigenvalue of ``P B^T P B`` (self-adjoint in ``B^T P B``).  Neither needs
    ``P^{-1}``.  Requires ``sym(B)`` positive definite (coercive ``B``).
    """
    B = sp.csr_matrix(B)
    Bs = (0.5 * (B + B.T)).tocsr()
    BT = B.T.tocsr()
    n = B.shape[0]
    g_lo, _, it1 = lanczos_extremes(lambda x: P.apply(Bs @ x), Bs, n, maxiter=maxiter, seed=seed)

    def gram(x):
        return BT @ P.apply(B @ x)

    _, G_hi, it2 = lanczos_extremes(lambda x: P.apply(gram(x)), gram, n, maxiter=maxiter, seed=seed + 1)
    return {"gamma": float(g_lo), "Gamma": float(np.sqrt(G_hi)), "iterations": (it1, it2)}
