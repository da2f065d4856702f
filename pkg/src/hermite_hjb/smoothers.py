"""Fine-space Gauss-Seidel/Jacobi smoothers and the P1 coarse smoother R0."""
import logging

import numpy as np
import scipy.sparse as sp
from pyamg.relaxation.relaxation import gauss_seidel
from scipy.sparse.linalg import splu

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


def _columns(r, fn):
    r = np.asarray(r, dtype=float)
    if r.ndim == 1:
        return fn(r)
    return np.column_stack([fn(r[:, k]) for k in range(r.shape[1])])


class GaussSeidel:
    """``m`` Gauss-Seidel sweeps from a zero initial guess.

    ``apply`` is the forward smoother ``R``, ``apply_adjoint`` runs backward
    sweeps (``R'``), and ``apply_symmetric`` is ``R_bar`` with
    ``I - R_bar A = (I - R'A)(I - RA)``.

    ``order`` is a permutation of the unknowns giving the sweep order
    (ascending index when omitted).
    """

    def __init__(self, A, sweeps=3, order=None):
        if sweeps < 1:
            raise ValueError("need at least one sweep")
        A = sp.csr_matrix(A, dtype=float)
        self.sweeps = int(sweeps)
        self.order = None
        if order is not None:
            order = np.asarray(order, dtype=np.intp)
            if not np.array_equal(np.sort(order), np.arange(A.shape[0])):
                raise ValueError("order must be a permutation of the unknowns")
            if not np.array_equal(order, np.arange(A.shape[0])):
                self.order = order
                A = A[order][:, order].tocsr()
        self.A = A
        self.A.sort_indices()
        diag = self.A.diagonal()
        if np.any(diag == 0):
            raise SolverError(f"zero diagonal entry at row {int(np.flatnonzero(diag == 0)[0])}")

    def _sweep(self, r, direction):
        if self.order is not None:
            r = r[self.order]
        x = np.zeros_like(r)
        gauss_seidel(self.A, x, np.ascontiguousarray(r), iterations=self.sweeps, sweep=direction)
        if self.order is None:
            return x
        out = np.empty_like(x)
        out[self.order] = x
        return out

    def apply(self, r):
        return _columns(r, lambda b: self._sweep(b, "forward"))

    def apply_adjoint(self, r):
        return _columns(r, lambda b: self._sweep(b, "backward"))

    def apply_symmetric(self, r):
        def sym(b):
            x = self._sweep(b, "forward")
            if self.order is None:
                Ax = self.A @ x
            else:
                Ax = np.empty_like(x)
                Ax[self.order] = self.A @ x[self.order]
            return x + self._sweep(b - Ax, "backward")
        return _columns(r, sym)


def gs_apply(A, r, sweeps=3):
    return GaussSeidel(A, sweeps).apply(r)


def jacobi_apply(A, r):
    d = sp.csr_matrix(A).diagonal()
    if np.any(d == 0):
        raise SolverError("zero diagonal entry")
    r = np.asarray(r, dtype=float)
    return r / (d if r.ndim == 1 else d[:, None])


class CoarseSmoother:
    """``R0 f``: solve ``(lam M + K) z = f`` then ``(lam M + K) u = M z``.

    ``method="direct"`` factorises ``lam M + K`` once (sparse LU);
    ``method="pcg"`` uses Jacobi-preconditioned CG to relative residual
    ``tol``.
    """

    def __init__(self, K, M, lam, method="direct", tol=1e-8, maxiter=10_000):
        self.K = sp.csr_matrix(K)
        self.M = sp.csr_matrix(M)
        self.lam = float(lam)
        self.method = method
        self.tol = tol
        self.maxiter = maxiter
        self.system = (self.lam * self.M + self.K).tocsc()
        self.stats = {"applications": 0, "inner_iterations": 0}
        if method == "direct":
            self._lu = splu(self.system)
        elif method != "pcg":
            raise ValueError(f"unknown coarse solver {method!r}")

    def solve(self, b):
        if self.method == "direct":
            return self._lu.solve(np.asarray(b, dtype=float))
        from .krylov import pcg
        d = self.system.diagonal()
        cols = b if np.ndim(b) == 2 else b[:, None]
        out = np.empty_like(cols, dtype=float)
        for k in range(cols.shape[1]):
            res = pcg(self.system, cols[:, k], M=lambda r: r / d, tol=self.tol, maxiter=self.maxiter)
            if not res.converged:
                raise SolverError(f"coarse CG stalled at relative residual {res.residuals[-1]:.3e}")
            self.stats["inner_iterations"] += res.iterations
            out[:, k] = res.x
        return out if np.ndim(b) == 2 else out[:, 0]

    def apply(self, f):
        self.stats["applications"] += 1
        z = self.solve(f)
        return self.solve(self.M @ z)

    __call__ = apply

    def inverse_norm_matrix(self):
        """Dense ``R0^{-1} = (lam M + K) M^{-1} (lam M + K)`` (small meshes only)."""
        S = self.system.toarray()
        return S @ np.linalg.solve(self.M.toarray(), S)


def coarse_R0_apply(c, f):
    return c.apply(f)
