"""HJB problems, control selection, semi-smooth Newton and the linear driver.

The equation is ``sup_alpha (A^a : D^2 u + b^a . grad u - c^a u - f^a) = 0``
with homogeneous Dirichlet data.  A single control gives a linear
non-divergence problem.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.sparse.linalg import splu

from .assembly import assemble_B, assemble_rhs
from .coefficients import TabulatedCoefficients, cordes_quotient, gamma
from .krylov import gmres
from .precond import AuxiliarySetup
from .smoothers import SolverError

log = logging.getLogger(__name__)

CORDES_SLACK = 1e-12
TIE_TOL = 1e-12


# -- problem description -------------------------------------------------

@dataclass(frozen=True)
class ControlSet:
    """Finite sample of the control set.

    ``params`` holds one row per control.  ``A``, ``b``, ``c`` and ``f`` are
    called as ``fn(param_row, points)`` with ``points`` of shape ``(..., 2)``.
    ``shift`` is an optional control-independent term added to every
    ``f^alpha``; it never changes the selected control, so selection skips it.
    """

    params: np.ndarray
    A: Callable
    b: Callable
    c: Callable
    f: Callable
    shift: Optional[Callable] = None

    def __post_init__(self):
        p = np.asarray(self.params, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.shape[0] == 0:
            raise ValueError("control set is empty")
        object.__setattr__(self, "params", p)

    def __len__(self):
        return self.params.shape[0]

    def coefficients(self, index, points, with_shift=True):
        """``(A, b, c, f)`` of control ``index`` at ``points``."""
        a = self.params[index]
        pts = np.asarray(points, dtype=float)
        shape = pts.shape[:-1]
        A = np.broadcast_to(np.asarray(self.A(a, pts), dtype=float), shape + (2, 2))
        b = np.broadcast_to(np.asarray(self.b(a, pts), dtype=float), shape + (2,))
        c = np.broadcast_to(np.asarray(self.c(a, pts), dtype=float), shape)
        f = np.broadcast_to(np.asarray(self.f(a, pts), dtype=float), shape)
        if with_shift and self.shift is not None:
            f = f + self.shift(pts)
        return A, b, c, f


@dataclass(frozen=True)
class ExactSolution:
    """A closed-form solution with analytic first and second derivatives.

    ``hess`` returns ``(..., 3)`` arrays ordered ``(xx, xy, yy)``.
    """

    u: Callable
    grad: Callable
    hess: Callable


@dataclass(frozen=True)
class HJBProblem:
    controls: ControlSet
    lam: float
    eps: float
    bbox: tuple = (0.0, 1.0, 0.0, 1.0)
    exact: Optional[ExactSolution] = None
    name: str = "problem"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")

    @property
    def is_linear(self):
        return len(self.controls) == 1


@dataclass
class NewtonState:
    u: np.ndarray
    selection: Optional[np.ndarray] = None
    steps: int = 0
    increments: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    converged: bool = False

    @property
    def average_inner_iterations(self):
        if not self.inner_iterations:
            return 0.0
        return float(np.mean(self.inner_iterations))


@dataclass
class CordesReport:
    ok: bool
    worst: float
    eps_implied: float
    point: tuple
    control: int


@dataclass
class LinearSolveResult:
    u: np.ndarray
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)


class NewtonError(RuntimeError):
    """Raised when the Newton loop cannot finish; carries the state so far."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


# -- Cordes data ---------------------------------------------------------

def verify_cordes(problem, points):
    """Largest Cordes quotient over ``points`` and every sampled control.

    ``ok`` is true when the quotient never exceeds ``1/(2 + eps)`` (with a
    ``1e-12`` slack) and stays below ``1/2``.  ``eps_implied`` is the largest
    margin compatible with the worst quotient.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    worst, where, which = -np.inf, 0, 0
    for k in range(len(problem.controls)):
        A, b, c, _ = problem.controls.coefficients(k, pts, with_shift=False)
        q = cordes_quotient(A, b, c, problem.lam)
        i = int(np.argmax(q))
        if q[i] > worst:
            worst, where, which = float(q[i]), i, k
    eps_implied = 1.0 / worst - 2.0
    ok = worst <= 1.0 / (2.0 + problem.eps) + CORDES_SLACK and worst < 0.5
    if not ok:
        log.warning("Cordes condition fails at x=%s, control %d (quotient %.6g)",
                    pts[where].tolist(), which, worst)
    return CordesReport(ok, worst, eps_implied, tuple(pts[where].tolist()), which)


# -- control selection ---------------------------------------------------

def select_maximizer(problem, values, gradients, hessians, points):
    """Index of the control maximising ``A:D^2 v + b.grad v - c v - f`` per point.

    Ties go to the lowest index; values within a relative ``TIE_TOL`` of
    the running best count as ties, so controls that coincide up to
    rounding (rotations by ``pi`` in the HJB test problem) are resolved the
    same way whatever control-independent terms are present.
    ``hessians`` are ``(..., 3)`` in ``(xx, xy, yy)`` order.
    """
    best = None
    sel = np.zeros(np.shape(values), dtype=np.int64)
    H = hessians
    for k in range(len(problem.controls)):
        A, b, c, f = problem.controls.coefficients(k, points, with_shift=False)
        val = (A[..., 0, 0] * H[..., 0] + (A[..., 0, 1] + A[..., 1, 0]) * H[..., 1]
               + A[..., 1, 1] * H[..., 2] + (b * gradients).sum(-1) - c * values - f)
        if best is None:
            best = val.copy()
            continue
        better = val > best + TIE_TOL * np.maximum(1.0, np.abs(best))
        sel[better] = k
        best = np.where(better, val, best)
    return sel


def freeze(problem, selection, points):
    """Tabulate ``A, b, c, f, gamma`` of the selected controls at ``points``."""
    pts = np.asarray(points, dtype=float)
    shape = pts.shape[:-1]
    A = np.empty(shape + (2, 2))
    b = np.empty(shape + (2,))
    c = np.empty(shape)
    f = np.empty(shape)
    for k in np.unique(selection):
        mask = selection == k
        Ak, bk, ck, fk = problem.controls.coefficients(int(k), pts[mask], with_shift=False)
        A[mask], b[mask], c[mask], f[mask] = Ak, bk, ck, fk
    if problem.controls.shift is not None:
        f = f + problem.controls.shift(pts)
    vals = {"A": A, "b": b, "c": c, "f": f, "gamma": gamma(A, b, c, problem.lam)}
    for name, v in vals.items():
        if not np.all(np.isfinite(v)):
            bad = np.argwhere(~np.isfinite(v))[0]
            raise ValueError(f"coefficient {name} is not finite at {pts[tuple(bad[:len(shape)])].tolist()}")
    return TabulatedCoefficients(vals, pts, problem.lam, problem.eps)


# -- solvers -------------------------------------------------------------

def _solve(B, rhs, method, P, tol, maxiter):
    if method == "direct":
        x = splu(B.tocsc()).solve(rhs)
        return LinearSolveResult(x, 0, True)
    res = gmres(B, rhs, P=P, tol=tol, maxiter=maxiter)
    return LinearSolveResult(res.x, res.iterations, res.converged, res.residuals)


def _preconditioner(setup, lam, method, precond, omega, ordering):
    if method == "direct":
        return None
    return setup.preconditioner(lam, variant=precond, omega=omega, ordering=ordering)


def solve_linear(problem, space, method="gmres", precond="mul", omega=0.1, tol=1e-6,
                 maxiter=1000, rhs_mode="l_lambda", ordering="bubble_first", setup=None):
    """Solve a single-control (linear) problem.

    ``method`` is ``"gmres"`` (preconditioned by ``precond``) or ``"direct"``.
    """
    if not problem.is_linear:
        raise ValueError("solve_linear needs a single-control problem")
    setup = AuxiliarySetup(space) if setup is None else setup
    pts = space.volume_quadrature()[0]
    coeffs = freeze(problem, np.zeros(pts.shape[:-1], dtype=np.int64), pts)
    B = assemble_B(space, coeffs)
    rhs = assemble_rhs(space, coeffs, mode=rhs_mode)
    P = _preconditioner(setup, problem.lam, method, precond, omega, ordering)
    out = _solve(B, rhs, method, P, tol, maxiter)
    if not out.converged:
        raise SolverError(f"GMRES did not reach tol {tol:g} in {maxiter} iterations")
    return out


def l2_norm(setup, v):
    return float(np.sqrt(max(v @ (setup.pieces.mass @ v), 0.0)))


def newton_solve(problem, space, method="gmres", precond="mul", omega=0.1, tol=1e-4,
                 increment_tol=1e-6, max_steps=50, maxiter=1000, rhs_mode="l_lambda",
                 formulation="full", ordering="bubble_first", setup=None, on_step=None):
    """Semi-smooth Newton iteration from ``u = 0``.

    Each step selects maximisers at the volume quadrature points, freezes
    the coefficients, assembles the linearised system and solves it.  With
    ``formulation="full"`` the new iterate is computed by GMRES from a zero
    start, so ``tol`` is relative to the step's load vector; once the
    selection settles the solve repeats exactly and the increment vanishes.
    ``formulation="increment"`` solves for ``u_new - u`` instead, making
    ``tol`` relative to the current nonlinear residual.  Iteration stops once
    the increment's L2 norm drops below ``increment_tol``.  ``on_step``
    receives a dict of per-step diagnostics.
    """
    if formulation not in ("full", "increment"):
        raise ValueError(f"unknown formulation {formulation!r}")
    setup = AuxiliarySetup(space) if setup is None else setup
    pts = space.volume_quadrature()[0]
    state = NewtonState(u=np.zeros(space.n_free))
    P = _preconditioner(setup, problem.lam, method, precond, omega, ordering)
    for step in range(1, max_steps + 1):
        vals, grads, hess = space.function(state.u).at_quadrature()
        state.selection = select_maximizer(problem, vals, grads, hess, pts)
        coeffs = freeze(problem, state.selection, pts)
        B = assemble_B(space, coeffs)
        rhs = assemble_rhs(space, coeffs, mode=rhs_mode)
        if formulation == "increment":
            out = _solve(B, rhs - B @ state.u, method, P, tol, maxiter)
            delta = out.u
        else:
            out = _solve(B, rhs, method, P, tol, maxiter)
            delta = out.u - state.u
        if not out.converged:
            raise NewtonError(f"GMRES stalled in Newton step {step}", state)
        state.u = state.u + delta
        inc = l2_norm(setup, delta)
        state.steps = step
        state.increments.append(inc)
        state.inner_iterations.append(out.iterations)
        if on_step is not None:
            on_step({"step": step, "increment": inc, "iterations": out.iterations})
        log.info("Newton step %d: increment %.3e, %d inner iterations", step, inc, out.iterations)
        if inc < increment_tol:
            state.converged = True
            return state
    raise NewtonError(f"no convergence within {max_steps} Newton steps", state)


# -- errors --------------------------------------------------------------

def error_norms(space, coeffs, exact=None, lam=1.0):
    """L2, H1-seminorm, broken H2-seminorm and ``lam,h`` norm of ``u_h - u``.

    With ``exact=None`` the norms of ``u_h`` itself are returned.
    """
    pts, w, _, _, _ = space.volume_quadrature()
    v, g, H = space.function(coeffs).at_quadrature()
    if exact is not None:
        v = v - exact.u(pts)
        g = g - exact.grad(pts)
        H = H - exact.hess(pts)
    l2 = (w * v**2).sum()
    h1 = (w * (g**2).sum(-1)).sum()
    h2 = (w * (H[..., 0] ** 2 + 2 * H[..., 1] ** 2 + H[..., 2] ** 2)).sum()
    return {"L2": math.sqrt(l2), "H1": math.sqrt(h1), "H2": math.sqrt(h2),
            "energy": math.sqrt(h2 + 2 * lam * h1 + lam * lam * l2)}


# -- built-in problems ---------------------------------------------------

def _kink(s):
    e = np.exp(1.0 - np.abs(s))
    return s * e - s, (1.0 - np.abs(s)) * e - 1.0, -np.sign(s) * (2.0 - np.abs(s)) * e


def _exp2_exact():
    def u(p):
        return _kink(p[..., 0])[0] * _kink(p[..., 1])[0]

    def grad(p):
        gx, gy = _kink(p[..., 0]), _kink(p[..., 1])
        return np.stack([gx[1] * gy[0], gx[0] * gy[1]], -1)

    def hess(p):
        gx, gy = _kink(p[..., 0]), _kink(p[..., 1])
        return np.stack([gx[2] * gy[0], gx[1] * gy[1], gx[0] * gy[2]], -1)

    return ExactSolution(u, grad, hess)


def _sign_xy(p):
    xy = p[..., 0] * p[..., 1]
    return np.where(np.abs(xy) < 1e-14, 0.0, np.sign(xy))


def exp2(theta=1.0):
    """Linear non-divergence problem on ``(-1, 1)^2`` with ``lam = theta``.

    ``A = [[2, s], [s, 2]]`` with ``s = sign(x1 x2)``, ``b = sqrt(theta) x``,
    ``c = 3 theta`` and ``f`` computed from the exact solution.  The Cordes
    margin is ``9/20``.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    exact = _exp2_exact()

    def A(_, p):
        s = _sign_xy(p)
        out = np.empty(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = out[..., 1, 1] = 2.0
        out[..., 0, 1] = out[..., 1, 0] = s
        return out

    def b(_, p):
        return math.sqrt(theta) * p

    def c(_, p):
        return np.full(p.shape[:-1], 3.0 * theta)

    def f(_, p):
        H = exact.hess(p)
        return (2 * H[..., 0] + 2 * _sign_xy(p) * H[..., 1] + 2 * H[..., 2]
                + math.sqrt(theta) * (p * exact.grad(p)).sum(-1) - 3 * theta * exact.u(p))

    controls = ControlSet(np.zeros((1, 1)), A, b, c, f)
    return HJBProblem(controls, lam=theta, eps=9.0 / 20.0, bbox=(-1.0, 1.0, -1.0, 1.0),
                      exact=exact, name=f"exp2(theta={theta:g})")


def _exp3_exact():
    pi = math.pi

    def parts(p):
        x, y = p[..., 0], p[..., 1]
        return x, y, np.exp(x * y), np.sin(pi * x), np.cos(pi * x), np.sin(pi * y), np.cos(pi * y)

    def u(p):
        _, _, E, sx, _, sy, _ = parts(p)
        return E * sx * sy

    def grad(p):
        x, y, E, sx, cx, sy, cy = parts(p)
        return np.stack([E * (y * sx * sy + pi * cx * sy), E * (x * sx * sy + pi * sx * cy)], -1)

    def hess(p):
        x, y, E, sx, cx, sy, cy = parts(p)
        uxx = E * (y * y * sx * sy + 2 * pi * y * cx * sy - pi * pi * sx * sy)
        uyy = E * (x * x * sx * sy + 2 * pi * x * sx * cy - pi * pi * sx * sy)
        uxy = E * x * (y * sx * sy + pi * cx * sy) + E * (sx * sy + pi * y * sx * cy + pi * pi * cx * cy)
        return np.stack([uxx, uxy, uyy], -1)

    return ExactSolution(u, grad, hess)


def exp3_diffusion(theta, phi):
    """``A = sigma sigma^T / 2`` with ``sigma = R^T [[1, sin t], [0, cos t]]``."""
    R = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    S = np.array([[1.0, math.sin(theta)], [0.0, math.cos(theta)]])
    sigma = R.T @ S
    return 0.5 * sigma @ sigma.T


def exp3(n_theta=17, n_rot=64):
    """HJB problem on ``(0, 1)^2`` with ``lam = pi^2`` and ``eps = 2/15``.

    Controls are ``(theta, phi)`` on a tensor grid of ``[0, pi/3]`` (end
    points included) and ``[0, 2 pi)``.  The shift ``g`` is the grid maximum
    that makes ``exp(xy) sin(pi x) sin(pi y)`` the exact solution.
    """
    if n_theta < 1 or n_rot < 1:
        raise ValueError("control grid sizes must be positive")
    thetas = np.linspace(0.0, math.pi / 3.0, n_theta)
    phis = 2.0 * math.pi * np.arange(n_rot) / n_rot
    params = np.array([(t, p) for t in thetas for p in phis])
    mats = np.array([exp3_diffusion(t, p) for t, p in params])
    index = {tuple(row): k for k, row in enumerate(params)}
    pi2 = math.pi**2
    exact = _exp3_exact()

    def A(a, p):
        return mats[index[tuple(a)]]

    def b(_, p):
        return np.zeros(p.shape[:-1] + (2,))

    def c(_, p):
        return np.full(p.shape[:-1], pi2)

    def f(a, p):
        return np.full(p.shape[:-1], math.sqrt(3.0) * math.sin(a[0]) ** 2 / pi2)

    cache = {}

    def g(p):
        key = (p.shape, hash(p.tobytes()))
        if key not in cache:
            cache.clear()
            cache[key] = _g(p)
        return cache[key]

    def _g(p):
        H = exact.hess(p)
        cu = pi2 * exact.u(p)
        best = None
        for (t, _), M in zip(params, mats):
            val = (M[0, 0] * H[..., 0] + 2 * M[0, 1] * H[..., 1] + M[1, 1] * H[..., 2]
                   - cu - math.sqrt(3.0) * math.sin(t) ** 2 / pi2)
            best = val if best is None else np.maximum(best, val)
        return best

    controls = ControlSet(params, A, b, c, f, shift=g)
    return HJBProblem(controls, lam=pi2, eps=2.0 / 15.0, bbox=(0.0, 1.0, 0.0, 1.0),
                      exact=exact, name=f"exp3({n_theta}x{n_rot})")


def builtin_problems():
    return {"exp2": exp2, "exp3": exp3}
