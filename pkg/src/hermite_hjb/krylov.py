"""GMRES, preconditioned CG and condition-number estimation."""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

DENSE_THRESHOLD = 4000
LANCZOS_SEED = 20220101


@dataclass
class KrylovConfig:
    tol: float = 1e-6
    maxiter: int = 1000
    restart: int = 0   # 0 means full GMRES

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ValueError("tolerance must lie in (0, 1)")
        if self.maxiter < 1:
            raise ValueError("maxiter must be positive")


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    converged: bool = False


@dataclass
class SpectrumEstimate:
    lam_min: float
    lam_max: float
    method: str
    size: int
    iterations: int = 0

    @property
    def kappa(self):
        return self.lam_max / self.lam_min


def _as_apply(op):
    if op is None:
        return lambda x: x
    if callable(op) and not sp.issparse(op) and not isinstance(op, np.ndarray):
        return op
    return lambda x: op @ x


def gmres(B, rhs, P=None, tol=1e-6, maxiter=1000, restart=0, x0=None):
    """Left-preconditioned GMRES for ``P B x = P rhs``.

    Minimises the Euclidean norm of the preconditioned residual and stops
    once ``|P (rhs - B x)| <= tol |P rhs|``.  ``residuals`` records the
    relative preconditioned residual after every iteration (entry 0 is the
    starting value).  Non-convergence is reported through ``converged``.
    """
    applyB = _as_apply(B)
    applyP = _as_apply(P)
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    ref = np.linalg.norm(applyP(rhs))
    if ref == 0.0:
        return KrylovResult(np.zeros(n), 0, [0.0], True)
    m = maxiter if restart in (0, None) else min(restart, maxiter)
    history = []
    total = 0
    while True:
        r = applyP(rhs - applyB(x))
        beta = np.linalg.norm(r)
        if not history:
            history.append(beta / ref)
        if beta <= tol * ref:
            return KrylovResult(x, total, history, True)
        if total >= maxiter:
            return KrylovResult(x, total, history, False)
        V = np.zeros((m + 1, n))
        Hm = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        done = False
        while k < m and total < maxiter:
            w = applyP(applyB(V[k]))
            for i in range(k + 1):
                Hm[i, k] = w @ V[i]
                w -= Hm[i, k] * V[i]
            # one reorthogonalisation pass keeps long full runs stable
            for i in range(k + 1):
                c = w @ V[i]
                Hm[i, k] += c
                w -= c * V[i]
            Hm[k + 1, k] = np.linalg.norm(w)
            if Hm[k + 1, k] > 0:
                V[k + 1] = w / Hm[k + 1, k]
            for i in range(k):
                t = cs[i] * Hm[i, k] + sn[i] * Hm[i + 1, k]
                Hm[i + 1, k] = -sn[i] * Hm[i, k] + cs[i] * Hm[i + 1, k]
                Hm[i, k] = t
            den = np.hypot(Hm[k, k], Hm[k + 1, k])
            cs[k], sn[k] = Hm[k, k] / den, Hm[k + 1, k] / den
            Hm[k, k] = den
            Hm[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k += 1
            total += 1
            history.append(abs(g[k]) / ref)
            if abs(g[k]) <= tol * ref or den == 0.0:
                done = True
                break
        y = sla.solve_triangular(Hm[:k, :k], g[:k])
        x = x + V[:k].T @ y
        if done:
            r = applyP(rhs - applyB(x))
            if np.linalg.norm(r) <= tol * ref * (1 + 1e-8) or total >= maxiter:
                return KrylovResult(x, total, history, np.linalg.norm(r) <= tol * ref * 1.01)


def pcg(A, rhs, M=None, tol=1e-8, maxiter=10_000, x0=None):
    """Preconditioned conjugate gradients; stops at ``|rhs - A x| <= tol |rhs|``."""
    applyA = _as_apply(A)
    applyM = _as_apply(M)
    rhs = np.asarray(rhs, dtype=float)
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return KrylovResult(np.zeros_like(rhs), 0, [0.0], True)
    r = rhs - applyA(x)
    history = [np.linalg.norm(r) / bnorm]
    if history[0] <= tol:
        return KrylovResult(x, 0, history, True)
    z = applyM(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = applyA(p)
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        history.append(np.linalg.norm(r) / bnorm)
        if history[-1] <= tol:
            return KrylovResult(x, it, history, True)
        z = applyM(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return KrylovResult(x, maxiter, history, False)


def lanczos_extremes(op, gram, n, maxiter=300, rtol=1e-4, seed=LANCZOS_SEED, min_iter=10):
    """Extreme Ritz values of ``op``, self-adjoint in the ``gram`` inner product.

    Uses full reorthogonalisation.  Stops when both extreme Ritz values move
    by less than ``rtol`` (relative) over five consecutive steps, or on an
    invariant subspace.  Returns ``(lam_min, lam_max, iterations)``.
    """
    applyOp = _as_apply(op)
    applyG = _as_apply(gram)
    rng = np.random.default_rng(seed)
    for attempt in range(3):
        q = rng.standard_normal(n)
        Gq = applyG(q)
        nrm = np.sqrt(q @ Gq)
        Q, GQ = [q / nrm], [Gq / nrm]
        alphas, betas = [], []
        prev = None
        stable = 0
        broke = False
        for k in range(min(maxiter, n)):
            w = applyOp(Q[k])
            Gw = applyG(w)
            alphas.append(Gw @ Q[k])
            # recompute G w after each pass: updating it by subtraction
            # drifts badly when G is ill-conditioned
            for _ in range(2):
                coef = np.array(GQ) @ w
                w = w - np.array(Q).T @ coef
                Gw = applyG(w)
            beta = np.sqrt(max(w @ Gw, 0.0))
            T = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
            ritz = np.linalg.eigvalsh(T)
            cur = (ritz[0], ritz[-1])
            if prev is not None and abs(cur[0] - prev[0]) <= rtol * abs(cur[0]) \
                    and abs(cur[1] - prev[1]) <= rtol * abs(cur[1]):
                stable += 1
            else:
                stable = 0
            prev = cur
            if beta <= 1e-12 * abs(alphas[-1]):
                broke = True
                break
            if stable >= 5 and k + 1 >= min_iter:
                return cur[0], cur[1], k + 1
            betas.append(beta)
            Q.append(w / beta)
            GQ.append(Gw / beta)
        if broke and k + 1 < min(min_iter, n):
            # premature invariant subspace: retry from a fresh random vector
            continue
        return cur[0], cur[1], k + 1
    return cur[0], cur[1], k + 1


def dense_preconditioned_spectrum(A, P):
    """Eigenvalues of ``P A`` via the symmetric pencil ``(A P A, A)``."""
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
    applyP = _as_apply(P)
    X = applyP(Ad)
    S = Ad @ X
    S = 0.5 * (S + S.T)
    return sla.eigh(S, Ad, eigvals_only=True)


def estimate_condition(A, P, method="auto", dense_threshold=DENSE_THRESHOLD, seed=LANCZOS_SEED,
                       rtol=1e-4, maxiter=300):
    """Condition number of ``P A`` for SPD ``A`` and SPD ``P``.

    ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up to
    ``dense_threshold`` unknowns).  The Lanczos path works in the
    ``A``-inner product, where ``P A`` is self-adjoint.
    """
    n = A.shape[0]
    if method == "auto":
        method = "dense" if n <= dense_threshold else "lanczos"
    if method == "dense":
        ev = dense_preconditioned_spectrum(A, P)
        return SpectrumEstimate(float(ev[0]), float(ev[-1]), "dense", n)
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")
    applyP = _as_apply(P)
    lo, hi, its = lanczos_extremes(lambda x: applyP(A @ x), A, n, maxiter=maxiter, rtol=rtol, seed=seed)
    return SpectrumEstimate(float(lo), float(hi), "lanczos", n, its)
