"""Assembly of the Hermite operators and the P1 auxiliary matrices.

All matrices act on free DOFs; constrained DOFs are eliminated.  Row ``i``
holds the test function, so ``B[i, j] = b(phi_j, phi_i)``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

VOLUME_DEGREE = 8
FACE_DEGREE = 6


def _scatter(space, Ke, rows_dofs, cols_dofs=None):
    """Sum element blocks ``Ke (n, r, c)`` into a free-DOF CSR matrix."""
    cols_dofs = rows_dofs if cols_dofs is None else cols_dofs
    fi = space.free_index
    R = np.broadcast_to(fi[rows_dofs][:, :, None], Ke.shape)
    C = np.broadcast_to(fi[cols_dofs][:, None, :], Ke.shape)
    keep = (R >= 0) & (C >= 0)
    n = space.n_free
    return sp.coo_matrix((Ke[keep], (R[keep], C[keep])), shape=(n, n)).tocsr()


def _scatter_vector(space, Fe, dofs):
    fi = space.free_index[dofs]
    keep = fi >= 0
    return np.bincount(fi[keep], weights=Fe[keep], minlength=space.n_free)


@dataclass
class InnerProductPieces:
    """``A(lam) = hess + 2 lam grad + lam^2 mass`` assembled once."""

    hess: sp.csr_matrix
    grad: sp.csr_matrix
    mass: sp.csr_matrix

    def matrix(self, lam):
        return (self.hess + (2.0 * lam) * self.grad + (lam * lam) * self.mass).tocsr()


def assemble_inner_pieces(space, degree=VOLUME_DEGREE):
    _, w, v, g, H = space.volume_quadrature(degree)
    dofs = space.element_dofs
    KH = np.einsum("tq,tqad,tqbd->tab", w, H * [1.0, np.sqrt(2.0), 1.0], H * [1.0, np.sqrt(2.0), 1.0])
    KG = np.einsum("tq,tqad,tqbd->tab", w, g, g)
    KM = np.einsum("tq,tqa,tqb->tab", w, v, v)
    return InnerProductPieces(_scatter(space, KH, dofs), _scatter(space, KG, dofs), _scatter(space, KM, dofs))


def assemble_A(space, lam, pieces=None):
    """SPD matrix of ``(w, v)_{lam,h}``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    pieces = assemble_inner_pieces(space) if pieces is None else pieces
    return pieces.matrix(lam)


def assemble_B(space, coeffs, degree=VOLUME_DEGREE, face_degree=FACE_DEGREE, coeff_values=None):
    """Nonsymmetric matrix of the linearised bilinear form.

    ``coeff_values`` may carry precomputed coefficient arrays at the volume
    quadrature points (as returned by :meth:`FrozenCoefficients.evaluate`).
    """
    lam, eps = coeffs.lam, coeffs.eps
    pts, w, v, g, H = space.volume_quadrature(degree)
    vals = coeffs.evaluate(pts) if coeff_values is None else coeff_values
    A, b, c, gam = vals["A"], vals["b"], vals["c"], vals["gamma"]
    Lw = (A[..., 0, 0, None] * H[..., 0] + (A[..., 0, 1, None] + A[..., 1, 0, None]) * H[..., 1]
          + A[..., 1, 1, None] * H[..., 2]
          + np.einsum("tqd,tqad->tqa", b, g) - c[..., None] * v)
    Lv = H[..., 0] + H[..., 2] - lam * v
    Ke = np.einsum("tq,tqi,tqj->tij", w * gam, Lv, Lw)
    B = _scatter(space, Ke, space.element_dofs)
    return B + face_jump_matrix(space, lam, eps, face_degree)


def face_jump_matrix(space, lam, eps, degree=FACE_DEGREE):
    """``-(2 - sqrt(1-eps)) sum_F <[[grad w]], Delta_T v - lam v>_F``."""
    fq = space.face_quadrature(degree)
    if len(fq["faces"]) == 0:
        return sp.csr_matrix((space.n_free, space.n_free))
    n, t, w = fq["normal"], fq["tangent"], fq["weights"]
    vp, gp, Hp = fq["plus_tables"]
    _, gm, _ = fq["minus_tables"]
    test = _tangential_second(Hp, t) - lam * vp
    jp = np.einsum("fqad,fd->fqa", gp, n)
    jm = -np.einsum("fqad,fd->fqa", gm, n)
    scale = -(2.0 - np.sqrt(1.0 - eps))
    Fp = scale * np.einsum("fq,fqi,fqj->fij", w, test, jp)
    Fm = scale * np.einsum("fq,fqi,fqj->fij", w, test, jm)
    dp = space.element_dofs[fq["plus"]]
    dm = space.element_dofs[fq["minus"]]
    return _scatter(space, Fp, dp) + _scatter(space, Fm, dp, dm)


def _tangential_second(H, t):
    """``t^T D^2 phi t`` for hessians ``(..., 3)`` and per-face tangents ``(nf, 2)``."""
    tx = t[:, 0][:, None, None]
    ty = t[:, 1][:, None, None]
    return H[..., 0] * tx * tx + 2.0 * H[..., 1] * tx * ty + H[..., 2] * ty * ty


def assemble_rhs(space, coeffs, mode="l_lambda", degree=VOLUME_DEGREE, coeff_values=None):
    """Load vector ``sum_T (gamma f, Delta v - lam v)_T`` (or ``Delta v`` in ``delta`` mode)."""
    if mode not in ("l_lambda", "delta"):
        raise ValueError(f"unknown rhs mode {mode!r}")
    pts, w, v, g, H = space.volume_quadrature(degree)
    vals = coeffs.evaluate(pts) if coeff_values is None else coeff_values
    test = H[..., 0] + H[..., 2]
    if mode == "l_lambda":
        test = test - coeffs.lam * v
    Fe = np.einsum("tq,tqi->ti", w * vals["gamma"] * vals["f"], test)
    return _scatter_vector(space, Fe, space.element_dofs)


def assemble_p1(p1):
    """P1 stiffness and mass matrices over interior vertices."""
    mesh = p1.mesh
    area = mesh.areas
    G = p1.gradients
    Ke = area[:, None, None] * np.einsum("tid,tjd->tij", G, G)
    Me = (area / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None]
    idx = p1.vertex_index[mesh.triangles]
    R = np.broadcast_to(idx[:, :, None], Ke.shape)
    C = np.broadcast_to(idx[:, None, :], Ke.shape)
    keep = (R >= 0) & (C >= 0)
    n = p1.n_free
    K = sp.coo_matrix((Ke[keep], (R[keep], C[keep])), shape=(n, n)).tocsr()
    M = sp.coo_matrix((Me[keep], (R[keep], C[keep])), shape=(n, n)).tocsr()
    return K, M


# -- function-level evaluation (independent of the matrices) ----------------

def broken_norms(space, coeffs, degree=VOLUME_DEGREE):
    """``(sum |D^2 v|^2, |grad v|^2, |v|^2, sum |Delta v|^2)`` over the mesh."""
    _, w, v, g, H = space.volume_quadrature(degree)
    loc = space.local(coeffs)
    vv = np.einsum("tqa,ta->tq", v, loc)
    gg = np.einsum("tqad,ta->tqd", g, loc)
    HH = np.einsum("tqad,ta->tqd", H, loc)
    hess = (w * (HH[..., 0] ** 2 + 2 * HH[..., 1] ** 2 + HH[..., 2] ** 2)).sum()
    lap = (w * (HH[..., 0] + HH[..., 2]) ** 2).sum()
    return hess, (w * (gg**2).sum(-1)).sum(), (w * vv**2).sum(), lap


def energy_norm_sq(space, coeffs, lam):
    hess, grad, mass, _ = broken_norms(space, coeffs)
    return hess + 2.0 * lam * grad + lam * lam * mass


def face_terms(space, w_coeffs, v_coeffs, lam=0.0, degree=FACE_DEGREE):
    """``sum_F <[[grad w]], Delta_T v - lam v>_F`` evaluated from the functions."""
    fq = space.face_quadrature(degree)
    if len(fq["faces"]) == 0:
        return 0.0
    lw = space.local(w_coeffs)
    lv = space.local(v_coeffs)
    vp, gp, Hp = fq["plus_tables"]
    _, gm, _ = fq["minus_tables"]
    n, t, wts = fq["normal"], fq["tangent"], fq["weights"]
    grad_p = np.einsum("fqad,fa->fqd", gp, lw[fq["plus"]])
    grad_m = np.einsum("fqad,fa->fqd", gm, lw[fq["minus"]])
    jump = np.einsum("fqd,fd->fq", grad_p - grad_m, n)
    Hv = np.einsum("fqad,fa->fqd", Hp, lv[fq["plus"]])
    tx, ty = t[:, 0][:, None], t[:, 1][:, None]
    dtt = Hv[..., 0] * tx * tx + 2 * Hv[..., 1] * tx * ty + Hv[..., 2] * ty * ty
    val = np.einsum("fqa,fa->fq", vp, lv[fq["plus"]])
    return float((wts * jump * (dtt - lam * val)).sum())


def mt_identity_residual(space, coeffs):
    """Relative defect of the discrete Miranda-Talenti identity (0 for ``v = 0``)."""
    hess, _, _, lap = broken_norms(space, coeffs)
    rhs = hess + 2.0 * face_terms(space, coeffs, coeffs)
    if lap == 0.0:
        return abs(rhs)
    return abs(lap - rhs) / lap


def write_matrix_market(path, matrix, comment=""):
    scipy.io.mmwrite(path, sp.coo_matrix(matrix), comment=comment)
