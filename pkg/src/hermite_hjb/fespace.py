"""C0 cubic Hermite space (C1 at vertices) and the P1 auxiliary space.

Global DOF numbering of :class:`HermiteSpace`: vertex ``v`` owns
``3v`` (value), ``3v+1`` (d/dx), ``3v+2`` (d/dy); element ``T`` owns the
barycenter value ``3*nv + T``.  Free DOFs keep this order.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .quadrature import edge_rule, triangle_rule

# monomial exponents (i, j) for xi^i eta^j, total degree <= 3
_EXPONENTS = np.array([(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
                       (3, 0), (2, 1), (1, 2), (0, 3)])


def _monomials(xi, eta):
    """Monomials and their derivatives in the scaled coordinates.

    Returns values ``(..., 10)``, gradients ``(..., 10, 2)`` and hessians
    ``(..., 10, 3)`` ordered as ``(xx, xy, yy)``.
    """
    xi = np.asarray(xi, dtype=float)[..., None]
    eta = np.asarray(eta, dtype=float)[..., None]
    i, j = _EXPONENTS[:, 0], _EXPONENTS[:, 1]

    def pw(base, e):
        # base**e with zero where e < 0
        out = np.where(e >= 0, base ** np.maximum(e, 0), 0.0)
        return out

    val = pw(xi, i) * pw(eta, j)
    dx = i * pw(xi, i - 1) * pw(eta, j)
    dy = j * pw(xi, i) * pw(eta, j - 1)
    dxx = i * (i - 1) * pw(xi, i - 2) * pw(eta, j)
    dxy = i * j * pw(xi, i - 1) * pw(eta, j - 1)
    dyy = j * (j - 1) * pw(xi, i) * pw(eta, j - 2)
    return val, np.stack([dx, dy], axis=-1), np.stack([dxx, dxy, dyy], axis=-1)


@dataclass(frozen=True)
class DofDescriptor:
    index: int
    location: int      # vertex id (kind "vertex") or element id (kind "element")
    kind: str
    order: int         # 0 value, 1 directional derivative
    direction: tuple   # unit vector when order == 1, else None
    constrained: bool


class HermiteSpace:
    """Cubic Hermite finite element space with homogeneous Dirichlet data.

    At boundary vertices the value and the derivative along every incident
    boundary edge are fixed to zero; this enforces a vanishing trace exactly
    on axis-aligned boundaries.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        nv, nt = mesh.n_vertices, mesh.n_triangles
        self.n_dofs = 3 * nv + nt
        t = mesh.triangles
        self.element_dofs = np.column_stack(
            [3 * t[:, 0], 3 * t[:, 0] + 1, 3 * t[:, 0] + 2,
             3 * t[:, 1], 3 * t[:, 1] + 1, 3 * t[:, 1] + 2,
             3 * t[:, 2], 3 * t[:, 2] + 1, 3 * t[:, 2] + 2,
             3 * nv + np.arange(nt)])
        constrained = np.zeros(self.n_dofs, dtype=bool)
        for e in mesh.boundary_faces:
            a, b = mesh.edges[e]
            tang = mesh.vertices[b] - mesh.vertices[a]
            tang /= np.linalg.norm(tang)
            if abs(abs(tang[0]) - 1.0) < 1e-12:
                comp = 1
            elif abs(abs(tang[1]) - 1.0) < 1e-12:
                comp = 2
            else:
                raise NotImplementedError("boundary constraints require axis-aligned boundary edges")
            constrained[[3 * a, 3 * b, 3 * a + comp, 3 * b + comp]] = True
        self.constrained = constrained
        self.free_dofs = np.flatnonzero(~constrained)
        self.free_index = np.full(self.n_dofs, -1, dtype=np.int64)
        self.free_index[self.free_dofs] = np.arange(len(self.free_dofs))
        self.constrained.setflags(write=False)

    def __repr__(self):
        return f"HermiteSpace(n_dofs={self.n_dofs}, n_free={self.n_free})"

    @property
    def n_free(self):
        return len(self.free_dofs)

    @cached_property
    def descriptors(self):
        nv = self.mesh.n_vertices
        out = []
        for d in range(self.n_dofs):
            if d < 3 * nv:
                v, k = divmod(d, 3)
                direction = None if k == 0 else ((1.0, 0.0) if k == 1 else (0.0, 1.0))
                out.append(DofDescriptor(d, v, "vertex", int(k > 0), direction, bool(self.constrained[d])))
            else:
                out.append(DofDescriptor(d, d - 3 * nv, "element", 0, None, False))
        return out

    # -- local basis ------------------------------------------------------
    @cached_property
    def _scaling(self):
        return self.mesh.barycenters, self.mesh.diameters

    def _scaled(self, elements, points):
        c, h = self._scaling
        hh = h[elements][:, None]
        xi = (points[..., 0] - c[elements][:, None, 0]) / hh
        eta = (points[..., 1] - c[elements][:, None, 1]) / hh
        return xi, eta, hh

    @cached_property
    def coefficients(self):
        """(nt, 10, 10): monomial coefficients of the local basis, column per DOF."""
        mesh = self.mesh
        nt = mesh.n_triangles
        pts = mesh.vertices[mesh.triangles]
        xi, eta, hh = self._scaled(np.arange(nt), pts)
        val, grad, _ = _monomials(xi, eta)
        V = np.empty((nt, 10, 10))
        for j in range(3):
            V[:, 3 * j] = val[:, j]
            V[:, 3 * j + 1] = grad[:, j, :, 0] / hh
            V[:, 3 * j + 2] = grad[:, j, :, 1] / hh
        V[:, 9] = 0.0
        V[:, 9, 0] = 1.0   # barycenter is xi = eta = 0
        if np.any(mesh.areas <= 0):
            raise FloatingPointError("singular element map")
        return np.linalg.inv(V)

    def eval_basis(self, elements, points):
        """Local basis on ``elements`` at physical ``points`` of shape ``(ne, np, 2)``.

        Returns values ``(ne, np, 10)``, gradients ``(ne, np, 10, 2)`` and
        hessians ``(ne, np, 10, 3)`` (xx, xy, yy).
        """
        elements = np.asarray(elements)
        xi, eta, hh = self._scaled(elements, points)
        val, grad, hess = _monomials(xi, eta)
        C = self.coefficients[elements]
        v = np.einsum("epm,ema->epa", val, C)
        g = np.einsum("epmd,ema->epad", grad, C) / hh[..., None, None]
        H = np.einsum("epmd,ema->epad", hess, C) / (hh**2)[..., None, None]
        return v, g, H

    def eval_hermite_basis(self, element, ref_point):
        """Basis of one element at reference coordinates ``(s, t)``.

        The reference point maps to ``p0 + s (p1 - p0) + t (p2 - p0)``.
        """
        p = self.mesh.vertices[self.mesh.triangles[element]]
        rp = np.atleast_2d(ref_point)
        x = p[0] + rp[:, :1] * (p[1] - p[0]) + rp[:, 1:2] * (p[2] - p[0])
        v, g, H = self.eval_basis([element], x[None])
        return v[0], g[0], H[0]

    def sweep_order(self, ordering="bubble_first"):
        """Permutation of the free DOFs for Gauss-Seidel sweeps.

        ``"natural"`` is ascending free index (vertex DOFs, then barycenter
        DOFs).  ``"bubble_first"`` visits the barycenter DOFs first and then
        the vertex DOFs, each group in ascending order.
        """
        n = self.n_free
        if ordering == "natural":
            return np.arange(n)
        if ordering != "bubble_first":
            raise ValueError(f"unknown ordering {ordering!r}")
        bubble = self.free_dofs >= 3 * self.mesh.n_vertices
        return np.concatenate([np.flatnonzero(bubble), np.flatnonzero(~bubble)])

    # -- quadrature tables -------------------------------------------------
    @lru_cache(maxsize=4)
    def volume_quadrature(self, degree=8):
        """Physical points ``(nt, nq, 2)``, weights ``(nt, nq)`` and basis tables."""
        rule = triangle_rule(degree)
        pts = np.einsum("qk,tkd->tqd", rule.points, self.mesh.vertices[self.mesh.triangles])
        w = 2.0 * self.mesh.areas[:, None] * rule.weights[None, :]
        v, g, H = self.eval_basis(np.arange(self.mesh.n_triangles), pts)
        return pts, w, v, g, H

    @lru_cache(maxsize=4)
    def face_quadrature(self, degree=6):
        """Interior-face tables.

        Returns a dict with ``faces``, ``points (nf, nq, 2)``, ``weights``,
        ``normal`` (outward from T+), ``tangent`` and basis tables of both
        adjacent elements at the face points.
        """
        mesh = self.mesh
        rule = edge_rule(degree)
        faces = mesh.interior_faces
        e = mesh.edges[faces]
        pts = np.einsum("qk,fkd->fqd", rule.points, mesh.vertices[e])
        w = mesh.edge_lengths[faces][:, None] * rule.weights[None, :]
        n = mesh.edge_normals[faces]
        tang = np.column_stack([-n[:, 1], n[:, 0]])
        tp, tm = mesh.edge_elements[faces, 0], mesh.edge_elements[faces, 1]
        vp, gp, Hp = self.eval_basis(tp, pts)
        vm, gm, Hm = self.eval_basis(tm, pts)
        return dict(faces=faces, points=pts, weights=w, normal=n, tangent=tang,
                    plus=tp, minus=tm, plus_tables=(vp, gp, Hp), minus_tables=(vm, gm, Hm))

    # -- vectors ------------------------------------------------------------
    def full(self, coeffs):
        """Scatter a free-DOF vector into all DOFs (constrained entries zero)."""
        out = np.zeros(self.n_dofs)
        out[self.free_dofs] = coeffs
        return out

    def local(self, coeffs, full=False):
        """Per-element coefficients ``(nt, 10)``."""
        c = np.asarray(coeffs, dtype=float)
        if not full:
            c = self.full(c)
        return c[self.element_dofs]

    def interpolate(self, u, grad_u, full=False):
        """Hermite interpolant from a callable and its gradient.

        Returns the free-DOF vector (constrained data dropped) unless
        ``full`` is set.
        """
        mesh = self.mesh
        X = mesh.vertices
        out = np.empty(self.n_dofs)
        out[0:3 * mesh.n_vertices:3] = u(X)
        g = grad_u(X)
        out[1:3 * mesh.n_vertices:3] = g[:, 0]
        out[2:3 * mesh.n_vertices:3] = g[:, 1]
        out[3 * mesh.n_vertices:] = u(mesh.barycenters)
        return out if full else out[self.free_dofs]

    def function(self, coeffs=None):
        return FeFunction(self, np.zeros(self.n_free) if coeffs is None else np.asarray(coeffs, float))

    def evaluate(self, coeffs, points, elements, full=False):
        """Value, gradient and hessian of a member at points located in ``elements``.

        ``points`` has shape ``(n, 2)`` and ``elements`` shape ``(n,)``.
        """
        loc = self.local(coeffs, full=full)[elements]
        v, g, H = self.eval_basis(elements, np.asarray(points)[:, None, :])
        return (np.einsum("ea,ea->e", v[:, 0], loc),
                np.einsum("ead,ea->ed", g[:, 0], loc),
                np.einsum("ead,ea->ed", H[:, 0], loc))


@dataclass
class FeFunction:
    space: object
    coeffs: np.ndarray

    def __post_init__(self):
        n = self.space.n_free
        if self.coeffs.shape != (n,):
            raise ValueError(f"coefficient vector has shape {self.coeffs.shape}, expected ({n},)")

    def at_quadrature(self, degree=8):
        """Values, gradients and hessians at the volume quadrature points."""
        pts, w, v, g, H = self.space.volume_quadrature(degree)
        loc = self.space.local(self.coeffs)
        return (np.einsum("tqa,ta->tq", v, loc),
                np.einsum("tqad,ta->tqd", g, loc),
                np.einsum("tqad,ta->tqd", H, loc))


class P1Space:
    """Continuous piecewise linears vanishing on the boundary; one DOF per interior vertex."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.interior_vertices = np.flatnonzero(~mesh.boundary_vertex_mask)
        self.vertex_index = np.full(mesh.n_vertices, -1, dtype=np.int64)
        self.vertex_index[self.interior_vertices] = np.arange(len(self.interior_vertices))

    def __repr__(self):
        return f"P1Space(n_free={self.n_free})"

    @property
    def n_free(self):
        return len(self.interior_vertices)

    @cached_property
    def gradients(self):
        """(nt, 3, 2) constant gradients of the barycentric coordinates."""
        p = self.mesh.vertices[self.mesh.triangles]
        out = np.empty((len(p), 3, 2))
        two_area = 2.0 * self.mesh.signed_areas
        for i in range(3):
            a = p[:, (i + 1) % 3]
            b = p[:, (i + 2) % 3]
            # gradient of lambda_i is the inward edge normal scaled by |e| / (2|T|)
            out[:, i, 0] = (a[:, 1] - b[:, 1]) / two_area
            out[:, i, 1] = (b[:, 0] - a[:, 0]) / two_area
        return out

    def evaluate(self, coeffs, points, elements):
        """Values and gradients at points located in ``elements``."""
        full = np.zeros(self.mesh.n_vertices)
        full[self.interior_vertices] = coeffs
        t = self.mesh.triangles[elements]
        p = self.mesh.vertices[t]
        lam = _barycentric(p, np.asarray(points))
        vals = (lam * full[t]).sum(1)
        grads = np.einsum("eid,ei->ed", self.gradients[elements], full[t])
        return vals, grads


def _barycentric(tri_pts, x):
    a, b, c = tri_pts[:, 0], tri_pts[:, 1], tri_pts[:, 2]
    v0, v1, v2 = b - a, c - a, x - a
    den = v0[:, 0] * v1[:, 1] - v1[:, 0] * v0[:, 1]
    l1 = (v2[:, 0] * v1[:, 1] - v1[:, 0] * v2[:, 1]) / den
    l2 = (v0[:, 0] * v2[:, 1] - v2[:, 0] * v0[:, 1]) / den
    return np.column_stack([1.0 - l1 - l2, l1, l2])


def build_hermite_space(mesh):
    return HermiteSpace(mesh)


def build_p1_space(mesh):
    return P1Space(mesh)


def nodal_interpolation_matrix(hermite, p1):
    """Sparse ``I_h``: free Hermite DOFs -> P1 coefficients (vertex-value gather)."""
    rows = np.arange(p1.n_free)
    cols = hermite.free_index[3 * p1.interior_vertices]
    return sp.csr_matrix((np.ones(p1.n_free), (rows, cols)), shape=(p1.n_free, hermite.n_free))


def nodal_interpolation_Ih(hermite, p1, coeffs):
    return nodal_interpolation_matrix(hermite, p1) @ coeffs


def build_transfer_Pi0(hermite, p1):
    """Sparse ``Pi_0``: P1 coefficients -> free Hermite DOFs.

    Values and barycenter DOFs take the (single-valued) P1 value; gradient
    DOFs average the per-element gradients over the vertex patch.  At
    boundary vertices the normal component along the boundary face of each
    element is used, ``(grad p . n)(n . t)``.
    """
    mesh = hermite.mesh
    nv, nt = mesh.n_vertices, mesh.n_triangles
    tri = mesh.triangles
    grads = p1.gradients
    patch_size = np.bincount(tri.ravel(), minlength=nv).astype(float)
    col_of_vertex = p1.vertex_index
    rows, cols, vals = [], [], []

    # vertex values
    iv = p1.interior_vertices
    rows.append(3 * iv)
    cols.append(col_of_vertex[iv])
    vals.append(np.ones(len(iv)))

    # barycenter values
    for w in range(3):
        c = col_of_vertex[tri[:, w]]
        keep = c >= 0
        rows.append(3 * nv + np.flatnonzero(keep))
        cols.append(c[keep])
        vals.append(np.full(keep.sum(), 1.0 / 3.0))

    # per-element outward normal of a boundary face containing each local vertex
    t2e = mesh.triangle_edges
    is_bnd = mesh.edge_elements[t2e, 1] < 0  # (nt, 3) local edge on boundary
    elem_normal = np.zeros((nt, 3, 2))
    has_normal = np.zeros((nt, 3), dtype=bool)
    bnd_vertex = mesh.boundary_vertex_mask
    for j in range(3):
        for i in range(3):
            if i == j:
                continue
            sel = is_bnd[:, i] & ~has_normal[:, j] & bnd_vertex[tri[:, j]]
            elem_normal[sel, j] = mesh.edge_normals[t2e[sel, i]]
            has_normal[sel, j] = True

    for j in range(3):
        v = tri[:, j]
        scale = 1.0 / patch_size[v]
        for w in range(3):
            c = col_of_vertex[tri[:, w]]
            keep = c >= 0
            g = grads[:, w]
            for k in range(2):
                direct = g[:, k]
                n = elem_normal[:, j]
                normal_rule = (g * n).sum(1) * n[:, k]
                entry = np.where(has_normal[:, j], normal_rule, direct) * scale
                rows.append(3 * v[keep] + 1 + k)
                cols.append(c[keep])
                vals.append(entry[keep])

    P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(hermite.n_dofs, p1.n_free))
    return P[hermite.free_dofs].tocsr()
