import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hermite_hjb.fespace import (HermiteSpace, P1Space, build_transfer_Pi0,
                                 nodal_interpolation_matrix)
from hermite_hjb.mesh import uniform_rect_mesh


def cubic(p):
    x, y = p[..., 0], p[..., 1]
    return 1 + 2 * x - y + x * x * y - 3 * x * y * y + 0.5 * x**3 + y**3


def cubic_grad(p):
    x, y = p[..., 0], p[..., 1]
    return np.stack([2 + 2 * x * y - 3 * y * y + 1.5 * x * x,
                     -1 + x * x - 6 * x * y + 3 * y * y], axis=-1)


def cubic_hess(p):
    x, y = p[..., 0], p[..., 1]
    return np.stack([2 * y + 3 * x, 2 * x - 6 * y, -6 * x + 6 * y], axis=-1)


def test_single_square_dof_counts():
    s = HermiteSpace(uniform_rect_mesh((0, 1, 0, 1), 1.0))
    assert s.n_dofs == 14
    assert s.n_free == 2


@pytest.mark.parametrize("h, free", [(0.25, 71), (0.125, 303), (1 / 16, 1247)])
def test_uniform_free_dof_counts(h, free):
    assert HermiteSpace(uniform_rect_mesh((0, 1, 0, 1), h)).n_free == free


def test_descriptors(unit_quarter):
    s = HermiteSpace(unit_quarter)
    d = s.descriptors
    assert len(d) == s.n_dofs
    assert d[1].kind == "vertex" and d[1].direction == (1.0, 0.0)
    assert d[-1].kind == "element" and d[-1].location == unit_quarter.n_triangles - 1
    assert sum(x.constrained for x in d) == s.n_dofs - s.n_free


def test_local_basis_is_dual_to_the_dofs(unit_quarter):
    s = HermiteSpace(unit_quarter)
    m = unit_quarter
    for T in (0, 7, 31):
        verts = m.vertices[m.triangles[T]]
        pts = np.vstack([verts, m.barycenters[T]])
        v, g, _ = s.eval_basis([T], pts[None])
        v, g = v[0], g[0]
        D = np.zeros((10, 10))
        for j in range(3):
            D[3 * j] = v[j]
            D[3 * j + 1] = g[j, :, 0]
            D[3 * j + 2] = g[j, :, 1]
        D[9] = v[3]
        assert np.allclose(D, np.eye(10), atol=1e-10)


def test_cubics_are_reproduced(unit_quarter, rng):
    s = HermiteSpace(unit_quarter)
    c = s.interpolate(cubic, cubic_grad, full=True)
    el = rng.integers(0, unit_quarter.n_triangles, 50)
    bary = rng.dirichlet(np.ones(3), 50)
    pts = np.einsum("ek,ekd->ed", bary, unit_quarter.vertices[unit_quarter.triangles[el]])
    val, grad, hess = s.evaluate(c, pts, el, full=True)
    assert np.allclose(val, cubic(pts), atol=1e-11)
    assert np.allclose(grad, cubic_grad(pts), atol=1e-10)
    assert np.allclose(hess, cubic_hess(pts), atol=1e-8)


def test_continuity_and_vertex_gradients(lineage, rng):
    s = HermiteSpace(lineage[2])
    c = rng.standard_normal(s.n_free)
    fq = s.face_quadrature()
    loc = s.local(c)
    vp = np.einsum("fqa,fa->fq", fq["plus_tables"][0], loc[fq["plus"]])
    vm = np.einsum("fqa,fa->fq", fq["minus_tables"][0], loc[fq["minus"]])
    assert np.max(np.abs(vp - vm)) < 1e-10
    # gradients are single valued at the face endpoints
    m = s.mesh
    f = fq["faces"][:40]
    for k, face in enumerate(f):
        tp, tm = m.edge_elements[face]
        a = m.vertices[m.edges[face, 0]]
        _, gp, _ = s.evaluate(c, a[None], np.array([tp]))
        _, gm, _ = s.evaluate(c, a[None], np.array([tm]))
        assert np.allclose(gp, gm, atol=1e-9)


def test_normal_derivative_jumps_are_generic(unit_quarter, rng):
    # the space is only C0 across faces
    s = HermiteSpace(unit_quarter)
    c = rng.standard_normal(s.n_free)
    fq = s.face_quadrature()
    loc = s.local(c)
    gp = np.einsum("fqad,fa->fqd", fq["plus_tables"][1], loc[fq["plus"]])
    gm = np.einsum("fqad,fa->fqd", fq["minus_tables"][1], loc[fq["minus"]])
    assert np.max(np.abs(np.einsum("fqd,fd->fq", gp - gm, fq["normal"]))) > 1e-3


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trace_vanishes(seed):
    mesh = uniform_rect_mesh((0, 1, 0, 1), 0.25)
    s = HermiteSpace(mesh)
    c = np.random.default_rng(seed).standard_normal(s.n_free)
    faces = mesh.boundary_faces
    elems = mesh.edge_elements[faces, 0]
    t = np.linspace(0, 1, 7)
    for e, T in zip(faces, elems):
        a, b = mesh.vertices[mesh.edges[e]]
        pts = a + t[:, None] * (b - a)
        val, _, _ = s.evaluate(c, pts, np.full(len(t), T))
        assert np.max(np.abs(val)) < 1e-12


def test_interpolation_inverts_transfer(lineage, rng):
    s = HermiteSpace(lineage[1])
    p1 = P1Space(lineage[1])
    Pi0 = build_transfer_Pi0(s, p1)
    Ih = nodal_interpolation_matrix(s, p1)
    w = rng.standard_normal(p1.n_free)
    assert np.allclose(Ih @ (Pi0 @ w), w)
    assert Pi0.shape == (s.n_free, p1.n_free)


def test_transfer_of_a_hat_function(unit_quarter):
    s = HermiteSpace(unit_quarter)
    p1 = P1Space(unit_quarter)
    Pi0 = build_transfer_Pi0(s, p1)
    k = 4
    v = p1.interior_vertices[k]
    hat = np.zeros(p1.n_free)
    hat[k] = 1.0
    full = s.full(Pi0 @ hat)
    nv = unit_quarter.n_vertices
    assert full[3 * v] == 1.0
    touching = np.any(unit_quarter.triangles == v, axis=1)
    assert np.allclose(full[3 * nv:][touching], 1 / 3)
    assert np.allclose(full[3 * nv:][~touching], 0.0)
    # the patch-averaged gradient of a symmetric hat vanishes at its peak
    assert abs(full[3 * v + 1]) < 1e-12 and abs(full[3 * v + 2]) < 1e-12


def test_transfer_is_l2_bounded(level0_setup, rng):
    st_ = level0_setup
    for _ in range(5):
        w = rng.standard_normal(st_.p1.n_free)
        num = (st_.Pi0 @ w) @ (st_.pieces.mass @ (st_.Pi0 @ w))
        den = w @ (st_.M @ w)
        assert num / den < 10.0


def test_sweep_orders(unit_quarter):
    s = HermiteSpace(unit_quarter)
    nat = s.sweep_order("natural")
    bub = s.sweep_order("bubble_first")
    assert np.array_equal(nat, np.arange(s.n_free))
    assert np.array_equal(np.sort(bub), nat)
    nb = unit_quarter.n_triangles
    assert np.all(s.free_dofs[bub[:nb]] >= 3 * unit_quarter.n_vertices)
    with pytest.raises(ValueError):
        s.sweep_order("random")


def test_fe_function_shape_check(unit_quarter):
    s = HermiteSpace(unit_quarter)
    with pytest.raises(ValueError):
        s.function(np.zeros(3))
    v, g, H = s.function().at_quadrature()
    assert v.shape == (unit_quarter.n_triangles, g.shape[1]) and not H.any()
