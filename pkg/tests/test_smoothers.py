import numpy as np
import pytest
import scipy.sparse as sp

from hermite_hjb.smoothers import CoarseSmoother, GaussSeidel, SolverError, gs_apply, jacobi_apply


def dense(op, n):
    return op(np.eye(n))


@pytest.fixture(scope="module")
def A_small(small_setup):
    return small_setup.A(1.0)


def test_diagonal_matrix_gs_is_jacobi(rng):
    d = rng.uniform(1, 3, 8)
    A = sp.diags(d)
    r = rng.standard_normal(8)
    assert np.allclose(gs_apply(A, r, sweeps=1), jacobi_apply(A, r))
    assert np.allclose(GaussSeidel(A, 3).apply(r), r / d)


def test_single_forward_sweep_is_lower_triangular_solve(A_small, rng):
    r = rng.standard_normal(A_small.shape[0])
    L = np.tril(A_small.toarray())
    assert np.allclose(GaussSeidel(A_small, 1).apply(r), np.linalg.solve(L, r))
    U = np.triu(A_small.toarray())
    assert np.allclose(GaussSeidel(A_small, 1).apply_adjoint(r), np.linalg.solve(U, r))


@pytest.mark.parametrize("order", [None, "bubble_first"])
def test_symmetrised_smoother_identity(small_setup, A_small, order):
    n = A_small.shape[0]
    perm = None if order is None else small_setup.space.sweep_order(order)
    gs = GaussSeidel(A_small, 3, perm)
    Ad = A_small.toarray()
    I = np.eye(n)
    R, Rt, Rbar = dense(gs.apply, n), dense(gs.apply_adjoint, n), dense(gs.apply_symmetric, n)
    assert np.allclose(I - Rbar @ Ad, (I - Rt @ Ad) @ (I - R @ Ad), atol=1e-9)
    # the backward sweep is the A-adjoint of the forward one
    assert np.allclose(Rt, R.T, atol=1e-10)
    assert np.allclose(Rbar, Rbar.T, atol=1e-9)
    assert np.linalg.eigvalsh(0.5 * (Rbar + Rbar.T)).min() > 0


def test_gs_contracts_in_energy(A_small, rng):
    gs = GaussSeidel(A_small, 3)
    for _ in range(5):
        v = rng.standard_normal(A_small.shape[0])
        e = v - gs.apply(A_small @ v)
        assert e @ A_small @ e < v @ A_small @ v


def test_ordering_is_a_permutation_conjugation(A_small, rng):
    n = A_small.shape[0]
    p = rng.permutation(n)
    r = rng.standard_normal(n)
    x = GaussSeidel(A_small, 2, p).apply(r)
    y = GaussSeidel(A_small[p][:, p], 2).apply(r[p])
    assert np.allclose(x[p], y)
    with pytest.raises(ValueError):
        GaussSeidel(A_small, 1, np.zeros(n, dtype=int))


def test_zero_diagonal_is_reported():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(SolverError, match="row 1"):
        GaussSeidel(A)
    with pytest.raises(SolverError):
        jacobi_apply(A, np.ones(2))
    with pytest.raises(ValueError):
        GaussSeidel(sp.eye(2), sweeps=0)


def test_coarse_smoother_is_spd_and_matches_its_inverse(level0_setup, rng):
    c = level0_setup.coarse(0.3)
    n = level0_setup.p1.n_free
    x = rng.standard_normal(n)
    assert np.allclose(c.apply(c.inverse_norm_matrix() @ x), x)
    R0 = c.apply(np.eye(n))
    assert np.allclose(R0, R0.T, atol=1e-12)
    assert np.linalg.eigvalsh(R0).min() > 0


def test_coarse_smoother_small_lambda_limit(small_setup, rng):
    K, M = small_setup.K.toarray(), small_setup.M.toarray()
    f = rng.standard_normal(K.shape[0])
    limit = np.linalg.solve(K, M @ np.linalg.solve(K, f))
    assert np.allclose(small_setup.coarse(1e-12).apply(f), limit, rtol=1e-9)


def test_coarse_cg_matches_direct(level0_setup, rng):
    f = rng.standard_normal(level0_setup.p1.n_free)
    d = level0_setup.coarse(1.0, "direct").apply(f)
    c = CoarseSmoother(level0_setup.K, level0_setup.M, 1.0, method="pcg", tol=1e-12)
    assert np.allclose(c.apply(f), d, rtol=1e-8)
    assert c.stats["applications"] == 1 and c.stats["inner_iterations"] > 0
    with pytest.raises(ValueError):
        CoarseSmoother(level0_setup.K, level0_setup.M, 1.0, method="amg")


def test_coarse_cg_reports_stall(level0_setup):
    c = CoarseSmoother(level0_setup.K, level0_setup.M, 1.0, method="pcg", tol=1e-14, maxiter=2)
    with pytest.raises(SolverError, match="stalled"):
        c.apply(np.ones(level0_setup.p1.n_free))


def test_identity_matrix_jacobi_and_diagonal_norm(A_small, rng):
    r = rng.standard_normal(5)
    assert np.allclose(jacobi_apply(sp.eye(5), r), r)
    v = rng.standard_normal(A_small.shape[0])
    x = v * A_small.diagonal()
    assert x @ jacobi_apply(A_small, x) == pytest.approx((A_small.diagonal() * v * v).sum())


def test_contraction_by_power_iteration(lineage):
    from hermite_hjb.fespace import HermiteSpace
    from hermite_hjb.precond import AuxiliarySetup
    st = AuxiliarySetup(HermiteSpace(lineage[3]))
    A = st.A(1.0)
    gs = GaussSeidel(A, 3, st.space.sweep_order())
    v = np.random.default_rng(7).standard_normal(A.shape[0])
    rate = 0.0
    for _ in range(50):
        v = v / np.sqrt(v @ A @ v)
        v = v - gs.apply(A @ v)
        rate = np.sqrt(v @ A @ v)
    assert rate < 1.0


def diagonal_norm_ratios(setup, lam, rng, samples=20):
    """``sum_T (h_T^-2 + lam)^2 |v|_T^2 / |v|_D^2`` for random coefficient vectors."""
    h = setup.space.mesh.diameters
    _, w, vals, _, _ = setup.space.volume_quadrature()
    d = setup.A(lam).diagonal()
    out = []
    for _ in range(samples):
        v = rng.standard_normal(setup.space.n_free)
        l2T = (w * np.einsum("tqa,ta->tq", vals, setup.space.local(v)) ** 2).sum(1)
        out.append(((h**-2 + lam) ** 2 * l2T).sum() / (d * v * v).sum())
    return np.array(out)


def test_diagonal_norm_equivalence_constant(level0_setup, rng):
    r = np.concatenate([diagonal_norm_ratios(level0_setup, lam, rng) for lam in (1e-3, 1.0, 1e3)])
    c = max(r.max(), 1 / r.min())
    print(f"diagonal norm equivalence constant c = {c:.4g}")
    assert c < 30


def test_diagonal_norm_ratio_is_mesh_independent(level0_setup, rng):
    from hermite_hjb.fespace import HermiteSpace
    from hermite_hjb.mesh import uniform_rect_mesh
    from hermite_hjb.precond import AuxiliarySetup
    fine = AuxiliarySetup(HermiteSpace(uniform_rect_mesh((-1, 1, -1, 1), 1 / 16)))
    for lam in (1e-3, 1.0):
        a = diagonal_norm_ratios(level0_setup, lam, rng)
        b = diagonal_norm_ratios(fine, lam, rng)
        assert max(a.max(), b.max()) / min(a.min(), b.min()) < 1.5


def test_coarse_norm_identity_on_one_vertex():
    from hermite_hjb.assembly import assemble_p1
    from hermite_hjb.fespace import P1Space
    from hermite_hjb.mesh import uniform_rect_mesh
    K, M = assemble_p1(P1Space(uniform_rect_mesh((0, 1, 0, 1), 0.5)))
    lam, v = 3.0, 0.7
    k, m = K[0, 0], M[0, 0]
    # |Delta_h v|^2 + 2 lam |grad v|^2 + lam^2 |v|^2 with Delta_h v = -M^{-1} K v
    expected = (k * v) ** 2 / m + 2 * lam * k * v * v + lam**2 * m * v * v
    c = CoarseSmoother(K, M, lam)
    assert v * c.inverse_norm_matrix()[0, 0] * v == pytest.approx(expected)
    assert c.apply(np.array([expected / v])) == pytest.approx([v])
