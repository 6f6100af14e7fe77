import numpy as np
import pytest

from polytoep.errors import (BoxTooSmall, PointOutsideTriangle, SingularPathUnsupported, SolverDiverged,
                             TooLarge)
from polytoep.factorization import cone_factorize
from polytoep.lattice_geometry import build_triangle
from polytoep.structured_inversion import (_exchange_matrix, apply_exchange, assemble_H, build_system,
                                           default_box_radius, gamma_field, phi_combination_norm, pk_map,
                                           solve_triangle, structured_inverse, structured_inverse_apply)
from polytoep.symbol import GridFunction, grid_angles
from polytoep.toeplitz_core import assemble_toeplitz

from conftest import ALPHA_RUNNING, ALPHA_SECOND, ALPHA_THIRD, f_coeffs_from_alpha

ALPHAS = {"running": ALPHA_RUNNING, "second": ALPHA_SECOND, "third": ALPHA_THIRD}
NAMES = list(ALPHAS)


def dense_inverse(name, t):
    """Operator matrix of T(f)^{-1}: the dense matrix stores f(p_j - p_i), the operator f(p_i - p_j)."""
    return np.linalg.inv(assemble_toeplitz(f_coeffs_from_alpha(ALPHAS[name]), t).data).T


def column_errors(res, inv):
    return np.linalg.norm(res.columns - inv, axis=0) / np.linalg.norm(inv, axis=0)


@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("lam,M", [(1, 16), (2, 20)])
def test_matches_dense_inverse(factorizations, name, lam, M):
    t = build_triangle((-1, 1), 2, lam)
    sys = build_system(factorizations[name], t, M)
    res = structured_inverse(sys)
    assert np.array_equal(res.points, sys.box.points_lambda)
    assert column_errors(res, dense_inverse(name, t)).max() < 1e-6


def test_single_column_apply(factorizations):
    t = build_triangle((-1, 1), 2, 2)
    sys = build_system(factorizations["second"], t, 20)
    inv = dense_inverse("second", t)
    j = 4
    col, leak = structured_inverse_apply(sys, tuple(sys.box.points_lambda[j]))
    assert np.linalg.norm(col - inv[:, j]) / np.linalg.norm(inv[:, j]) < 1e-6
    assert leak < 1e-4


@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("lam,M", [(1, 8), (1, 12), (2, 12)])
def test_hankel_matrix_hermitian_positive(factorizations, name, lam, M):
    sys = build_system(factorizations[name], build_triangle((-1, 1), 2, lam), M)
    H = assemble_H(sys).data
    assert np.abs(H - H.conj().T).max() <= 1e-10
    w = np.linalg.eigvalsh(H)
    assert w.min() >= -1e-8 * np.abs(w).max()
    # |Phi2| = 1 on the torus, so the off-diagonal block is a contraction
    assert np.linalg.norm(_exchange_matrix(sys), 2) <= 1 + 1e-9


@pytest.mark.parametrize("name", NAMES)
def test_exchange_fft_matches_gather(factorizations, name):
    sys = build_system(factorizations[name], build_triangle((-1, 1), 2, 2), 10)
    C = _exchange_matrix(sys)
    rng = np.random.default_rng(0)
    x2 = rng.normal(size=sys.n2) + 1j * rng.normal(size=sys.n2)
    x1 = rng.normal(size=sys.n1) + 1j * rng.normal(size=sys.n1)
    if sys.real:
        x1, x2 = x1.real, x2.real
    assert np.allclose(apply_exchange(sys, 1, 2, x2), C @ x2, atol=1e-12)
    assert np.allclose(apply_exchange(sys, 2, 1, x1), C.conj().T @ x1, atol=1e-12)
    assert np.array_equal(apply_exchange(sys, 1, 1, x1), x1)
    with pytest.raises(ValueError):
        apply_exchange(sys, 3, 1, x1)


def test_masks_follow_labels(factorizations):
    t = build_triangle((-1, 1), 2, 2)
    sys = build_system(factorizations["running"], t, 10)
    assert sys.labels == ("alpha", "alpha_bar", "alpha")
    b = sys.box
    assert not (b.mask_lambda & b.mask1).any() and not (b.mask_lambda & b.mask2).any()
    # every box point outside the triangle is in some exterior half-plane
    assert np.array_equal(b.mask1 | b.mask2, ~b.mask_lambda)


@pytest.mark.parametrize("name", NAMES)
def test_kernel_components_cancel(factorizations, name):
    """Numerically null directions of H carry theta1 + Phi2 theta2 ~ 0, so they drop out."""
    t = build_triangle((-1, 1), 2, 1)
    for M in (12, 16):
        sys = build_system(factorizations[name], t, M, solver_mode="direct")
        b = sys.box
        H = assemble_H(sys).data
        w, V = np.linalg.eigh(H)
        ker = V[:, w < 1e-12 * np.abs(w).max()]
        for v in ker.T:
            comb = b.to_box(v[:sys.n1], b.mask1) + sys.multiply(b.to_box(v[sys.n1:], b.mask2), "phi")
            assert np.linalg.norm(comb) <= 1e-6
        for q in b.points_lambda:
            sol = solve_triangle(sys, tuple(q))
            theta = np.concatenate([sol.theta1, sol.theta2])
            cleaned = theta - ker @ (ker.conj().T @ theta)
            e = b.basis(np.array([q]))[0]

            def column(th):
                t1 = b.to_box(th[:sys.n1], b.mask1)
                t2 = b.to_box(th[sys.n1:], b.mask2)
                out = sys.multiply(e, "inv_f") - sys.multiply(t1, "inv_alpha") - sys.multiply(t2, "inv_abar")
                return out[b.mask_lambda]
            full, clean = column(theta), column(cleaned)
            assert np.linalg.norm(full - clean) <= 1e-8 * np.linalg.norm(full)


@pytest.mark.parametrize("name", ["running", "second"])
def test_solve_residual(factorizations, name):
    sys = build_system(factorizations[name], build_triangle((-1, 1), 2, 2), 24)
    sol = solve_triangle(sys, (1, 1))
    assert sol.info.residual < 1e-9
    g1, g2 = gamma_field(sys, (1, 1))
    H = assemble_H(sys).data
    lhs = H @ np.concatenate([sol.theta1, sol.theta2])
    rhs = np.concatenate([g1, g2])
    assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)


def test_running_symbol_neumann_converges(factorizations):
    sys = build_system(factorizations["running"], build_triangle((-1, 1), 2, 2), 16)
    sol = solve_triangle(sys, (0, 0))
    assert sol.info.mode == "neumann" and not sol.info.fell_back


def test_neumann_without_fallback_reports_stall(factorizations):
    sys = build_system(factorizations["second"], build_triangle((-1, 1), 2, 2), 16, allow_fallback=False)
    with pytest.raises(SolverDiverged):
        solve_triangle(sys, (1, 1))


def test_direct_and_neumann_agree(factorizations):
    t = build_triangle((-1, 1), 2, 2)
    a = structured_inverse(build_system(factorizations["running"], t, 12, solver_mode="direct"))
    b = structured_inverse(build_system(factorizations["running"], t, 12, solver_mode="neumann"))
    assert np.abs(a.columns - b.columns).max() < 1e-9


def test_leakage_inner_small(factorizations):
    res = structured_inverse(build_system(factorizations["second"], build_triangle((-1, 1), 2, 2), 24))
    assert res.leakage_inner.max() < 1e-6
    assert np.all(res.leakage_inner <= res.leakage + 1e-15)


def test_pk_map_idempotent(factorizations):
    sys = build_system(factorizations["running"], build_triangle((-1, 1), 2, 1), 24)
    rng = np.random.default_rng(3)
    psi = np.zeros(sys.box.shape)
    psi[sys.box.mask_lambda] = rng.normal(size=sys.box.mask_lambda.sum())
    once = pk_map(sys, psi)
    twice = pk_map(sys, once)
    assert np.linalg.norm(twice - once) <= 1e-6 * np.linalg.norm(once)


def test_phi_combination_norm_of_zero(factorizations):
    sys = build_system(factorizations["running"], build_triangle((-1, 1), 2, 1), 8)
    assert phi_combination_norm(sys, np.zeros(sys.n1), np.zeros(sys.n2)) == 0.0
    # a pure theta1 has norm equal to its coefficient l2 norm (Parseval)
    th1 = np.zeros(sys.n1)
    th1[0] = 2.0
    assert phi_combination_norm(sys, th1, np.zeros(sys.n2)) == pytest.approx(2.0)


def test_errors(factorizations, cone):
    t = build_triangle((-1, 1), 2, 2)
    fact = factorizations["running"]
    with pytest.raises(BoxTooSmall):
        build_system(fact, t, t.extent + 1)
    with pytest.raises(ValueError):
        build_system(fact, t, 10, solver_mode="cg")
    sys = build_system(fact, t, 10)
    with pytest.raises(PointOutsideTriangle):
        solve_triangle(sys, (0, 1))
    with pytest.raises(PointOutsideTriangle):
        gamma_field(sys, (-1, 0))
    with pytest.raises(TooLarge):
        assemble_H(sys, max_unknowns=10)
    _, T2 = grid_angles(64)
    with pytest.warns(RuntimeWarning):
        singular = cone_factorize(GridFunction(np.exp(np.cos(T2))), cone)
    with pytest.raises(SingularPathUnsupported):
        build_system(singular, t)
    assert default_box_radius(t) == 36
