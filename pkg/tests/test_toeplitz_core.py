from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polytoep.errors import DimensionMismatch, NotPositiveDefinite
from polytoep.lattice_geometry import build_triangle, enumerate_lattice_points
from polytoep.symbol import FourierMap
from polytoep.toeplitz_core import (OperatorMatrix, apply_operator, assemble_points, assemble_toeplitz,
                                    cholesky_logdet, inverse_diagonal, trace_of_inverse)

from conftest import ALPHA_SECOND, ALPHA_THIRD, f_coeffs_from_alpha

# f = 5/4 - cos(theta1)
RUNNING_F = {(0, 0): Fraction(5, 4), (1, 0): Fraction(-1, 2), (-1, 0): Fraction(-1, 2)}


def exact_matrix(coeffs: dict, pts):
    return [[coeffs.get((q[0] - p[0], q[1] - p[1]), Fraction(0)) for q in pts] for p in pts]


def exact_det_and_inverse_trace(A):
    n = len(A)
    M = [row[:] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(A)]
    det = Fraction(1)
    for c in range(n):
        piv = next(r for r in range(c, n) if M[r][c] != 0)
        if piv != c:
            M[c], M[piv] = M[piv], M[c]
            det = -det
        det *= M[c][c]
        inv = 1 / M[c][c]
        M[c] = [x * inv for x in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                fac = M[r][c]
                M[r] = [x - fac * y for x, y in zip(M[r], M[c])]
    return det, sum(M[i][n + i] for i in range(n))


def test_running_lambda_one_exact():
    t = build_triangle((-1, 1), 2, 1)
    A = exact_matrix(RUNNING_F, enumerate_lattice_points(t))
    det, tr = exact_det_and_inverse_trace(A)
    assert (det, tr) == (Fraction(425, 256), Fraction(336, 85))
    m = assemble_toeplitz(FourierMap.from_dict({k: float(v) for k, v in RUNNING_F.items()}), t)
    assert cholesky_logdet(m) == pytest.approx(np.log(425 / 256), abs=1e-14)
    assert trace_of_inverse(m) == pytest.approx(336 / 85, rel=1e-14)


@pytest.mark.parametrize("lam", [2, 3])
def test_running_exact_larger(lam):
    t = build_triangle((-1, 1), 2, lam)
    det, tr = exact_det_and_inverse_trace(exact_matrix(RUNNING_F, enumerate_lattice_points(t)))
    m = assemble_toeplitz(FourierMap.from_dict({k: float(v) for k, v in RUNNING_F.items()}), t)
    assert cholesky_logdet(m) == pytest.approx(float(np.log(float(det))), abs=1e-12)
    assert trace_of_inverse(m) == pytest.approx(float(tr), rel=1e-12)


@pytest.mark.parametrize("alpha", [ALPHA_SECOND, ALPHA_THIRD])
def test_assembly_matches_definition(alpha):
    f = f_coeffs_from_alpha(alpha)
    t = build_triangle((-1, 1), 2, 3)
    pts = enumerate_lattice_points(t)
    m = assemble_toeplitz(f, t)
    ref = np.array([[f[(q[0] - p[0], q[1] - p[1])] for q in pts] for p in pts])
    assert np.allclose(m.data, ref, atol=1e-15)
    assert m.hermitian_defect() <= 1e-14
    assert np.array_equal(m.index_map, np.array(pts))


def test_real_data_for_real_coefficients():
    m = assemble_toeplitz(f_coeffs_from_alpha(ALPHA_SECOND), build_triangle((-1, 1), 2, 2))
    assert not np.iscomplexobj(m.data)
    m3 = assemble_toeplitz(f_coeffs_from_alpha(ALPHA_THIRD), build_triangle((-1, 1), 2, 2))
    assert np.iscomplexobj(m3.data)


def test_read_only():
    m = assemble_toeplitz(FourierMap.constant(2.0), build_triangle((-1, 1), 2, 1))
    with pytest.raises(ValueError):
        m.data[0, 0] = 1.0


@given(st.integers(1, 6), st.integers(0, 1000))
def test_cholesky_quantities_match_numpy(lam, seed):
    rng = np.random.default_rng(seed)
    # positive symbol: |random alpha|^2 plus a constant keeps T(f) well conditioned
    alpha = {(int(u), int(v)): complex(rng.normal(), rng.normal())
             for u, v in rng.integers(-2, 3, size=(3, 2))}
    f = f_coeffs_from_alpha(alpha)
    f = FourierMap(f.array + FourierMap.constant(0.5).padded(f.radius).array, hermitian=True)
    m = assemble_toeplitz(f, build_triangle((-1, 1), 2, lam))
    sign, ld = np.linalg.slogdet(m.data)
    assert sign.real > 0
    assert cholesky_logdet(m) == pytest.approx(ld, abs=1e-10)
    inv = np.linalg.inv(m.data)
    assert trace_of_inverse(m) == pytest.approx(np.trace(inv).real, rel=1e-10)
    assert np.allclose(inverse_diagonal(m), np.diag(inv).real, rtol=1e-10)


def test_not_positive_definite():
    m = assemble_toeplitz(FourierMap.from_dict({(0, 0): 0.5, (1, 0): 1.0, (-1, 0): 1.0}),
                          build_triangle((-1, 1), 2, 2))
    with pytest.raises(NotPositiveDefinite):
        cholesky_logdet(m)
    with pytest.raises(NotPositiveDefinite):
        trace_of_inverse(m)


def test_apply_operator():
    t = build_triangle((-1, 1), 2, 2)
    m = assemble_toeplitz(f_coeffs_from_alpha(ALPHA_SECOND), t)
    x = np.arange(m.n, dtype=float)
    assert np.allclose(apply_operator(m, x), m.data @ x)
    with pytest.raises(DimensionMismatch):
        apply_operator(m, np.ones(m.n + 1))


def test_dump_load_roundtrip(tmp_path):
    m = assemble_toeplitz(f_coeffs_from_alpha(ALPHA_THIRD), build_triangle((-1, 1), 2, 2))
    bin_path, json_path = m.dump(tmp_path / "op")
    assert bin_path.stat().st_size == 16 * m.n * m.n
    back = OperatorMatrix.load(tmp_path / "op")
    assert np.array_equal(back.data, m.data)
    assert np.array_equal(back.index_map, m.index_map)


def test_empty_and_arbitrary_points():
    m = assemble_points(FourierMap.constant(3.0), np.array([[0, 0], [5, -2]]))
    assert np.array_equal(m.data, 3.0 * np.eye(2))
    assert cholesky_logdet(OperatorMatrix(np.zeros((0, 2), dtype=np.int64), np.zeros((0, 0)))) == 0.0
