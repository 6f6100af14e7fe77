import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polytoep.errors import ConeNotInVertexCone, ConeTooNarrowForExactPath, NotUnimodular
from polytoep.factorization import (assign_edge_factors, assign_factors, coset_representative,
                                    cone_factorize, line_sum_transfer, torus_automorphism_remap,
                                    verify_factorization)
from polytoep.lattice_geometry import ConeSpec, build_triangle
from polytoep.symbol import FourierMap, GridFunction, grid_angles

from conftest import ALPHA_RUNNING, ALPHA_SECOND, ALPHA_THIRD, symbol_from_alpha

# each alpha is constant term plus terms whose moduli sum to less than it, in cone
# coordinates, so it is zero-free on the closed polydisc and is its own cone factor
ALPHAS = {"running": ALPHA_RUNNING, "second": ALPHA_SECOND, "third": ALPHA_THIRD}


@pytest.mark.parametrize("name", ["running", "second", "third"])
def test_exact_path_recovers_alpha(factorizations, name):
    fact = factorizations[name]
    assert not fact.singular and fact.transfer is None
    expected = FourierMap.from_dict(ALPHAS[name], radius=fact.alpha_coeffs.radius, hermitian=False)
    assert np.abs(fact.alpha_coeffs.array - expected.array).max() < 1e-12


def test_running_beta_is_geometric_series(factorizations):
    beta = factorizations["running"].beta_coeffs
    for k in range(0, 30):
        assert beta[(k, 0)] == pytest.approx(0.5 ** k, abs=1e-14)
    assert abs(beta[(0, 1)]) < 1e-15


@pytest.mark.parametrize("name", ["running", "second"])
def test_factorization_tolerances(factorizations, name):
    fact = factorizations[name]
    assert fact.residual_sup <= 1e-8
    assert fact.leak_alpha <= 1e-10 and fact.leak_beta <= 1e-10


def test_factorization_runtime(cone):
    f = symbol_from_alpha(ALPHA_SECOND)
    t0 = time.perf_counter()
    cone_factorize(f, cone)
    assert time.perf_counter() - t0 < 5.0


@pytest.mark.parametrize("name", ["running", "second", "third"])
def test_verify_matches_stored(factorizations, name):
    fact = factorizations[name]
    f = symbol_from_alpha(ALPHAS[name])
    v = verify_factorization(f, fact)
    # 1/alpha for the second symbol decays like (5/6)^k, so the 256 grid aliases near 1e-10
    assert v["residual_sup"] <= 1e-12
    assert v["inverse_residual_sup"] <= 1e-9
    assert v["leak_alpha"] <= 1e-12 and v["leak_beta"] <= 1e-10
    assert v["leak_beta"] == pytest.approx(fact.leak_beta, rel=0.5, abs=1e-14)


def test_non_unimodular_cone_uses_basis():
    # the basis cone sits strictly inside, so the spectrum runs along the interior ray (1,1)
    f = symbol_from_alpha({(0, 0): 1.0, (1, 1): -0.5})
    fact = cone_factorize(f, ConeSpec((1, 0), (1, 2)))
    assert fact.cone_basis.is_unimodular
    assert fact.residual_sup < 1e-12


def test_to_json_keys(factorizations):
    js = factorizations["running"].to_json(tol=1e-12)
    assert js["cone"] == [[1, 0], [1, 1]]
    assert {"k": [1, 0], "re": -0.5, "im": 0.0} in [
        {"k": d["k"], "re": round(d["re"], 12), "im": round(d["im"], 12) + 0.0} for d in js["alpha"]]


def cos_theta2_symbol(N=128):
    _, T2 = grid_angles(N)
    return GridFunction(np.exp(np.cos(T2)))


def test_singular_path_transfer(cone):
    f = cos_theta2_symbol()
    with pytest.warns(RuntimeWarning):
        fact = cone_factorize(f, cone)
    assert fact.singular
    # cone coordinates of (0, +-1) are (-1, 1) and (1, -1); each contributes (2, 2)
    assert fact.transfer.v == (8, 4)
    tr = fact.transfer.transferred.as_dict(1e-12)
    assert set(tr) == {(0, 1), (0, -1)}
    assert all(abs(c - 0.5) < 1e-12 for c in tr.values())
    rs = [r for _, r in fact.residual_by_r]
    assert rs[0] > rs[1] > rs[2]
    assert np.isnan(fact.leak_alpha) and np.isnan(fact.leak_beta)


def test_singular_path_can_be_refused(cone):
    with pytest.raises(ConeTooNarrowForExactPath):
        cone_factorize(cos_theta2_symbol(), cone, allow_singular=False)


def test_line_sum_transfer_hand_example():
    cone = ConeSpec((1, 0), (0, 1))
    # (1,-1) and (2,0) share the line (1,-1) + Z(1,1); (-1,2) and (0,1) are alone on theirs
    h = {(1, -1): 1.0, (2, 0): 2.0, (-1, 2): 3.0, (0, 1): 4.0}
    tr = line_sum_transfer(h, (1, 1), cone)
    assert tr.transferred.as_dict() == {(1, -1): 3.0, (-1, 2): 3.0}
    assert sorted(tr.line_sums.values(), key=abs) == [3.0, 3.0, 4.0]
    with pytest.raises(ValueError):
        line_sum_transfer(h, (0, 0), cone)


@given(st.tuples(st.integers(-50, 50), st.integers(-50, 50)),
       st.tuples(st.integers(-7, 7), st.integers(-7, 7)).filter(lambda v: v != (0, 0)))
def test_coset_representative(k, v):
    r = coset_representative(k, v)
    d = (k[0] - r[0], k[1] - r[1])
    assert d[0] * v[1] - d[1] * v[0] == 0
    j = (d[0] * v[0] + d[1] * v[1]) // (v[0] ** 2 + v[1] ** 2)
    assert d == (j * v[0], j * v[1])
    assert 0 <= r[0] * v[0] + r[1] * v[1] < v[0] ** 2 + v[1] ** 2
    shifted = (k[0] + 3 * v[0], k[1] + 3 * v[1])
    assert coset_representative(shifted, v) == r


@given(st.sampled_from([((1, 1), (0, 1)), ((2, 1), (1, 1)), ((0, 1), (1, 0)), ((1, 3), (0, 1))]))
def test_torus_remap_is_substitution(U):
    m = FourierMap.from_dict({(1, 0): 0.5, (-1, 2): 1j, (0, 0): 2.0}, hermitian=False)
    out = torus_automorphism_remap(m, U)
    Ua = np.array(U)
    # coefficient at k moves to U k, so the new function is the old one at U^T theta
    theta = np.array([0.3, -1.1])
    phi = Ua.T @ theta

    def ev(mm, th):
        return sum(c * np.exp(1j * (k[0] * th[0] + k[1] * th[1])) for k, c in mm.as_dict().items())
    assert ev(out, theta) == pytest.approx(ev(m, phi), abs=1e-13)
    with pytest.raises(NotUnimodular):
        torus_automorphism_remap(m, ((2, 0), (0, 1)))


def test_assign_triangle_labels():
    t = build_triangle((-1, 1), 2, 1)
    assert t.nu2 == (1, 1)
    a = assign_edge_factors(t, ConeSpec((1, 0), (1, 1)))
    assert a.labels == ("alpha", "alpha_bar", "alpha")
    assert a.runs == ((2,), (3, 1))
    assert a.run_labels == ("alpha_bar", "alpha")
    assert a.p == 2
    with pytest.raises(ConeNotInVertexCone):
        assign_edge_factors(t, ConeSpec((1, 0), (1, 1)), vertex="A1")


def test_assign_three_plus_one():
    normals = [(0, -1), (1, -1), (1, 0), (-1, 1)]
    a = assign_factors(normals, ConeSpec((-1, 0), (-1, 1)))
    assert a.labels == ("alpha", "alpha", "alpha", "alpha_bar")
    assert sorted(map(sorted, a.runs)) == [[1, 2, 3], [4]]
    assert a.p == 2
