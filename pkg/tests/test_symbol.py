import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polytoep.errors import AliasedGrid, NonPositiveSymbol, NonRealMean
from polytoep.lattice_geometry import build_triangle
from polytoep.symbol import (NORM_CONSTANT, FourierMap, GridFunction, analyze, grid_angles, k_norm, mean,
                             n_norm, norm_equivalence_constants, norm_integral, pointwise_log,
                             pointwise_reciprocal, synthesize)

from conftest import ALPHA_RUNNING, f_coeffs_from_alpha, symbol_from_alpha


def direct_eval(entries: dict, N: int) -> np.ndarray:
    T1, T2 = grid_angles(N)
    out = np.zeros((N, N), dtype=complex)
    for (u, v), c in entries.items():
        out += c * np.exp(1j * (u * T1 + v * T2))
    return out


coeff_entries = st.dictionaries(
    st.tuples(st.integers(-3, 3), st.integers(-3, 3)),
    st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False),
    min_size=1, max_size=8)


@given(coeff_entries)
def test_synthesize_matches_direct_sum(entries):
    N = 16
    g = synthesize(FourierMap.from_dict(entries, hermitian=False), N)
    assert np.allclose(g.values, direct_eval(entries, N), atol=1e-12)


@given(coeff_entries)
def test_analyze_inverts_synthesize(entries):
    m = FourierMap.from_dict(entries, hermitian=False)
    back = analyze(synthesize(m, 16), 3)
    assert np.allclose(back.array, m.padded(3).array, atol=1e-12)


def test_hermitian_synthesis_is_real():
    m = f_coeffs_from_alpha(ALPHA_RUNNING)
    assert m.hermitian
    g = synthesize(m, 32)
    assert g.is_real
    # f = 5/4 - cos(theta1)
    T1, _ = grid_angles(32)
    assert np.allclose(g.values, 1.25 - np.cos(T1), atol=1e-14)


def test_aliasing_guard():
    m = FourierMap.from_dict({(4, 0): 1.0})
    with pytest.raises(AliasedGrid):
        synthesize(m, 8)
    with pytest.raises(ValueError):
        analyze(GridFunction(np.ones((8, 8))), 4)


def test_running_symbol_means():
    f = symbol_from_alpha(ALPHA_RUNNING)
    # Jensen: mean log|1 - z/2|^2 = 0; geometric series: mean 1/f = 1/(1 - 1/4)
    assert mean(analyze(pointwise_log(f), 0)) == pytest.approx(0.0, abs=1e-14)
    assert mean(analyze(pointwise_reciprocal(f), 0)) == pytest.approx(4.0 / 3.0, rel=1e-14)


def test_positivity_errors():
    with pytest.raises(NonPositiveSymbol):
        pointwise_log(GridFunction(np.zeros((4, 4))))
    with pytest.raises(NonPositiveSymbol):
        pointwise_log(GridFunction(np.ones((4, 4), dtype=complex)))
    with pytest.raises(NonPositiveSymbol):
        pointwise_reciprocal(GridFunction(-np.ones((4, 4))))
    with pytest.raises(NonRealMean):
        mean(FourierMap.from_dict({(0, 0): 1j}))


def test_fourier_map_helpers():
    m = FourierMap.from_dict({(1, 0): 2.0, (0, -1): 1j}, hermitian=False)
    assert m[(1, 0)] == 2.0 and m[(5, 5)] == 0j
    rc = m.reflected_conjugate()
    assert rc[(-1, 0)] == 2.0 and rc[(0, 1)] == -1j
    assert m.padded(4).cropped(1).array.tolist() == m.array.tolist()
    assert m.mass() == pytest.approx(5.0)
    back = FourierMap.from_json(m.to_json(), hermitian=False)
    assert np.array_equal(back.array, m.array)
    with pytest.raises(ValueError):
        FourierMap(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        FourierMap.from_dict({(3, 0): 1.0}, radius=1)


def test_norms_hand_values():
    t = build_triangle((-1, 1), 2, 1)
    m = FourierMap.from_dict({(1, 0): 1.0, (-1, 0): 1.0}, hermitian=True)
    assert k_norm(m, t) == pytest.approx(math.sqrt(2.0))
    assert n_norm(m) == pytest.approx(math.sqrt(2.0 * math.pi))
    with pytest.raises(ValueError):
        k_norm(FourierMap.from_dict({(1, 0): 1.0}, hermitian=False), t)


@pytest.mark.parametrize("m,n", [(1, 0), (0, 1), (1, 1), (2, -3), (5, 2)])
def test_norm_integral_constant(m, n):
    # rotation and scaling reduce I(m, n) to |(m, n)| * I(1, 0), and I(1, 0) = pi in polar form
    assert norm_integral(m, n) / math.hypot(m, n) == pytest.approx(NORM_CONSTANT, rel=1e-7)
    assert NORM_CONSTANT == math.pi


@given(st.integers(0, 10_000))
def test_norm_equivalence(seed):
    rng = np.random.default_rng(seed)
    t = build_triangle((-1, 1), 2, 1)
    R = 4
    raw = rng.normal(size=(2 * R + 1, 2 * R + 1)) + 1j * rng.normal(size=(2 * R + 1, 2 * R + 1))
    m = FourierMap(0.5 * (raw + np.conj(raw[::-1, ::-1])), hermitian=True)
    c1, c2 = norm_equivalence_constants(t, R)
    k, n = k_norm(m, t), n_norm(m)
    assert c1 * k <= n * (1 + 1e-12)
    assert n <= c2 * k * (1 + 1e-12)
