"""Cone factorization ``f = alpha * conj(alpha)`` with spectrum of alpha in a half-cone.

The pipeline works on the FFT grid: ``h = log f`` is analyzed, its
coefficients on the half-cone are doubled (the holomorphic completion of the
real part), and ``alpha = exp(g/2)`` is sampled.  When ``log f`` has spectrum
outside the double cone, the out-of-cone coefficients are moved onto lines
``a + Z*v`` (a singular measure supported on the subtorus ``v . theta = 0``)
and the series is evaluated at polydisc radius ``r < 1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import ConeNotInVertexCone, ConeTooNarrowForExactPath, NotUnimodular
from .lattice_geometry import (ConeSpec, Point, TriangleInstance, _dot, check_primitive,
                               find_unimodular_subcone, shift_vector)
from .symbol import (DEFAULT_EPSILON_POS, FourierMap, GridFunction, grid_angles, pointwise_log,
                     synthesize)

TOL_SPEC = 1e-10
TOL_FACT = 1e-8
#: log-coefficients below this (relative to the largest) do not count as support
SUPPORT_TOL = 1e-9
DEFAULT_R_SEQUENCE = (0.9, 0.99, 0.999)


@dataclass(frozen=True)
class SingularTransfer:
    """Line sums of the log-coefficients along ``a + Z*v``.

    ``line_sums`` is keyed by the canonical representative of each coset
    (see :func:`coset_representative`); ``transferred`` holds the line sum at
    every support point outside the double cone.
    """

    v: Point
    transferred: FourierMap
    line_sums: dict[Point, complex]


@dataclass(frozen=True)
class FactorizationResult:
    alpha_coeffs: FourierMap
    beta_coeffs: FourierMap
    cone: ConeSpec
    cone_basis: ConeSpec
    residual_sup: float
    residual_l2: float
    leak_alpha: float
    leak_beta: float
    radius_r: float
    grid_N: int
    transfer: SingularTransfer | None = None
    residual_by_r: tuple[tuple[float, float], ...] = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def singular(self) -> bool:
        return self.radius_r < 1.0

    def to_json(self, tol: float = 0.0) -> dict:
        out = {
            "cone": [list(self.cone.e1), list(self.cone.e2)],
            "cone_basis": [list(self.cone_basis.e1), list(self.cone_basis.e2)],
            "grid_N": self.grid_N,
            "radius_r": self.radius_r,
            "residual_sup": self.residual_sup,
            "residual_l2": self.residual_l2,
            "leak_alpha": self.leak_alpha,
            "leak_beta": self.leak_beta,
            "residual_by_r": [list(p) for p in self.residual_by_r],
            "alpha": self.alpha_coeffs.to_json(tol),
            "beta": self.beta_coeffs.to_json(tol),
        }
        if self.transfer is not None:
            out["shift_vector"] = list(self.transfer.v)
            out["transferred"] = [{"k": list(k), "re": c.real, "im": c.imag}
                                  for k, c in sorted(self.transfer.transferred.as_dict().items())]
        return out


def coset_representative(k: Point, v: Point) -> Point:
    """Unique point ``k - j*v`` with ``0 <= (k - j*v).v < v.v``."""
    vv = _dot(v, v)
    j = _dot(k, v) // vv
    return (k[0] - j * v[0], k[1] - j * v[1])


def line_sum_transfer(h_coeffs: FourierMap | Mapping[Point, complex], v: Sequence[int],
                      cone: ConeSpec, tol: float = 0.0) -> SingularTransfer:
    """Group the support of ``h_coeffs`` into lines ``a + Z*v`` and sum each line.

    ``transferred`` lists the line sum at every support point outside
    ``C+ u (-C+)``.
    """
    v = (int(v[0]), int(v[1]))
    if v == (0, 0):
        raise ValueError("shift vector must be nonzero")
    entries = h_coeffs.as_dict(tol) if isinstance(h_coeffs, FourierMap) else dict(h_coeffs)
    line_sums: dict[Point, complex] = {}
    for k in sorted(entries):
        key = coset_representative(k, v)
        line_sums[key] = line_sums.get(key, 0j) + complex(entries[k])
    transferred = {k: line_sums[coset_representative(k, v)]
                   for k in sorted(entries) if not cone.in_double_cone(k)}
    transferred = FourierMap.from_dict(transferred) if transferred else FourierMap.zeros(0)
    return SingularTransfer(v=v, transferred=transferred, line_sums=line_sums)


def torus_automorphism_remap(m: FourierMap, U: Sequence[Sequence[int]]) -> FourierMap:
    """Move the coefficient at ``k`` to ``U @ k`` for an integer matrix with ``|det U| = 1``."""
    U = np.asarray(U, dtype=np.int64)
    if U.shape != (2, 2):
        raise ValueError("U must be 2x2")
    det = int(U[0, 0] * U[1, 1] - U[0, 1] * U[1, 0])
    if abs(det) != 1:
        raise NotUnimodular(f"det U = {det}")
    out: dict[Point, complex] = {}
    for (u, v), c in m.as_dict().items():
        key = (int(U[0, 0] * u + U[0, 1] * v), int(U[1, 0] * u + U[1, 1] * v))
        out[key] = c
    return FourierMap.from_dict(out, hermitian=m.hermitian)


def _fft_frequencies(N: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.fft.fftfreq(N, 1.0 / N).astype(np.int64)
    return np.meshgrid(k, k, indexing="ij")


def _coeff_map(C: np.ndarray, hermitian: bool | None = None) -> FourierMap:
    """FFT-ordered full spectrum to a FourierMap of radius N/2 - 1."""
    N = C.shape[0]
    M = N // 2 - 1
    idx = np.arange(-M, M + 1) % N
    return FourierMap(C[np.ix_(idx, idx)], hermitian=hermitian)


def _leak(C: np.ndarray, cone: ConeSpec) -> float:
    K1, K2 = _fft_frequencies(C.shape[0])
    outside = ~cone.contains_array(K1, K2)
    return float(np.sqrt(np.sum(np.abs(C[outside]) ** 2)))


def _distance_to_subtorus(v: Point, N: int) -> np.ndarray:
    T1, T2 = grid_angles(N)
    phase = v[0] * T1 + v[1] * T2
    wrapped = np.abs((phase + np.pi) % (2 * np.pi) - np.pi)
    return wrapped / np.hypot(v[0], v[1])


def cone_factorize(f: GridFunction, cone: ConeSpec, *, r_sequence: Sequence[float] = DEFAULT_R_SEQUENCE,
                   epsilon_pos: float = DEFAULT_EPSILON_POS, support_tol: float = SUPPORT_TOL,
                   allow_singular: bool = True) -> FactorizationResult:
    """Factor a positive grid symbol as ``alpha * conj(alpha)`` with ``spec(alpha)`` in ``cone``.

    Parameters
    ----------
    f : GridFunction
        Strictly positive real samples.
    cone : ConeSpec
        Target half-cone.  A unimodular sub-cone is used for the construction
        when the generators do not form a Z-basis.
    r_sequence : sequence of float
        Polydisc radii for the singular path; the last one is kept.
    support_tol : float
        Log-coefficients with modulus below ``support_tol * max|h|`` are
        ignored when deciding between the exact and the singular path.
    allow_singular : bool
        If False, raise :class:`ConeTooNarrowForExactPath` instead of taking
        the singular path.

    Returns
    -------
    FactorizationResult
        Coefficients of alpha and 1/alpha on the box of radius ``N/2 - 1``
        plus residual and spectral-leak diagnostics.
    """
    N = f.N
    h = pointwise_log(f, epsilon_pos)
    H = sfft.fft2(h.values, norm="forward")
    basis = find_unimodular_subcone(cone)
    K1, K2 = _fft_frequencies(N)
    plus = basis.contains_array(K1, K2)
    minus = basis.contains_array(-K1, -K2)
    scale = max(1.0, float(np.abs(H).max()))
    significant = np.abs(H) > support_tol * scale
    outside = significant & ~(plus | minus)

    if not outside.any():
        G = np.where(plus, 2.0 * H, 0.0)
        G[0, 0] = H[0, 0]
        g = sfft.ifft2(G, norm="forward")
        return _finish(f, g, cone, basis, 1.0, None, ())

    if not allow_singular:
        raise ConeTooNarrowForExactPath(
            f"{int(outside.sum())} log-coefficients lie outside the double cone {cone.e1}, {cone.e2}")
    warnings.warn("log-symbol spectrum leaves the double cone; using the singular transfer",
                  RuntimeWarning, stacklevel=2)
    support = [(int(a), int(b)) for a, b in zip(K1[significant], K2[significant])]
    v = shift_vector(basis, support)
    entries = {k: complex(H[k[0] % N, k[1] % N]) for k in support}
    transfer = line_sum_transfer(entries, v, basis)

    T1, T2 = grid_angles(N)
    keep = _distance_to_subtorus(v, N) >= 2 * np.pi / N
    vs, vt = basis.coords(v)
    chi_v = np.exp(1j * (v[0] * T1 + v[1] * T2))
    in_cone = [(k, c) for k, c in entries.items() if k != (0, 0) and basis.contains(k)]
    residuals = []
    g = None
    for r in r_sequence:
        g = np.full((N, N), entries.get((0, 0), 0j), dtype=np.complex128)
        for (u, w), c in in_cone:
            s, t = basis.coords((u, w))
            g += 2.0 * c * r ** (s + t) * np.exp(1j * (u * T1 + w * T2))
        z = r ** (vs + vt) * chi_v
        geom = z / (1.0 - z)
        for (u, w), sig in transfer.transferred.as_dict().items():
            s, t = basis.coords((u, w))
            g -= 2.0 * sig * r ** (s + t) * np.exp(1j * (u * T1 + w * T2)) * geom
        alpha = np.exp(0.5 * g)
        err = np.abs(alpha) ** 2 - f.values
        rms = float(np.sqrt(np.mean(err[keep] ** 2))) if keep.any() else float("nan")
        residuals.append((float(r), rms))
    return _finish(f, g, cone, basis, float(r_sequence[-1]), transfer, tuple(residuals))


def _finish(f: GridFunction, g: np.ndarray, cone: ConeSpec, basis: ConeSpec, radius_r: float,
            transfer: SingularTransfer | None, residual_by_r) -> FactorizationResult:
    alpha = np.exp(0.5 * g)
    A = sfft.fft2(alpha, norm="forward")
    B = sfft.fft2(np.exp(-0.5 * g), norm="forward")
    err = np.abs(alpha) ** 2 - f.values
    if transfer is None:
        residual_l2 = float(np.sqrt(np.mean(err ** 2)))
        leaks = (_leak(A, cone), _leak(B, cone))
    else:
        # alpha_r is huge next to the subtorus, so grid leaks carry no information
        residual_l2 = residual_by_r[-1][1]
        leaks = (float("nan"), float("nan"))
    return FactorizationResult(
        alpha_coeffs=_coeff_map(A, hermitian=False),
        beta_coeffs=_coeff_map(B, hermitian=False),
        cone=cone, cone_basis=basis,
        residual_sup=float(np.abs(err).max()),
        residual_l2=residual_l2,
        leak_alpha=leaks[0], leak_beta=leaks[1],
        radius_r=radius_r, grid_N=f.N, transfer=transfer, residual_by_r=residual_by_r)


def verify_factorization(f: GridFunction, fact: FactorizationResult) -> dict:
    """Recompute residuals and spectral leaks from the stored coefficients."""
    N = f.N
    a = synthesize(fact.alpha_coeffs, N).values
    b = synthesize(fact.beta_coeffs, N).values
    err = np.abs(a) ** 2 - f.values

    def leak(m: FourierMap) -> float:
        U, V = np.meshgrid(np.arange(-m.radius, m.radius + 1), np.arange(-m.radius, m.radius + 1),
                           indexing="ij")
        out = ~fact.cone.contains_array(U, V)
        return float(np.sqrt(np.sum(np.abs(m.array[out]) ** 2)))

    return {
        "residual_sup": float(np.abs(err).max()),
        "residual_l2": float(np.sqrt(np.mean(err ** 2))),
        "leak_alpha": leak(fact.alpha_coeffs),
        "leak_beta": leak(fact.beta_coeffs),
        "inverse_residual_sup": float(np.abs(a * b - 1.0).max()),
    }


@dataclass(frozen=True)
class EdgeAssignment:
    """Factor label per side (1-based order) and the cyclic runs of equal labels."""

    labels: tuple[str, ...]
    runs: tuple[tuple[int, ...], ...]
    run_labels: tuple[str, ...]

    @property
    def p(self) -> int:
        return len(self.runs)


def assign_factors(normals: Sequence[Sequence[int]], cone: ConeSpec,
                   vertex: tuple[int, int] | None = None) -> EdgeAssignment:
    """Label side ``i`` with ``alpha`` when the cone lies in ``<nu_i, x> <= 0``, else ``alpha_bar``.

    If ``vertex`` (a pair of adjacent side indices) is given, the cone must lie
    inside that vertex cone.
    """
    normals = [check_primitive(n) for n in normals]
    m = len(normals)
    gens = (cone.e1, cone.e2)
    if vertex is not None:
        for i in vertex:
            if any(_dot(normals[i - 1], e) > 0 for e in gens):
                raise ConeNotInVertexCone(f"cone {gens} leaves the half-plane of side {i}")
    labels = tuple("alpha" if all(_dot(n, e) <= 0 for e in gens) else "alpha_bar" for n in normals)
    # cyclic runs of equal labels, starting after a label change
    start = next((i for i in range(m) if labels[i] != labels[i - 1]), 0)
    runs: list[list[int]] = []
    for step in range(m):
        i = (start + step) % m
        if runs and labels[i] == labels[runs[-1][-1] - 1]:
            runs[-1].append(i + 1)
        else:
            runs.append([i + 1])
    return EdgeAssignment(labels, tuple(tuple(r) for r in runs),
                          tuple(labels[r[0] - 1] for r in runs))


def assign_edge_factors(t: TriangleInstance, cone: ConeSpec, fact: FactorizationResult | None = None,
                        vertex: str = "O") -> EdgeAssignment:
    """Factor labels for the three sides of a triangle with respect to ``cone``."""
    return assign_factors(t.normals, cone, t.vertex_sides[vertex])
