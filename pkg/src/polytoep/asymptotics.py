"""Trace and determinant coefficients, their predictors and the exact identities behind them.

Coefficients are weighted spectral sums over the full FFT grid:

* ``c1 = sum |u| * L(u, v) * conj(R(u, v))`` with ``R = (1/f)^`` and ``L`` the
  coefficients of ``log(1/f)`` (``sign_convention="log_reciprocal"``) or of
  ``log f`` (``"log_symbol"``, which flips the sign); ``c2`` uses ``|v|``;
* ``mu1 = -1/2 sum |u| |(log f)^(u, v)|^2`` and ``mu2`` likewise with ``|v|``;
* the first moments ``sum u |beta|^2`` and ``sum v |beta|^2`` of the
  coefficients of ``1/alpha`` over the half-cone.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import mpmath
import numpy as np

from .errors import NonNegligibleImaginaryPart, SymbolNotContraction
from .factorization import FactorizationResult, cone_factorize
from .lattice_geometry import ConeSpec, TriangleInstance, build_triangle, lattice_point_array
from .symbol import FourierMap, GridFunction, full_spectrum, pointwise_log, pointwise_reciprocal, synthesize
from .toeplitz_core import OperatorMatrix, assemble_points, cholesky_logdet, trace_of_inverse

IMAG_TOL = 1e-10
SIGN_CONVENTIONS = ("log_reciprocal", "log_symbol")


def _weights(shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """``|u|`` and ``|v|`` for an FFT-ordered or a centered coefficient array."""
    n = shape[0]
    k = np.abs(np.fft.fftfreq(n, 1.0 / n))
    U, V = np.meshgrid(k, k, indexing="ij")
    return U, V


def _centered_weights(radius: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.abs(np.arange(-radius, radius + 1, dtype=float))
    return np.meshgrid(k, k, indexing="ij")


def _as_array(m: FourierMap | np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(m, FourierMap):
        U, V = _centered_weights(m.radius)
        return m.array, U, V
    U, V = _weights(m.shape)
    return m, U, V


def _real(z: complex, what: str) -> float:
    scale = max(1.0, abs(z))
    if abs(z.imag) > IMAG_TOL * scale:
        raise NonNegligibleImaginaryPart(f"{what} has imaginary part {z.imag:.3g}")
    return float(z.real)


def trace_coefficients(f_coeffs: FourierMap | None, recip_coeffs: FourierMap | np.ndarray,
                       log_coeffs: FourierMap | np.ndarray,
                       sign_convention: str = "log_reciprocal") -> tuple[float, float]:
    """Weighted sums ``(c1, c2)`` of ``log`` against ``1/f`` coefficients.

    Parameters
    ----------
    f_coeffs : FourierMap or None
        Only checked for hermitian symmetry when given.
    recip_coeffs, log_coeffs : FourierMap or ndarray
        Coefficients of ``1/f`` and of ``log f`` on the same index layout
        (centered FourierMaps of equal radius, or FFT-ordered full spectra).
    sign_convention : {"log_reciprocal", "log_symbol"}
        Pair ``1/f`` with ``log(1/f)`` (default) or with ``log f``.
    """
    if sign_convention not in SIGN_CONVENTIONS:
        raise ValueError(f"sign_convention must be one of {SIGN_CONVENTIONS}")
    if f_coeffs is not None and f_coeffs.hermitian_defect() > 1e-12:
        raise ValueError("symbol coefficients are not hermitian")
    R, U, V = _as_array(recip_coeffs)
    L, _, _ = _as_array(log_coeffs)
    if R.shape != L.shape:
        raise ValueError("coefficient arrays must share one layout")
    sign = -1.0 if sign_convention == "log_reciprocal" else 1.0
    prod = sign * L * np.conj(R)
    return (_real(complex(np.sum(U * prod)), "c1"), _real(complex(np.sum(V * prod)), "c2"))


def det_coefficients(log_coeffs: FourierMap | np.ndarray) -> tuple[float, float]:
    """``(mu1, mu2) = -1/2 (sum |u| |L|^2, sum |v| |L|^2)``."""
    L, U, V = _as_array(log_coeffs)
    p = np.abs(L) ** 2
    return (-0.5 * float(np.sum(U * p)), -0.5 * float(np.sum(V * p)))


def beta_moments(beta_coeffs: FourierMap, cone: ConeSpec | None = None) -> tuple[float, float]:
    """``(sum u |beta|^2, sum v |beta|^2)`` over the half-cone (the whole map if ``cone`` is None)."""
    r = beta_coeffs.radius
    k = np.arange(-r, r + 1, dtype=np.int64)
    U, V = np.meshgrid(k, k, indexing="ij")
    p = np.abs(beta_coeffs.array) ** 2
    if cone is not None:
        p = p * cone.contains_array(U, V)
    return float(np.sum(U * p)), float(np.sum(V * p))


@dataclass(frozen=True)
class AsymptoticCoefficients:
    c1: float
    c2: float
    mu1: float
    mu2: float
    mean_recip: float
    mean_log: float
    beta_moment_u: float
    beta_moment_v: float

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_grid(cls, f: GridFunction, fact: FactorizationResult | None = None,
                  cone: ConeSpec | None = None) -> "AsymptoticCoefficients":
        """Compute every coefficient from samples of ``f``.

        The beta moments need a factorization; pass ``fact`` or a ``cone`` to
        factor against.  Without either they are reported as NaN.
        """
        R = full_spectrum(pointwise_reciprocal(f))
        L = full_spectrum(pointwise_log(f))
        c1, c2 = trace_coefficients(None, R, L)
        mu1, mu2 = det_coefficients(L)
        if fact is None and cone is not None:
            fact = cone_factorize(f, cone, allow_singular=False)
        if fact is not None:
            bu, bv = beta_moments(fact.beta_coeffs, fact.cone)
        else:
            bu = bv = float("nan")
        return cls(c1=c1, c2=c2, mu1=mu1, mu2=mu2, mean_recip=_real(complex(R[0, 0]), "mean of 1/f"),
                   mean_log=_real(complex(L[0, 0]), "mean of log f"), beta_moment_u=bu, beta_moment_v=bv)


def beta_moment_check(fact: FactorizationResult, recip_coeffs: FourierMap | np.ndarray,
                      log_recip_coeffs: FourierMap | np.ndarray) -> dict:
    """Compare the beta first moments with half the weighted spectral sums.

    ``log_recip_coeffs`` are the coefficients of ``log(1/f)``.
    """
    lhs_u, lhs_v = beta_moments(fact.beta_coeffs, fact.cone)
    c1, c2 = trace_coefficients(None, recip_coeffs, log_recip_coeffs, sign_convention="log_symbol")
    rhs_u, rhs_v = 0.5 * c1, 0.5 * c2
    return {"lhs_u": lhs_u, "rhs_u": rhs_u, "gap_u": abs(lhs_u - rhs_u),
            "lhs_v": lhs_v, "rhs_v": rhs_v, "gap_v": abs(lhs_v - rhs_v)}


def _n_points(t: TriangleInstance, lam: int | None) -> int:
    if lam is None or lam == t.lam:
        return t.n_points
    return build_triangle(t.nu1, t.a, lam).n_points


def predict_trace(coeffs: AsymptoticCoefficients, t: TriangleInstance, lam: int | None = None,
                  form: str = "moment") -> float:
    """Two-term prediction of ``tr T(f)^{-1}`` on the triangle at scale ``lam``.

    ``form="moment"`` subtracts ``2 (S1(lam) m_u + S2(lam) m_v)`` (the
    beta-moment form); ``form="displayed"`` adds ``c1 S1(lam) + c2 S2(lam)``.
    The dense trace agrees with the moment form.
    """
    lam = t.lam if lam is None else lam
    base = _n_points(t, lam) * coeffs.mean_recip
    if form == "moment":
        return base - 2.0 * (t.S1_at(lam) * coeffs.beta_moment_u + t.S2_at(lam) * coeffs.beta_moment_v)
    if form == "displayed":
        return base + coeffs.c1 * t.S1_at(lam) + coeffs.c2 * t.S2_at(lam)
    raise ValueError(f"unknown form {form!r}")


def predict_logdet(coeffs: AsymptoticCoefficients, t: TriangleInstance, lam: int | None = None) -> float:
    """``|Lambda| * mean(log f) - lam * (S1 mu1 + S2 mu2)``."""
    lam = t.lam if lam is None else lam
    return _n_points(t, lam) * coeffs.mean_log - (t.S1_at(lam) * coeffs.mu1 + t.S2_at(lam) * coeffs.mu2)


# --- exact identities -------------------------------------------------------

def gauss_legendre_01(n: int, dps: int | None = None):
    """Gauss-Legendre nodes and weights on (0, 1).

    With ``dps`` the numpy nodes are polished by Newton steps in mpmath at
    that many decimal digits and returned as lists of ``mpf``.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    if dps is None:
        return 0.5 * (x + 1.0), 0.5 * w
    with mpmath.workdps(dps + 10):
        xs, ws = [], []
        for x0 in x:
            xm = mpmath.mpf(float(x0))
            for _ in range(6):
                p, dp = _legendre_and_derivative(n, xm)
                xm -= p / dp
            _, dp = _legendre_and_derivative(n, xm)
            xs.append((xm + 1) / 2)
            ws.append(1 / ((1 - xm ** 2) * dp ** 2))
    return xs, ws


def _legendre_and_derivative(n: int, x):
    p0, p1 = mpmath.mpf(1), x
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    return p1, n * (x * p1 - p0) / (x ** 2 - 1)


def _grid_mean(h: FourierMap, fn, N: int) -> float:
    vals = synthesize(h, N).values
    return float(np.mean(fn(vals)).real)


def det_integral_identity_check(h_coeffs: FourierMap, t: TriangleInstance, nodes: int = 32,
                                precision: str = "double", grid_N: int = 256, dps: int = 50,
                                mp_grid: int = 64) -> dict:
    """Compare ``log det T(1-h) - tr T(log(1-h))`` with the quadrature in ``t``.

    The right side is
    ``-int_0^1 (1/s) tr(T(1 - s h)^{-1} - T(1/(1 - s h))) ds``, evaluated with
    Gauss-Legendre nodes on (0, 1).  ``T(1 - s h) = I - s T(h)`` exactly and
    ``tr T(g) = |Lambda| * mean(g)``.

    ``precision="mp"`` repeats the computation in mpmath at ``dps`` digits
    (torus means by the trapezoid rule on ``mp_grid**2`` nodes), so the
    quadrature error can be followed below double-precision roundoff.
    """
    if h_coeffs.hermitian_defect() > 1e-14:
        raise ValueError("h must be real (hermitian coefficients)")
    hmax = float(np.abs(synthesize(h_coeffs, grid_N).values).max())
    if hmax >= 1.0:
        raise SymbolNotContraction(f"sup|h| = {hmax:.6g} must be below 1")
    pts = lattice_point_array(t)
    n = len(pts)
    Th = assemble_points(h_coeffs, pts).data
    if precision == "double":
        lhs = (cholesky_logdet(OperatorMatrix(pts, np.eye(n) - Th))
               - n * _grid_mean(h_coeffs, lambda x: np.log(1.0 - x), grid_N))
        s, w = gauss_legendre_01(nodes)
        rhs = 0.0
        for sk, wk in zip(s, w):
            tr_inv = float(np.trace(np.linalg.inv(np.eye(n) - sk * Th)).real)
            tr_t = n * _grid_mean(h_coeffs, lambda x: 1.0 / (1.0 - sk * x), grid_N)
            rhs -= wk * (tr_inv - tr_t) / sk
        return {"lhs": float(lhs), "rhs": float(rhs), "error": float(abs(lhs - rhs)), "nodes": nodes,
                "precision": precision}
    if precision != "mp":
        raise ValueError(f"unknown precision {precision!r}")
    with mpmath.workdps(dps):
        Tm = mpmath.matrix([[mpmath.mpc(complex(Th[i, j])) for j in range(n)] for i in range(n)])
        theta = [2 * mpmath.pi * k / mp_grid for k in range(mp_grid)]
        coeffs = h_coeffs.as_dict()
        hv = []
        for a in theta:
            for b in theta:
                hv.append(mpmath.re(sum(mpmath.mpc(c) * mpmath.expj(u * a + v * b)
                                        for (u, v), c in coeffs.items())))
        count = len(hv)
        I = mpmath.eye(n)
        lhs = mpmath.log(mpmath.re(mpmath.det(I - Tm))) - n * mpmath.fsum(mpmath.log(1 - x) for x in hv) / count
        s, w = gauss_legendre_01(nodes, dps)
        rhs = mpmath.mpf(0)
        for sk, wk in zip(s, w):
            inv = (I - sk * Tm) ** -1
            tr_inv = mpmath.re(mpmath.fsum(inv[i, i] for i in range(n)))
            tr_t = n * mpmath.fsum(1 / (1 - sk * x) for x in hv) / count
            rhs -= wk * (tr_inv - tr_t) / sk
        err = abs(lhs - rhs)
        return {"lhs": float(lhs), "rhs": float(rhs), "error": float(err), "error_mp": err,
                "nodes": nodes, "precision": precision}


def homotopy_check(f: GridFunction, S1: float, S2: float, nodes: int = 32) -> dict:
    """Compare ``S1 mu1 + S2 mu2`` with ``int_0^1 (S1 c1(f_s) + S2 c2(f_s)) / s ds``.

    ``f_s = 1 - s (1 - f)`` joins 1 to ``f`` through positive symbols, and
    ``c_i`` are taken with ``sign_convention="log_symbol"``.
    """
    L = full_spectrum(pointwise_log(f))
    mu1, mu2 = det_coefficients(L)
    target = S1 * mu1 + S2 * mu2
    h = 1.0 - f.values
    s, w = gauss_legendre_01(nodes)
    total = 0.0
    for sk, wk in zip(s, w):
        fs = GridFunction(1.0 - sk * h)
        R = full_spectrum(pointwise_reciprocal(fs))
        Ls = full_spectrum(pointwise_log(fs))
        c1, c2 = trace_coefficients(None, R, Ls, sign_convention="log_symbol")
        total += wk * (S1 * c1 + S2 * c2) / sk
    return {"lhs": float(target), "rhs": float(total), "error": float(abs(target - total)), "nodes": nodes}


def dense_trace_and_logdet(f_coeffs: FourierMap, t: TriangleInstance) -> tuple[float, float]:
    """Exact ``tr T(f)^{-1}`` and ``log det T(f)`` from the dense matrix."""
    m = assemble_points(f_coeffs, lattice_point_array(t))
    return trace_of_inverse(m), cholesky_logdet(m)


def running_symbol_constants() -> dict:
    """Closed forms for ``f = |1 - chi_1 / 2|^2``: the values the sweeps aim at."""
    return {"mean_recip": 4.0 / 3.0, "c1": 8.0 / 9.0, "beta_moment_u": 4.0 / 9.0,
            "mu1": -math.log(4.0 / 3.0)}
