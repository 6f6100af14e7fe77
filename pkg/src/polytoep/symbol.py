"""Fourier representation of symbols on the 2-torus.

A :class:`FourierMap` stores coefficients on a centered square box
``[-R, R]^2``; entries outside the box are exact zeros.  A
:class:`GridFunction` holds samples at ``theta_j = 2*pi*j/N`` on an ``N x N``
grid.  Analysis is normalized so that the (0, 0) coefficient is the mean
with respect to the normalized Haar measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from .errors import AliasedGrid, NonPositiveSymbol, NonRealMean
from .lattice_geometry import Point, TriangleInstance

#: Value of the constant K in I(m, n) = K * sqrt(m^2 + n^2), confirmed by
#: :func:`norm_integral` (see tests).
NORM_CONSTANT = math.pi

DEFAULT_EPSILON_POS = 1e-10


class FourierMap:
    """Finitely supported map Z^2 -> C stored on a centered box.

    Parameters
    ----------
    array : ndarray, shape (2R+1, 2R+1)
        ``array[u + R, v + R]`` is the coefficient of ``chi1^u chi2^v``.
    hermitian : bool, optional
        Whether the map represents a real function.  Detected from the data
        (tolerance 1e-14 relative) when omitted.
    """

    __slots__ = ("array", "hermitian")

    def __init__(self, array: np.ndarray, hermitian: bool | None = None):
        array = np.asarray(array)
        if array.ndim != 2 or array.shape[0] != array.shape[1] or array.shape[0] % 2 != 1:
            raise ValueError(f"expected an odd square array, got shape {array.shape}")
        self.array = array.astype(np.complex128, copy=False)
        if hermitian is None:
            hermitian = self.hermitian_defect() <= 1e-14 * max(1.0, float(np.abs(self.array).max(initial=0.0)))
        self.hermitian = bool(hermitian)

    @property
    def radius(self) -> int:
        return (self.array.shape[0] - 1) // 2

    @classmethod
    def zeros(cls, radius: int, hermitian: bool = True) -> "FourierMap":
        n = 2 * radius + 1
        return cls(np.zeros((n, n), dtype=np.complex128), hermitian=hermitian)

    @classmethod
    def from_dict(cls, entries: Mapping[Point, complex], hermitian: bool | None = None,
                  radius: int | None = None) -> "FourierMap":
        r = max((max(abs(u), abs(v)) for u, v in entries), default=0)
        if radius is not None:
            if radius < r:
                raise ValueError(f"radius {radius} too small for support of radius {r}")
            r = radius
        out = np.zeros((2 * r + 1, 2 * r + 1), dtype=np.complex128)
        for (u, v), c in entries.items():
            out[int(u) + r, int(v) + r] += c
        return cls(out, hermitian=hermitian)

    @classmethod
    def constant(cls, c: float) -> "FourierMap":
        return cls.from_dict({(0, 0): c}, hermitian=True)

    def __getitem__(self, k: Point) -> complex:
        r = self.radius
        u, v = int(k[0]), int(k[1])
        if abs(u) > r or abs(v) > r:
            return 0j
        return complex(self.array[u + r, v + r])

    def as_dict(self, tol: float = 0.0) -> dict[Point, complex]:
        r = self.radius
        idx = np.argwhere(np.abs(self.array) > tol)
        return {(int(i) - r, int(j) - r): complex(self.array[i, j]) for i, j in idx}

    def support(self, tol: float = 0.0) -> list[Point]:
        return sorted(self.as_dict(tol))

    def max_frequency(self, tol: float = 0.0) -> int:
        sup = self.support(tol)
        return max((max(abs(u), abs(v)) for u, v in sup), default=0)

    def padded(self, radius: int) -> "FourierMap":
        """Same coefficients on a box of (at least) ``radius``; never truncates."""
        r = self.radius
        if radius <= r:
            return self
        out = np.zeros((2 * radius + 1, 2 * radius + 1), dtype=np.complex128)
        out[radius - r:radius + r + 1, radius - r:radius + r + 1] = self.array
        return FourierMap(out, hermitian=self.hermitian)

    def cropped(self, radius: int) -> "FourierMap":
        """Restriction to ``[-radius, radius]^2``."""
        r = self.radius
        if radius >= r:
            return self
        return FourierMap(self.array[r - radius:r + radius + 1, r - radius:r + radius + 1].copy(),
                          hermitian=self.hermitian)

    def hermitian_defect(self) -> float:
        """max |c(-k) - conj(c(k))|."""
        flipped = self.array[::-1, ::-1]
        return float(np.abs(flipped - np.conj(self.array)).max(initial=0.0))

    def scaled(self, s: complex) -> "FourierMap":
        herm = self.hermitian and complex(s).imag == 0
        return FourierMap(self.array * s, hermitian=herm)

    def reflected_conjugate(self) -> "FourierMap":
        """Coefficients of the complex conjugate function: c(k) -> conj(c(-k))."""
        return FourierMap(np.conj(self.array[::-1, ::-1]), hermitian=self.hermitian)

    def mass(self) -> float:
        """Sum of squared moduli (squared L2 norm of the function)."""
        return float(np.sum(np.abs(self.array) ** 2))

    def to_json(self, tol: float = 0.0) -> list[dict]:
        """List of ``{"k": [u, v], "re": ..., "im": ...}`` in lexicographic order."""
        return [{"k": [u, v], "re": c.real, "im": c.imag}
                for (u, v), c in sorted(self.as_dict(tol).items())]

    @classmethod
    def from_json(cls, items: Iterable[Mapping], hermitian: bool | None = None) -> "FourierMap":
        entries: dict[Point, complex] = {}
        for it in items:
            u, v = it["k"]
            entries[(int(u), int(v))] = entries.get((int(u), int(v)), 0j) + complex(
                float(it.get("re", 0.0)), float(it.get("im", 0.0)))
        return cls.from_dict(entries, hermitian=hermitian)

    def __repr__(self) -> str:
        nz = int(np.count_nonzero(self.array))
        return f"FourierMap(radius={self.radius}, nonzero={nz}, hermitian={self.hermitian})"


@dataclass(frozen=True)
class GridFunction:
    """Samples of a function on the ``N x N`` torus grid (axis 0 is theta1)."""

    values: np.ndarray

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)


def grid_angles(N: int) -> tuple[np.ndarray, np.ndarray]:
    th = 2.0 * np.pi * np.arange(N) / N
    return np.meshgrid(th, th, indexing="ij")


def synthesize(coeffs: FourierMap, N: int) -> GridFunction:
    """Evaluate a trigonometric polynomial on the grid via inverse FFT.

    Raises
    ------
    AliasedGrid
        If ``N <= 2 * max_frequency``.
    """
    kmax = coeffs.max_frequency()
    if N <= 2 * kmax:
        raise AliasedGrid(f"grid N={N} cannot represent frequency {kmax}")
    r = coeffs.radius
    rr = min(r, kmax)
    sub = coeffs.array[r - rr:r + rr + 1, r - rr:r + rr + 1]
    G = np.zeros((N, N), dtype=np.complex128)
    idx = np.arange(-rr, rr + 1) % N
    G[np.ix_(idx, idx)] = sub
    vals = sfft.ifft2(G, norm="forward")
    if coeffs.hermitian:
        vals = vals.real.copy()
    return GridFunction(vals)


def analyze(g: GridFunction, M: int) -> FourierMap:
    """Fourier coefficients of grid samples on the box ``[-M, M]^2``.

    The (0, 0) entry equals the grid mean of the samples.
    """
    N = g.N
    if not 0 <= M < N / 2:
        raise ValueError(f"box radius {M} must satisfy 0 <= M < N/2 = {N / 2}")
    C = sfft.fft2(g.values, norm="forward")
    idx = np.arange(-M, M + 1) % N
    return FourierMap(C[np.ix_(idx, idx)], hermitian=True if g.is_real else None)


def full_spectrum(g: GridFunction) -> np.ndarray:
    """All N^2 coefficients in FFT order (index j <-> frequency j mod N)."""
    return sfft.fft2(g.values, norm="forward")


def _check_positive(g: GridFunction, epsilon_pos: float) -> None:
    if g.is_real:
        lo = float(np.min(g.values))
    else:
        lo = float(np.min(np.abs(g.values)))
    if not lo > epsilon_pos:
        raise NonPositiveSymbol(f"grid minimum {lo:.3g} is not above epsilon_pos={epsilon_pos:.3g}")


def pointwise_log(g: GridFunction, epsilon_pos: float = DEFAULT_EPSILON_POS) -> GridFunction:
    """Elementwise natural log of a strictly positive real grid."""
    if not g.is_real:
        raise NonPositiveSymbol("log is only defined here for real symbols")
    _check_positive(g, epsilon_pos)
    return GridFunction(np.log(g.values))


def pointwise_reciprocal(g: GridFunction, epsilon_pos: float = DEFAULT_EPSILON_POS) -> GridFunction:
    """Elementwise reciprocal; real grids must be positive, complex ones zero-free."""
    _check_positive(g, epsilon_pos)
    return GridFunction(1.0 / g.values)


def mean(m: FourierMap) -> float:
    """The (0, 0) coefficient as a real number."""
    c = m[(0, 0)]
    if abs(c.imag) > 1e-12:
        raise NonRealMean(f"mean has imaginary part {c.imag:.3g}")
    return float(c.real)


def _weights(radius: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(-radius, radius + 1)
    return np.meshgrid(k, k, indexing="ij")


def k_norm(m: FourierMap, t: TriangleInstance) -> float:
    """Perimeter-weighted Sobolev-type norm ``(sum (S1|u| + S2|v|) |c|^2)^(1/2)``.

    The weights are those of the triangle at scale one.
    """
    if not m.hermitian:
        raise ValueError("k_norm expects the coefficients of a real function")
    U, V = _weights(m.radius)
    w = t.S1 * np.abs(U) + t.S2 * np.abs(V)
    return math.sqrt(float(np.sum(w * np.abs(m.array) ** 2)))


def n_norm(m: FourierMap) -> float:
    """``(K * sum sqrt(u^2 + v^2) |c|^2)^(1/2)`` with ``K = pi``."""
    if not m.hermitian:
        raise ValueError("n_norm expects the coefficients of a real function")
    U, V = _weights(m.radius)
    w = NORM_CONSTANT * np.hypot(U, V)
    return math.sqrt(float(np.sum(w * np.abs(m.array) ** 2)))


def norm_equivalence_constants(t: TriangleInstance, radius: int) -> tuple[float, float]:
    """Constants ``c1 <= c2`` with ``c1*k_norm <= n_norm <= c2*k_norm`` on the box.

    They are the square roots of the extreme values of
    ``K sqrt(u^2+v^2) / (S1|u| + S2|v|)`` over nonzero frequencies.
    """
    U, V = _weights(radius)
    nz = (U != 0) | (V != 0)
    ratio = NORM_CONSTANT * np.hypot(U[nz], V[nz]) / (t.S1 * np.abs(U[nz]) + t.S2 * np.abs(V[nz]))
    return math.sqrt(float(ratio.min())), math.sqrt(float(ratio.max()))


def _radial_sin2(a: float) -> float:
    """int_0^inf sin^2(a r) / r^2 dr by quadrature (head plus oscillatory tail)."""
    a = abs(a)
    if a == 0.0:
        return 0.0
    R = 20.0 / a
    head, _ = integrate.quad(lambda r: (math.sin(a * r) / r) ** 2 if r > 0 else a * a,
                             0.0, R, limit=400, epsabs=1e-13, epsrel=1e-12)
    # tail: (1 - cos(2ar)) / (2 r^2) on [R, inf)
    osc, _ = integrate.quad(lambda r: 1.0 / (2.0 * r * r), R, np.inf, weight="cos", wvar=2.0 * a)
    return head + 1.0 / (2.0 * R) - osc


def norm_integral(m: float, n: float) -> float:
    """``I(m, n) = int_{R^2} sin^2((m x1 + n x2)/2) / |x|^3 dx`` by nested polar quadrature."""
    if m == 0 and n == 0:
        return 0.0
    phase = math.atan2(n, m)
    # zeros of m cos + n sin split the angular range into smooth pieces
    cuts = sorted({(phase + math.pi / 2) % (2 * math.pi), (phase + 3 * math.pi / 2) % (2 * math.pi)})
    f = lambda th: _radial_sin2(0.5 * (m * math.cos(th) + n * math.sin(th)))
    edges = [0.0, *cuts, 2 * math.pi]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo > 0:
            val, _ = integrate.quad(f, lo, hi, limit=200, epsabs=1e-12, epsrel=1e-12)
            total += val
    return total
