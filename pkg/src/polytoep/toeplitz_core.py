"""Dense truncated Toeplitz matrices on the lattice points of a triangle."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .errors import DimensionMismatch, NotPositiveDefinite
from .lattice_geometry import TriangleInstance, lattice_point_array
from .symbol import FourierMap

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class OperatorMatrix:
    """Compression of a Toeplitz operator to a finite point set.

    ``data[i, j] = fhat(index_map[j] - index_map[i])``.  ``data`` is real
    when every coefficient is real, complex otherwise; both arrays are
    read-only.
    """

    index_map: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.index_map.setflags(write=False)
        self.data.setflags(write=False)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def hermitian_defect(self) -> float:
        return float(np.abs(self.data - self.data.conj().T).max(initial=0.0))

    def dump(self, path: str | Path) -> tuple[Path, Path]:
        """Write ``<path>.bin`` (row-major little-endian complex128) and ``<path>.json``."""
        path = Path(path)
        bin_path, json_path = path.with_suffix(".bin"), path.with_suffix(".json")
        np.ascontiguousarray(self.data, dtype="<c16").tofile(bin_path)
        json_path.write_text(json.dumps({"n": self.n, "dtype": "complex128", "order": "row-major",
                                         "endianness": "little",
                                         "index_map": self.index_map.tolist()}))
        return bin_path, json_path

    @classmethod
    def load(cls, path: str | Path) -> "OperatorMatrix":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        n = meta["n"]
        data = np.fromfile(path.with_suffix(".bin"), dtype="<c16").reshape(n, n)
        return cls(np.asarray(meta["index_map"], dtype=np.int64).reshape(n, 2), data)


def assemble_points(f_coeffs: FourierMap, points: np.ndarray) -> OperatorMatrix:
    """Toeplitz compression to an arbitrary point array of shape (n, 2)."""
    points = np.ascontiguousarray(points, dtype=np.int64).reshape(-1, 2)
    span = int(np.ptp(points, axis=0).max()) if len(points) else 0
    m = f_coeffs.padded(max(span, f_coeffs.radius))
    kernel = m.array[::-1, ::-1]
    if not np.any(kernel.imag):
        kernel = kernel.real
    data = _kernels.toeplitz_gather(np.ascontiguousarray(kernel), m.radius, points, points)
    return OperatorMatrix(points.copy(), data)


def assemble_toeplitz(f_coeffs: FourierMap, t: TriangleInstance) -> OperatorMatrix:
    """Dense ``T(f)`` on the lattice points of ``t`` in lexicographic order."""
    return assemble_points(f_coeffs, lattice_point_array(t))


def _cholesky(m: OperatorMatrix) -> np.ndarray:
    try:
        return sla.cholesky(m.data, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def cholesky_logdet(m: OperatorMatrix) -> float:
    """``log det`` as twice the sum of log-diagonals of the Cholesky factor."""
    if m.n == 0:
        return 0.0
    L = _cholesky(m)
    return float(2.0 * np.sum(np.log(np.diagonal(L).real)))


def trace_of_inverse(m: OperatorMatrix) -> float:
    """``tr(M^{-1}) = ||L^{-1}||_F^2`` for the Cholesky factor ``L``."""
    if m.n == 0:
        return 0.0
    L = _cholesky(m)
    Linv = sla.solve_triangular(L, np.eye(m.n, dtype=L.dtype), lower=True, check_finite=False)
    return float(np.sum(np.abs(Linv) ** 2))


def inverse_diagonal(m: OperatorMatrix) -> np.ndarray:
    """Diagonal of ``M^{-1}`` (real), one entry per lattice point."""
    L = _cholesky(m)
    Linv = sla.solve_triangular(L, np.eye(m.n, dtype=L.dtype), lower=True, check_finite=False)
    return np.sum(np.abs(Linv) ** 2, axis=0)


def apply_operator(m: OperatorMatrix, x: np.ndarray) -> np.ndarray:
    """Dense matrix-vector (or matrix-matrix) product."""
    x = np.asarray(x)
    if x.shape[0] != m.n:
        raise DimensionMismatch(f"vector of length {x.shape[0]} for operator of size {m.n}")
    return m.data @ x
