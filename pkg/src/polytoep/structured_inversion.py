"""Inverse of the triangle Toeplitz matrix through the two-factor Hankel system.

For the split ``(g1, g2) = (alpha, conj(alpha))`` the multipliers are
``Phi1 = 1`` and ``Phi2 = alpha / conj(alpha)``.  Everything lives on the
frequency box ``B = [-M, M]^2``:

* ``B1`` is the part of ``B`` strictly outside the sides labelled ``alpha``
  and ``B2`` the part strictly outside the side labelled ``alpha_bar``;
* ``H(1,2) theta2 = P1(Phi2 * theta2)`` and ``H(2,1) theta1 = P2(theta1 / Phi2)``
  where ``P_i`` masks to ``B_i``;
* the column of ``T(f)^{-1}`` at ``q`` is
  ``chi^q / f - theta1 / alpha - theta2 / conj(alpha)`` with ``theta2`` solving
  ``(I - N) theta2 = zeta`` and ``N = H(2,1) H(1,2)``.

Multiplier coefficients are taken from a fine grid on ``[-2M, 2M]^2`` so the
box-to-box convolutions are exact linear convolutions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
from scipy.linalg import lapack

from . import _kernels
from .errors import (BoxTooSmall, ConeNotInVertexCone, PointOutsideTriangle, SingularPathUnsupported,
                     SolverDiverged, TooLarge)
from .factorization import FactorizationResult, assign_edge_factors
from .lattice_geometry import Point, TriangleInstance, lattice_point_array
from .symbol import synthesize
from .toeplitz_core import OperatorMatrix

log = logging.getLogger(__name__)

TOL_SOLVE = 1e-12
#: Tikhonov shifts tried in turn by the direct solver
DIRECT_SHIFTS = (1e-13, 1e-12, 1e-11, 1e-10)
#: Neumann is declared stalled when the residual fails to halve within this many steps
STALL_WINDOW = 50
MAX_DENSE_H = 4000
BOX_MARGIN = 4
#: extra fine-grid points beyond the convolution range when sampling multipliers
GRID_PAD = 200


def default_box_radius(t: TriangleInstance) -> int:
    e = t.extent
    return max(4 * e, e + 32)


@dataclass(frozen=True)
class SpectralBox:
    """Box ``[-M, M]^2`` with the masks of ``B1``, ``B2`` and the triangle points."""

    M: int
    mask1: np.ndarray
    mask2: np.ndarray
    mask_lambda: np.ndarray
    points1: np.ndarray
    points2: np.ndarray
    points_lambda: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (2 * self.M + 1, 2 * self.M + 1)

    def to_box(self, values: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Scatter vectors (last axis indexes ``mask``) into box arrays."""
        out = np.zeros(values.shape[:-1] + self.shape, dtype=values.dtype)
        out[..., mask] = values
        return out

    def basis(self, qs: np.ndarray) -> np.ndarray:
        """Box arrays holding ``chi^q`` for each row of ``qs``."""
        E = np.zeros((len(qs),) + self.shape)
        E[np.arange(len(qs)), qs[:, 0] + self.M, qs[:, 1] + self.M] = 1.0
        return E


class _BoxConvolver:
    """Exact linear convolution of box arrays with kernels of radius 2M, via FFT."""

    def __init__(self, M: int):
        self.M = M
        self.L = sfft.next_fast_len(4 * M + 1)
        self._out = np.arange(2 * M, 4 * M + 1)

    def prepare(self, kernel: np.ndarray) -> np.ndarray:
        G = np.zeros((self.L, self.L), dtype=kernel.dtype)
        n = kernel.shape[0]
        G[:n, :n] = kernel
        return sfft.fft2(G)

    def __call__(self, c: np.ndarray, fk: np.ndarray) -> np.ndarray:
        n = 2 * self.M + 1
        G = np.zeros(c.shape[:-2] + (self.L, self.L), dtype=np.result_type(c, np.complex128))
        G[..., :n, :n] = c
        r = sfft.ifft2(sfft.fft2(G, axes=(-2, -1)) * fk, axes=(-2, -1))
        return r[..., self._out[0]:self._out[-1] + 1, self._out[0]:self._out[-1] + 1]


@dataclass
class HankelSystem:
    """Multiplier kernels, masks and solver settings for one triangle and box."""

    box: SpectralBox
    triangle: TriangleInstance
    kernels: dict[str, np.ndarray]
    real: bool
    solver_mode: str = "neumann"
    tol_solve: float = TOL_SOLVE
    max_iters: int | None = None
    allow_fallback: bool = True
    max_direct_unknowns: int = 20000
    phi_tail_mass: float = 0.0
    labels: tuple[str, ...] = ()
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def M(self) -> int:
        return self.box.M

    @property
    def phi_ratio_coeffs(self) -> np.ndarray:
        """Coefficients of ``conj(alpha)/alpha`` on ``[-2M, 2M]^2``."""
        return self.kernels["phi_inv"]

    @property
    def n1(self) -> int:
        return len(self.box.points1)

    @property
    def n2(self) -> int:
        return len(self.box.points2)

    def _conv(self) -> _BoxConvolver:
        if "conv" not in self._cache:
            conv = _BoxConvolver(self.M)
            self._cache["conv"] = conv
            self._cache["fk"] = {k: conv.prepare(v) for k, v in self.kernels.items()}
        return self._cache["conv"]

    def multiply(self, c: np.ndarray, name: str) -> np.ndarray:
        """Truncated product of box arrays with a multiplier, result on the box."""
        conv = self._conv()
        out = conv(c, self._cache["fk"][name])
        return out.real if self.real else out

    def n_operator(self, theta2_box: np.ndarray) -> np.ndarray:
        """``N theta2 = P2(Phi2^{-1} P1(Phi2 theta2))`` on box arrays."""
        b = self.box
        t = self.multiply(theta2_box, "phi") * b.mask1
        return self.multiply(t, "phi_inv") * b.mask2


def _coeffs_from_grid(values: np.ndarray, R: int) -> np.ndarray:
    Ng = values.shape[0]
    C = sfft.fft2(values, norm="forward")
    idx = np.arange(-R, R + 1) % Ng
    return C[np.ix_(idx, idx)]


def build_system(fact: FactorizationResult, t: TriangleInstance, M: int | None = None, *,
                 solver_mode: str = "neumann", tol_solve: float = TOL_SOLVE,
                 max_iters: int | None = None, allow_fallback: bool = True) -> HankelSystem:
    """Set up the Hankel system for ``t`` on the box ``[-M, M]^2``.

    Parameters
    ----------
    fact : FactorizationResult
        Exact-path factorization (``radius_r == 1``) of the symbol.
    t : TriangleInstance
    M : int, optional
        Box radius; defaults to ``max(4 * extent, extent + 32)``.
    solver_mode : {"neumann", "direct"}
        ``neumann`` iterates and falls back to the direct solver when the
        residual stalls (unless ``allow_fallback`` is False).
    """
    if fact.singular:
        raise SingularPathUnsupported("structured inversion needs an exact-path factorization")
    if solver_mode not in ("neumann", "direct"):
        raise ValueError(f"unknown solver_mode {solver_mode!r}")
    M = default_box_radius(t) if M is None else int(M)
    if M < t.extent + BOX_MARGIN:
        raise BoxTooSmall(f"M={M} must be at least extent + {BOX_MARGIN} = {t.extent + BOX_MARGIN}")
    assign = None
    for vertex in ("O", "A1", "A2"):
        try:
            assign = assign_edge_factors(t, fact.cone, fact, vertex=vertex)
            break
        except ConeNotInVertexCone:
            continue
    if assign is None:
        raise ConeNotInVertexCone(f"cone {fact.cone.e1}, {fact.cone.e2} lies in no vertex cone")

    ks = np.arange(-M, M + 1)
    U, V = np.meshgrid(ks, ks, indexing="ij")
    hs = t.halfspaces
    mask1 = np.zeros(U.shape, dtype=bool)
    mask2 = np.zeros(U.shape, dtype=bool)
    for side, label in enumerate(assign.labels, start=1):
        target = mask1 if label == "alpha" else mask2
        target |= hs.minus_mask(side, U, V)
    pts = lattice_point_array(t)
    mask_l = np.zeros(U.shape, dtype=bool)
    mask_l[pts[:, 0] + M, pts[:, 1] + M] = True
    box = SpectralBox(M, mask1, mask2, mask_l, np.argwhere(mask1) - M, np.argwhere(mask2) - M, pts)

    R = 2 * M
    Ng = sfft.next_fast_len(max(2 * R + GRID_PAD, 2 * fact.alpha_coeffs.radius + 2))
    alpha = synthesize(fact.alpha_coeffs, Ng).values
    abar = np.conj(alpha)
    ratio = alpha / abar
    full = sfft.fft2(ratio, norm="forward")
    phi = _coeffs_from_grid(ratio, R)
    tail = float(np.sqrt(max(np.sum(np.abs(full) ** 2) - np.sum(np.abs(phi) ** 2), 0.0)))
    kernels = {
        "phi": phi,
        # conj(Phi2) = 1/Phi2 on the torus; flipping keeps N exactly self-adjoint
        "phi_inv": np.conj(phi[::-1, ::-1]),
        "inv_alpha": _coeffs_from_grid(1.0 / alpha, R),
        "inv_abar": _coeffs_from_grid(1.0 / abar, R),
        "inv_f": _coeffs_from_grid(1.0 / (alpha * abar).real, R),
    }
    scale = max(float(np.abs(k).max()) for k in kernels.values())
    real = all(float(np.abs(k.imag).max()) <= 1e-14 * scale for k in kernels.values())
    if real:
        kernels = {k: np.ascontiguousarray(v.real) for k, v in kernels.items()}
    return HankelSystem(box=box, triangle=t, kernels=kernels, real=real, solver_mode=solver_mode,
                        tol_solve=tol_solve, max_iters=max_iters, allow_fallback=allow_fallback,
                        phi_tail_mass=tail, labels=assign.labels)


def _exchange_matrix(sys: HankelSystem) -> np.ndarray:
    """Dense ``H(1,2)``: rows ``B1``, columns ``B2``, kernel ``Phi2``."""
    if "C" not in sys._cache:
        b = sys.box
        sys._cache["C"] = _kernels.toeplitz_gather(sys.kernels["phi"], 2 * sys.M, b.points1, b.points2)
    return sys._cache["C"]


def apply_exchange(sys: HankelSystem, i: int, j: int, theta_j: np.ndarray) -> np.ndarray:
    """``H(i,j) theta_j = P_i((Phi_j / Phi_i) theta_j)`` for vectors on ``B_j``."""
    if i not in (1, 2) or j not in (1, 2):
        raise ValueError("group indices must be 1 or 2")
    b = sys.box
    masks = {1: b.mask1, 2: b.mask2}
    if i == j:
        return np.array(theta_j, copy=True)
    name = "phi" if (i, j) == (1, 2) else "phi_inv"
    out = sys.multiply(b.to_box(np.asarray(theta_j), masks[j]), name)
    return out[..., masks[i]]


def assemble_H(sys: HankelSystem, max_unknowns: int = MAX_DENSE_H) -> OperatorMatrix:
    """Dense ``[[I, H(1,2)], [H(2,1), I]]`` over ``B1`` followed by ``B2``."""
    n1, n2 = sys.n1, sys.n2
    if n1 + n2 > max_unknowns:
        raise TooLarge(f"{n1 + n2} unknowns exceed the dense limit {max_unknowns}")
    C = _exchange_matrix(sys)
    dtype = np.float64 if sys.real else np.complex128
    H = np.eye(n1 + n2, dtype=dtype)
    H[:n1, n1:] = C
    H[n1:, :n1] = C.conj().T
    return OperatorMatrix(np.concatenate([sys.box.points1, sys.box.points2]), H)


def gamma_field(sys: HankelSystem, q: Point) -> tuple[np.ndarray, np.ndarray]:
    """``(P1(chi^q / conj(alpha)), P2(chi^q / alpha))`` as vectors on ``B1``, ``B2``."""
    q = (int(q[0]), int(q[1]))
    if not sys.triangle.contains(q):
        raise PointOutsideTriangle(f"{q} is not a lattice point of the triangle")
    g1, g2 = _gamma_boxes(sys, np.array([q]))
    return g1[0][sys.box.mask1], g2[0][sys.box.mask2]


def _gamma_boxes(sys: HankelSystem, qs: np.ndarray):
    E = sys.box.basis(qs)
    return (sys.multiply(E, "inv_abar") * sys.box.mask1, sys.multiply(E, "inv_alpha") * sys.box.mask2)


@dataclass
class SolveInfo:
    mode: str
    iterations: int = 0
    shift: float = 0.0
    residual: float = float("nan")
    fell_back: bool = False


def _residual(sys: HankelSystem, theta2: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    """Per-column ``||(I - N) theta2 - zeta||`` relative to ``max(||zeta||, tiny)``."""
    r = theta2 - sys.n_operator(theta2) - zeta
    num = np.sqrt(np.sum(np.abs(r) ** 2, axis=(-2, -1)))
    den = np.maximum(np.sqrt(np.sum(np.abs(zeta) ** 2, axis=(-2, -1))), 1e-300)
    return num / den


def _neumann(sys: HankelSystem, zeta: np.ndarray) -> tuple[np.ndarray, SolveInfo]:
    max_iters = sys.max_iters or 10 * (2 * sys.M + 1) ** 2
    theta = zeta.copy()
    best = np.inf
    best_at = 0
    for it in range(1, max_iters + 1):
        nxt = zeta + sys.n_operator(theta)
        step = float(np.max(np.sqrt(np.sum(np.abs(nxt - theta) ** 2, axis=(-2, -1)))
                            / np.maximum(np.sqrt(np.sum(np.abs(zeta) ** 2, axis=(-2, -1))), 1e-300)))
        theta = nxt
        if step < sys.tol_solve:
            return theta, SolveInfo("neumann", iterations=it, residual=step)
        if step < 0.5 * best:
            best, best_at = step, it
        elif it - best_at >= STALL_WINDOW:
            return theta, SolveInfo("neumann", iterations=it, residual=step, fell_back=True)
    return theta, SolveInfo("neumann", iterations=max_iters, residual=step, fell_back=True)


def _direct_factor(sys: HankelSystem):
    if "chol" in sys._cache:
        return sys._cache["chol"]
    n2 = sys.n2
    if sys.n1 + n2 > sys.max_direct_unknowns:
        raise TooLarge(f"{sys.n1 + n2} unknowns exceed max_direct_unknowns={sys.max_direct_unknowns}")
    C = _exchange_matrix(sys)
    for shift in DIRECT_SHIFTS:
        # rank-k update on the transposed (Fortran-ordered) view avoids a copy
        if sys.real:
            G = sla.blas.dsyrk(-1.0, C.T, trans=0, lower=1)
        else:
            G = np.conj(sla.blas.zherk(-1.0, C.T, trans=0, lower=1))
        G[np.diag_indices(n2)] += 1.0 + shift
        potrf = lapack.dpotrf if sys.real else lapack.zpotrf
        L, info = potrf(G, lower=1, overwrite_a=1, clean=0)
        if info == 0:
            sys._cache["chol"] = (L, shift)
            return L, shift
        log.info("shifted Cholesky failed at shift %.0e; increasing", shift)
    raise SolverDiverged("I - N is not positive definite even after the largest shift")


def _direct(sys: HankelSystem, zeta: np.ndarray) -> tuple[np.ndarray, SolveInfo]:
    L, shift = _direct_factor(sys)
    m2 = sys.box.mask2
    rhs = zeta[..., m2].reshape(-1, sys.n2).T
    potrs = lapack.dpotrs if sys.real else lapack.zpotrs
    x, info = potrs(L, np.asfortranarray(rhs), lower=1)
    if info != 0:
        raise SolverDiverged(f"potrs failed with info={info}")
    theta = np.zeros_like(zeta)
    theta[..., m2] = x.T.reshape(zeta.shape[:-2] + (sys.n2,))
    return theta, SolveInfo("direct", shift=shift)


def _solve_boxes(sys: HankelSystem, gamma1: np.ndarray, gamma2: np.ndarray):
    """Solve ``H theta = (gamma1, gamma2)`` on box arrays (batched on leading axes)."""
    b = sys.box
    zeta = gamma2 - sys.multiply(gamma1, "phi_inv") * b.mask2
    if sys.solver_mode == "neumann":
        theta2, info = _neumann(sys, zeta)
        if info.fell_back:
            if not sys.allow_fallback:
                raise SolverDiverged(
                    f"Neumann iteration stalled at relative step {info.residual:.2e} "
                    f"after {info.iterations} iterations")
            log.info("Neumann stalled after %d iterations; switching to the direct solver",
                     info.iterations)
            theta2, dinfo = _direct(sys, zeta)
            info = SolveInfo("direct", iterations=info.iterations, shift=dinfo.shift, fell_back=True)
    else:
        theta2, info = _direct(sys, zeta)
    theta1 = gamma1 - sys.multiply(theta2, "phi") * b.mask1
    info.residual = float(np.max(_residual(sys, theta2, zeta)))
    return theta1, theta2, zeta, info


@dataclass(frozen=True)
class TriangleSolution:
    theta1: np.ndarray
    theta2: np.ndarray
    zeta: np.ndarray
    info: SolveInfo


def solve_triangle(sys: HankelSystem, q: Point) -> TriangleSolution:
    """``theta1, theta2`` (vectors on ``B1``, ``B2``) for the column at ``q``."""
    q = (int(q[0]), int(q[1]))
    if not sys.triangle.contains(q):
        raise PointOutsideTriangle(f"{q} is not a lattice point of the triangle")
    g1, g2 = _gamma_boxes(sys, np.array([q]))
    t1, t2, z, info = _solve_boxes(sys, g1, g2)
    b = sys.box
    return TriangleSolution(t1[0][b.mask1], t2[0][b.mask2], z[0][b.mask2], info)


@dataclass(frozen=True)
class StructuredInverse:
    """Columns of ``T(f)^{-1}`` on the triangle points, with the leaked mass per column.

    Column ``j`` holds the coefficients of ``T(f)^{-1} chi^{q_j}``.  The dense
    matrix of :func:`~polytoep.toeplitz_core.assemble_toeplitz` stores
    ``fhat(p_j - p_i)``, the transpose of this operator, so column ``j`` here
    equals column ``j`` of ``(M^{-1})^T``; the two coincide for real coefficients.

    ``leakage`` is the L2 mass outside the triangle over the whole box;
    ``leakage_inner`` counts only frequencies with ``max(|u|, |v|) <= M/2``,
    away from the truncation edge where the box products lose mass.
    """

    points: np.ndarray
    columns: np.ndarray
    leakage: np.ndarray
    leakage_inner: np.ndarray
    info: SolveInfo


def structured_inverse(sys: HankelSystem, qs: np.ndarray | None = None) -> StructuredInverse:
    """Batched structured inverse for the triangle points ``qs`` (default: all)."""
    b = sys.box
    qs = b.points_lambda if qs is None else np.asarray(qs, dtype=np.int64).reshape(-1, 2)
    for q in qs:
        if not sys.triangle.contains((int(q[0]), int(q[1]))):
            raise PointOutsideTriangle(f"{tuple(q)} is not a lattice point of the triangle")
    E = b.basis(qs)
    g1 = sys.multiply(E, "inv_abar") * b.mask1
    g2 = sys.multiply(E, "inv_alpha") * b.mask2
    theta1, theta2, _, info = _solve_boxes(sys, g1, g2)
    out = sys.multiply(E, "inv_f") - sys.multiply(theta1, "inv_alpha") - sys.multiply(theta2, "inv_abar")
    P = b.points_lambda
    cols = out[:, P[:, 0] + b.M, P[:, 1] + b.M].T
    outside = ~b.mask_lambda
    ks = np.abs(np.arange(-b.M, b.M + 1))
    inner = outside & (np.maximum.outer(ks, ks) <= b.M // 2)
    leak = np.sqrt(np.sum(np.abs(out * outside) ** 2, axis=(-2, -1)))
    leak_inner = np.sqrt(np.sum(np.abs(out * inner) ** 2, axis=(-2, -1)))
    return StructuredInverse(np.array(qs), cols, leak, leak_inner, info)


def structured_inverse_apply(sys: HankelSystem, q: Point) -> tuple[np.ndarray, float]:
    """Column of ``T(f)^{-1}`` at ``q`` on the triangle points, and the mass leaked outside."""
    res = structured_inverse(sys, np.array([q]))
    return res.columns[:, 0], float(res.leakage[0])


def pk_map(sys: HankelSystem, psi: np.ndarray) -> np.ndarray:
    """``psi - theta1 - Phi2 theta2`` where ``theta`` solves ``H theta = (P1 psi, P2(psi / Phi2))``."""
    b = sys.box
    g1 = psi * b.mask1
    g2 = sys.multiply(psi, "phi_inv") * b.mask2
    theta1, theta2, _, _ = _solve_boxes(sys, g1, g2)
    return psi - theta1 - sys.multiply(theta2, "phi")


def phi_combination_norm(sys: HankelSystem, theta1: np.ndarray, theta2: np.ndarray) -> float:
    """``||theta1 + Phi2 theta2||`` without truncating the product to the box."""
    b = sys.box
    n = 2 * b.M + 1
    Ng = sfft.next_fast_len(4 * n)
    shift = np.arange(-b.M, b.M + 1) % Ng

    def grid(vec, mask):
        C = np.zeros((Ng, Ng), dtype=np.complex128)
        C[np.ix_(shift, shift)] = b.to_box(np.asarray(vec, dtype=np.complex128), mask)
        return sfft.ifft2(C, norm="forward")

    phi = np.zeros((Ng, Ng), dtype=np.complex128)
    R = 2 * b.M
    k = np.arange(-R, R + 1) % Ng
    phi[np.ix_(k, k)] = sys.kernels["phi"]
    vals = grid(theta1, b.mask1) + sfft.ifft2(phi, norm="forward") * grid(theta2, b.mask2)
    return float(np.sqrt(np.mean(np.abs(vals) ** 2)))
