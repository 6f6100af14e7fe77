"""Exact integer geometry of lattice triangles, half-planes and cones.

Points of Z^2 are plain ``(u, v)`` tuples of Python ints.  Every membership
decision in this module is made with integer arithmetic; floating point is
only used for side lengths, unit normals and the perimeter weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import DegenerateTriangle, EmptyInterior, HypothesisTViolated, NotConvex, NotUnimodular

Point = tuple[int, int]


def _cross(p: Point, q: Point) -> int:
    return p[0] * q[1] - p[1] * q[0]


def _dot(p: Point, q: Point) -> int:
    return p[0] * q[0] + p[1] * q[1]


def primitive(v: Sequence[int]) -> Point:
    """Divide an integer vector by the gcd of its components.

    Raises
    ------
    ValueError
        If ``v`` is the zero vector.
    """
    x, y = int(v[0]), int(v[1])
    g = math.gcd(x, y)
    if g == 0:
        raise ValueError("zero vector has no primitive direction")
    return (x // g, y // g)


def check_primitive(v: Sequence[int]) -> Point:
    """Return ``v`` as a tuple after checking gcd(|v0|, |v1|) == 1."""
    x, y = int(v[0]), int(v[1])
    if (x, y) == (0, 0) or math.gcd(x, y) != 1:
        raise ValueError(f"{(x, y)} is not a primitive integer vector")
    return (x, y)


class HalfSpaceSign(str, Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    EXTERIOR = "exterior"


@dataclass(frozen=True)
class HalfSpaceFamily:
    """Half-planes ``S_i^+ = {p : <normal_i, p> <= offset_i}``, sides numbered from 1."""

    normals: tuple[Point, ...]
    offsets: tuple[int, ...]

    def value(self, i: int, p: Point) -> int:
        return _dot(self.normals[i - 1], p) - self.offsets[i - 1]

    def contains(self, i: int, p: Point) -> bool:
        return self.value(i, p) <= 0

    def minus_mask(self, i: int, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Boolean mask of ``S_i^-`` (strict exterior) on integer coordinate arrays."""
        nx, ny = self.normals[i - 1]
        return nx * U + ny * V > self.offsets[i - 1]

    def through_origin(self) -> "HalfSpaceFamily":
        """The translated family ``S_{i,0}^+`` whose lines pass through 0."""
        return HalfSpaceFamily(self.normals, tuple(0 for _ in self.offsets))


def halfspace_sign(h: HalfSpaceFamily, i: int, p: Point) -> HalfSpaceSign:
    """Classify ``p`` against side ``i`` by exact integer comparison."""
    if i < 1 or i > len(h.normals):
        raise ValueError(f"side index {i} out of range")
    s = h.value(i, p)
    if s < 0:
        return HalfSpaceSign.INTERIOR
    if s == 0:
        return HalfSpaceSign.BOUNDARY
    return HalfSpaceSign.EXTERIOR


@dataclass(frozen=True)
class ConeSpec:
    """Half-cone ``C+ = {s*e1 + t*e2 : s, t >= 0}`` with integer generators."""

    e1: Point
    e2: Point

    def __post_init__(self):
        object.__setattr__(self, "e1", check_primitive(self.e1))
        object.__setattr__(self, "e2", check_primitive(self.e2))
        if _cross(self.e1, self.e2) == 0:
            raise EmptyInterior(f"generators {self.e1}, {self.e2} are collinear")

    @property
    def det(self) -> int:
        return _cross(self.e1, self.e2)

    @property
    def orientation(self) -> int:
        return 1 if self.det > 0 else -1

    @property
    def is_unimodular(self) -> bool:
        return abs(self.det) == 1

    def contains(self, p: Point) -> bool:
        """Exact test ``p in C+`` via two cross-product signs."""
        d = self.det
        return _cross(p, self.e2) * d >= 0 and _cross(self.e1, p) * d >= 0

    def contains_strict(self, p: Point) -> bool:
        d = self.det
        return _cross(p, self.e2) * d > 0 and _cross(self.e1, p) * d > 0

    def in_double_cone(self, p: Point) -> bool:
        """Membership in ``C = C+ u (-C+)``."""
        return self.contains(p) or self.contains((-p[0], -p[1]))

    def contains_array(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Vectorized ``C+`` membership on integer coordinate arrays."""
        d = self.det
        s = (U * self.e2[1] - V * self.e2[0]) * d
        t = (self.e1[0] * V - self.e1[1] * U) * d
        return (s >= 0) & (t >= 0)

    def coords(self, p: Point) -> Point:
        """Integer coordinates ``(s, t)`` with ``p = s*e1 + t*e2``; unimodular cones only."""
        if not self.is_unimodular:
            raise NotUnimodular(f"cone {self.e1}, {self.e2} has det {self.det}")
        d = self.det
        return (_cross(p, self.e2) * d, _cross(self.e1, p) * d)

    def coords_array(self, U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if not self.is_unimodular:
            raise NotUnimodular(f"cone {self.e1}, {self.e2} has det {self.det}")
        d = self.det
        return ((U * self.e2[1] - V * self.e2[0]) * d, (self.e1[0] * V - self.e1[1] * U) * d)

    def from_coords(self, st: Point) -> Point:
        s, t = st
        return (s * self.e1[0] + t * self.e2[0], s * self.e1[1] + t * self.e2[1])

    def basis_matrix(self) -> np.ndarray:
        """Integer matrix whose columns are the generators."""
        return np.array([[self.e1[0], self.e2[0]], [self.e1[1], self.e2[1]]], dtype=np.int64)


@dataclass(frozen=True)
class TriangleInstance:
    """The lattice triangle with vertices O, A1 = (lam*beta1, -lam*alpha1), A2 = (a*lam, 0).

    Side 1 is O-A1 (normal ``nu1``), side 2 is A1-A2 (normal ``nu2``), side 3 is
    A2-O (normal ``nu3 = (0, -1)``).  ``S1`` and ``S2`` are the signed
    perimeter weights at ``lam = 1``; use :meth:`S1_at` for other scales.
    """

    nu1: Point
    a: int
    lam: int
    vertices: tuple[Point, Point, Point]
    nu2: Point
    nu3: Point
    side_lengths: tuple[float, float, float]
    unit_normals: tuple[tuple[float, float], ...]
    S1: float
    S2: float
    n_points: int
    halfspaces: HalfSpaceFamily = field(repr=False)

    @property
    def normals(self) -> tuple[Point, Point, Point]:
        return (self.nu1, self.nu2, self.nu3)

    @property
    def extent(self) -> int:
        """Largest absolute coordinate of a vertex."""
        return max(max(abs(c) for c in v) for v in self.vertices)

    def S1_at(self, lam: float | None = None) -> float:
        return self.S1 * (self.lam if lam is None else lam)

    def S2_at(self, lam: float | None = None) -> float:
        return self.S2 * (self.lam if lam is None else lam)

    def contains(self, p: Point) -> bool:
        return all(self.halfspaces.contains(i, p) for i in (1, 2, 3))

    # vertex name -> the two sides meeting there, in cyclic order
    vertex_sides = {"O": (3, 1), "A1": (1, 2), "A2": (2, 3)}


def _signed_weights(unit_normals, lengths):
    s1 = 0.5 * sum((-1) ** i * n[0] * l for i, (n, l) in enumerate(zip(unit_normals, lengths), start=1))
    s2 = 0.5 * sum((-1) ** i * n[1] * l for i, (n, l) in enumerate(zip(unit_normals, lengths), start=1))
    return s1, s2


def build_triangle(nu1: Sequence[int], a: int, lam: int) -> TriangleInstance:
    """Construct the triangle for normal ``nu1``, base factor ``a`` and scale ``lam``.

    Raises
    ------
    DegenerateTriangle
        For ``lam <= 0``, ``a <= 0``, collinear vertices or a normal that does
        not point out of the triangle.
    HypothesisTViolated
        If either signed weight is not strictly positive.
    """
    alpha1, beta1 = check_primitive(nu1)
    a, lam = int(a), int(lam)
    if lam <= 0:
        raise DegenerateTriangle(f"lambda must be a positive integer, got {lam}")
    if a <= 0:
        raise DegenerateTriangle(f"a must be a positive integer, got {a}")
    O = (0, 0)
    A1 = (lam * beta1, -lam * alpha1)
    A2 = (a * lam, 0)
    if _cross(A1, A2) == 0:
        raise DegenerateTriangle(f"vertices {O}, {A1}, {A2} are collinear")
    # 3 * centroid keeps everything integral
    g3 = (A1[0] + A2[0], A1[1] + A2[1])
    nu3 = (0, -1)
    if _dot(nu3, g3) >= 0 or _dot((alpha1, beta1), g3) >= 0:
        raise DegenerateTriangle(
            f"normal {(alpha1, beta1)} is inconsistent with an exterior normal (0,-1) on O-A2")
    d = (A2[0] - A1[0], A2[1] - A1[1])
    nu2 = primitive((d[1], -d[0]))
    if _dot(nu2, (g3[0] - 3 * A1[0], g3[1] - 3 * A1[1])) > 0:
        nu2 = (-nu2[0], -nu2[1])
    normals = ((alpha1, beta1), nu2, nu3)
    offsets = (0, _dot(nu2, A1), 0)
    hs = HalfSpaceFamily(normals, offsets)

    lengths = (math.hypot(*A1), math.hypot(*d), math.hypot(*A2))
    units = tuple((n[0] / math.hypot(*n), n[1] / math.hypot(*n)) for n in normals)
    S1, S2 = _signed_weights(units, tuple(l / lam for l in lengths))
    if not (S1 > 1e-12 and S2 > 1e-12):
        raise HypothesisTViolated(
            f"signed weights S1={S1:.6g}, S2={S2:.6g} must both be positive; "
            "displace the triangle by a lattice-preserving map")
    pts = _enumerate(hs, (O, A1, A2))
    return TriangleInstance(
        nu1=(alpha1, beta1), a=a, lam=lam, vertices=(O, A1, A2), nu2=nu2, nu3=nu3,
        side_lengths=lengths, unit_normals=units, S1=S1, S2=S2, n_points=len(pts),
        halfspaces=hs)


def _enumerate(hs: HalfSpaceFamily, vertices) -> np.ndarray:
    xs = [v[0] for v in vertices]
    ys = [v[1] for v in vertices]
    return _kernels.lattice_points(hs.normals, hs.offsets, min(xs), max(xs), min(ys), max(ys))


def enumerate_lattice_points(t: TriangleInstance) -> list[Point]:
    """Integer points of the triangle in lexicographic order."""
    return [(int(x), int(y)) for x, y in _enumerate(t.halfspaces, t.vertices)]


def lattice_point_array(t: TriangleInstance) -> np.ndarray:
    """Same as :func:`enumerate_lattice_points` as an ``(n, 2)`` int64 array."""
    return _enumerate(t.halfspaces, t.vertices)


def _egcd(a: int, b: int) -> tuple[int, int, int]:
    if b == 0:
        return (abs(a), (1 if a >= 0 else -1), 0)
    g, x, y = _egcd(b, a % b)
    return g, y, x - (a // b) * y


def find_unimodular_subcone(c: ConeSpec) -> ConeSpec:
    """A cone generated by a Z-basis lying inside ``c``.

    Unimodular input is returned unchanged.  Otherwise the primitive interior
    direction ``w`` (reduced ``e1 + e2``) is completed to a basis by a Bezout
    vector ``p0``; the family ``p0 + k*w`` tends to the direction of ``w`` and
    the first member strictly inside the cone is taken.
    """
    if c.is_unimodular:
        return c
    w = primitive((c.e1[0] + c.e2[0], c.e1[1] + c.e2[1]))
    # solve w0*y - w1*x = 1
    g, x, y = _egcd(w[0], -w[1])
    assert g == 1
    p0 = (y, x)
    assert _cross(w, p0) == 1
    for k in range(0, 10**6):
        p = (p0[0] + k * w[0], p0[1] + k * w[1])
        if c.contains_strict(p):
            break
    else:  # pragma: no cover - the family always enters the cone
        raise RuntimeError("Bezout scan did not enter the cone")
    if (_cross(w, p) > 0) == (c.det > 0):
        return ConeSpec(w, p)
    return ConeSpec(p, w)


def shift_vector(c: ConeSpec, S: Iterable[Sequence[int]]) -> Point:
    """An integer ``v`` in ``C+`` with ``0 not in S - n*v`` and ``S - n*v`` inside the
    double cone for every nonzero integer ``n``.

    In cone coordinates a point ``(a, b)`` with ``a != 0`` contributes
    ``(2|a|, 2|b|)`` and a point ``(0, b)`` contributes ``(1, 2|b|)``; the
    contributions are summed.  Every summand has nonnegative coordinates, so
    the sum still dominates each point coordinatewise, which keeps both
    properties.  The result is returned in standard coordinates.
    """
    if not c.is_unimodular:
        raise NotUnimodular("shift_vector needs a cone generated by a Z-basis")
    vs, vt = 0, 0
    for p in S:
        a, b = c.coords((int(p[0]), int(p[1])))
        if a != 0:
            vs += 2 * abs(a)
            vt += 2 * abs(b)
        elif b != 0:
            vs += 1
            vt += 2 * abs(b)
    if (vs, vt) == (0, 0):
        vs, vt = 1, 1
    return c.from_coords((vs, vt))


@dataclass(frozen=True)
class SplitResult:
    """Two cyclic runs of side indices (1-based) and the cone driving the split."""

    run1: tuple[int, ...]
    run2: tuple[int, ...]
    cone: ConeSpec


def _rot(n: Point) -> Point:
    return (-n[1], n[0])


def _check_convex(normals: Sequence[Point]) -> int:
    m = len(normals)
    if m < 3:
        raise NotConvex("a polygon needs at least three sides")
    crosses = [_cross(normals[i], normals[(i + 1) % m]) for i in range(m)]
    if any(c == 0 for c in crosses) or not (all(c > 0 for c in crosses) or all(c < 0 for c in crosses)):
        raise NotConvex("normals are not in strictly monotone cyclic order")
    turn = sum(abs(math.atan2(_cross(normals[i], normals[(i + 1) % m]),
                              _dot(normals[i], normals[(i + 1) % m]))) for i in range(m))
    if abs(turn - 2 * math.pi) > 1e-9:
        raise NotConvex(f"normals turn by {turn:.6f} rad instead of 2*pi")
    return 1 if crosses[0] > 0 else -1


def minimal_split(normals: Sequence[Sequence[int]], vertex: tuple[int, int]) -> SplitResult:
    """Group the sides of a convex polygon into the two runs of a minimal factorization.

    Parameters
    ----------
    normals
        Exterior integer normals in cyclic order (either orientation).
    vertex
        The pair of adjacent side indices (1-based) meeting at the chosen vertex.

    The vertex cone at A (translated to the origin) is bounded by the
    directions of its two sides.  Lines through the origin parallel to the other
    sides are swept by angle from the first boundary direction; the cone is cut
    at the first line that crosses its interior.  Sides whose half-plane through
    the origin contains the resulting cone form ``run1``.
    """
    normals = [check_primitive(n) for n in normals]
    _check_convex(normals)
    m = len(normals)
    j, k = vertex
    if (k - j) % m not in (1, m - 1):
        raise ValueError(f"sides {vertex} are not adjacent")
    nj, nk = normals[j - 1], normals[k - 1]

    def along(n: Point, other: Point) -> Point:
        d = _rot(n)
        return d if _dot(other, d) < 0 else (-d[0], -d[1])

    d_first = along(nj, nk)   # direction of side j leaving A
    d_last = along(nk, nj)    # direction of side k leaving A
    best, best_angle = d_last, math.atan2(abs(_cross(d_first, d_last)), _dot(d_first, d_last))
    for i in range(1, m + 1):
        if i in (j, k):
            continue
        ni = normals[i - 1]
        s1, s2 = _dot(ni, d_first), _dot(ni, d_last)
        if s1 * s2 < 0:
            delta = _rot(ni)
            if _cross(d_first, delta) * _cross(d_first, d_last) < 0:
                delta = (-delta[0], -delta[1])
            ang = math.atan2(abs(_cross(d_first, delta)), _dot(d_first, delta))
            if ang < best_angle:
                best, best_angle = primitive(delta), ang
    cone = ConeSpec(primitive(d_first), primitive(best))
    run1, run2 = [], []
    for i in range(1, m + 1):
        n = normals[i - 1]
        if _dot(n, cone.e1) <= 0 and _dot(n, cone.e2) <= 0:
            run1.append(i)
        else:
            run2.append(i)
    return SplitResult(_cyclic_run(run1, m), _cyclic_run(run2, m), cone)


def _cyclic_run(idx: list[int], m: int) -> tuple[int, ...]:
    """Order a set of side indices as one contiguous cyclic run."""
    s = set(idx)
    if not s or len(s) == m:
        return tuple(sorted(s))
    start = next(i for i in sorted(s) if ((i - 2) % m) + 1 not in s)
    run = []
    i = start
    while i in s:
        run.append(i)
        i = i % m + 1
    if len(run) != len(s):
        raise NotConvex(f"sides {sorted(s)} do not form a contiguous run")
    return tuple(run)
