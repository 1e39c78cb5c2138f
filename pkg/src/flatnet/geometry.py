"""Geometric primitives: affine flats, convex bodies, predicates and volumes.

Everything works on plain float64 numpy arrays.  The value types are
immutable after construction and all operations are pure, so they are safe
to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

GEOM_TOL = 1e-9  # geometric predicates (distances, quadratic forms)
SYM_TOL = 1e-12  # matrix symmetry checks


def unit_ball_volume(d: int) -> float:
    """Volume of the Euclidean unit ball in d dimensions."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def as_point(p) -> np.ndarray:
    q = np.asarray(p, dtype=float)
    if q.ndim != 1 or q.size < 1:
        raise ValueError("a point must be a 1-d coordinate sequence")
    if not np.all(np.isfinite(q)):
        raise ValueError("point has non-finite coordinates")
    return q


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KFlat:
    """A k-dimensional affine flat: base point plus orthonormal direction rows.

    ``basis`` has shape (k, d) with pairwise orthogonal unit rows; k = 0 means
    the flat is the single point ``base``.
    """

    base: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        base = as_point(self.base)
        basis = np.asarray(self.basis, dtype=float)
        if basis.size == 0:
            basis = np.zeros((0, base.size))
        if basis.ndim != 2 or basis.shape[1] != base.size:
            raise ValueError("basis must be a (k, d) array matching the base point")
        k, d = basis.shape
        if k >= d:
            raise ValueError(f"a flat needs k < d, got k={k} in dimension {d}")
        if k and not np.allclose(basis @ basis.T, np.eye(k), atol=GEOM_TOL):
            raise ValueError("basis rows must be orthonormal")
        object.__setattr__(self, "base", _frozen(base))
        object.__setattr__(self, "basis", _frozen(basis))

    @property
    def d(self) -> int:
        return self.base.size

    @property
    def k(self) -> int:
        return self.basis.shape[0]

    def project(self, q) -> np.ndarray:
        """Orthogonal projection of a point onto the flat."""
        q = as_point(q)
        if self.k == 0:
            return self.base.copy()
        r = q - self.base
        return self.base + self.basis.T @ (self.basis @ r)


@dataclass(frozen=True)
class Ellipsoid:
    """Solid ellipsoid { x : (x-c)^T M (x-c) <= 1 } with M symmetric positive definite."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        c = as_point(self.center)
        m = np.asarray(self.shape, dtype=float)
        if m.shape != (c.size, c.size):
            raise ValueError("shape matrix must be d x d")
        if not np.all(np.abs(m - m.T) <= SYM_TOL * max(1.0, float(np.abs(m).max()))):
            raise ValueError("shape matrix must be symmetric")
        if np.linalg.eigvalsh(m)[0] <= 0.0:
            raise ValueError("shape matrix must be positive definite")
        object.__setattr__(self, "center", _frozen(c))
        object.__setattr__(self, "shape", _frozen(0.5 * (m + m.T)))

    @property
    def d(self) -> int:
        return self.center.size

    def semi_axes(self) -> np.ndarray:
        """Semi-axis lengths, descending."""
        return np.sort(1.0 / np.sqrt(np.linalg.eigvalsh(self.shape)))[::-1]

    def halfwidths(self) -> np.ndarray:
        """Half extent of the axis-aligned bounding box, per axis."""
        return np.sqrt(np.diag(np.linalg.inv(self.shape)))

    def contains(self, pts) -> np.ndarray:
        """Vectorised membership test for an (n, d) array of points."""
        r = np.atleast_2d(np.asarray(pts, dtype=float)) - self.center
        return np.einsum("ij,jk,ik->i", r, self.shape, r) <= 1.0 + GEOM_TOL


@dataclass(frozen=True)
class AxisBox:
    """Axis-aligned box [lo, hi]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = as_point(self.lo)
        hi = as_point(self.hi)
        if lo.size != hi.size:
            raise ValueError("lo/hi dimension mismatch")
        if np.any(lo > hi):
            raise ValueError("box needs lo <= hi componentwise")
        object.__setattr__(self, "lo", _frozen(lo))
        object.__setattr__(self, "hi", _frozen(hi))

    @property
    def d(self) -> int:
        return self.lo.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.all((p >= self.lo - GEOM_TOL) & (p <= self.hi + GEOM_TOL), axis=1)


@dataclass(frozen=True)
class ConvexPolytope:
    """Convex polytope given by its vertices (V-representation)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("need at least one vertex")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        object.__setattr__(self, "vertices", _frozen(v))

    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    @cached_property
    def _hull(self) -> ConvexHull:
        try:
            return ConvexHull(self.vertices)
        except QhullError as exc:
            raise ValueError("polytope is degenerate (not full-dimensional)") from exc

    @property
    def volume(self) -> float:
        return float(self._hull.volume)

    def facet_inequalities(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, b) with the body equal to { x : A x <= b }."""
        eq = self._hull.equations
        return eq[:, :-1], -eq[:, -1]

    def contains(self, pts) -> np.ndarray:
        a, b = self.facet_inequalities()
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.all(p @ a.T <= b + GEOM_TOL, axis=1)


# ---------------------------------------------------------------------------
# flats


def flat_from_affine_hull(points) -> KFlat:
    """Flat spanned by a point set; k is the affine rank minus one.

    Raises if the points affinely span the whole space (k would equal d).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("need a non-empty (n, d) point array")
    d = pts.shape[1]
    diffs = pts[1:] - pts[0]
    if diffs.shape[0] == 0:
        return KFlat(pts[0], np.zeros((0, d)))
    _, s, vt = np.linalg.svd(diffs, full_matrices=False)
    rank = int(np.sum(s > GEOM_TOL * max(1.0, s[0])))
    if rank == d:
        raise ValueError("points affinely span the whole space; a flat needs k < d")
    return KFlat(pts[0], vt[:rank])


def dist_point_flat(q, flat: KFlat) -> float:
    """Euclidean distance from a point to a flat."""
    q = as_point(q)
    if q.size != flat.d:
        raise ValueError("dimension mismatch")
    r = q - flat.base
    if flat.k:
        r = r - flat.basis.T @ (flat.basis @ r)
    return float(np.linalg.norm(r))


def flat_intersects_ellipsoid(flat: KFlat, body: Ellipsoid) -> bool:
    """Closed-form test: minimise the ellipsoid form over the flat."""
    if flat.d != body.d:
        raise ValueError("dimension mismatch")
    m = body.shape
    r0 = flat.base - body.center
    if flat.k == 0:
        val = float(r0 @ m @ r0)
    else:
        b = flat.basis
        a = b @ m @ b.T
        rhs = -(b @ (m @ r0))
        try:
            t = np.linalg.solve(a, rhs)
        except np.linalg.LinAlgError as exc:  # impossible for orthonormal basis + SPD M
            raise RuntimeError("singular reduced system in flat/ellipsoid test") from exc
        r = r0 + b.T @ t
        val = float(r @ m @ r)
    return val <= 1.0 + GEOM_TOL


def flat_intersects_box(flat: KFlat, box: AxisBox) -> bool:
    """Feasibility of lo <= base + t . basis <= hi; ties count as intersecting."""
    if flat.d != box.d:
        raise ValueError("dimension mismatch")
    lo = box.lo - GEOM_TOL
    hi = box.hi + GEOM_TOL
    if flat.k == 0:
        return bool(np.all(flat.base >= lo) and np.all(flat.base <= hi))
    if flat.k == 1:
        v = flat.basis[0]
        tmin, tmax = -np.inf, np.inf
        for j in range(flat.d):
            a, b0 = v[j], flat.base[j]
            if abs(a) <= GEOM_TOL:
                if b0 < lo[j] or b0 > hi[j]:
                    return False
                continue
            t0, t1 = (lo[j] - b0) / a, (hi[j] - b0) / a
            if t0 > t1:
                t0, t1 = t1, t0
            tmin, tmax = max(tmin, t0), min(tmax, t1)
        return tmin <= tmax
    coeffs = flat.basis.T  # (d, k): coefficient rows per axis
    a_ub = np.vstack([coeffs, -coeffs])
    b_ub = np.concatenate([hi - flat.base, flat.base - lo])
    res = linprog(np.zeros(flat.k), A_ub=a_ub, b_ub=b_ub,
                  bounds=[(None, None)] * flat.k, method="highs")
    return res.status == 0


def flat_intersects_polytope(flat: KFlat, body: ConvexPolytope) -> bool:
    """LP feasibility of the flat against the polytope's facet inequalities."""
    if flat.d != body.d:
        raise ValueError("dimension mismatch")
    a, b = body.facet_inequalities()
    if flat.k == 0:
        return bool(np.all(a @ flat.base <= b + GEOM_TOL))
    a_ub = a @ flat.basis.T
    b_ub = b - a @ flat.base + GEOM_TOL
    res = linprog(np.zeros(flat.k), A_ub=a_ub, b_ub=b_ub,
                  bounds=[(None, None)] * flat.k, method="highs")
    return res.status == 0


# ---------------------------------------------------------------------------
# volumes


def ellipsoid_volume(body: Ellipsoid) -> float:
    """vol = c_d / sqrt(det M)."""
    sign, logdet = np.linalg.slogdet(body.shape)
    if sign <= 0:
        raise ValueError("shape matrix is not positive definite")
    return unit_ball_volume(body.d) * math.exp(-0.5 * logdet)


def ellipsoid_section(body: Ellipsoid, axis: int, value: float):
    """Section of the ellipsoid with the hyperplane x_axis = value.

    Returns an Ellipsoid in the remaining d-1 coordinates (ascending axis
    order), or None when the hyperplane misses the body (or grazes it in a
    single point).
    """
    d = body.d
    if not 0 <= axis < d:
        raise ValueError("axis out of range")
    if d < 2:
        raise ValueError("sections need d >= 2")
    keep = [j for j in range(d) if j != axis]
    m = body.shape
    maa = m[axis, axis]
    may = m[axis, keep]
    myy = m[np.ix_(keep, keep)]
    w = np.linalg.solve(myy, may)
    schur = maa - may @ w
    delta = value - body.center[axis]
    rho = 1.0 - delta * delta * schur
    if rho <= 0.0:
        return None
    return Ellipsoid(body.center[keep] - delta * w, myy / rho)


def slice_volume(body: Ellipsoid, axis: int, value: float) -> float:
    """(d-1)-volume of the hyperplane section x_axis = value (0 if empty)."""
    sec = ellipsoid_section(body, axis, value)
    if sec is None:
        return 0.0
    return ellipsoid_volume(sec)


# ---------------------------------------------------------------------------
# enclosing ellipsoid


def mvee(points, tol: float = 1e-7, max_iter: int = 100_000) -> Ellipsoid:
    """Minimum-volume enclosing ellipsoid (Khachiyan barycentric iteration).

    Stops when the maximum point residual drops below ``tol``; the returned
    ellipsoid contains every input point and its volume is within a (1+tol)
    factor of optimal.  Shrinking it by a factor d about its center gives an
    ellipsoid inside the convex hull of the points.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim != 2:
        raise ValueError("need an (n, d) point array")
    n, d = p.shape
    if n < d + 1:
        raise ValueError("need at least d+1 points")
    sv = np.linalg.svd(p - p.mean(axis=0), compute_uv=False)
    if sv[-1] <= 1e-12 * max(1.0, sv[0]):
        raise ValueError("degenerate point set: points lie in a lower-dimensional flat")

    q = np.vstack([p.T, np.ones(n)])
    u = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        x = q @ (u[:, None] * q.T)
        m = np.einsum("ij,ij->j", q, np.linalg.solve(x, q))
        j = int(np.argmax(m))
        mx = m[j]
        if mx / (d + 1.0) - 1.0 <= tol:
            break
        step = (mx - d - 1.0) / ((d + 1.0) * (mx - 1.0))
        u *= 1.0 - step
        u[j] += step
    center = p.T @ u
    cov = p.T @ (u[:, None] * p) - np.outer(center, center)
    shape = np.linalg.inv(cov) / d
    return Ellipsoid(center, 0.5 * (shape + shape.T))


# ---------------------------------------------------------------------------
# Monte Carlo


def mc_volume_in_cube(body, samples: int, seed: int) -> float:
    """Monte Carlo estimate of vol(body intersected with the unit cube)."""
    if samples < 1:
        raise ValueError("need at least one sample")
    d = body.d
    rng = np.random.default_rng(seed)
    hits = 0
    left = samples
    while left > 0:
        m = min(left, 1 << 18)
        pts = rng.random((m, d))
        hits += int(np.count_nonzero(body.contains(pts)))
        left -= m
    return hits / samples
