"""Deterministic net constructions.

Every construction maps (d, k, eps) to a ``Net``: a canonically ordered
collection of k-flats inside the unit cube.  Nets are stored column-wise in
numpy arrays because realistic parameter ranges produce millions of flats;
individual ``KFlat`` values are materialised on demand.

All grid coordinates are dyadic rationals (or products m * eps^(1/d) for the
base-case grid), exactly representable in float64 down to eps = 2^-40;
smaller eps is rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ConvexPolytope, KFlat, mvee, unit_ball_volume

EPS_MIN = 2.0 ** -40

GRID = "grid"
RECURSIVE_KFLAT = "rk"
ELLIPSE_2D = "ellipse2d"
ELLIPSOID_DD = "ell-dd"
WEAK = "weak"
VDC = "vdc"
HALTON_HAMMERSLEY = "hh"
AFFINE_BODY = "affine"

CONSTRUCTIONS = (GRID, RECURSIVE_KFLAT, ELLIPSE_2D, ELLIPSOID_DD, WEAK, VDC,
                 HALTON_HAMMERSLEY, AFFINE_BODY)


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if eps < EPS_MIN:
        raise ValueError(f"eps below 2^-40 is not exactly representable, got {eps}")
    return eps


def _ceil_lg_inv(eps: float) -> int:
    """ceil(lg(1/eps)) for eps in (0, 1]."""
    return max(0, math.ceil(-math.log2(eps)))


# ---------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class Schedule:
    """Derived construction parameters for one (d, eps) instance.

    Which fields are populated depends on the construction: the recursive
    k-flat build uses ``tau`` and ``eps_levels``; the 2-D point net uses
    ``m``; the d-dimensional point net uses ``tau`` and ``m_levels`` with
    ``delta(i) = 2^i * eps^(1/d)``.
    """

    d: int
    eps: float
    tau: int | None = None
    eps_levels: tuple[float, ...] = ()
    m: int | None = None
    m_levels: tuple[int, ...] = ()

    def delta(self, i: int) -> float:
        return (2.0 ** i) * self.eps ** (1.0 / self.d)

    @classmethod
    def kflat(cls, d: int, eps: float) -> "Schedule":
        tau = math.ceil(-math.log2(eps) / d) + 3 * math.ceil(math.log2(3 * d)) + 1
        levels = tuple((2.0 ** i) * eps / (4.0 * d) for i in range(1, tau + 1))
        return cls(d=d, eps=eps, tau=tau, eps_levels=levels)

    @classmethod
    def ellipse(cls, eps: float) -> "Schedule":
        return cls(d=2, eps=eps, m=3 + _ceil_lg_inv(eps))

    @classmethod
    def pointnet(cls, d: int, eps: float) -> "Schedule":
        lg_inv = -math.log2(eps)
        tau = math.ceil(lg_inv / d)
        m_levels = tuple(math.ceil(lg_inv / d - i) for i in range(tau + 1))
        return cls(d=d, eps=eps, tau=tau, m_levels=m_levels)


# ---------------------------------------------------------------------------
# the Net value


@dataclass(frozen=True, eq=False)
class Net:
    """A canonically ordered set of k-flats in [0,1]^d.

    Axis-aligned nets (every construction here except body-normalised ones)
    store, per flat, the fixed coordinate values in ``bases`` (free
    coordinates are zero) and the free axis indices in ``free_axes``.
    General nets store explicit orthonormal direction rows in ``dirs`` and
    have ``free_axes = None``.
    """

    d: int
    k: int
    eps: float
    construction: str
    bases: np.ndarray
    free_axes: np.ndarray | None
    dirs: np.ndarray | None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bases.ndim != 2 or self.bases.shape[1] != self.d:
            raise ValueError("bases must be an (n, d) array")
        if (self.free_axes is None) == (self.dirs is None):
            raise ValueError("exactly one of free_axes/dirs must be present")
        if self.free_axes is not None and self.free_axes.shape != (len(self.bases), self.k):
            raise ValueError("free_axes must be (n, k)")
        if self.dirs is not None and self.dirs.shape != (len(self.bases), self.k, self.d):
            raise ValueError("dirs must be (n, k, d)")

    def __len__(self) -> int:
        return self.bases.shape[0]

    def __repr__(self) -> str:
        return (f"Net({self.construction!r}, d={self.d}, k={self.k}, "
                f"eps={self.eps!r}, flats={len(self)})")

    @property
    def axis_aligned(self) -> bool:
        return self.free_axes is not None

    def flat_dirs(self, i: int) -> np.ndarray:
        if self.dirs is not None:
            return self.dirs[i]
        return np.eye(self.d)[self.free_axes[i].astype(int)]

    def flat(self, i: int) -> KFlat:
        return KFlat(self.bases[i], self.flat_dirs(i))

    @property
    def flats(self) -> list[KFlat]:
        return [self.flat(i) for i in range(len(self))]

    def pattern_blocks(self) -> list[tuple[tuple[int, ...], int, int]]:
        """Contiguous runs of identical free-axis patterns, in canonical order."""
        if self.free_axes is None:
            raise ValueError("general nets have no axis patterns")
        if len(self) == 0:
            return []
        fa = self.free_axes
        if self.k == 0:
            return [((), 0, len(self))]
        change = np.any(fa[1:] != fa[:-1], axis=1)
        starts = np.concatenate([[0], np.nonzero(change)[0] + 1])
        stops = np.concatenate([starts[1:], [len(self)]])
        return [(tuple(int(a) for a in fa[s]), int(s), int(e))
                for s, e in zip(starts, stops)]

    def subset(self, index) -> "Net":
        """Net restricted to the given row selection (order preserved)."""
        fa = None if self.free_axes is None else self.free_axes[index]
        dr = None if self.dirs is None else self.dirs[index]
        return Net(self.d, self.k, self.eps, self.construction,
                   self.bases[index], fa, dr, dict(self.params))


def _canonical_order(bases: np.ndarray, free_axes: np.ndarray | None,
                     dirs: np.ndarray | None) -> np.ndarray:
    n, d = bases.shape
    if n == 0:
        return np.arange(0)
    keys: list[np.ndarray] = [bases[:, j] for j in range(d - 1, -1, -1)]
    if free_axes is not None and free_axes.shape[1]:
        keys += [free_axes[:, j] for j in range(free_axes.shape[1] - 1, -1, -1)]
    elif dirs is not None and dirs.shape[1]:
        flat = dirs.reshape(n, -1)
        keys = [flat[:, j] for j in range(flat.shape[1] - 1, -1, -1)] + keys
    return np.lexsort(keys)


def _make_net(d: int, k: int, eps: float, construction: str, bases: np.ndarray,
              free_axes: np.ndarray | None = None, dirs: np.ndarray | None = None,
              params: dict | None = None, check_cube: bool = True) -> Net:
    bases = np.ascontiguousarray(bases, dtype=float)
    if free_axes is None and dirs is None:
        free_axes = np.zeros((len(bases), 0), dtype=np.int8)
    order = _canonical_order(bases, free_axes, dirs)
    bases = bases[order]
    if free_axes is not None:
        free_axes = np.ascontiguousarray(free_axes[order], dtype=np.int8)
    if dirs is not None:
        dirs = np.ascontiguousarray(dirs[order], dtype=float)
    if check_cube and free_axes is not None and len(bases):
        if bases.min() < 0.0 or bases.max() > 1.0:
            raise ValueError("net has a flat outside the unit cube")
    return Net(d, k, eps, construction, bases, free_axes, dirs, params or {})


def _empty_net(d: int, k: int, eps: float, construction: str, params=None) -> Net:
    return _make_net(d, k, eps, construction, np.zeros((0, d)),
                     free_axes=np.zeros((0, k), dtype=np.int8), params=params)


# ---------------------------------------------------------------------------
# base case: the hyperplane grid


def _grid_arrays(d: int, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Interior grid hyperplanes at spacing eps^(1/d); returns (bases, free_axes)."""
    if eps >= 1.0:
        return np.zeros((0, d)), np.zeros((0, max(d - 1, 0)), dtype=np.int8)
    s = eps ** (1.0 / d)
    count = math.ceil(1.0 / s) - 1
    pos = np.array([m * s for m in range(1, count + 1) if m * s < 1.0])
    npos = len(pos)
    k = d - 1
    bases = np.zeros((d * npos, d))
    free = np.zeros((d * npos, k), dtype=np.int8)
    all_axes = np.arange(d, dtype=np.int8)
    for j in range(d):
        rows = slice(j * npos, (j + 1) * npos)
        bases[rows, j] = pos
        free[rows] = np.delete(all_axes, j)
    return bases, free


def grid_hyperplane_net(d: int, eps: float) -> Net:
    """Axis grid of (d-1)-flats at spacing eps^(1/d); size <= d * ceil(eps^(-1/d)).

    eps >= 1 yields an empty net (no body of volume >= 1 fits strictly inside
    the cube); degenerate but legal.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    eps = float(eps)
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if eps < EPS_MIN:
        raise ValueError("eps below 2^-40 is not supported")
    bases, free = _grid_arrays(d, eps)
    return _make_net(d, max(d - 1, 0), eps, GRID, bases, free_axes=free,
                     params={"spacing": eps ** (1.0 / d) if eps < 1 else 1.0})


# ---------------------------------------------------------------------------
# recursive k-flat net


def _lift_axis(sub_bases: np.ndarray, sub_free: np.ndarray, axis: int,
               positions: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Embed a (d-1)-dim net into the hyperplanes x_axis = p for p in positions."""
    npos, nsub = len(positions), len(sub_bases)
    other = [c for c in range(d) if c != axis]
    bases = np.empty((npos * nsub, d))
    bases[:, axis] = np.repeat(positions, nsub)
    bases[:, other] = np.tile(sub_bases, (npos, 1))
    free = np.tile(sub_free + (sub_free >= axis), (npos, 1)).astype(np.int8)
    return bases, free


def _rk_arrays(d: int, k: int, eps: float, memo: dict) -> tuple[np.ndarray, np.ndarray]:
    key = (d, eps)
    if key in memo:
        return memo[key]
    if k == d - 1:
        out = _grid_arrays(d, eps)
        memo[key] = out
        return out
    sched = Schedule.kflat(d, eps)
    blocks_b: list[np.ndarray] = []
    blocks_f: list[np.ndarray] = []
    for i in range(1, sched.tau + 1):
        eps_i = sched.eps_levels[i - 1]
        if eps_i >= 1.0:
            continue
        sub_b, sub_f = _rk_arrays(d - 1, k, eps_i, memo)
        if len(sub_b) == 0:
            continue
        positions = (2.0 * np.arange(2 ** (i - 1)) + 1.0) / (2.0 ** i)
        for axis in range(d):
            b, f = _lift_axis(sub_b, sub_f, axis, positions, d)
            blocks_b.append(b)
            blocks_f.append(f)
    if not blocks_b:
        out = (np.zeros((0, d)), np.zeros((0, k), dtype=np.int8))
    else:
        out = (np.concatenate(blocks_b), np.concatenate(blocks_f))
    memo[key] = out
    return out


def recursive_kflat_net(d: int, k: int, eps: float) -> Net:
    """Quadtree-based (k, eps)-net: splitting hyperplanes at dyadic levels,
    each carrying a recursively built net of the level's scaled parameter.

    k = d-1 is exactly the hyperplane grid; the recursion on dimension
    bottoms out there.
    """
    if not 1 <= k < d:
        raise ValueError(f"need 1 <= k < d, got k={k}, d={d}")
    eps = _check_eps(eps)
    if k == d - 1:
        g = grid_hyperplane_net(d, eps)
        return _make_net(d, k, eps, RECURSIVE_KFLAT, g.bases, free_axes=g.free_axes,
                         params=dict(g.params))
    sched = Schedule.kflat(d, eps)
    bases, free = _rk_arrays(d, k, eps, {})
    return _make_net(d, k, eps, RECURSIVE_KFLAT, bases, free_axes=free,
                     params={"tau": float(sched.tau)})


# ---------------------------------------------------------------------------
# 2-D point net for ellipses


def _ellipse_union_size(m: int) -> int:
    """Exact deduplicated size of the 2-D point net with level count m."""
    if m < 2:
        return 0
    return (m - 2) * 2 ** (m - 1) + 1


def _ellipse_point_keys(m: int) -> np.ndarray:
    """Deduplicated net as int64 numerators over 2^m, one row per point.

    The union of the per-level grids is exactly the set of interior dyadic
    points (x, y) whose denominator exponents satisfy qx + qy <= m, which is
    generated here directly, without duplicates, grouped by the exact
    denominator of x.
    """
    blocks = []
    for qx in range(1, m):
        xk = (2 * np.arange(2 ** (qx - 1), dtype=np.int64) + 1) << (m - qx)
        yk = np.arange(1, 2 ** (m - qx), dtype=np.int64) << qx
        b = np.empty((len(xk) * len(yk), 2), dtype=np.int64)
        b[:, 0] = np.repeat(xk, len(yk))
        b[:, 1] = np.tile(yk, len(xk))
        blocks.append(b)
    if not blocks:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(blocks)


def ellipse_net_2d(eps: float) -> Net:
    """Point net stabbing every ellipse of area >= eps in the unit square.

    Unions the interior vertices of the rectangle tilings with side lengths
    (2^-(M-j), 2^-j); size O(eps^-1 lg eps^-1).
    """
    eps = _check_eps(eps)
    m = Schedule.ellipse(eps).m
    pts = _ellipse_point_keys(m).astype(float) * 2.0 ** -m
    return _make_net(2, 0, eps, ELLIPSE_2D, pts, params={"M": float(m)})


# ---------------------------------------------------------------------------
# d-dimensional point net for ellipsoids


@dataclass(frozen=True)
class DyadicNetPlan:
    """Structured description of the d=3 point net.

    For each axis, hyperplanes sit at every dyadic position with denominator
    exponent q <= m0; a position whose exact exponent is q carries the 2-D
    point net with level count ``sub_m[q]`` (the union of the nets placed
    there by all levels collapses to the finest one because the 2-D nets are
    nested).  ``exact_size`` counts points per axis in closed form; identical
    points arising on different axes are not subtracted, so it is an upper
    bound on the materialised size.
    """

    eps: float
    tau: int
    m_levels: tuple[int, ...]
    sub_m: tuple[int, ...]

    @property
    def m0(self) -> int:
        return self.m_levels[0]

    @staticmethod
    def position_count(q: int) -> int:
        return 2 if q == 0 else 2 ** (q - 1)

    def positions(self, q: int) -> np.ndarray:
        if q == 0:
            return np.array([0.0, 1.0])
        return (2.0 * np.arange(2 ** (q - 1)) + 1.0) / (2.0 ** q)

    def exact_size(self) -> int:
        per_axis = sum(self.position_count(q) * _ellipse_union_size(self.sub_m[q])
                       for q in range(self.m0 + 1))
        return 3 * per_axis


def dd_net_plan(eps: float) -> DyadicNetPlan:
    """Plan for the d=3 construction (levels, positions, sub-net sizes)."""
    eps = _check_eps(eps)
    sched = Schedule.pointnet(3, eps)
    lg_inv = -math.log2(eps)
    # 2-D sub-net level count placed by level i: 3 + ceil(lg(Delta(i+2)/eps))
    def sub_m_of_level(i: int) -> int:
        return 3 + math.ceil((i + 2) + 2.0 * lg_inv / 3.0)

    m0 = sched.m_levels[0]
    sub_m = []
    for q in range(m0 + 1):
        istar = max(i for i in range(sched.tau + 1) if sched.m_levels[i] >= q)
        sub_m.append(sub_m_of_level(istar))
    return DyadicNetPlan(eps=eps, tau=sched.tau, m_levels=sched.m_levels,
                         sub_m=tuple(sub_m))


def _materialize_plan(plan: DyadicNetPlan) -> np.ndarray:
    cache: dict[int, np.ndarray] = {}
    blocks = []
    for axis in range(3):
        other = [c for c in range(3) if c != axis]
        for q in range(plan.m0 + 1):
            m = plan.sub_m[q]
            if m not in cache:
                cache[m] = _ellipse_point_keys(m).astype(float) * 2.0 ** -m
            sub = cache[m]
            positions = plan.positions(q)
            b = np.empty((len(positions) * len(sub), 3))
            b[:, axis] = np.repeat(positions, len(sub))
            b[:, other] = np.tile(sub, (len(positions), 1))
            blocks.append(b)
    return np.unique(np.concatenate(blocks), axis=0)


def _dd_points(d: int, eps: float, memo: dict) -> np.ndarray:
    """Generic recursion for d >= 3 (practical only for moderate eps)."""
    key = (d, eps)
    if key in memo:
        return memo[key]
    if d == 2:
        m = Schedule.ellipse(eps).m
        out = _ellipse_point_keys(m).astype(float) * 2.0 ** -m
    else:
        sched = Schedule.pointnet(d, eps)
        blocks = []
        for i in range(sched.tau + 1):
            m_i = sched.m_levels[i]
            if m_i < 0:
                continue
            delta_sub = eps / sched.delta(i + 2)
            if delta_sub >= 1.0:
                continue
            sub = _dd_points(d - 1, delta_sub, memo)
            if len(sub) == 0:
                continue
            # positions for j = 0..m_i collapse to the densest grid m / 2^m_i
            positions = np.arange(2 ** m_i + 1) / (2.0 ** m_i)
            for axis in range(d):
                other = [c for c in range(d) if c != axis]
                b = np.empty((len(positions) * len(sub), d))
                b[:, axis] = np.repeat(positions, len(sub))
                b[:, other] = np.tile(sub, (len(positions), 1))
                blocks.append(b)
        out = (np.unique(np.concatenate(blocks), axis=0) if blocks
               else np.zeros((0, d)))
    memo[key] = out
    return out


def ellipsoid_net_dd(d: int, eps: float) -> Net:
    """Point net stabbing every ellipsoid of volume >= eps in the unit cube.

    The guarantee of the underlying argument needs eps <= 2^-2d; the
    construction still runs for larger eps.  Memory grows like
    eps^-1 lg^(d-1) eps^-1 with a large dimensional constant: materialising
    d=3 nets below eps = 2^-12 or any d >= 4 net below eps = 2^-8 is
    impractical (see ``dd_net_plan`` for the lazy d=3 form).
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    eps = _check_eps(eps)
    if d == 2:
        return ellipse_net_2d(eps)
    if d == 3:
        plan = dd_net_plan(eps)
        pts = _materialize_plan(plan)
        params = {"tau": float(plan.tau)}
    else:
        sched = Schedule.pointnet(d, eps)
        pts = _dd_points(d, eps, {})
        params = {"tau": float(sched.tau)}
    return _make_net(d, 0, eps, ELLIPSOID_DD, pts, params=params)


def weak_delegate_eps(d: int, eps: float) -> float:
    """The ellipsoid-net parameter used to stab general convex bodies."""
    return eps / float(d) ** d


def weak_eps_net(d: int, eps: float) -> Net:
    """Point net for all convex bodies of volume >= eps, via the inscribed
    largest-volume ellipsoid (which carries at least a d^-d volume fraction)."""
    eps = _check_eps(eps)
    delegate = weak_delegate_eps(d, eps)
    base = ellipsoid_net_dd(d, delegate)
    params = {"delegate_eps": delegate}
    params.update({k: v for k, v in base.params.items() if k != "delegate_eps"})
    return Net(d, 0, eps, WEAK, base.bases, base.free_axes, base.dirs, params)


# ---------------------------------------------------------------------------
# nets for arbitrary convex bodies (ball-normalising affine map)


def _sym_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(w)) @ v.T


def affine_net_for_body(body: ConvexPolytope, k: int, eps: float) -> Net:
    """Net of k-flats stabbing every convex body of relative volume >= eps
    inside ``body``.

    Normalises the body so its enclosing ellipsoid becomes the ball of
    diameter 1 centred in the unit cube, builds the cube net at parameter
    eps * c_d / (2d)^d, and maps every flat back.  The returned flats live
    around ``body`` and need not meet the unit cube.
    """
    d = body.d
    if not 0 <= k < d:
        raise ValueError(f"need 0 <= k < d, got k={k}, d={d}")
    eps = _check_eps(eps)
    enclosing = mvee(body.vertices, tol=1e-7)
    w = 0.5 * _sym_sqrt(enclosing.shape)
    w_inv = np.linalg.inv(w)
    half = np.full(d, 0.5)

    delta = unit_ball_volume(d) / (2.0 * d) ** d
    scaled_eps = eps * delta
    cube_net = weak_eps_net(d, scaled_eps) if k == 0 else recursive_kflat_net(d, k, scaled_eps)

    bases = (cube_net.bases - half) @ w_inv.T + enclosing.center
    params = {"delta": delta, "scaled_eps": scaled_eps}
    if k == 0:
        return _make_net(d, 0, eps, AFFINE_BODY, bases, params=params, check_cube=False)
    mapped = np.empty((len(cube_net), k, d))
    for i, block in enumerate(cube_net.free_axes):
        mapped[i] = w_inv.T[block.astype(int)]
    q, _ = np.linalg.qr(mapped.transpose(0, 2, 1))
    dirs = np.ascontiguousarray(q.transpose(0, 2, 1))
    return _make_net(d, k, eps, AFFINE_BODY, bases, dirs=dirs, params=params,
                     check_cube=False)
