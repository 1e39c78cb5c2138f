"""Empirical certification: stabbing checks, adversary generators, the
unstabbed-ball probe, exact empty-rectangle search and scaling reports.

Stabbing checks are exact (closed-form quadratic minimisation / LP
feasibility); the vectorised paths below only prune candidates with
necessary bounding-box conditions before applying the exact predicate.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .construct import (DyadicNetPlan, Net, ellipse_net_2d, ellipsoid_net_dd,
                        grid_hyperplane_net, recursive_kflat_net, weak_eps_net)
from .geometry import (GEOM_TOL, AxisBox, ConvexPolytope, Ellipsoid,
                       ellipsoid_section, ellipsoid_volume,
                       flat_intersects_box, flat_intersects_polytope,
                       unit_ball_volume)
from .lowdisc import box_net


@dataclass
class StabReport:
    """Outcome of a batch of stabbing trials."""

    total: int = 0
    stabbed: int = 0
    witnesses: list = field(default_factory=list)   # (adversary id, flat index)
    failures: list = field(default_factory=list)    # serialised unstabbed bodies

    def ok(self) -> bool:
        return not self.failures


@dataclass
class ProbeResult:
    """A certified gap found by the ball probe, if any."""

    found: bool
    center: np.ndarray | None
    radius: float
    ball_volume: float


# ---------------------------------------------------------------------------
# stab checks


def _block_candidates(block: np.ndarray, fixed: list[int], lo: np.ndarray,
                      hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row offsets within a canonical block whose fixed coords fall in [lo, hi].

    Blocks are lexicographically sorted on the fixed columns in axis order,
    so the first fixed column admits a binary search.
    """
    f0 = fixed[0]
    col = block[:, f0]
    i0 = int(np.searchsorted(col, lo[f0] - GEOM_TOL, side="left"))
    i1 = int(np.searchsorted(col, hi[f0] + GEOM_TOL, side="right"))
    if i0 >= i1:
        return np.empty(0, dtype=np.intp), np.empty((0, len(fixed)))
    sub = block[i0:i1][:, fixed]
    mask = np.ones(len(sub), dtype=bool)
    for idx, axis in enumerate(fixed[1:], start=1):
        mask &= (sub[:, idx] >= lo[axis] - GEOM_TOL) & (sub[:, idx] <= hi[axis] + GEOM_TOL)
    offs = i0 + np.nonzero(mask)[0]
    return offs, sub[mask]


def _schur_fixed(m: np.ndarray, fixed: list[int], free: list[int]) -> np.ndarray:
    """min over free coords of the ellipsoid form, as a form on the fixed ones."""
    mxx = m[np.ix_(fixed, fixed)]
    if not free:
        return mxx
    mff = m[np.ix_(free, free)]
    mxf = m[np.ix_(fixed, free)]
    return mxx - mxf @ np.linalg.solve(mff, mxf.T)


def _stab_ellipsoid_aligned(net: Net, body: Ellipsoid) -> int | None:
    half = body.halfwidths()
    lo, hi = body.center - half, body.center + half
    best = None
    for pattern, s, t in net.pattern_blocks():
        free = list(pattern)
        fixed = [a for a in range(net.d) if a not in pattern]
        offs, vals = _block_candidates(net.bases[s:t], fixed, lo, hi)
        if not len(offs):
            continue
        schur = _schur_fixed(body.shape, fixed, free)
        r = vals - body.center[fixed]
        q = np.einsum("ij,jk,ik->i", r, schur, r)
        hits = np.nonzero(q <= 1.0 + GEOM_TOL)[0]
        if len(hits):
            idx = s + int(offs[hits.min()])
            best = idx if best is None else min(best, idx)
    return best


def _stab_ellipsoid_general(net: Net, body: Ellipsoid) -> int | None:
    m, c = body.shape, body.center
    chunk = 1 << 15
    for start in range(0, len(net), chunk):
        stop = min(start + chunk, len(net))
        r0 = net.bases[start:stop] - c
        if net.k == 0:
            q = np.einsum("ij,jk,ik->i", r0, m, r0)
        else:
            dirs = net.dirs[start:stop]
            bm = dirs @ m
            a = bm @ dirs.transpose(0, 2, 1)
            rhs = -np.einsum("nkd,nd->nk", bm, r0)
            tt = np.linalg.solve(a, rhs)
            r = r0 + np.einsum("nk,nkd->nd", tt, dirs)
            q = np.einsum("nd,de,ne->n", r, m, r)
        hits = np.nonzero(q <= 1.0 + GEOM_TOL)[0]
        if len(hits):
            return start + int(hits[0])
    return None


def _stab_box_aligned(net: Net, body: AxisBox) -> int | None:
    best = None
    for pattern, s, t in net.pattern_blocks():
        fixed = [a for a in range(net.d) if a not in pattern]
        offs, _ = _block_candidates(net.bases[s:t], fixed, body.lo, body.hi)
        if len(offs):
            idx = s + int(offs.min())
            best = idx if best is None else min(best, idx)
    return best


def _stab_polytope_points(net: Net, body: ConvexPolytope) -> int | None:
    a, b = body.facet_inequalities()
    vlo = body.vertices.min(axis=0)
    vhi = body.vertices.max(axis=0)
    inside = np.all((net.bases >= vlo - GEOM_TOL) & (net.bases <= vhi + GEOM_TOL), axis=1)
    cand = np.nonzero(inside)[0]
    if not len(cand):
        return None
    ok = np.all(net.bases[cand] @ a.T <= b + GEOM_TOL, axis=1)
    hits = cand[ok]
    return int(hits[0]) if len(hits) else None


def stab_check(net: Net, body) -> int | None:
    """Index of the first flat (canonical order) intersecting the body, or None."""
    if body.d != net.d:
        raise ValueError("dimension mismatch")
    if len(net) == 0:
        return None
    if isinstance(body, Ellipsoid):
        if net.axis_aligned:
            return _stab_ellipsoid_aligned(net, body)
        return _stab_ellipsoid_general(net, body)
    if isinstance(body, AxisBox):
        if net.axis_aligned:
            return _stab_box_aligned(net, body)
        for i in range(len(net)):
            if flat_intersects_box(net.flat(i), body):
                return i
        return None
    if isinstance(body, ConvexPolytope):
        if net.axis_aligned and net.k == 0:
            return _stab_polytope_points(net, body)
        for i in range(len(net)):
            if flat_intersects_polytope(net.flat(i), body):
                return i
        return None
    raise TypeError(f"unsupported body type {type(body).__name__}")


# ---------------------------------------------------------------------------
# lazy stabbing against the structured d=3 point net


def _ellipse_net_point_in(m: int, sec: Ellipsoid) -> np.ndarray | None:
    """A point of the 2-D net with level count m inside the ellipse, or None.

    Families are scanned by the exact denominator exponent qx of the first
    coordinate (lines odd/2^qx carrying second coordinates b/2^(m-qx)),
    starting from the family whose row spacing matches the ellipse's extent.
    """
    cx, cy = sec.center
    wx, wy = sec.halfwidths()
    s = sec.shape
    if wy <= 0.0 or wx <= 0.0:
        return None
    qy_guess = max(1, math.ceil(math.log2(1.0 / wy))) if wy < 1.0 else 1
    qx_guess = min(max(m - qy_guess, 1), m - 1)
    order = sorted(range(1, m), key=lambda q: (abs(q - qx_guess), q))
    for qx in order:
        den_x = 2 ** qx
        t0 = max(1, math.ceil((cx - wx) * den_x - GEOM_TOL))
        t1 = min(den_x - 1, math.floor((cx + wx) * den_x + GEOM_TOL))
        if t0 % 2 == 0:
            t0 += 1
        if t0 > t1:
            continue
        ts = np.arange(t0, t1 + 1, 2, dtype=np.int64)
        xs = ts / den_x
        dx = xs - cx
        disc = (s[0, 1] * dx) ** 2 - s[1, 1] * (s[0, 0] * dx * dx - 1.0)
        live = disc >= 0.0
        if not live.any():
            continue
        dx, xs = dx[live], xs[live]
        root = np.sqrt(np.maximum(disc[live], 0.0))
        ylo = cy + (-s[0, 1] * dx - root) / s[1, 1]
        yhi = cy + (-s[0, 1] * dx + root) / s[1, 1]
        den_y = 2 ** (m - qx)
        blo = np.maximum(1, np.ceil(ylo * den_y - GEOM_TOL)).astype(np.int64)
        bhi = np.minimum(den_y - 1, np.floor(yhi * den_y + GEOM_TOL)).astype(np.int64)
        hit = np.nonzero(blo <= bhi)[0]
        if len(hit):
            i = int(hit[0])
            return np.array([xs[i], blo[i] / den_y])
    return None


def plan_stab_check(plan: DyadicNetPlan, body: Ellipsoid) -> np.ndarray | None:
    """A point of the planned d=3 net inside the ellipsoid, or None.

    Exhausts every (axis, position family); the scan order follows the
    body's extents so heavy bodies are certified after a few sections.
    """
    if body.d != 3:
        raise ValueError("plans are three-dimensional")
    c = body.center
    half = body.halfwidths()
    for axis in np.argsort(-half):
        axis = int(axis)
        other = [a for a in range(3) if a != axis]
        extent = 2.0 * half[axis]
        guess = min(max(0, math.ceil(math.log2(1.0 / extent))) if extent < 1.0 else 0,
                    plan.m0)
        order = sorted(range(plan.m0 + 1), key=lambda q: (abs(q - guess), q))
        for q in order:
            if q == 0:
                positions = [p for p in (0.0, 1.0) if abs(p - c[axis]) < half[axis]]
            else:
                den = 2 ** q
                t0 = max(1, math.ceil((c[axis] - half[axis]) * den))
                t1 = min(den - 1, math.floor((c[axis] + half[axis]) * den))
                if t0 % 2 == 0:
                    t0 += 1
                positions = [t / den for t in range(t0, t1 + 1, 2)]
            for p in positions:
                sec = ellipsoid_section(body, axis, p)
                if sec is None:
                    continue
                pt2 = _ellipse_net_point_in(plan.sub_m[q], sec)
                if pt2 is not None:
                    out = np.empty(3)
                    out[axis] = p
                    out[other] = pt2
                    return out
    return None


# ---------------------------------------------------------------------------
# adversary generators (seed-deterministic)


def random_heavy_ellipsoid(d: int, eps: float, seed: int) -> Ellipsoid:
    """Random ellipsoid inside the unit cube with volume >= eps.

    Random rotation and log-uniform semi-axes rescaled to the target volume;
    rejection-resampled until the bounding box fits the cube.  Half the seeds
    draw volumes in [eps, 2 eps) (the hard band next to the guarantee), the
    rest log-uniformly above it.
    """
    cd = unit_ball_volume(d)
    vmax = cd * 0.5 ** d
    if not 0.0 < eps <= vmax * (1.0 + 1e-12):
        raise ValueError(f"a ball of volume eps must fit in the cube; eps <= {vmax:g}")
    rng = np.random.default_rng(seed)
    if rng.random() < 0.5 or 2.0 * eps >= vmax:
        u = rng.random() * min(1.0, vmax / eps - 1.0)
        vol = eps * (1.0 + max(u, 1e-9))
    else:
        vol = math.exp(rng.uniform(math.log(2.0 * eps), math.log(vmax)))
    vol_padded = vol * (1.0 + 1e-9)

    for _ in range(1000):
        g = rng.normal(size=(d, d))
        qm, rm = np.linalg.qr(g)
        qm = qm * np.sign(np.diag(rm))
        axes = np.exp(rng.uniform(math.log(2e-3), math.log(0.5), size=d))
        axes *= (vol_padded / (cd * axes.prod())) ** (1.0 / d)
        widths = np.sqrt((qm ** 2) @ (axes ** 2))
        if np.all(widths <= 0.5):
            center = rng.uniform(widths, 1.0 - widths)
            shape = (qm / axes ** 2) @ qm.T
            return Ellipsoid(center, 0.5 * (shape + shape.T))
    r = (vol_padded / cd) ** (1.0 / d)  # a ball always fits
    center = rng.uniform(r, 1.0 - r, size=d)
    return Ellipsoid(center, np.eye(d) / r ** 2)


def random_heavy_box(d: int, eps: float, seed: int) -> AxisBox:
    """Random axis-aligned box in the unit cube with volume >= eps."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    if eps >= 1.0 - 1e-12:
        return AxisBox(np.zeros(d), np.ones(d))
    rng = np.random.default_rng(seed)
    cap = min(1.0, 0.9 / eps - 1.0) if eps < 0.9 else (1.0 / eps - 1.0)
    vol = eps * (1.0 + max(rng.random() * cap, 1e-9))
    for _ in range(1000):
        sides = np.exp(rng.uniform(math.log(eps), 0.0, size=d))
        sides *= (vol / sides.prod()) ** (1.0 / d)
        if np.all(sides <= 1.0):
            lo = rng.uniform(np.zeros(d), 1.0 - sides)
            return AxisBox(lo, lo + sides)
    side = vol ** (1.0 / d)
    lo = rng.uniform(np.zeros(d), 1.0 - side)
    return AxisBox(lo, lo + side)


def random_heavy_polytope(d: int, eps: float, seed: int, n_vertices: int = 20) -> ConvexPolytope:
    """Hull of random points, rescaled about its centroid to volume >= eps."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    target = eps * (1.0 + max(rng.random() * 0.5, 1e-9))
    for _ in range(1000):
        pts = rng.random((n_vertices, d))
        try:
            vol = ConvexPolytope(pts).volume
        except ValueError:
            continue
        f = (target / vol) ** (1.0 / d)
        center = pts.mean(axis=0)
        scaled = center + f * (pts - center)
        if scaled.min() >= 0.0 and scaled.max() <= 1.0:
            return ConvexPolytope(scaled)
    raise RuntimeError(f"could not fit a polytope of volume {target:g} in the cube")


# ---------------------------------------------------------------------------
# minimum distance to a net (for the probe)


class _NetDistance:
    """Vectorised min distance from query points to every flat of a net."""

    def __init__(self, net: Net):
        self.net = net
        self._lines: list[tuple[int, np.ndarray]] = []
        self._trees: list[tuple[list[int], cKDTree]] = []
        if net.axis_aligned:
            for pattern, s, t in net.pattern_blocks():
                fixed = [a for a in range(net.d) if a not in pattern]
                sub = net.bases[s:t][:, fixed]
                if len(fixed) == 1:
                    self._lines.append((fixed[0], np.unique(sub[:, 0])))
                else:
                    self._trees.append((fixed, cKDTree(sub)))

    def min_dist(self, pts: np.ndarray) -> np.ndarray:
        net = self.net
        out = np.full(len(pts), np.inf)
        if len(net) == 0:
            return out
        if net.axis_aligned:
            for axis, positions in self._lines:
                x = pts[:, axis]
                j = np.clip(np.searchsorted(positions, x), 1, len(positions) - 1)
                d = np.minimum(np.abs(x - positions[j - 1]), np.abs(x - positions[j]))
                if len(positions) == 1:
                    d = np.abs(x - positions[0])
                out = np.minimum(out, d)
            for fixed, tree in self._trees:
                d, _ = tree.query(pts[:, fixed])
                out = np.minimum(out, d)
            return out
        for i in range(len(net)):
            r = pts - net.bases[i]
            if net.k:
                b = net.dirs[i]
                r = r - (r @ b.T) @ b
            out = np.minimum(out, np.linalg.norm(r, axis=1))
        return out


def adversarial_ball_probe(net: Net, eps: float, grid_resolution: int | None = None) -> ProbeResult:
    """Search a centred grid for a point farther than r = (eps/c_d)^(1/d) from
    every flat, with the ball of radius r around it inside the cube.

    Sound but not complete: a hit certifies an unstabbed eps-heavy ball; not
    finding one proves nothing.  Grid points are visited from the cube centre
    outward, capped at 10^7 points in total.
    """
    d = net.d
    cd = unit_ball_volume(d)
    r = (eps / cd) ** (1.0 / d)
    if grid_resolution is None:
        grid_resolution = math.ceil(4.0 / r)
    if grid_resolution < 2:
        raise ValueError("resolution must be >= 2")
    res = min(grid_resolution, int(1e7 ** (1.0 / d)))
    vals = (np.arange(res) + 0.5) / res
    vals = vals[(vals >= r) & (vals <= 1.0 - r)]
    volume = cd * r ** d
    if len(vals) == 0:
        return ProbeResult(False, None, r, volume)
    mesh = np.meshgrid(*([vals] * d), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    order = np.argsort(np.sum((pts - 0.5) ** 2, axis=1), kind="stable")
    dist = _NetDistance(net)
    chunk = 1 << 16
    for start in range(0, len(order), chunk):
        sel = order[start:start + chunk]
        md = dist.min_dist(pts[sel])
        hits = np.nonzero(md > r)[0]
        if len(hits):
            return ProbeResult(True, pts[sel[hits[0]]], r, volume)
    return ProbeResult(False, None, r, volume)


def check_probe(net: Net, result: ProbeResult, eps: float) -> bool:
    """Independent re-check of a probe hit: distances and ball volume."""
    if not result.found:
        return False
    md = _NetDistance(net).min_dist(result.center[None, :])
    vol_ok = abs(result.ball_volume - eps) <= 1e-9 * max(1.0, eps)
    inside = np.all(result.center >= result.radius - 1e-12) and \
        np.all(result.center <= 1.0 - result.radius + 1e-12)
    return bool(md[0] > result.radius and vol_ok and inside)


# ---------------------------------------------------------------------------
# exact largest empty rectangle (2-D)


def _anchored_scan(xs: np.ndarray, ys: np.ndarray) -> tuple[float, tuple]:
    """Best empty rectangle whose left edge passes through an input point or
    whose right edge is the right wall, for points sorted by x."""
    best_area, best_box = -1.0, (0.0, 0.0, 1.0, 1.0)
    n = len(xs)
    for i in range(n):
        strict = np.searchsorted(xs, xs[i], side="right")
        rx, ry = xs[strict:], ys[strict:]
        yi = ys[i]
        if len(rx):
            above = np.where(ry >= yi, ry, 1.0)
            below = np.where(ry <= yi, ry, 0.0)
            tt = np.minimum.accumulate(above)
            bb = np.maximum.accumulate(below)
            t_prev = np.concatenate(([1.0], tt[:-1]))
            b_prev = np.concatenate(([0.0], bb[:-1]))
            areas = (rx - xs[i]) * (t_prev - b_prev)
            j = int(np.argmax(areas))
            if areas[j] > best_area:
                best_area = float(areas[j])
                best_box = (xs[i], b_prev[j], rx[j], t_prev[j])
            t_full, b_full = float(tt[-1]), float(bb[-1])
        else:
            t_full, b_full = 1.0, 0.0
        wall = (1.0 - xs[i]) * (t_full - b_full)
        if wall > best_area:
            best_area = float(wall)
            best_box = (xs[i], b_full, 1.0, t_full)
    return best_area, best_box


def max_empty_rect_2d(points) -> AxisBox:
    """Largest-area axis-aligned rectangle in the unit square whose open
    interior avoids every input point (exact)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return AxisBox(np.zeros(2), np.ones(2))
    if pts.min() < 0.0 or pts.max() > 1.0:
        raise ValueError("points must lie in the unit square")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    xs, ys = pts[order, 0], pts[order, 1]

    # rectangles spanning the full width: gaps between the sorted y values
    yv = np.concatenate(([0.0], np.sort(ys), [1.0]))
    gaps = np.diff(yv)
    j = int(np.argmax(gaps))
    best_area = float(gaps[j])
    best_box = (0.0, float(yv[j]), 1.0, float(yv[j + 1]))

    a, box = _anchored_scan(xs, ys)
    if a > best_area:
        best_area, best_box = a, box
    # mirrored pass covers rectangles whose left edge is the left wall
    a, mbox = _anchored_scan(np.sort(1.0 - xs), ys[np.argsort(1.0 - xs, kind="stable")])
    if a > best_area:
        best_area = a
        best_box = (1.0 - mbox[2], mbox[1], 1.0 - mbox[0], mbox[3])
    x0, y0, x1, y1 = best_box
    return AxisBox(np.array([x0, y0]), np.array([x1, y1]))


# ---------------------------------------------------------------------------
# trials and scaling


_BODY_GENERATORS = {
    "ellipsoid": random_heavy_ellipsoid,
    "box": random_heavy_box,
    "polytope": random_heavy_polytope,
}


def serialize_body(body, seed: int) -> dict:
    if isinstance(body, Ellipsoid):
        return {"type": "ellipsoid", "seed": seed, "center": body.center.tolist(),
                "shape": body.shape.tolist(), "volume": ellipsoid_volume(body)}
    if isinstance(body, AxisBox):
        return {"type": "box", "seed": seed, "lo": body.lo.tolist(),
                "hi": body.hi.tolist(), "volume": body.volume}
    return {"type": "polytope", "seed": seed, "vertices": body.vertices.tolist(),
            "volume": body.volume}


def run_stab_trials(net: Net, body_class: str, trials: int, eps: float,
                    seed: int = 0, max_workers: int = 1) -> StabReport:
    """Seed-deterministic stabbing trials; adversary t uses seed + t."""
    if body_class not in _BODY_GENERATORS:
        raise ValueError(f"unknown body class {body_class!r}")
    gen = _BODY_GENERATORS[body_class]

    def one(t: int):
        body = gen(net.d, eps, seed + t)
        return t, body, stab_check(net, body)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(one, range(trials)))
    else:
        results = [one(t) for t in range(trials)]

    report = StabReport(total=trials)
    for t, body, idx in sorted(results, key=lambda r: r[0]):
        if idx is None:
            report.failures.append(serialize_body(body, seed + t))
        else:
            report.stabbed += 1
            report.witnesses.append((t, idx))
    return report


_BUILDERS = {
    "grid": lambda d, k, eps: grid_hyperplane_net(d, eps),
    "rk": lambda d, k, eps: recursive_kflat_net(d, k, eps),
    "ellipse2d": lambda d, k, eps: ellipse_net_2d(eps),
    "ell-dd": lambda d, k, eps: ellipsoid_net_dd(d, eps),
    "weak": lambda d, k, eps: weak_eps_net(d, eps),
    "vdc": lambda d, k, eps: box_net(2, eps),
    "hh": lambda d, k, eps: box_net(d, eps),
}


def build_net(construction: str, d: int, k: int, eps: float) -> Net:
    if construction not in _BUILDERS:
        raise ValueError(f"unknown construction {construction!r}")
    return _BUILDERS[construction](d, k, eps)


def scaling_report(construction: str, d: int, k: int,
                   eps_list) -> tuple[list[dict], float]:
    """Sizes and build times over decreasing eps, plus the log-log slope of
    size against 1/eps."""
    eps_list = list(eps_list)
    if not eps_list or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be non-empty and strictly decreasing")
    rows: list[dict] = []
    logs_x: list[float] = []
    logs_y: list[float] = []
    for eps in eps_list:
        t0 = time.perf_counter()
        net = build_net(construction, d, k, eps)
        millis = (time.perf_counter() - t0) * 1e3
        size = len(net)
        if size > 0:
            logs_x.append(math.log(1.0 / eps))
            logs_y.append(math.log(size))
        slope = float(np.polyfit(logs_x, logs_y, 1)[0]) if len(logs_x) >= 2 else float("nan")
        rows.append({"eps": eps, "size": size, "slope_so_far": slope, "millis": millis})
    final = rows[-1]["slope_so_far"] if rows else float("nan")
    return rows, final
