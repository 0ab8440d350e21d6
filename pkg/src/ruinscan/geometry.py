"""Planar geometry primitives: hulls, minimum-area rectangles, clipping.

All polygons are float64 arrays of shape (n, 2) in a projected meter CRS.
"Ring" means a closed polyline; functions state whether they expect the
closing vertex to be duplicated.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateGeometryError

__all__ = [
    "signed_area",
    "polygon_area",
    "ensure_ccw",
    "convex_hull",
    "min_area_rect",
    "point_in_polygon",
    "clip_polygon_convex",
    "ring_self_intersects",
    "rect_corners",
]


def signed_area(ring: np.ndarray) -> float:
    """Shoelace area of a ring (open or closed); CCW is positive."""
    r = np.asarray(ring, dtype=float)
    if len(r) >= 2 and np.array_equal(r[0], r[-1]):
        r = r[:-1]
    if len(r) < 3:
        return 0.0
    x, y = r[:, 0], r[:, 1]
    x2, y2 = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * y2 - x2 * y))


def polygon_area(ring: np.ndarray) -> float:
    return abs(signed_area(ring))


def ensure_ccw(ring: np.ndarray) -> np.ndarray:
    """Return the ring wound counter-clockwise (reversed if needed)."""
    return ring[::-1].copy() if signed_area(ring) < 0 else np.asarray(ring, dtype=float)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Convex hull (CCW, no duplicate closing vertex) by monotone chain.

    Collinear points are dropped; degenerate input yields < 3 hull points.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts
    # lexicographic sort is what np.unique already gives us
    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    return np.array(hull)


def min_area_rect(points: np.ndarray) -> tuple[float, float, float, float, float]:
    """Minimum-area enclosing rectangle of a point set.

    Rotating calipers over the convex hull: the optimal rectangle has one
    side flush with a hull edge, so scanning hull-edge directions is exact.

    Returns (center_x, center_y, len_major, len_minor, angle) with
    len_major >= len_minor and angle = major-axis direction in [0, pi).
    Raises DegenerateGeometryError for collinear input.
    """
    hull = convex_hull(points)
    if len(hull) < 3:
        raise DegenerateGeometryError(
            f"need >=3 non-collinear points for a bounding rectangle, hull has {len(hull)}"
        )
    edges = np.diff(np.vstack([hull, hull[:1]]), axis=0)
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    dirs = edges[lengths > 0] / lengths[lengths > 0, None]
    cos, sin = dirs[:, 0], dirs[:, 1]
    # project hull onto each candidate edge frame: u along edge, v normal
    u = cos[:, None] * hull[None, :, 0] + sin[:, None] * hull[None, :, 1]
    v = -sin[:, None] * hull[None, :, 0] + cos[:, None] * hull[None, :, 1]
    umin, umax = u.min(axis=1), u.max(axis=1)
    vmin, vmax = v.min(axis=1), v.max(axis=1)
    areas = (umax - umin) * (vmax - vmin)
    k = int(np.argmin(areas))
    du, dv = float(umax[k] - umin[k]), float(vmax[k] - vmin[k])
    if min(du, dv) <= 0.0:
        raise DegenerateGeometryError("degenerate (zero-width) bounding rectangle")
    cu, cv = (umax[k] + umin[k]) / 2.0, (vmax[k] + vmin[k]) / 2.0
    cx = cu * cos[k] - cv * sin[k]
    cy = cu * sin[k] + cv * cos[k]
    if du >= dv:
        major, minor = du, dv
        angle = float(np.arctan2(sin[k], cos[k]))
    else:
        major, minor = dv, du
        angle = float(np.arctan2(sin[k], cos[k])) + np.pi / 2.0
    angle = angle % np.pi
    return float(cx), float(cy), major, minor, angle


def point_in_polygon(point, ring: np.ndarray) -> bool:
    """Even-odd (ray casting) test; `ring` may or may not repeat its first vertex."""
    r = np.asarray(ring, dtype=float)
    if len(r) >= 2 and np.array_equal(r[0], r[-1]):
        r = r[:-1]
    x, y = float(point[0]), float(point[1])
    x1, y1 = r[:, 0], r[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    crosses = (y1 > y) != (y2 > y)
    denom = np.where(crosses, y2 - y1, 1.0)
    t = (y - y1) / denom
    xs = x1 + t * (x2 - x1)
    return bool(np.count_nonzero(crosses & (xs > x)) % 2)


def points_in_polygon(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Vectorized even-odd test of many points against one ring.

    For large rings the edges are bucketed by y so each query only scans
    edges whose y-span can straddle it; results match point_in_polygon.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.asarray(ring, dtype=float)
    if len(r) >= 2 and np.array_equal(r[0], r[-1]):
        r = r[:-1]
    x1, y1 = r[:, 0], r[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    qx, qy = pts[:, 0], pts[:, 1]

    if len(r) * len(pts) <= 200_000:
        crosses = (y1[None, :] > qy[:, None]) != (y2[None, :] > qy[:, None])
        denom = np.where(y2 == y1, 1.0, y2 - y1)
        t = (qy[:, None] - y1[None, :]) / denom[None, :]
        xs = x1[None, :] + t * (x2[None, :] - x1[None, :])
        return (np.count_nonzero(crosses & (xs > qx[:, None]), axis=1) % 2).astype(bool)

    # bucket edges by y band; ring edges are short so each lands in few bands
    ylo, yhi = float(r[:, 1].min()), float(r[:, 1].max())
    nb = max(16, int(np.sqrt(len(r))))
    scale = nb / max(yhi - ylo, 1e-12)
    b1 = np.clip(((np.minimum(y1, y2) - ylo) * scale).astype(int), 0, nb - 1)
    b2 = np.clip(((np.maximum(y1, y2) - ylo) * scale).astype(int), 0, nb - 1)
    spans = b2 - b1 + 1
    eidx = np.repeat(np.arange(len(r)), spans)
    starts = np.concatenate([[0], np.cumsum(spans)[:-1]])
    bid = b1[eidx] + (np.arange(len(eidx)) - np.repeat(starts, spans))
    order = np.argsort(bid, kind="stable")
    eidx = eidx[order]
    bounds = np.searchsorted(bid[order], np.arange(nb + 1))
    bucket_arrays = [eidx[bounds[b]:bounds[b + 1]] for b in range(nb)]

    out = np.zeros(len(pts), dtype=bool)
    qb = np.clip(((qy - ylo) * scale).astype(int), 0, nb - 1)
    inside_range = (qy >= ylo) & (qy <= yhi)
    for b in np.unique(qb[inside_range]):
        sel = np.nonzero(inside_range & (qb == b))[0]
        e = bucket_arrays[b]
        if len(e) == 0:
            continue
        ey1, ey2 = y1[e], y2[e]
        crosses = (ey1[None, :] > qy[sel, None]) != (ey2[None, :] > qy[sel, None])
        denom = np.where(ey2 == ey1, 1.0, ey2 - ey1)
        t = (qy[sel, None] - ey1[None, :]) / denom[None, :]
        xs = x1[e][None, :] + t * (x2[e][None, :] - x1[e][None, :])
        out[sel] = (np.count_nonzero(crosses & (xs > qx[sel, None]), axis=1) % 2).astype(bool)
    return out


def _edge_intersection(p, q, a, b):
    # intersection of segment p-q with the (infinite) line a-b,
    # assuming p and q sit on opposite sides of that line
    ex, ey = b[0] - a[0], b[1] - a[1]
    cp = ex * (p[1] - a[1]) - ey * (p[0] - a[0])
    cq = ex * (q[1] - a[1]) - ey * (q[0] - a[0])
    t = cp / (cp - cq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def clip_polygon_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of `subject` against a convex CCW `clip` ring.

    Both rings are given without the duplicated closing vertex. Returns the
    clipped polygon vertices (possibly empty). For a non-convex subject the
    output may contain degenerate bridging edges; its shoelace area still
    equals the true intersection area.
    """
    out = [(float(p[0]), float(p[1])) for p in np.asarray(subject, dtype=float)]
    cl = [(float(p[0]), float(p[1])) for p in np.asarray(clip, dtype=float)]
    for i in range(len(cl)):
        a, b = cl[i], cl[(i + 1) % len(cl)]
        if not out:
            break
        ex, ey = b[0] - a[0], b[1] - a[1]
        inp = out
        out = []
        s = inp[-1]
        s_in = ex * (s[1] - a[1]) - ey * (s[0] - a[0]) >= 0
        for e in inp:
            e_in = ex * (e[1] - a[1]) - ey * (e[0] - a[0]) >= 0
            if e_in:
                if not s_in:
                    out.append(_edge_intersection(s, e, a, b))
                out.append(e)
            elif s_in:
                out.append(_edge_intersection(s, e, a, b))
            s, s_in = e, e_in
    return np.array(out, dtype=float).reshape(-1, 2)


def _proper_intersect(p1, p2, p3, p4) -> bool:
    # True if open segments p1-p2 and p3-p4 cross or overlap collinearly
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    def on_segment(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_segment(p1, p2, p3):
        return True
    if o2 == 0 and on_segment(p1, p2, p4):
        return True
    if o3 == 0 and on_segment(p3, p4, p1):
        return True
    if o4 == 0 and on_segment(p3, p4, p2):
        return True
    return False


def ring_self_intersects(ring: np.ndarray) -> bool:
    """O(n^2) simplicity check on a ring without the closing duplicate."""
    r = np.asarray(ring, dtype=float)
    n = len(r)
    segs = [(tuple(r[i]), tuple(r[(i + 1) % n])) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent segments share an endpoint by construction
            if _proper_intersect(*segs[i], *segs[j]):
                return True
    return False


def rect_corners(cx: float, cy: float, len_major: float, len_minor: float, angle: float) -> np.ndarray:
    """CCW corner coordinates (4, 2) of a rotated rectangle."""
    ca, sa = np.cos(angle), np.sin(angle)
    hu, hv = len_major / 2.0, len_minor / 2.0
    local = np.array([(-hu, -hv), (hu, -hv), (hu, hv), (-hu, hv)])
    x = cx + local[:, 0] * ca - local[:, 1] * sa
    y = cy + local[:, 0] * sa + local[:, 1] * ca
    return np.column_stack([x, y])
