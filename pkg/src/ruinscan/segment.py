"""Level-set segmentation of the local DEM.

Pipeline: marching-squares contours at a fixed elevation -> keep outermost
contours only -> minimum-area rotated bounding box per contour -> rule
prefilter (area / aspect / circumference). The contouring level can be
auto-tuned by sweeping the 256 grayscale levels of the local DEM and
maximizing the number of surviving candidates.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import geometry
from .errors import DegenerateGeometryError, ValidationError
from .raster import Raster, gray_level_to_value, to_grayscale

GRAY_LEVELS = 256


@dataclass(eq=False)
class Contour:
    """Closed level-set polyline in world meters (first vertex == last)."""

    vertices: np.ndarray  # (n, 2)
    level: float
    is_outer: bool = False

    @cached_property
    def area_sqm(self) -> float:
        return geometry.polygon_area(self.vertices)

    @cached_property
    def bbox(self) -> tuple[float, float, float, float]:
        xs, ys = self.vertices[:, 0], self.vertices[:, 1]
        return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())


@dataclass(frozen=True)
class Mbb:
    """Minimum-area rotated rectangle around a contour."""

    center_x: float
    center_y: float
    len_major: float
    len_minor: float
    angle: float  # major-axis direction, radians in [0, pi)

    @property
    def area_sqm(self) -> float:
        return self.len_major * self.len_minor

    @property
    def circumference_m(self) -> float:
        return 2.0 * (self.len_major + self.len_minor)

    @property
    def aspect_ratio(self) -> float:
        return self.len_minor / self.len_major

    def corners(self) -> np.ndarray:
        return geometry.rect_corners(
            self.center_x, self.center_y, self.len_major, self.len_minor, self.angle
        )

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """Rotate points into the box frame (u along major axis, v minor)."""
        p = np.asarray(points, dtype=float) - (self.center_x, self.center_y)
        ca, sa = np.cos(self.angle), np.sin(self.angle)
        return np.column_stack([p[:, 0] * ca + p[:, 1] * sa, -p[:, 0] * sa + p[:, 1] * ca])

    def contains_points(self, points: np.ndarray, slack: float = 1e-6) -> np.ndarray:
        uv = self.to_local(points)
        return (np.abs(uv[:, 0]) <= self.len_major / 2 + slack) & (
            np.abs(uv[:, 1]) <= self.len_minor / 2 + slack
        )


@dataclass(frozen=True)
class PrefilterRules:
    """Size/shape gates a candidate box must pass (all bounds inclusive)."""

    min_area_sqm: float = 3.0
    max_aspect: float = 10.0  # reject boxes thinner than 1:max_aspect
    min_circumference_m: float = 10.0
    max_circumference_m: float = 200.0

    def __post_init__(self):
        if min(self.min_area_sqm, self.max_aspect, self.min_circumference_m) <= 0:
            raise ValidationError("prefilter rule values must be positive")
        if self.min_circumference_m >= self.max_circumference_m:
            raise ValidationError("prefilter circumference bounds must satisfy min < max")


# ---------------------------------------------------------------------------
# marching squares
# ---------------------------------------------------------------------------

# For each cell case (corner bits TL=1, TR=2, BR=4, BL=8, "inside" means
# value > level) the pair(s) of crossed cell edges a contour strand joins.
_SIMPLE_CASES = {
    1: (("top", "left"),),
    2: (("top", "right"),),
    3: (("left", "right"),),
    4: (("right", "bottom"),),
    6: (("top", "bottom"),),
    7: (("left", "bottom"),),
    8: (("left", "bottom"),),
    9: (("top", "bottom"),),
    11: (("right", "bottom"),),
    12: (("left", "right"),),
    13: (("top", "right"),),
    14: (("top", "left"),),
}


def _padded_values(dem: Raster) -> np.ndarray:
    """Values with nodata filled and a one-pixel ring, both strictly below
    any level inside the raster's value range, so every contour closes."""
    vals = dem.valid_values
    if vals.size == 0:
        raise ValidationError("raster has no valid pixels")
    drop = max(1.0, float(vals.max() - vals.min()))
    fill = float(vals.min()) - 3.0 * drop
    work = dem.values.copy()
    work[dem.nodata_mask] = fill
    return np.pad(work, 1, mode="constant", constant_values=fill)


class _CellGrid:
    """Reusable scratch state for marching squares over one padded grid."""

    def __init__(self, vp: np.ndarray, origin_x: float, origin_y: float, resolution: float):
        self.vp = vp
        self.origin_x = origin_x
        self.origin_y = origin_y
        self.resolution = resolution
        h2, w2 = vp.shape
        self.h2, self.w2 = h2, w2
        self.n_horiz = h2 * (w2 - 1)  # ids of horizontal edges come first
        n_edges = self.n_horiz + (h2 - 1) * w2
        self.pos_x = np.empty(n_edges)
        self.pos_y = np.empty(n_edges)

    def _edge_ids(self, name: str, r: np.ndarray, c: np.ndarray) -> np.ndarray:
        w2 = self.w2
        if name == "top":
            return r * (w2 - 1) + c
        if name == "bottom":
            return (r + 1) * (w2 - 1) + c
        if name == "left":
            return self.n_horiz + r * w2 + c
        return self.n_horiz + r * w2 + c + 1  # right

    def segments_at(self, level: float) -> tuple[np.ndarray, np.ndarray]:
        """All cell-local contour strands as pairs of crossing-edge ids.

        Also refreshes the crossing coordinate lookup (pos_x/pos_y, indexed
        by edge id, in padded pixel-index space).
        """
        vp, w2 = self.vp, self.w2
        inside = vp > level

        cross_h = inside[:, :-1] != inside[:, 1:]
        hr, hc = np.nonzero(cross_h)
        v0 = vp[hr, hc]
        t = (level - v0) / (vp[hr, hc + 1] - v0)
        hid = hr * (w2 - 1) + hc
        self.pos_x[hid] = hc + t
        self.pos_y[hid] = hr

        cross_v = inside[:-1, :] != inside[1:, :]
        vr, vc = np.nonzero(cross_v)
        v0 = vp[vr, vc]
        t = (level - v0) / (vp[vr + 1, vc] - v0)
        vid = self.n_horiz + vr * w2 + vc
        self.pos_x[vid] = vc
        self.pos_y[vid] = vr + t

        tl = inside[:-1, :-1]
        code = (
            tl.astype(np.uint8)
            + 2 * inside[:-1, 1:]
            + 4 * inside[1:, 1:]
            + 8 * inside[1:, :-1]
        )

        seg_a: list[np.ndarray] = []
        seg_b: list[np.ndarray] = []
        for value, pairs in _SIMPLE_CASES.items():
            r, c = np.nonzero(code == value)
            if len(r) == 0:
                continue
            for e1, e2 in pairs:
                seg_a.append(self._edge_ids(e1, r, c))
                seg_b.append(self._edge_ids(e2, r, c))
        # saddle cells: the cell-center average decides which diagonal connects
        for value in (5, 10):
            r, c = np.nonzero(code == value)
            if len(r) == 0:
                continue
            center_inside = (vp[r, c] + vp[r, c + 1] + vp[r + 1, c] + vp[r + 1, c + 1]) > 4.0 * level
            if value == 5:  # TL+BR inside
                first = (("top", "right"), ("bottom", "left"))
                second = (("top", "left"), ("right", "bottom"))
            else:  # TR+BL inside
                first = (("top", "left"), ("right", "bottom"))
                second = (("top", "right"), ("bottom", "left"))
            for mask, table in ((center_inside, first), (~center_inside, second)):
                rm, cm = r[mask], c[mask]
                if len(rm) == 0:
                    continue
                for e1, e2 in table:
                    seg_a.append(self._edge_ids(e1, rm, cm))
                    seg_b.append(self._edge_ids(e2, rm, cm))
        if not seg_a:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        return np.concatenate(seg_a), np.concatenate(seg_b)

    def to_world(self, edge_ids: list[int]) -> np.ndarray:
        ids = np.asarray(edge_ids, dtype=np.int64)
        x = self.origin_x + (self.pos_x[ids] - 1.0) * self.resolution
        y = self.origin_y + (self.pos_y[ids] - 1.0) * self.resolution
        return np.column_stack([x, y])


class _LinkedStrands:
    """Strand linkage: pairs shared crossing edges and exposes the cycles."""

    def __init__(self, seg_a: np.ndarray, seg_b: np.ndarray):
        self.n_seg = len(seg_a)
        self.endpoint = np.concatenate([seg_a, seg_b])  # edge id per slot
        order = np.argsort(self.endpoint, kind="stable")
        pa, pb = order[0::2], order[1::2]
        self.partner = np.empty(2 * self.n_seg, dtype=np.int64)
        self.partner[pa] = pb
        self.partner[pb] = pa
        graph = coo_matrix(
            (np.ones(self.n_seg, dtype=np.int8), (pa % self.n_seg, pb % self.n_seg)),
            shape=(self.n_seg, self.n_seg),
        )
        self.n_comp, self.comp = connected_components(graph, directed=False)

    def component_bboxes(self, pos_x: np.ndarray, pos_y: np.ndarray) -> np.ndarray:
        """(n_comp, 4) min-x, min-y, max-x, max-y in padded index space."""
        comp2 = np.concatenate([self.comp, self.comp])
        cx = pos_x[self.endpoint]
        cy = pos_y[self.endpoint]
        bb = np.empty((self.n_comp, 4))
        bb[:, 0] = np.inf
        bb[:, 1] = np.inf
        bb[:, 2] = -np.inf
        bb[:, 3] = -np.inf
        np.minimum.at(bb[:, 0], comp2, cx)
        np.minimum.at(bb[:, 1], comp2, cy)
        np.maximum.at(bb[:, 2], comp2, cx)
        np.maximum.at(bb[:, 3], comp2, cy)
        return bb

    def walk(self, component: int, start_segment: int) -> list[int]:
        """Ordered crossing-edge ids around one cycle."""
        n, partner, endpoint = self.n_seg, self.partner, self.endpoint
        start = start_segment  # slot of the segment's first endpoint
        ids = [int(endpoint[start])]
        s = partner[(start + n) % (2 * n)]
        while s != start:
            ids.append(int(endpoint[s]))
            s = partner[(s + n) % (2 * n)]
        return ids

    def first_segments(self) -> np.ndarray:
        """One representative segment index per component, in component order."""
        first = np.full(self.n_comp, -1, dtype=np.int64)
        seen = np.zeros(self.n_comp, dtype=bool)
        for i, c in enumerate(self.comp):
            if not seen[c]:
                seen[c] = True
                first[c] = i
        return first


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def _cycles_to_contours(grid: _CellGrid, links: _LinkedStrands, level: float,
                        components=None) -> list[tuple[int, Contour]]:
    """Ordered (component id, contour) pairs; degenerate slivers are dropped."""
    first = np.full(links.n_comp, -1, dtype=np.int64)
    uniq, first_idx = np.unique(links.comp, return_index=True)
    first[uniq] = first_idx
    chosen = range(links.n_comp) if components is None else components
    out: list[tuple[int, Contour]] = []
    for comp_id in chosen:
        seg0 = int(first[comp_id])
        if seg0 < 0:
            continue
        verts = grid.to_world(links.walk(comp_id, seg0))
        if len(verts) < 3:
            continue
        if np.ptp(verts[:, 0]) <= 0.0 or np.ptp(verts[:, 1]) <= 0.0:
            continue  # zero-extent sliver (values exactly at level)
        if geometry.signed_area(verts) < 0:
            verts = verts[::-1]
        closed = np.vstack([verts, verts[:1]])
        out.append((int(comp_id), Contour(vertices=closed, level=level)))
    return out


def extract_contours(local_dem: Raster, level: float) -> list[Contour]:
    """Marching-squares isolines of ``values > level`` with linear sub-cell
    interpolation.

    Level sets touching the raster border are closed along it (a one-pixel
    low ring is padded around the grid). Levels outside the raster's value
    range yield an empty list. All returned contours are closed and CCW.
    """
    vals = local_dem.valid_values
    if vals.size == 0:
        raise ValidationError("raster has no valid pixels")
    if level < float(vals.min()) or level >= float(vals.max()):
        return []
    grid = _CellGrid(
        _padded_values(local_dem), local_dem.origin_x, local_dem.origin_y, local_dem.resolution
    )
    seg_a, seg_b = grid.segments_at(level)
    if len(seg_a) == 0:
        return []
    links = _LinkedStrands(seg_a, seg_b)
    return [c for _, c in _cycles_to_contours(grid, links, level)]


def _containment_drop_mask(contours: list[Contour]) -> np.ndarray:
    """True where a contour sits strictly inside another contour's interior.

    Containment is decided by one even-odd test vertex after a bounding-box
    prescreen; same-level level sets cannot cross, so one vertex suffices.
    """
    n = len(contours)
    drop = np.zeros(n, dtype=bool)
    if n <= 1:
        return drop
    boxes = np.array([c.bbox for c in contours])
    tol = 1e-9
    test_pts = np.array([c.vertices[0] for c in contours])
    # group queries by container to batch the point-in-polygon tests
    inside_box = (
        (boxes[None, :, 0] >= boxes[:, None, 0] - tol)
        & (boxes[None, :, 1] >= boxes[:, None, 1] - tol)
        & (boxes[None, :, 2] <= boxes[:, None, 2] + tol)
        & (boxes[None, :, 3] <= boxes[:, None, 3] + tol)
    )
    np.fill_diagonal(inside_box, False)
    for j in range(n):  # j = candidate container
        cand = np.nonzero(inside_box[j] & ~drop)[0]
        if len(cand) == 0:
            continue
        hits = geometry.points_in_polygon(test_pts[cand], contours[j].vertices)
        drop[cand[hits]] = True
    return drop


def reduce_hierarchy(contours: list[Contour]) -> list[Contour]:
    """Keep only outermost contours (those contained in no other contour)."""
    drop = _containment_drop_mask(contours)
    return [replace(c, is_outer=True) for c, d in zip(contours, drop) if not d]


def min_bounding_box(contour) -> Mbb:
    """Minimum-area rotated rectangle enclosing a contour (or point array)."""
    pts = contour.vertices if isinstance(contour, Contour) else np.asarray(contour, dtype=float)
    cx, cy, major, minor, angle = geometry.min_area_rect(pts)
    return Mbb(center_x=cx, center_y=cy, len_major=major, len_minor=minor, angle=angle)


def passes_prefilter(mbb: Mbb, rules: PrefilterRules) -> bool:
    return (
        mbb.area_sqm >= rules.min_area_sqm
        and mbb.aspect_ratio >= 1.0 / rules.max_aspect
        and rules.min_circumference_m <= mbb.circumference_m <= rules.max_circumference_m
    )


def prefilter(mbbs: list[Mbb], rules: PrefilterRules) -> list[Mbb]:
    """Order-preserving filter of boxes by the size/shape rules."""
    return [m for m in mbbs if passes_prefilter(m, rules)]


def candidates_at_level(
    local_dem: Raster,
    level: float,
    rules: PrefilterRules,
    _grid: _CellGrid | None = None,
) -> list[tuple[Contour, Mbb]]:
    """Contour + box pairs surviving hierarchy reduction and the prefilter.

    Matches prefilter(min_bounding_box(reduce_hierarchy(extract_contours)))
    exactly, but skips work that provably cannot change the result: contours
    whose axis-aligned bbox is too small to pass the prefilter (and too
    small to contain any candidate) are dropped before linking order is
    recovered, and oversized contours are kept only as containment testers.
    """
    vals = local_dem.valid_values
    if vals.size == 0:
        raise ValidationError("raster has no valid pixels")
    if level < float(vals.min()) or level >= float(vals.max()):
        return []
    grid = _grid or _CellGrid(
        _padded_values(local_dem), local_dem.origin_x, local_dem.origin_y, local_dem.resolution
    )
    seg_a, seg_b = grid.segments_at(level)
    if len(seg_a) == 0:
        return []
    links = _LinkedStrands(seg_a, seg_b)
    bb = links.component_bboxes(grid.pos_x, grid.pos_y) * grid.resolution
    w = bb[:, 2] - bb[:, 0]
    h = bb[:, 3] - bb[:, 1]
    # necessary conditions on the minimum rectangle, from the AABB:
    #   circumference <= 4*hypot(w, h), circumference >= 2*max(w, h),
    #   area <= w*h
    small = (np.hypot(w, h) < rules.min_circumference_m / 4.0) | (
        w * h < rules.min_area_sqm
    )
    oversized = 2.0 * np.maximum(w, h) > rules.max_circumference_m
    keep_ids = np.nonzero(~small)[0]
    pairs = _cycles_to_contours(grid, links, level, components=keep_ids)
    contours = [c for _, c in pairs]
    kept_over = [bool(oversized[comp_id]) for comp_id, _ in pairs]
    drop = _containment_drop_mask(contours)
    out: list[tuple[Contour, Mbb]] = []
    for contour, dropped, over in zip(contours, drop, kept_over):
        if dropped or over:
            continue
        try:
            mbb = min_bounding_box(contour)
        except DegenerateGeometryError:
            continue
        if passes_prefilter(mbb, rules):
            out.append((replace(contour, is_outer=True), mbb))
    return out
