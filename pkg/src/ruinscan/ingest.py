"""Point-cloud and annotation ingestion.

Input formats (see README):
  * XYZ: UTF-8 text, one return per line as ``x y z`` (extra columns are
    ignored), ``#`` starts a comment line. Coordinates are meters in a
    projected CRS; no reprojection is performed.
  * Annotations: GeoJSON FeatureCollection of simple Polygons in the same
    CRS. Only outer rings are used; holes are dropped with a warning.
"""

from __future__ import annotations

import json
import logging
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import InputFormatError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_GROUPING_EPS_M = 1e-6

PointRecord = namedtuple("PointRecord", ["x", "y", "z"])
GroundPoint = namedtuple("GroundPoint", ["x", "y", "z0"])


@dataclass
class PointCloud:
    """Raw multi-return samples in file order: ``xyz`` has one row per return."""

    xyz: np.ndarray  # (n, 3) float64
    bounds: tuple[float, float, float, float] = field(init=False)  # minx, miny, maxx, maxy

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=float)
        if self.xyz.ndim != 2 or self.xyz.shape[1] != 3 or len(self.xyz) == 0:
            raise ValidationError("point cloud must be a non-empty (n, 3) array")
        if not np.all(np.isfinite(self.xyz)):
            raise ValidationError("point cloud contains non-finite coordinates")
        self.bounds = (
            float(self.xyz[:, 0].min()),
            float(self.xyz[:, 1].min()),
            float(self.xyz[:, 0].max()),
            float(self.xyz[:, 1].max()),
        )

    def __len__(self) -> int:
        return len(self.xyz)

    def records(self):
        """Iterate rows as named (x, y, z) tuples; meant for small clouds."""
        for x, y, z in self.xyz:
            yield PointRecord(float(x), float(y), float(z))


@dataclass
class AnnotationPolygon:
    """A surveyed structure footprint: closed CCW ring plus shoelace area."""

    id: str
    ring: np.ndarray  # (n, 2), first vertex == last vertex
    area_sqm: float


def _scan_for_bad_line(path) -> None:
    """Slow path: locate the first malformed line to report its number."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) < 3:
                raise InputFormatError(f"{path}: line {lineno}: expected at least 3 fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts[:3]]
            except ValueError:
                raise InputFormatError(f"{path}: line {lineno}: non-numeric field") from None
            if not all(np.isfinite(v) for v in vals):
                raise InputFormatError(f"{path}: line {lineno}: non-finite coordinate")


def load_xyz(path) -> PointCloud:
    """Parse an XYZ file into a PointCloud, preserving line order."""
    try:
        data = np.loadtxt(path, comments="#", usecols=(0, 1, 2), dtype=float, ndmin=2)
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    except ValueError:
        _scan_for_bad_line(path)  # raises with a line number
        raise InputFormatError(f"{path}: malformed content")  # pragma: no cover
    if data.size == 0:
        raise InputFormatError(f"{path}: no data lines")
    if not np.all(np.isfinite(data)):
        _scan_for_bad_line(path)
        raise InputFormatError(f"{path}: non-finite coordinate")  # pragma: no cover
    return PointCloud(xyz=data)


def reduce_to_ground(cloud: PointCloud, eps_xy: float = DEFAULT_GROUPING_EPS_M) -> np.ndarray:
    """Collapse multi-return records to one lowest return per location.

    Locations are grouped by binning x and y on an ``eps_xy`` grid (the
    data's location index is discrete; this is not spatial clustering).
    Returns an (m, 3) array of (x, y, z0) sorted by binned location, where
    each row is the full record of the group's lowest return. No outlier
    filtering is applied.
    """
    if eps_xy <= 0:
        raise ValidationError("eps_xy must be > 0")
    if len(cloud) == 0:
        raise ValidationError("empty point cloud")
    keys = np.round(cloud.xyz[:, :2] / eps_xy).astype(np.int64)
    # order by (key_x, key_y, z, file index): the first row of each group is
    # the group's lowest return, earliest-in-file on exact z ties
    idx = np.lexsort((np.arange(len(cloud)), cloud.xyz[:, 2], keys[:, 1], keys[:, 0]))
    k_sorted = keys[idx]
    new_group = np.ones(len(idx), dtype=bool)
    new_group[1:] = np.any(k_sorted[1:] != k_sorted[:-1], axis=1)
    return cloud.xyz[idx[new_group]].copy()


def _extract_ring(coords, ann_id: str, path) -> np.ndarray:
    ring = np.asarray(coords, dtype=float)
    if ring.ndim != 2 or ring.shape[1] < 2:
        raise InputFormatError(f"{path}: annotation {ann_id}: malformed ring coordinates")
    ring = ring[:, :2]
    if len(ring) >= 2 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    if len(np.unique(ring, axis=0)) < 3:
        raise InputFormatError(f"{path}: annotation {ann_id}: ring has fewer than 3 distinct vertices")
    if geometry.ring_self_intersects(ring):
        raise InputFormatError(f"{path}: annotation {ann_id}: self-intersecting ring")
    return ring


def load_annotations(path, warn=log.warning) -> list[AnnotationPolygon]:
    """Load annotation polygons; rings are normalized closed and CCW."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: invalid JSON: {exc}") from exc
    if doc.get("type") != "FeatureCollection" or "features" not in doc:
        raise InputFormatError(f"{path}: expected a GeoJSON FeatureCollection")

    out: list[AnnotationPolygon] = []
    for i, feat in enumerate(doc["features"]):
        geom = feat.get("geometry") or {}
        ann_id = str(feat.get("properties", {}).get("id", feat.get("id", f"ann{i:04d}")))
        if geom.get("type") != "Polygon":
            raise InputFormatError(
                f"{path}: annotation {ann_id}: geometry type {geom.get('type')!r} is not Polygon"
            )
        rings = geom.get("coordinates") or []
        if not rings:
            raise InputFormatError(f"{path}: annotation {ann_id}: empty coordinates")
        if len(rings) > 1:
            warn("annotation %s: %d hole ring(s) ignored (holes unsupported)", ann_id, len(rings) - 1)
        ring = _extract_ring(rings[0], ann_id, path)
        area = geometry.polygon_area(ring)
        if area <= 0:
            raise InputFormatError(f"{path}: annotation {ann_id}: zero-area ring")
        ring = geometry.ensure_ccw(ring)
        closed = np.vstack([ring, ring[:1]])
        out.append(AnnotationPolygon(id=ann_id, ring=closed, area_sqm=float(area)))
    return out
