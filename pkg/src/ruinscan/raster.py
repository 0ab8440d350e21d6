"""Regular elevation grids: nearest-neighbor rasterization and the
high-pass "local relief" transform that strips terrain-scale wavelengths.

Raster layout: ``values[row, col]`` with the center of pixel (0, 0) at
(origin_x, origin_y) and y increasing with the row index. Persistence is a
raw little-endian float32 grid plus a JSON sidecar header; 8-bit grayscale
exports are binary PGM (P5).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputFormatError, ValidationError

DEFAULT_RESOLUTION_M = 0.3  # matches the typical scan point spacing
DEFAULT_MAX_SEARCH_M = 3.0
DEFAULT_CUTOFF_WAVELENGTH_M = 3.0  # ~10 pixels at 0.3 m
NODATA_SENTINEL = -9999.0


@dataclass
class Raster:
    origin_x: float
    origin_y: float
    resolution: float
    values: np.ndarray  # (height, width) float64
    nodata_mask: np.ndarray | None = None  # True where no data

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.size == 0:
            raise ValidationError("raster values must be a non-empty 2-d array")
        if self.resolution <= 0:
            raise ValidationError("raster resolution must be > 0")
        if self.nodata_mask is None:
            self.nodata_mask = np.zeros(self.values.shape, dtype=bool)
        else:
            self.nodata_mask = np.asarray(self.nodata_mask, dtype=bool)
            if self.nodata_mask.shape != self.values.shape:
                raise ValidationError("nodata mask shape must match values")
        if not np.all(np.isfinite(self.values[~self.nodata_mask])):
            raise ValidationError("raster has non-finite values outside the nodata mask")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def valid_values(self) -> np.ndarray:
        return self.values[~self.nodata_mask]

    def x_coords(self) -> np.ndarray:
        return self.origin_x + np.arange(self.width) * self.resolution

    def y_coords(self) -> np.ndarray:
        return self.origin_y + np.arange(self.height) * self.resolution

    def copy_with(self, values: np.ndarray, nodata_mask: np.ndarray | None = None) -> "Raster":
        return Raster(
            origin_x=self.origin_x,
            origin_y=self.origin_y,
            resolution=self.resolution,
            values=values,
            nodata_mask=self.nodata_mask.copy() if nodata_mask is None else nodata_mask,
        )


@dataclass(frozen=True)
class LocalizeParams:
    """High-pass settings: wavelengths above the cutoff are suppressed."""

    cutoff_wavelength_m: float = DEFAULT_CUTOFF_WAVELENGTH_M
    rolloff: str = "gaussian"  # "gaussian" (smooth, default) or "ideal" (hard cutoff)

    def __post_init__(self):
        if self.rolloff not in ("gaussian", "ideal"):
            raise ValidationError(f"unknown rolloff {self.rolloff!r}")
        if self.cutoff_wavelength_m <= 0:
            raise ValidationError("cutoff wavelength must be > 0")


def grid_nearest(
    ground_points: np.ndarray,
    resolution: float = DEFAULT_RESOLUTION_M,
    max_search: float = DEFAULT_MAX_SEARCH_M,
) -> Raster:
    """Nearest-neighbor gridding of (x, y, z0) ground points.

    Every cell takes the elevation of its nearest point (Euclidean in the
    plane); exact distance ties go to the lowest point index. Cells farther
    than ``max_search`` from any point are nodata. The grid spans the point
    bounds plus one cell of slack (``ceil(span / resolution) + 1`` cells).
    """
    pts = np.asarray(ground_points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 3 or len(pts) == 0:
        raise ValidationError("need a non-empty (m, 3) ground point array")
    if resolution <= 0 or max_search <= 0:
        raise ValidationError("resolution and max_search must be > 0")
    minx, miny = pts[:, 0].min(), pts[:, 1].min()
    maxx, maxy = pts[:, 0].max(), pts[:, 1].max()
    width = int(math.ceil((maxx - minx) / resolution - 1e-9)) + 1
    height = int(math.ceil((maxy - miny) / resolution - 1e-9)) + 1
    xs = minx + np.arange(width) * resolution
    ys = miny + np.arange(height) * resolution
    cx, cy = np.meshgrid(xs, ys)
    centers = np.column_stack([cx.ravel(), cy.ravel()])

    tree = cKDTree(pts[:, :2])
    k = min(2, len(pts))
    dist, idx = tree.query(centers, k=k)
    if k == 1:
        dist = dist[:, None]
        idx = idx[:, None]
    nearest_d = dist[:, 0]
    nearest_i = idx[:, 0].astype(np.int64)
    if k == 2:
        # enforce the lowest-index tie rule; cKDTree's own choice is arbitrary
        ties = np.isclose(dist[:, 0], dist[:, 1], rtol=1e-12, atol=1e-12)
        for cell in np.nonzero(ties)[0]:
            r = nearest_d[cell] * (1 + 1e-9) + 1e-12
            cand = tree.query_ball_point(centers[cell], r)
            d = np.hypot(*(pts[cand, :2] - centers[cell]).T)
            dmin = d.min()
            nearest_i[cell] = min(c for c, dc in zip(cand, d) if dc <= dmin * (1 + 1e-12))

    values = pts[nearest_i, 2].reshape(height, width)
    mask = (nearest_d > max_search).reshape(height, width)
    values = values.copy()
    values[mask] = 0.0
    return Raster(origin_x=float(minx), origin_y=float(miny), resolution=float(resolution),
                  values=values, nodata_mask=mask)


def highpass_transfer(wavelength_m: float | np.ndarray, params: LocalizeParams):
    """Analytic filter response at a given wavelength (1 = fully retained)."""
    lam = np.asarray(wavelength_m, dtype=float)
    ratio = params.cutoff_wavelength_m / lam  # == k / k_cutoff
    if params.rolloff == "gaussian":
        return 1.0 - np.exp(-(ratio**2))
    return (ratio >= 1.0).astype(float)


def localize(dem: Raster, params: LocalizeParams | None = None) -> Raster:
    """Subtract the long-wavelength component of a DEM (relief localization).

    Nodata cells are pre-filled with the valid mean, the grid is mirror-
    extended to twice its size to avoid wrap-around edge artifacts, and the
    radially symmetric high-pass transfer is applied in the frequency
    domain. The output is forced to exactly zero mean over valid pixels and
    keeps the input geometry and nodata mask.
    """
    params = params or LocalizeParams()
    if params.cutoff_wavelength_m <= 2.0 * dem.resolution:
        raise ValidationError(
            f"cutoff wavelength {params.cutoff_wavelength_m} must exceed twice the "
            f"resolution ({dem.resolution})"
        )
    valid = ~dem.nodata_mask
    if np.count_nonzero(valid) < 16 or min(dem.values.shape) < 4:
        raise ValidationError("localize needs at least 4x4 valid pixels")
    filled = dem.values.copy()
    if not valid.all():
        filled[dem.nodata_mask] = dem.values[valid].mean()

    h, w = filled.shape
    padded = np.pad(filled, ((0, h), (0, w)), mode="symmetric")
    fy = np.fft.fftfreq(2 * h, d=dem.resolution)
    fx = np.fft.rfftfreq(2 * w, d=dem.resolution)
    k = 2.0 * np.pi * np.hypot(fy[:, None], fx[None, :])
    k_cut = 2.0 * np.pi / params.cutoff_wavelength_m
    if params.rolloff == "gaussian":
        transfer = 1.0 - np.exp(-((k / k_cut) ** 2))
    else:
        transfer = (k >= k_cut).astype(float)
    spectrum = np.fft.rfft2(padded)
    out = np.fft.irfft2(spectrum * transfer, s=(2 * h, 2 * w))[:h, :w]
    out = np.ascontiguousarray(out)
    out[dem.nodata_mask] = 0.0
    out[valid] -= out[valid].mean()  # pin the valid-pixel mean at exactly zero
    return dem.copy_with(values=out)


def to_grayscale(dem: Raster) -> Raster:
    """Affine map of valid values onto integers 0..255 (min->0, max->255).

    Rounding is half-up so the midpoint of the range lands on 128.
    """
    vals = dem.valid_values
    if vals.size == 0:
        raise ValidationError("raster has no valid pixels")
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= lo:
        raise ValidationError("cannot grayscale a constant (zero-range) raster")
    g = np.zeros_like(dem.values)
    valid = ~dem.nodata_mask
    g[valid] = np.floor((dem.values[valid] - lo) / (hi - lo) * 255.0 + 0.5)
    g = np.clip(g, 0, 255)
    return dem.copy_with(values=g)


def gray_level_to_value(dem: Raster, gray_level: float) -> float:
    """Map a 0..255 grayscale level back to the raster's value units."""
    vals = dem.valid_values
    lo, hi = float(vals.min()), float(vals.max())
    return lo + (hi - lo) * float(gray_level) / 255.0


def write_raster(raster: Raster, path_base) -> tuple[Path, Path]:
    """Write ``<base>.f32`` (little-endian float32 grid) + ``<base>.json`` header."""
    base = Path(path_base)
    raw = raster.values.astype("<f4")
    raw[raster.nodata_mask] = np.float32(NODATA_SENTINEL)
    raw_path = base.with_suffix(".f32")
    raw_path.write_bytes(raw.tobytes(order="C"))
    header = {
        "originX": raster.origin_x,
        "originY": raster.origin_y,
        "resolution": raster.resolution,
        "width": raster.width,
        "height": raster.height,
        "nodata": NODATA_SENTINEL,
    }
    json_path = base.with_suffix(".json")
    json_path.write_text(json.dumps(header, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return raw_path, json_path


def read_raster(path_base) -> Raster:
    base = Path(path_base)
    json_path = base.with_suffix(".json")
    raw_path = base.with_suffix(".f32")
    try:
        header = json.loads(json_path.read_text(encoding="utf-8"))
        raw = raw_path.read_bytes()
    except OSError as exc:
        raise InputFormatError(f"cannot read raster {base}: {exc}") from exc
    try:
        w, h = int(header["width"]), int(header["height"])
        sentinel = float(header["nodata"])
        values = np.frombuffer(raw, dtype="<f4").reshape(h, w).astype(float)
    except (KeyError, ValueError) as exc:
        raise InputFormatError(f"corrupt raster header/grid at {base}: {exc}") from exc
    mask = values == sentinel
    values = values.copy()
    values[mask] = 0.0
    return Raster(
        origin_x=float(header["originX"]),
        origin_y=float(header["originY"]),
        resolution=float(header["resolution"]),
        values=values,
        nodata_mask=mask,
    )


def write_pgm(gray: Raster, path) -> Path:
    """Binary PGM (P5, maxval 255); rows are flipped so north is up."""
    vals = gray.values
    if np.any((vals < 0) | (vals > 255)) or not np.allclose(vals, np.round(vals)):
        raise ValidationError("PGM export needs integer values in 0..255 (run to_grayscale first)")
    img = vals.astype(np.uint8)
    img[gray.nodata_mask] = 0
    out = Path(path)
    with open(out, "wb") as fh:
        fh.write(f"P5\n{gray.width} {gray.height}\n255\n".encode("ascii"))
        fh.write(img[::-1].tobytes(order="C"))
    return out
