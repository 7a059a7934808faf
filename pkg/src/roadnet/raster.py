"""Raster images and drawing primitives.

Images are float arrays in [0, 1], indexed [row, col] with row = y and
col = x in the internal math frame (y grows upward).  The vertical flip
to screen orientation happens only in imread/imwrite, so all geometry
code is free of y-down bookkeeping.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import DataError


def imwrite(path, image: np.ndarray):
    """Save a float [0,1] image (H, W, 3) or (H, W) as PNG, y flipped to
    screen orientation."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    arr = np.flipud(np.round(arr * 255.0).astype(np.uint8))
    Image.fromarray(arr).save(path, format="PNG")


def imread(path) -> np.ndarray:
    """Load a PNG as float [0,1] RGB in the internal orientation."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image: {exc}", path=path)
    return np.flipud(arr).copy()


def _segment_distance_grid(p0, p1, x0, y0, h, w):
    """Distances from pixel centers of a (h, w) grid with origin (x0, y0)
    to the segment p0-p1."""
    xs = x0 + np.arange(w, dtype=np.float64)
    ys = y0 + np.arange(h, dtype=np.float64)
    px = xs[None, :] - p0[0]
    py = ys[:, None] - p0[1]
    dx = p1[0] - p0[0]
    dy = p1[1] - p0[1]
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return np.hypot(px, py)
    t = np.clip((px * dx + py * dy) / seg2, 0.0, 1.0)
    return np.hypot(px - t * dx, py - t * dy)


def stroke_coverage(dist: np.ndarray, width: float) -> np.ndarray:
    """Antialiased coverage of a stroke of the given width: 1 inside,
    linear 1-pixel falloff at the boundary."""
    return np.clip(0.5 * width + 0.5 - dist, 0.0, 1.0)


def draw_segment(image: np.ndarray, p0, p1, width: float, color):
    """Alpha-blend a stroked segment into image (in place)."""
    h, w = image.shape[:2]
    margin = 0.5 * width + 1.0
    x_lo = max(0, int(np.floor(min(p0[0], p1[0]) - margin)))
    x_hi = min(w, int(np.ceil(max(p0[0], p1[0]) + margin)) + 1)
    y_lo = max(0, int(np.floor(min(p0[1], p1[1]) - margin)))
    y_hi = min(h, int(np.ceil(max(p0[1], p1[1]) + margin)) + 1)
    if x_lo >= x_hi or y_lo >= y_hi:
        return
    dist = _segment_distance_grid(p0, p1, x_lo, y_lo, y_hi - y_lo, x_hi - x_lo)
    cov = stroke_coverage(dist, width)
    patch = image[y_lo:y_hi, x_lo:x_hi]
    if image.ndim == 3:
        cov = cov[:, :, None]
        color = np.asarray(color, dtype=np.float64)
    patch *= 1.0 - cov
    patch += cov * color


def draw_polyline(image, points, width, color):
    for a, b in zip(points, points[1:]):
        draw_segment(image, a, b, width, color)


def draw_disk(image: np.ndarray, center, radius: float, color):
    """Alpha-blend a filled disk with a soft 1-pixel rim (in place)."""
    h, w = image.shape[:2]
    x_lo = max(0, int(np.floor(center[0] - radius - 1)))
    x_hi = min(w, int(np.ceil(center[0] + radius + 1)) + 1)
    y_lo = max(0, int(np.floor(center[1] - radius - 1)))
    y_hi = min(h, int(np.ceil(center[1] + radius + 1)) + 1)
    if x_lo >= x_hi or y_lo >= y_hi:
        return
    xs = x_lo + np.arange(x_hi - x_lo, dtype=np.float64)
    ys = y_lo + np.arange(y_hi - y_lo, dtype=np.float64)
    dist = np.hypot(xs[None, :] - center[0], ys[:, None] - center[1])
    cov = np.clip(radius + 0.5 - dist, 0.0, 1.0)
    patch = image[y_lo:y_hi, x_lo:x_hi]
    if image.ndim == 3:
        cov = cov[:, :, None]
        color = np.asarray(color, dtype=np.float64)
    patch *= 1.0 - cov
    patch += cov * color


def crop_window(image: np.ndarray, center, d: int) -> np.ndarray:
    """d x d window centered on `center` (rounded to the pixel grid),
    zero-padded where it leaves the image."""
    h, w = image.shape[:2]
    cx = int(round(float(center[0])))
    cy = int(round(float(center[1])))
    x0 = cx - d // 2
    y0 = cy - d // 2
    shape = (d, d) + image.shape[2:]
    out = np.zeros(shape, dtype=np.float64)
    sx0, sx1 = max(0, x0), min(w, x0 + d)
    sy0, sy1 = max(0, y0), min(h, y0 + d)
    if sx0 < sx1 and sy0 < sy1:
        out[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = image[sy0:sy1, sx0:sx1]
    return out


def window_origin(center, d: int):
    """Pixel coordinates of a crop_window's [0, 0] corner."""
    cx = int(round(float(center[0])))
    cy = int(round(float(center[1])))
    return cx - d // 2, cy - d // 2
