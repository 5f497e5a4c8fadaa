"""Granular-rectangle segmentation.

An image is covered by axis-aligned rectangles grown around low-gradient
pixels. Each rectangle must keep its purity (share of pixels not exceeding
the center's gray value by more than a threshold) above a floor and its
pixel variance below a cap. Growth runs as a two-dimensional binary search:
one axis is maximised while the other is held fixed, then the roles swap.

Rectangle spans are clipped to the image, so a stored radius may exceed the
distance to a nearby border; purity and statistics always use the clipped
pixel set, and the clipped pixel count is the purity denominator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import Image


@dataclass(frozen=True)
class GradientMap:
    """Per-pixel Sobel gradient magnitudes of one image."""

    width: int
    height: int
    magnitudes: np.ndarray  # shape (height, width), >= 0

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=np.float64)
        if mags.shape != (self.height, self.width):
            raise ValueError("gradient map shape does not match its dimensions")
        if mags.size and mags.min() < 0.0:
            raise ValueError("gradient magnitudes must be non-negative")
        object.__setattr__(self, "magnitudes", mags)


@dataclass(frozen=True)
class GranularRectangle:
    """One granule: center, per-axis radii and pixel statistics.

    The covered region is the clip of
    [center_x - r_x, center_x + r_x] x [center_y - r_y, center_y + r_y]
    to the image bounds.
    """

    center_x: int
    center_y: int
    r_x: int
    r_y: int
    purity: float
    variance: float
    mean: float
    max_val: float
    min_val: float


@dataclass(frozen=True)
class GranulationConfig:
    """Thresholds steering rectangle growth.

    gray_thr is the gray-difference threshold of the purity indicator,
    purity_thr the minimum admissible purity, var_thr the maximum
    admissible pixel variance. The defaults are tuning choices, exposed
    so the sensitivity experiments can sweep them.
    """

    gray_thr: float = 0.08
    purity_thr: float = 0.9
    var_thr: float = 0.01
    symmetric_purity: bool = False  # count |f(p)-f(c)| > thr instead of one-sided
    axis_order: str = "xy"          # which axis is searched first

    def __post_init__(self):
        if not 0.0 < self.purity_thr <= 1.0:
            raise ValueError("purity_thr must lie in (0, 1]")
        if self.gray_thr < 0.0:
            raise ValueError("gray_thr must be >= 0")
        if self.var_thr < 0.0:
            raise ValueError("var_thr must be >= 0")
        if self.axis_order not in ("xy", "yx"):
            raise ValueError("axis_order must be 'xy' or 'yx'")


def sobel_gradient(image: Image) -> GradientMap:
    """Gradient magnitude sqrt(Gx^2 + Gy^2) with 3x3 Sobel kernels.

    Borders are handled by edge replication, so a constant image has zero
    magnitude everywhere, including at the borders.
    """
    p = np.pad(image.pixels, 1, mode="edge")
    gx = (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]) \
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    gy = (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]) \
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    return GradientMap(image.width, image.height, np.hypot(gx, gy))


def clipped_span(center: int, radius: int, size: int) -> tuple[int, int]:
    """Inclusive [lo, hi] extent of a radius around center, clipped to [0, size)."""
    return max(center - radius, 0), min(center + radius, size - 1)


def _region(pixels: np.ndarray, cx: int, cy: int, r_x: int, r_y: int) -> np.ndarray:
    h, w = pixels.shape
    x0, x1 = clipped_span(cx, r_x, w)
    y0, y1 = clipped_span(cy, r_y, h)
    return pixels[y0:y1 + 1, x0:x1 + 1]


def purity(image: Image, center: tuple[int, int], r_x: int, r_y: int,
           gray_thr: float, symmetric: bool = False) -> float:
    """Fraction of region pixels whose gray value stays within gray_thr of the center.

    The literal indicator is one-sided: a pixel is deviant only when it
    exceeds the center value by more than gray_thr. `symmetric` switches to
    the absolute difference. The denominator is the clipped pixel count,
    which equals (2 r_x + 1)(2 r_y + 1) for interior rectangles.
    """
    cx, cy = center
    region = _region(image.pixels, cx, cy, r_x, r_y)
    center_val = image.pixels[cy, cx]
    deviants = np.count_nonzero(region > center_val + gray_thr)
    if symmetric:
        deviants += np.count_nonzero(region < center_val - gray_thr)
    return 1.0 - deviants / region.size


def region_stats(image: Image, center: tuple[int, int], r_x: int, r_y: int
                 ) -> tuple[float, float, float, float]:
    """(mean, population variance, max, min) over the clipped region."""
    cx, cy = center
    region = _region(image.pixels, cx, cy, r_x, r_y)
    max_val = float(region.max())
    min_val = float(region.min())
    if max_val == min_val:  # constant region: exact zero variance
        return max_val, 0.0, max_val, min_val
    return (float(region.mean()), float(region.var()), max_val, min_val)


class _Workspace:
    """Per-image prefix sums giving O(1) region mean and variance probes."""

    __slots__ = ("pixels", "width", "height", "sum1", "sum2")

    def __init__(self, pixels: np.ndarray):
        self.pixels = pixels
        self.height, self.width = pixels.shape
        self.sum1 = np.zeros((self.height + 1, self.width + 1))
        self.sum1[1:, 1:] = pixels.cumsum(axis=0).cumsum(axis=1)
        self.sum2 = np.zeros((self.height + 1, self.width + 1))
        self.sum2[1:, 1:] = (pixels * pixels).cumsum(axis=0).cumsum(axis=1)

    def mean_var(self, x0: int, x1: int, y0: int, y1: int
                 ) -> tuple[float, float, int]:
        n = (x1 - x0 + 1) * (y1 - y0 + 1)
        s1 = self.sum1
        s2 = self.sum2
        total = s1[y1 + 1, x1 + 1] - s1[y0, x1 + 1] - s1[y1 + 1, x0] + s1[y0, x0]
        total_sq = s2[y1 + 1, x1 + 1] - s2[y0, x1 + 1] - s2[y1 + 1, x0] + s2[y0, x0]
        mean = total / n
        return mean, max(total_sq / n - mean * mean, 0.0), n


def _largest_admissible(admissible, hi: int) -> int:
    """Largest radius in [0, hi] accepted by the predicate.

    Assumes radius 0 is admissible. Under a monotone predicate this is the
    true maximum; otherwise it still returns an admissible radius because
    the lower bound only ever moves to probed-admissible values.
    """
    lo = 0
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if admissible(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


def _grow(ws: _Workspace, cx: int, cy: int, config: GranulationConfig
          ) -> GranularRectangle:
    pixels = ws.pixels
    w, h = ws.width, ws.height
    center_val = pixels[cy, cx]
    upper = center_val + config.gray_thr
    lower = center_val - config.gray_thr
    purity_thr = config.purity_thr
    var_thr = config.var_thr
    symmetric = config.symmetric_purity

    def deviant_count(x0, x1, y0, y1) -> int:
        region = pixels[y0:y1 + 1, x0:x1 + 1]
        deviants = np.count_nonzero(region > upper)
        if symmetric:
            deviants += np.count_nonzero(region < lower)
        return deviants

    def admissible_at(r_x: int, r_y: int) -> bool:
        x0, x1 = clipped_span(cx, r_x, w)
        y0, y1 = clipped_span(cy, r_y, h)
        _, var, n = ws.mean_var(x0, x1, y0, y1)
        if var > var_thr:
            return False
        return 1.0 - deviant_count(x0, x1, y0, y1) / n >= purity_thr

    if config.axis_order == "xy":
        r_x = _largest_admissible(lambda r: admissible_at(r, 0), w - 1)
        r_y = _largest_admissible(lambda r: admissible_at(r_x, r), h - 1)
    else:
        r_y = _largest_admissible(lambda r: admissible_at(0, r), h - 1)
        r_x = _largest_admissible(lambda r: admissible_at(r, r_y), w - 1)

    x0, x1 = clipped_span(cx, r_x, w)
    y0, y1 = clipped_span(cy, r_y, h)
    mean, var, n = ws.mean_var(x0, x1, y0, y1)
    pur = 1.0 - deviant_count(x0, x1, y0, y1) / n
    region = pixels[y0:y1 + 1, x0:x1 + 1]
    max_val = float(region.max())
    min_val = float(region.min())
    if max_val == min_val:  # constant region: exact zero variance
        mean, var = max_val, 0.0
    else:
        # prefix sums can drift by ~1 ulp; keep the stored mean inside bounds
        mean = min(max(float(mean), min_val), max_val)
    return GranularRectangle(cx, cy, r_x, r_y, float(pur), float(var),
                             mean, max_val, min_val)


def grow_rectangle(image: Image, center: tuple[int, int],
                   config: GranulationConfig) -> GranularRectangle:
    """Grow the rectangle around a center pixel by two axis-wise binary searches.

    With axis_order "xy" the width radius is maximised first while the
    height radius is pinned at 0, then the height radius is maximised with
    the found width fixed ("yx" swaps the roles). Radius 0 on both axes is
    always admissible (purity 1, variance 0), so a result always exists.
    """
    cx, cy = center
    return _grow(_Workspace(image.pixels), cx, cy, config)


def granulate(image: Image, config: GranulationConfig | None = None
              ) -> list[GranularRectangle]:
    """Cover the image with granular rectangles, smallest gradient first.

    Pixels are visited in ascending Sobel magnitude (ties broken by
    row-major index); each unlabeled pixel in that order becomes a
    rectangle center, and every pixel the grown rectangle covers is
    labeled. Terminates once all pixels are covered; rectangles are
    returned in creation order.
    """
    if config is None:
        config = GranulationConfig()
    ws = _Workspace(image.pixels)
    h, w = ws.height, ws.width
    order = np.argsort(sobel_gradient(image).magnitudes.ravel(), kind="stable")
    covered = np.zeros((h, w), dtype=bool)
    covered_flat = covered.ravel()

    rects: list[GranularRectangle] = []
    for idx in order.tolist():
        if covered_flat[idx]:
            continue
        cy, cx = divmod(idx, w)
        rect = _grow(ws, cx, cy, config)
        x0, x1 = clipped_span(rect.center_x, rect.r_x, w)
        y0, y1 = clipped_span(rect.center_y, rect.r_y, h)
        covered[y0:y1 + 1, x0:x1 + 1] = True
        rects.append(rect)
    return rects
