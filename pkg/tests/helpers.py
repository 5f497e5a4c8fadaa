"""Independent reference implementations used as test oracles.

Everything here recomputes results by the most literal method available
(explicit loops, linear scans, brute force) so that the tested code paths
never verify themselves.
"""
from __future__ import annotations

import numpy as np

from grainfl.datasets import Image
from grainfl.granulation import GranulationConfig, clipped_span

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


def sobel_magnitude_reference(pixels: np.ndarray) -> np.ndarray:
    """Direct per-pixel 3x3 correlation with edge replication."""
    h, w = pixels.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            gx = gy = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    gx += SOBEL_X[dy + 1, dx + 1] * pixels[yy, xx]
                    gy += SOBEL_Y[dy + 1, dx + 1] * pixels[yy, xx]
            out[y, x] = np.sqrt(gx * gx + gy * gy)
    return out


def purity_reference(image: Image, center: tuple[int, int], r_x: int, r_y: int,
                     gray_thr: float, symmetric: bool = False) -> float:
    """Per-pixel counting loop."""
    cx, cy = center
    x0, x1 = clipped_span(cx, r_x, image.width)
    y0, y1 = clipped_span(cy, r_y, image.height)
    center_val = image.pixels[cy, cx]
    deviants = 0
    total = 0
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            total += 1
            diff = image.pixels[y, x] - center_val
            if symmetric:
                if abs(diff) > gray_thr:
                    deviants += 1
            elif diff > gray_thr:
                deviants += 1
    return 1.0 - deviants / total


def region_stats_reference(image: Image, center: tuple[int, int],
                           r_x: int, r_y: int):
    """Two-pass mean/variance plus direct max/min."""
    cx, cy = center
    x0, x1 = clipped_span(cx, r_x, image.width)
    y0, y1 = clipped_span(cy, r_y, image.height)
    values = [image.pixels[y, x]
              for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)]
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return mean, var, max(values), min(values)


def admissible_reference(image: Image, center: tuple[int, int], r_x: int,
                         r_y: int, config: GranulationConfig) -> bool:
    _, var, _, _ = region_stats_reference(image, center, r_x, r_y)
    if var > config.var_thr:
        return False
    pur = purity_reference(image, center, r_x, r_y, config.gray_thr,
                           config.symmetric_purity)
    return pur >= config.purity_thr


def linear_scan_radii(image: Image, center: tuple[int, int],
                      config: GranulationConfig) -> tuple[int, int]:
    """Incremental growth: extend a radius until the first inadmissible value."""
    def scan(limit: int, admissible_at) -> int:
        best = 0
        for r in range(1, limit):
            if admissible_at(r):
                best = r
            else:
                break
        return best

    if config.axis_order == "xy":
        r_x = scan(image.width, lambda r: admissible_reference(
            image, center, r, 0, config))
        r_y = scan(image.height, lambda r: admissible_reference(
            image, center, r_x, r, config))
    else:
        r_y = scan(image.height, lambda r: admissible_reference(
            image, center, 0, r, config))
        r_x = scan(image.width, lambda r: admissible_reference(
            image, center, r, r_y, config))
    return r_x, r_y


def axis_is_monotone(flags: list[bool]) -> bool:
    """True when the admissibility pattern is True... then False... only."""
    seen_false = False
    for flag in flags:
        if flag:
            if seen_false:
                return False
        else:
            seen_false = True
    return True


def rect_pixel_set(rect, width: int, height: int) -> set[tuple[int, int]]:
    x0, x1 = clipped_span(rect.center_x, rect.r_x, width)
    y0, y1 = clipped_span(rect.center_y, rect.r_y, height)
    return {(x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)}


def central_difference(fun, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Coordinate-wise central finite differences of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        plus = x.copy()
        minus = x.copy()
        plus.flat[i] += step
        minus.flat[i] -= step
        grad.flat[i] = (fun(plus) - fun(minus)) / (2.0 * step)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def random_image(rng: np.random.Generator, width: int, height: int,
                 blocky: bool = True) -> Image:
    """Piecewise-constant patches plus noise; varied enough to exercise both
    admissibility constraints."""
    pixels = rng.random((height, width)) * 0.15
    if blocky:
        for _ in range(rng.integers(1, 4)):
            x0 = int(rng.integers(0, width))
            y0 = int(rng.integers(0, height))
            x1 = int(rng.integers(x0, width))
            y1 = int(rng.integers(y0, height))
            pixels[y0:y1 + 1, x0:x1 + 1] = rng.random()
    return Image(width, height, np.clip(pixels, 0.0, 1.0))
