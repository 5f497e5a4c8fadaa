"""Procedural digit image generator.

Produces MNIST-shaped (28x28, 10-class) grayscale datasets for offline
experiments and tests: seven-segment style digits with jittered geometry
and pixel noise. Deterministic given the seed.
"""
from __future__ import annotations

import numpy as np

from .datasets import Image, LabeledDataset

# segment endpoints in a unit box: (x0, y0, x1, y1)
_SEGMENTS = {
    "a": (0.0, 0.0, 1.0, 0.0),
    "b": (1.0, 0.0, 1.0, 0.5),
    "c": (1.0, 0.5, 1.0, 1.0),
    "d": (0.0, 1.0, 1.0, 1.0),
    "e": (0.0, 0.5, 0.0, 1.0),
    "f": (0.0, 0.0, 0.0, 0.5),
    "g": (0.0, 0.5, 1.0, 0.5),
}

_DIGIT_SEGMENTS = {
    0: "abcdef", 1: "bc", 2: "abged", 3: "abgcd", 4: "fgbc",
    5: "afgcd", 6: "afgcde", 7: "abc", 8: "abcdefg", 9: "abcdfg",
}

DIGIT_SIDE = 28
_STROKE = 3
_BRIGHT = 0.9
_NOISE_SIGMA = 0.01


def render_digit(digit: int, rng: np.random.Generator, side: int = DIGIT_SIDE) -> Image:
    """Render one digit with jittered bounding box and additive noise."""
    canvas = np.zeros((side, side))
    x_l = 6 + int(rng.integers(-1, 2))
    x_r = 21 + int(rng.integers(-1, 2))
    y_t = 4 + int(rng.integers(-1, 2))
    y_b = 23 + int(rng.integers(-1, 2))
    for seg in _DIGIT_SEGMENTS[digit]:
        fx0, fy0, fx1, fy1 = _SEGMENTS[seg]
        x0 = int(round(x_l + fx0 * (x_r - x_l)))
        x1 = int(round(x_l + fx1 * (x_r - x_l)))
        y0 = int(round(y_t + fy0 * (y_b - y_t)))
        y1 = int(round(y_t + fy1 * (y_b - y_t)))
        canvas[max(y0 - _STROKE // 2, 0):y1 + _STROKE // 2 + 1,
               max(x0 - _STROKE // 2, 0):x1 + _STROKE // 2 + 1] = _BRIGHT
    canvas += rng.normal(0.0, _NOISE_SIGMA, canvas.shape)
    return Image(side, side, np.clip(canvas, 0.0, 1.0))


def make_digit_dataset(n: int, seed: int, side: int = DIGIT_SIDE) -> LabeledDataset:
    """Generate n labeled digit images with uniformly random classes."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n)
    images = tuple(render_digit(int(y), rng, side) for y in labels)
    return LabeledDataset(images, labels.astype(np.int64), 10)
