"""Synthetic test images with analytically known structure."""

from __future__ import annotations

import numpy as np

from .image import Image


def square_image(size=64, side=20, foreground=255.0, background=0.0) -> Image:
    """Centred bright square; its pixel block spans ``[start, start + side - 1]``."""
    data = np.full((size, size), float(background))
    start = (size - side) // 2
    data[start : start + side, start : start + side] = foreground
    return Image(data)


def square_corners(size=64, side=20) -> np.ndarray:
    """Geometric corners of :func:`square_image`, on the half-pixel step edges."""
    start = (size - side) // 2
    lo, hi = start - 0.5, start + side - 0.5
    return np.array([[lo, lo], [hi, lo], [lo, hi], [hi, hi]])


def blob_image(size, centers, sigmas, amplitudes, background=0.0) -> Image:
    """Sum of isotropic Gaussian bumps ``a * exp(-r^2 / (2 s^2))`` over a flat background."""
    if np.isscalar(size):
        size = (size, size)
    h, w = size
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    data = np.full((h, w), float(background))
    for (cx, cy), s, a in zip(np.atleast_2d(centers), np.broadcast_to(sigmas, len(np.atleast_2d(centers))),
                              np.broadcast_to(amplitudes, len(np.atleast_2d(centers)))):
        data += a * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * s * s))
    return Image(np.maximum(data, 0.0))


def multi_blob_image(size=128, n_blobs=24, seed=0, sigma_range=(2.0, 5.0), amplitude_range=(40.0, 200.0),
                     background=20.0, margin=12) -> Image:
    """Seeded field of Gaussian blobs with mixed sizes and contrasts."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(margin, size - 1 - margin, size=(n_blobs, 2))
    sigmas = rng.uniform(*sigma_range, size=n_blobs)
    amps = rng.uniform(*amplitude_range, size=n_blobs)
    return blob_image(size, centers, sigmas, amps, background)


def corner_image(size=96, n_rects=6, seed=0, margin=10, contrast_range=(15.0, 160.0), background=60.0) -> Image:
    """Seeded overlapping axis-aligned rectangles of random contrast: a corner-rich scene."""
    rng = np.random.default_rng(seed)
    data = np.full((size, size), float(background))
    for _ in range(n_rects):
        x0, y0 = rng.integers(margin, size - margin - 12, size=2)
        w, h = rng.integers(8, max(9, size // 3), size=2)
        x1, y1 = min(x0 + w, size - margin), min(y0 + h, size - margin)
        sign = rng.choice([-1.0, 1.0])
        data[y0:y1, x0:x1] += sign * rng.uniform(*contrast_range)
    return Image(np.clip(data, 0.0, 255.0))


def add_noise(img: Image, sigma: float, seed) -> Image:
    """Additive Gaussian pixel noise, clipped at zero to keep intensities legal."""
    rng = np.random.default_rng(seed)
    return Image(np.maximum(img.data + rng.normal(0.0, sigma, size=img.shape), 0.0))
