"""Grayscale rasters, planar transforms, smoothing and differential operators.

Pixel centres sit at integer coordinates: x runs along columns in
``[0, width - 1]`` and y along rows in ``[0, height - 1]``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    MalformedHeaderError,
    MalformedPayloadError,
    ParameterError,
    SingularTransformError,
    UnreadableFileError,
    UnsupportedFormatError,
)

# Coordinates this close to the raster edge are snapped onto it when sampling.
EDGE_TOL = 1e-9
SINGULAR_DET = 1e-12
SIMILARITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Image:
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ParameterError(f"image must be a non-empty 2D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("image intensities must be finite")
        if np.any(arr < 0):
            raise ParameterError("image intensities must be nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def contains(self, x, y, margin=0.0):
        """Boolean mask: is (x, y) inside the domain shrunk by ``margin``."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return (
            (x >= margin - EDGE_TOL)
            & (x <= self.width - 1 - margin + EDGE_TOL)
            & (y >= margin - EDGE_TOL)
            & (y <= self.height - 1 - margin + EDGE_TOL)
        )


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ParameterError(f"point coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True)
class Transform:
    """Planar map ``p -> matrix @ p + translation``."""

    kind: str
    matrix: tuple[tuple[float, float], tuple[float, float]]
    translation: tuple[float, float]

    def __post_init__(self):
        if self.kind not in ("similarity", "affine"):
            raise ParameterError(f"unknown transform kind {self.kind!r}")
        m = tuple(tuple(float(v) for v in row) for row in self.matrix)
        tr = tuple(float(v) for v in self.translation)
        if len(m) != 2 or any(len(row) != 2 for row in m) or len(tr) != 2:
            raise ParameterError("transform needs a 2x2 matrix and a 2-vector translation")
        if not all(math.isfinite(v) for v in (*m[0], *m[1], *tr)):
            raise ParameterError("transform parameters must be finite")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "translation", tr)
        if self.det == 0.0:
            raise SingularTransformError("transform matrix is singular")
        if self.kind == "similarity":
            a = self.A
            gram = a.T @ a
            s2 = abs(self.det)
            if abs(gram[0, 1]) > SIMILARITY_TOL * max(s2, 1.0) or abs(gram[0, 0] - gram[1, 1]) > SIMILARITY_TOL * max(s2, 1.0):
                raise ParameterError("similarity matrix must be a scaled orthonormal matrix")

    @property
    def A(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.float64)

    @property
    def t(self) -> np.ndarray:
        return np.array(self.translation, dtype=np.float64)

    @property
    def det(self) -> float:
        (a, b), (c, d) = self.matrix
        return a * d - b * c

    @property
    def ident(self) -> str:
        (a, b), (c, d) = self.matrix
        tx, ty = self.translation
        return f"{self.kind}({a!r},{b!r},{c!r},{d!r};{tx!r},{ty!r})"

    @classmethod
    def identity(cls) -> Transform:
        return cls("similarity", ((1.0, 0.0), (0.0, 1.0)), (0.0, 0.0))

    @classmethod
    def shift(cls, tx, ty) -> Transform:
        return cls("similarity", ((1.0, 0.0), (0.0, 1.0)), (tx, ty))

    @classmethod
    def similarity(cls, scale=1.0, angle=0.0, tx=0.0, ty=0.0, center=None) -> Transform:
        """Scale and rotate (counter-clockwise in x/y) about ``center``, then shift."""
        if scale <= 0:
            raise ParameterError("similarity scale must be > 0")
        c, s = math.cos(angle), math.sin(angle)
        m = np.array([[scale * c, -scale * s], [scale * s, scale * c]])
        t = np.array([tx, ty], dtype=np.float64)
        if center is not None:
            ctr = np.asarray(center, dtype=np.float64)
            t = t + ctr - m @ ctr
        return cls("similarity", tuple(map(tuple, m)), tuple(t))

    @classmethod
    def affine(cls, matrix, translation=(0.0, 0.0)) -> Transform:
        m = np.asarray(matrix, dtype=np.float64)
        return cls("affine", tuple(map(tuple, m)), tuple(translation))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "matrix": [list(r) for r in self.matrix], "translation": list(self.translation)}

    @classmethod
    def from_dict(cls, d) -> Transform:
        return cls(d["kind"], tuple(map(tuple, d["matrix"])), tuple(d["translation"]))


def apply_transform(t: Transform, p: Point) -> Point:
    (a, b), (c, d) = t.matrix
    tx, ty = t.translation
    return Point(a * p.x + b * p.y + tx, c * p.x + d * p.y + ty)


def apply_transform_xy(t: Transform, xy: np.ndarray) -> np.ndarray:
    """Vectorised :func:`apply_transform` over an (N, 2) array."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    (a, b), (c, d) = t.matrix
    tx, ty = t.translation
    x, y = xy[:, 0], xy[:, 1]
    return np.stack([a * x + b * y + tx, c * x + d * y + ty], axis=1)


def compose(outer: Transform, inner: Transform) -> Transform:
    """Transform equal to applying ``inner`` first, then ``outer``."""
    m = outer.A @ inner.A
    t = outer.A @ inner.t + outer.t
    kind = "similarity" if outer.kind == inner.kind == "similarity" else "affine"
    return Transform(kind, tuple(map(tuple, m)), tuple(t))


def invert(t: Transform) -> Transform:
    det = t.det
    if abs(det) < SINGULAR_DET:
        raise SingularTransformError(f"cannot invert transform with |det| = {abs(det):.3g}")
    (a, b), (c, d) = t.matrix
    inv = np.array([[d, -b], [-c, a]]) / det
    return Transform(t.kind, tuple(map(tuple, inv)), tuple(-(inv @ t.t)))


# --- I/O ---

def _pgm_header(buf: bytes):
    """Parse the four PGM header tokens, skipping comments. Returns (tokens, payload offset)."""
    tokens = []
    i, n = 0, len(buf)
    while len(tokens) < 4:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i >= n:
            raise MalformedHeaderError("PGM header ends prematurely")
        if buf[i : i + 1] == b"#":
            while i < n and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not buf[i : i + 1].isspace() and buf[i : i + 1] != b"#":
            i += 1
        tokens.append(buf[start:i])
    # exactly one whitespace byte separates header from a binary raster
    return tokens, i + 1


def _decode_pgm(buf: bytes) -> np.ndarray:
    tokens, offset = _pgm_header(buf)
    magic = tokens[0]
    try:
        width, height, maxval = (int(tok) for tok in tokens[1:])
    except ValueError as exc:
        raise MalformedHeaderError(f"non-integer PGM header field: {exc}") from None
    if width < 1 or height < 1 or maxval < 1:
        raise MalformedHeaderError(f"invalid PGM dimensions {width}x{height} maxval {maxval}")
    if maxval > 255:
        raise UnsupportedFormatError(f"PGM maxval {maxval} > 255 is not supported")
    count = width * height
    if magic == b"P5":
        payload = buf[offset : offset + count]
        if len(payload) < count:
            raise MalformedPayloadError(f"P5 payload has {len(payload)} bytes, expected {count}")
        values = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    else:
        try:
            values = np.array([int(tok) for tok in buf[offset - 1 :].split()], dtype=np.float64)
        except ValueError:
            raise MalformedPayloadError("non-integer sample in P2 payload") from None
        if values.size != count:
            raise MalformedPayloadError(f"P2 payload has {values.size} samples, expected {count}")
    if np.any(values > maxval):
        raise MalformedPayloadError("sample exceeds PGM maxval")
    return values.reshape(height, width) * (255.0 / maxval)


def _decode_png(buf: bytes) -> np.ndarray:
    from PIL import Image as PILImage

    try:
        with PILImage.open(io.BytesIO(buf)) as im:
            mode = im.mode
            if mode != "L":
                raise UnsupportedFormatError(f"only 8-bit grayscale PNG is supported, got mode {mode}")
            im.load()
            return np.asarray(im, dtype=np.float64)
    except UnsupportedFormatError:
        raise
    except Exception as exc:
        raise MalformedPayloadError(f"cannot decode PNG: {exc}") from None


def load_image(path) -> Image:
    """Read a PGM (P2/P5, maxval <= 255) or 8-bit grayscale PNG file."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read image {path}: {exc.strerror or exc}") from None
    if buf[:2] in (b"P2", b"P5") and (len(buf) == 2 or buf[2:3].isspace() or buf[2:3] == b"#"):
        return Image(_decode_pgm(buf))
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        return Image(_decode_png(buf))
    raise UnsupportedFormatError(f"{path}: not a PGM (P2/P5) or PNG file")


def to_bytes_u8(img: Image) -> np.ndarray:
    # round half up, then clamp
    return np.clip(np.floor(img.data + 0.5), 0, 255).astype(np.uint8)


def save_pgm(img: Image, path) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + to_bytes_u8(img).tobytes())


# --- filtering ---

def gaussian_kernel(sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _convolve_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(arr, pad, mode="edge")
    n = arr.shape[axis]
    out = np.zeros_like(arr)
    for k, w in enumerate(kernel):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(k, k + n)
        out += w * padded[tuple(sl)]
    return out


def smooth_array(arr: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel(sigma)
    return _convolve_axis(_convolve_axis(np.asarray(arr, dtype=np.float64), k, 1), k, 0)


def gaussian_smooth(img: Image, sigma: float) -> Image:
    """Separable Gaussian blur, radius ceil(3 sigma), clamp-to-edge borders."""
    return Image(smooth_array(img.data, sigma))


def _require_size(arr: np.ndarray, minimum: int, what: str):
    if arr.shape[0] < minimum or arr.shape[1] < minimum:
        raise ParameterError(f"{what} needs an image of at least {minimum}x{minimum}, got {arr.shape[1]}x{arr.shape[0]}")


def gradient(img) -> tuple[np.ndarray, np.ndarray]:
    """(dI/dx, dI/dy): central differences inside, one-sided on the border.

    Derivatives are signed, so they come back as plain arrays rather than
    :class:`Image` values.
    """
    arr = img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    _require_size(arr, 3, "gradient")
    return np.gradient(arr, axis=1), np.gradient(arr, axis=0)


def laplacian_array(arr: np.ndarray) -> np.ndarray:
    _require_size(arr, 3, "laplacian")
    out = np.zeros_like(arr, dtype=np.float64)
    c = arr[1:-1, 1:-1]
    out[1:-1, 1:-1] = arr[:-2, 1:-1] + arr[2:, 1:-1] + arr[1:-1, :-2] + arr[1:-1, 2:] - 4.0 * c
    return out


def laplacian(img) -> np.ndarray:
    """5-point Laplacian; the one-pixel border is zero."""
    arr = img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    return laplacian_array(arr)


# --- sampling and warping ---

def sample_bilinear(arr: np.ndarray, x, y, fill: float = 0.0) -> np.ndarray:
    """Bilinear samples of ``arr`` at (x, y); points off the raster get ``fill``.

    ``arr`` may carry trailing channel axes, e.g. shape (H, W, C).
    """
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    inside = (x >= -EDGE_TOL) & (x <= w - 1 + EDGE_TOL) & (y >= -EDGE_TOL) & (y <= h - 1 + EDGE_TOL)
    xc = np.clip(np.where(inside, x, 0.0), 0.0, w - 1)
    yc = np.clip(np.where(inside, y, 0.0), 0.0, h - 1)
    x0 = np.minimum(np.floor(xc).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(yc).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    if arr.ndim > 2:
        shape = fx.shape + (1,) * (arr.ndim - 2)
        fx, fy = fx.reshape(shape), fy.reshape(shape)
    val = (
        (1 - fx) * (1 - fy) * arr[y0, x0]
        + fx * (1 - fy) * arr[y0, x1]
        + (1 - fx) * fy * arr[y1, x0]
        + fx * fy * arr[y1, x1]
    )
    mask = inside.reshape(inside.shape + (1,) * (arr.ndim - 2))
    return np.where(mask, val, fill)


def warp(img: Image, t: Transform) -> Image:
    """Image J with J(t(p)) = I(p), by inverse mapping and bilinear interpolation."""
    inv = invert(t)
    ys, xs = np.mgrid[0 : img.height, 0 : img.width].astype(np.float64)
    src = apply_transform_xy(inv, np.stack([xs.ravel(), ys.ravel()], axis=1))
    vals = sample_bilinear(img.data, src[:, 0], src[:, 1], fill=0.0)
    # bilinear weights are nonnegative; clip rounding residue below zero
    return Image(np.maximum(vals.reshape(img.shape), 0.0))
