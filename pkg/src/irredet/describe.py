"""Point descriptors (N-jet and raw patch), their metric, and continuity estimation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import IncompatibleDescriptorError, MarginError, ParameterError
from .image import Image, Point, Transform, apply_transform_xy, sample_bilinear, smooth_array, warp

# offsets swept by continuity_modulus: 0.25 .. 8 px in 0.25 px steps
DEFAULT_RADII = tuple(np.arange(1, 33) * 0.25)
N_DIRECTIONS = 8
ZERO_STD = 1e-12


@dataclass(frozen=True)
class DescriptorParams:
    kind: str = "njet"
    sigma: float = 1.0
    order: int = 2
    radius: int = 3
    normalize: bool = False

    def __post_init__(self):
        if self.kind not in ("njet", "patch"):
            raise ParameterError(f"unknown descriptor kind {self.kind!r}")
        if not self.sigma > 0:
            raise ParameterError("descriptor sigma must be > 0")
        if not 1 <= self.order <= 4:
            raise ParameterError("njet order must be in 1..4")
        if not 1 <= self.radius <= 32:
            raise ParameterError("patch radius must be in 1..32")

    @property
    def descriptor_id(self) -> str:
        norm = ",norm" if self.normalize else ""
        if self.kind == "njet":
            return f"njet(order={self.order},sigma={self.sigma!r}{norm})"
        return f"patch(radius={self.radius}{norm})"

    @property
    def length(self) -> int:
        if self.kind == "njet":
            return (self.order + 1) * (self.order + 2) // 2
        return (2 * self.radius + 1) ** 2

    @property
    def support(self) -> float:
        """Minimum distance from the border at which a description is exact."""
        if self.kind == "njet":
            # smoothing reach + one pixel per finite-difference order + bilinear neighbour
            return math.ceil(3.0 * self.sigma) + self.order + 1
        return float(self.radius)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class DescriptorVector:
    values: np.ndarray
    descriptor_id: str

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise ParameterError("descriptor components must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def to_list(self) -> list[float]:
        return [float(v) for v in self.values]


def jet_labels(order: int) -> list[str]:
    """Component names in storage order: I, Ix, Iy, Ixx, Ixy, Iyy, ..."""
    labels = ["I"]
    for k in range(1, order + 1):
        labels += ["I" + "x" * (k - j) + "y" * j for j in range(k + 1)]
    return labels


def _jet_stack(arr: np.ndarray, sigma: float, order: int) -> np.ndarray:
    sm = smooth_array(arr, sigma)
    fields = {(0, 0): sm}
    layers = [sm]
    for k in range(1, order + 1):
        for j in range(k + 1):
            i = k - j
            if i > 0:
                f = np.gradient(fields[(i - 1, j)], axis=1)
            else:
                f = np.gradient(fields[(0, j - 1)], axis=0)
            fields[(i, j)] = f
            layers.append(f)
    return np.stack(layers, axis=-1)


class DescriptorField:
    """Everything needed to describe arbitrary points of one image, computed once."""

    def __init__(self, img: Image, p: DescriptorParams):
        self.img = img
        self.params = p
        if p.kind == "njet":
            self._stack = _jet_stack(img.data, p.sigma, p.order)
        else:
            self._stack = img.data
            r = p.radius
            oy, ox = np.mgrid[-r : r + 1, -r : r + 1]
            self._offsets = np.stack([ox.ravel(), oy.ravel()], axis=1).astype(np.float64)

    def valid(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        return self.img.contains(xy[:, 0], xy[:, 1], margin=self.params.support)

    def sample(self, xy) -> tuple[np.ndarray, np.ndarray]:
        """(descriptors (N, L), valid mask (N,)); rows failing the margin are zero."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        ok = self.valid(xy)
        p = self.params
        if p.kind == "njet":
            out = sample_bilinear(self._stack, xy[:, 0], xy[:, 1])
        else:
            sx = xy[:, 0:1] + self._offsets[None, :, 0]
            sy = xy[:, 1:2] + self._offsets[None, :, 1]
            out = sample_bilinear(self._stack, sx, sy)
        out = np.where(ok[:, None], out, 0.0)
        if p.normalize:
            out = normalize_rows(out)
        return out, ok

    def describe(self, xy) -> list[DescriptorVector]:
        vals, ok = self.sample(xy)
        if not np.all(ok):
            bad = np.asarray(xy, dtype=np.float64).reshape(-1, 2)[~ok][0]
            raise MarginError(f"point ({bad[0]:.3f}, {bad[1]:.3f}) is closer than {self.params.support} px to the border")
        did = self.params.descriptor_id
        return [DescriptorVector(v, did) for v in vals]


def normalize_rows(vals: np.ndarray) -> np.ndarray:
    mean = vals.mean(axis=1, keepdims=True)
    std = vals.std(axis=1, keepdims=True)
    flat = std <= ZERO_STD
    return np.where(flat, 0.0, (vals - mean) / np.where(flat, 1.0, std))


def describe(img: Image, pt: Point, p: DescriptorParams = DescriptorParams()) -> DescriptorVector:
    return DescriptorField(img, p).describe([[pt.x, pt.y]])[0]


def describe_points(img: Image, xy, p: DescriptorParams = DescriptorParams()) -> list[DescriptorVector]:
    """Describe many points against one shared field computation."""
    return DescriptorField(img, p).describe(xy)


def check_compatible(descs) -> tuple[str, int]:
    """Common (descriptor_id, length) of a descriptor collection, or raise."""
    ids = {d.descriptor_id for d in descs}
    lens = {len(d) for d in descs}
    if len(ids) > 1 or len(lens) > 1:
        raise IncompatibleDescriptorError(f"mixed descriptors: ids={sorted(ids)} lengths={sorted(lens)}")
    return (ids.pop() if ids else ""), (lens.pop() if lens else 0)


def distance(a: DescriptorVector, b: DescriptorVector) -> float:
    """Euclidean metric on description space."""
    if a.descriptor_id != b.descriptor_id or len(a) != len(b):
        raise IncompatibleDescriptorError(
            f"cannot compare {a.descriptor_id}[{len(a)}] with {b.descriptor_id}[{len(b)}]")
    # hypot rescales internally, so tiny differences do not underflow to 0
    return math.hypot(*(a.values - b.values))


# --- continuity ---

@dataclass(frozen=True)
class ContinuityProfile:
    radii: tuple[float, ...]
    # distance percentile at each radius (nan where no sample was valid)
    quantiles: tuple[float, ...]
    zero_quantile: float
    percentile: float

    def modulus(self, epsilon: float) -> float:
        """Largest radius up to which the percentile stays strictly below ``epsilon``."""
        if not self.zero_quantile < epsilon:
            return 0.0
        delta = 0.0
        for r, q in zip(self.radii, self.quantiles):
            if not q < epsilon:  # nan fails as well
                break
            delta = r
        return float(delta)


def continuity_profile(img: Image, t: Transform, p: DescriptorParams, pts, radii=DEFAULT_RADII,
                       percentile: float = 95.0, warped: Image | None = None) -> ContinuityProfile:
    """Distance percentiles between Psi(I, X) and Psi(I o F, F(X) + d) for |d| = r.

    ``warped`` may be passed to reuse an already-warped image.
    """
    xy = pts.xy() if hasattr(pts, "xy") else np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    if len(xy) == 0:
        raise ParameterError("continuity estimation needs a nonempty point set")
    radii = tuple(float(r) for r in radii)
    if any(r <= 0 for r in radii):
        raise ParameterError("offset radii must be positive")
    src_field = DescriptorField(img, p)
    dst_field = DescriptorField(warped if warped is not None else warp(img, t), p)
    base, ok0 = src_field.sample(xy)
    mapped = apply_transform_xy(t, xy)
    angles = 2.0 * np.pi * np.arange(N_DIRECTIONS) / N_DIRECTIONS
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    def quantile_at(r):
        probe = (mapped[:, None, :] + r * dirs[None, :, :]).reshape(-1, 2)
        vals, ok = dst_field.sample(probe)
        ref = np.repeat(base, N_DIRECTIONS, axis=0)
        ok = ok & np.repeat(ok0, N_DIRECTIONS)
        if not np.any(ok):
            return float("nan")
        d = np.sqrt(np.sum((vals[ok] - ref[ok]) ** 2, axis=1))
        return float(np.percentile(d, percentile))

    zero = quantile_at(0.0)
    return ContinuityProfile(radii, tuple(quantile_at(r) for r in radii), zero, float(percentile))


def continuity_modulus(img: Image, t: Transform, p: DescriptorParams, pts, epsilon: float,
                       radii=DEFAULT_RADII, percentile: float = 95.0, warped: Image | None = None) -> float:
    """Empirical delta: displacements below it keep descriptor distance under ``epsilon``.

    Samples whose support leaves the image are skipped. Returns 0 when not even
    the smallest radius qualifies.
    """
    if epsilon < 0:
        raise ParameterError("epsilon must be >= 0")
    return continuity_profile(img, t, p, pts, radii, percentile, warped).modulus(epsilon)
