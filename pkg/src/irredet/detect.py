"""Interest point detectors: Harris corners and Laplacian-of-Gaussian extrema.

Both detectors share one selection contract: threshold the response map,
keep local maxima within ``nms_radius``, refine each survivor to subpixel
accuracy with a least-squares quadratic over its 3x3 neighbourhood, sort by
descending response and truncate to ``max_points``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from .errors import ParameterError
from .image import Image, Point, gradient, laplacian_array, smooth_array

HARRIS_K = 0.04
MIN_SIZE = 7
DEDUP_DIST = 1e-6


@dataclass(frozen=True)
class DetectorParams:
    smoothing_sigma: float = 1.0
    response_threshold: float = 0.0
    nms_radius: int = 3
    max_points: int | None = None
    # Harris only: structure-tensor window; defaults to smoothing_sigma
    integration_sigma: float | None = None

    def __post_init__(self):
        if not self.smoothing_sigma > 0:
            raise ParameterError("smoothing_sigma must be > 0")
        if not self.response_threshold >= 0:
            raise ParameterError("response_threshold must be >= 0")
        if int(self.nms_radius) != self.nms_radius or self.nms_radius < 1:
            raise ParameterError("nms_radius must be an integer >= 1")
        if self.max_points is not None and self.max_points < 0:
            raise ParameterError("max_points must be >= 0 or None")
        if self.integration_sigma is not None and not self.integration_sigma > 0:
            raise ParameterError("integration_sigma must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InterestPoint:
    location: Point
    response: float
    scale: float

    @property
    def x(self) -> float:
        return self.location.x

    @property
    def y(self) -> float:
        return self.location.y


@dataclass(frozen=True)
class InterestPointSet:
    points: tuple[InterestPoint, ...]
    detector_id: str = "manual"
    params: dict = field(default_factory=dict)
    # (width, height) of the image the points were detected in; None = unbounded
    domain: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if self.domain is not None:
            object.__setattr__(self, "domain", (int(self.domain[0]), int(self.domain[1])))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def xy(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 2))
        return np.array([[p.x, p.y] for p in self.points], dtype=np.float64)

    def subset(self, indices, detector_id=None) -> InterestPointSet:
        return InterestPointSet(tuple(self.points[i] for i in indices), detector_id or self.detector_id,
                                dict(self.params), self.domain)

    def in_domain(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        if self.domain is None:
            return np.ones(len(xy), dtype=bool)
        w, h = self.domain
        tol = 1e-9
        return (xy[:, 0] >= -tol) & (xy[:, 0] <= w - 1 + tol) & (xy[:, 1] >= -tol) & (xy[:, 1] <= h - 1 + tol)

    @classmethod
    def from_xy(cls, xy, detector_id="manual", domain=None, response=0.0, scale=1.0) -> InterestPointSet:
        pts = tuple(InterestPoint(Point(float(x), float(y)), float(response), float(scale))
                    for x, y in np.asarray(xy, dtype=np.float64).reshape(-1, 2))
        return cls(pts, detector_id, {}, domain)

    def to_dict(self) -> dict:
        return {
            "detector_id": self.detector_id,
            "params": self.params,
            "domain": list(self.domain) if self.domain is not None else None,
            "points": [{"x": _sig9(p.x), "y": _sig9(p.y), "response": _sig9(p.response), "scale": _sig9(p.scale)}
                       for p in self.points],
        }

    @classmethod
    def from_dict(cls, d) -> InterestPointSet:
        pts = tuple(InterestPoint(Point(float(p["x"]), float(p["y"])), float(p["response"]), float(p["scale"]))
                    for p in d["points"])
        dom = d.get("domain")
        return cls(pts, d.get("detector_id", "manual"), dict(d.get("params") or {}), tuple(dom) if dom else None)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> InterestPointSet:
        return cls.from_dict(json.loads(text))

    def rounded(self) -> InterestPointSet:
        """The set as it survives a JSON round trip (9 significant digits)."""
        return InterestPointSet.from_dict(json.loads(json.dumps(self.to_dict())))


def _sig9(v: float) -> float:
    return float(f"{v:.9g}")


# --- selection machinery ---

# least-squares quadratic f = c0 + c1 x + c2 y + c3 x^2 + c4 xy + c5 y^2 over the 3x3 offsets
_OFF_Y, _OFF_X = np.mgrid[-1:2, -1:2]
_DESIGN = np.stack([np.ones(9), _OFF_X.ravel(), _OFF_Y.ravel(), _OFF_X.ravel() ** 2,
                    (_OFF_X * _OFF_Y).ravel(), _OFF_Y.ravel() ** 2], axis=1).astype(np.float64)
_FIT = np.linalg.pinv(_DESIGN)


def refine_peak(resp: np.ndarray, row: int, col: int) -> tuple[float, float]:
    """Subpixel (dx, dy) of the quadratic peak; (0, 0) when the fit is not concave."""
    patch = resp[row - 1 : row + 2, col - 1 : col + 2].ravel()
    c = _FIT @ patch
    hess = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
    if not (hess[0, 0] < 0 and np.linalg.det(hess) > 0):
        return 0.0, 0.0
    dx, dy = np.linalg.solve(hess, -c[1:3])
    if abs(dx) > 0.5 or abs(dy) > 0.5:
        return 0.0, 0.0
    return float(dx), float(dy)


def select_peaks(resp: np.ndarray, p: DetectorParams) -> list[tuple[float, float, float]]:
    """(x, y, response) of thresholded, suppressed and refined maxima of ``resp``."""
    r = int(p.nms_radius)
    h, w = resp.shape
    local_max = resp == maximum_filter(resp, size=2 * r + 1, mode="constant", cval=-np.inf)
    keep = local_max & (resp > p.response_threshold)
    # 3x3 refinement needs a full neighbourhood
    keep[0, :] = keep[-1, :] = keep[:, 0] = keep[:, -1] = False
    rows, cols = np.nonzero(keep)  # row-major order
    order = np.lexsort((rows * w + cols, -resp[rows, cols]))
    accepted: list[tuple[int, int]] = []
    for i in order:
        if p.max_points is not None and len(accepted) >= p.max_points:
            break
        rr, cc = rows[i], cols[i]
        # plateaus: the first pixel in (response, raster) order wins
        if any(abs(rr - ar) <= r and abs(cc - ac) <= r for ar, ac in accepted):
            continue
        accepted.append((rr, cc))
    out: list[tuple[float, float, float]] = []
    for rr, cc in accepted:
        dx, dy = refine_peak(resp, rr, cc)
        x, y = cc + dx, rr + dy
        if any((x - ox) ** 2 + (y - oy) ** 2 < DEDUP_DIST**2 for ox, oy, _ in out):
            continue
        out.append((float(x), float(y), float(resp[rr, cc])))
    return out


def _check_size(img: Image):
    if img.width < MIN_SIZE or img.height < MIN_SIZE:
        raise ParameterError(f"detectors need at least a {MIN_SIZE}x{MIN_SIZE} image, got {img.width}x{img.height}")


def _build(peaks, detector_id, p: DetectorParams, img: Image) -> InterestPointSet:
    pts = tuple(InterestPoint(Point(x, y), resp, p.smoothing_sigma) for x, y, resp in peaks)
    return InterestPointSet(pts, detector_id, p.to_dict(), (img.width, img.height))


# --- response maps ---

def harris_response(img: Image, p: DetectorParams) -> np.ndarray:
    sm = smooth_array(img.data, p.smoothing_sigma)
    gx, gy = gradient(sm)
    si = p.integration_sigma or p.smoothing_sigma
    sxx = smooth_array(gx * gx, si)
    syy = smooth_array(gy * gy, si)
    sxy = smooth_array(gx * gy, si)
    tr = sxx + syy
    return (sxx * syy - sxy * sxy) - HARRIS_K * tr * tr


def log_response(img: Image, p: DetectorParams) -> np.ndarray:
    """|sigma^2 * Laplacian(G_sigma * I)|, the scale-normalised LoG magnitude."""
    s = p.smoothing_sigma
    return np.abs(s * s * laplacian_array(smooth_array(img.data, s)))


def detect_harris(img: Image, p: DetectorParams = DetectorParams()) -> InterestPointSet:
    _check_size(img)
    return _build(select_peaks(harris_response(img, p), p), "harris", p, img)


def detect_log_extrema(img: Image, p: DetectorParams = DetectorParams()) -> InterestPointSet:
    _check_size(img)
    return _build(select_peaks(log_response(img, p), p), "log", p, img)


DETECTORS = {"harris": detect_harris, "log": detect_log_extrema}


@dataclass(frozen=True)
class DetectorSpec:
    """A detector choice bundled with its parameters."""

    kind: str = "harris"
    params: DetectorParams = DetectorParams()

    def __post_init__(self):
        if self.kind not in DETECTORS:
            raise ParameterError(f"unknown detector {self.kind!r}; choose from {sorted(DETECTORS)}")

    def __call__(self, img: Image) -> InterestPointSet:
        return DETECTORS[self.kind](img, self.params)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params.to_dict()}
