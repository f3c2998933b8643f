"""Registration from correspondences, approximation error and repeatability."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correspond import CorrespondenceSet, DetectionErrorMap, detection_error
from .cost import CostReport, cost_report  # noqa: F401  (re-exported)
from .detect import InterestPointSet
from .errors import DegeneracyError, ParameterError
from .image import Transform, apply_transform_xy

MIN_MATCHES = {"similarity": 2, "affine": 3}
# relative size below which a point configuration counts as degenerate
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class RegistrationReport:
    model: str
    estimated: Transform
    rms_error: float
    max_error: float
    n_correspondences: int

    def to_dict(self) -> dict:
        return {"model": self.model, "estimated": self.estimated.to_dict(), "rms_error": self.rms_error,
                "max_error": self.max_error, "n_correspondences": self.n_correspondences}


def fit_transform(src: np.ndarray, dst: np.ndarray, model: str) -> Transform:
    """Least-squares ``model`` mapping src -> dst on centred coordinates."""
    if model not in MIN_MATCHES:
        raise ParameterError(f"unknown transform model {model!r}")
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) < MIN_MATCHES[model]:
        raise DegeneracyError(f"{model} fit needs >= {MIN_MATCHES[model]} matches, got {len(src)}")
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    u, v = src - cs, dst - cd
    spread = float(np.sum(u * u))
    scale2 = max(spread, 1.0)
    if spread <= DEGENERATE_TOL * scale2 or spread == 0.0:
        raise DegeneracyError("all source points coincide")
    if model == "similarity":
        a = float(np.sum(u * v)) / spread
        b = float(np.sum(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])) / spread
        m = np.array([[a, -b], [b, a]])
        if a == 0.0 and b == 0.0:
            raise DegeneracyError("similarity fit collapsed to zero scale")
    else:
        utu = u.T @ u
        if np.linalg.det(utu) <= DEGENERATE_TOL * np.trace(utu) ** 2:
            raise DegeneracyError("affine fit needs non-collinear points")
        m = np.linalg.solve(utu, u.T @ v).T
        if abs(np.linalg.det(m)) < DEGENERATE_TOL:
            raise DegeneracyError("affine fit is singular")
    t = cd - m @ cs
    return Transform(model, tuple(map(tuple, m)), tuple(t))


def estimate_transform(matches: CorrespondenceSet, pts1: InterestPointSet, pts2: InterestPointSet,
                       model: str = "similarity") -> RegistrationReport:
    idx = np.array(matches.pairs, dtype=np.intp).reshape(-1, 2)
    src = pts1.xy()[idx[:, 0]] if len(idx) else np.zeros((0, 2))
    dst = pts2.xy()[idx[:, 1]] if len(idx) else np.zeros((0, 2))
    est = fit_transform(src, dst, model)
    res = np.linalg.norm(apply_transform_xy(est, src) - dst, axis=1)
    return RegistrationReport(model, est, float(np.sqrt(np.mean(res * res))), float(res.max()), len(idx))


def domain_grid(width: int, height: int, step: float = 1.0) -> np.ndarray:
    """Regular grid over the domain, always including the far edges."""
    if step < 1:
        raise ParameterError("grid_step must be >= 1")
    xs = np.unique(np.append(np.arange(0.0, width, step), width - 1.0))
    ys = np.unique(np.append(np.arange(0.0, height, step), height - 1.0))
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def approximation_error(estimated: Transform, true_t: Transform, domain: tuple[int, int],
                        grid_step: float = 1.0) -> tuple[float, float]:
    """(rms, max) of ||estimated(X) - true(X)|| over a grid covering ``domain``."""
    grid = domain_grid(domain[0], domain[1], grid_step)
    d = np.linalg.norm(apply_transform_xy(estimated, grid) - apply_transform_xy(true_t, grid), axis=1)
    return float(np.sqrt(np.mean(d * d))), float(d.max())


def repeatability_of(errors: DetectionErrorMap, tolerance: float) -> float:
    if tolerance < 0:
        raise ParameterError("tolerance must be >= 0")
    present = list(errors.present().values())
    if not present:
        return 0.0
    return sum(e <= tolerance for e in present) / len(present)


def repeatability(src: InterestPointSet, dst: InterestPointSet, t: Transform, tolerance: float) -> float:
    """Fraction of in-domain source points re-detected within ``tolerance``."""
    if len(dst) == 0:
        return 0.0
    return repeatability_of(detection_error(src, dst, t), tolerance)
