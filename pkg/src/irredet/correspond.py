"""Ground-truth correspondence analysis and descriptor matching."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .cost import CostReport, cost_report
from .describe import DescriptorVector, check_compatible
from .detect import InterestPointSet
from .errors import ParameterError
from .image import Transform, apply_transform_xy, invert


class VacuousCorrectnessWarning(UserWarning):
    """No source point maps into the target domain; correctness reported as 0."""


@dataclass(frozen=True)
class DetectionErrorMap:
    # one entry per source point; None when F(X') leaves the target domain
    errors: tuple[float | None, ...]
    transform_id: str = ""

    def __len__(self):
        return len(self.errors)

    def present(self) -> dict[int, float]:
        return {i: e for i, e in enumerate(self.errors) if e is not None}

    def as_array(self) -> np.ndarray:
        """Errors with absent entries as nan."""
        return np.array([np.nan if e is None else e for e in self.errors], dtype=np.float64)

    def subset(self, indices) -> DetectionErrorMap:
        return DetectionErrorMap(tuple(self.errors[i] for i in indices), self.transform_id)

    def to_dict(self) -> dict:
        return {"transform_id": self.transform_id,
                "entries": [{"index": i, "error": e} for i, e in enumerate(self.errors)]}

    @classmethod
    def from_dict(cls, d) -> DetectionErrorMap:
        entries = sorted(d["entries"], key=lambda e: e["index"])
        if [e["index"] for e in entries] != list(range(len(entries))):
            raise ParameterError("detection error entries must cover indices 0..n-1")
        return cls(tuple(None if e["error"] is None else float(e["error"]) for e in entries), d.get("transform_id", ""))

    def to_csv(self) -> str:
        lines = ["index,error"]
        lines += [f"{i},{'' if e is None else repr(e)}" for i, e in enumerate(self.errors)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CorrespondenceSet:
    pairs: tuple[tuple[int, int], ...]
    kind: str = "ground_truth"

    def __post_init__(self):
        if self.kind not in ("ground_truth", "descriptor_matched"):
            raise ParameterError(f"unknown correspondence kind {self.kind!r}")
        object.__setattr__(self, "pairs", tuple(sorted((int(i), int(j)) for i, j in self.pairs)))

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def as_set(self) -> frozenset:
        return frozenset(self.pairs)

    def coordinates(self, src: InterestPointSet, dst: InterestPointSet) -> frozenset:
        """Pairs expressed as ((x', y'), (x'', y'')) so sets from different detectors compare."""
        return frozenset(((src[i].x, src[i].y), (dst[j].x, dst[j].y)) for i, j in self.pairs)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "pairs": [list(p) for p in self.pairs]}

    @classmethod
    def from_dict(cls, d) -> CorrespondenceSet:
        return cls(tuple(tuple(p) for p in d["pairs"]), d["kind"])


def _mapped(src: InterestPointSet, dst: InterestPointSet, t: Transform):
    invert(t)  # raises on a near-singular transform
    mapped = apply_transform_xy(t, src.xy())
    return mapped, dst.in_domain(mapped)


def displacement_matrix(src: InterestPointSet, dst: InterestPointSet, t: Transform) -> tuple[np.ndarray, np.ndarray]:
    """(||F(X'_i) - X''_j|| for all i, j;  in-domain mask over i)."""
    mapped, inside = _mapped(src, dst, t)
    if len(src) == 0 or len(dst) == 0:
        return np.zeros((len(src), len(dst))), inside
    diff = mapped[:, None, :] - dst.xy()[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2)), inside


def detection_error(src: InterestPointSet, dst: InterestPointSet, t: Transform) -> DetectionErrorMap:
    """Distance from each mapped source point to its nearest target point (exhaustive)."""
    if len(dst) == 0:
        raise ParameterError("detection error needs a nonempty target point set")
    dist, inside = displacement_matrix(src, dst, t)
    errs = tuple(float(dist[i].min()) if inside[i] else None for i in range(len(src)))
    return DetectionErrorMap(errs, t.ident)


def correctness_of(errors: DetectionErrorMap) -> float:
    present = errors.present()
    if not present:
        warnings.warn("no source point maps into the target domain", VacuousCorrectnessWarning, stacklevel=2)
        return 0.0
    return max(present.values())


def measure_correctness(src: InterestPointSet, dst: InterestPointSet, t: Transform) -> float:
    """Smallest lambda for which every in-domain point is re-detected within lambda."""
    return correctness_of(detection_error(src, dst, t))


def ground_truth_correspondences(src: InterestPointSet, dst: InterestPointSet, t: Transform,
                                 delta_D: float) -> CorrespondenceSet:
    """All pairs with ||F(X') - X''|| < delta_D, the strict inequality.

    Source points mapped outside the target domain take part in no pair.
    """
    if delta_D < 0:
        raise ParameterError("delta_D must be >= 0")
    dist, inside = displacement_matrix(src, dst, t)
    ii, jj = np.nonzero((dist < delta_D) & inside[:, None])
    return CorrespondenceSet(tuple(zip(ii.tolist(), jj.tolist())), "ground_truth")


class CountingMetric:
    """Euclidean descriptor metric that counts every distance value it produces."""

    def __init__(self):
        self.evaluations = 0

    def __call__(self, a: np.ndarray, b: np.ndarray) -> float:
        self.evaluations += 1
        return float(np.sqrt(np.sum((np.asarray(a) - np.asarray(b)) ** 2)))

    def pairwise(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.asarray(A, dtype=np.float64)
        B = np.asarray(B, dtype=np.float64)
        self.evaluations += A.shape[0] * B.shape[0]
        if A.shape[0] == 0 or B.shape[0] == 0:
            return np.zeros((A.shape[0], B.shape[0]))
        return cdist(A, B, "euclidean")


def _as_matrix(descs) -> np.ndarray:
    if len(descs) == 0:
        return np.zeros((0, 0))
    return np.stack([d.values for d in descs])


def match_by_descriptor(desc1: list[DescriptorVector], desc2: list[DescriptorVector], epsilon_D: float,
                        mode: str = "threshold", metric: CountingMetric | None = None
                        ) -> tuple[CorrespondenceSet, CostReport]:
    """Pairs satisfying rho_D <= epsilon_D, exhaustively evaluated.

    ``threshold`` keeps every qualifying pair; ``mutual_nearest`` keeps only
    pairs that are each other's nearest neighbour (lowest index wins ties).
    The returned report's ``measured_evaluations`` is the exact number of
    metric values computed.
    """
    if epsilon_D < 0:
        raise ParameterError("epsilon_D must be >= 0")
    if mode not in ("threshold", "mutual_nearest"):
        raise ParameterError(f"unknown matching mode {mode!r}")
    check_compatible(list(desc1) + list(desc2))
    metric = metric or CountingMetric()
    before = metric.evaluations
    d = metric.pairwise(_as_matrix(desc1), _as_matrix(desc2))
    ok = d <= epsilon_D
    if mode == "mutual_nearest" and d.size:
        nn12 = np.argmin(d, axis=1)
        nn21 = np.argmin(d, axis=0)
        mutual = np.zeros_like(ok)
        rows = np.arange(d.shape[0])
        mutual[rows, nn12] = nn21[nn12] == rows
        ok &= mutual
    ii, jj = np.nonzero(ok)
    pairs = CorrespondenceSet(tuple(zip(ii.tolist(), jj.tolist())), "descriptor_matched")
    return pairs, cost_report(len(desc1), 0, metric.evaluations - before)


def dumps(obj) -> str:
    return json.dumps(obj.to_dict(), sort_keys=True, indent=1)
