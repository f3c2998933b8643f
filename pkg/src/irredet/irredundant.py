"""Irredundant detector construction by removal of redundant points.

A point is redundant for a fixed (image, transform) context when its
detection error exceeds ``delta_D``: no descriptor-consistent partner exists
for it, so dropping it leaves the ground-truth correspondence set unchanged.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

from .correspond import DetectionErrorMap, ground_truth_correspondences
from .describe import check_compatible
from .detect import InterestPoint, InterestPointSet
from .errors import ConsistencyError, ParameterError
from .image import Transform


@dataclass(frozen=True)
class RemovedPoint:
    index: int
    point: InterestPoint
    # None for points whose image under F leaves the target domain
    error: float | None

    @property
    def off_domain(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class PruneResult:
    retained: InterestPointSet
    retained_indices: tuple[int, ...]
    removed: tuple[RemovedPoint, ...]
    achieved_correctness: float
    delta_D: float
    errors: DetectionErrorMap

    @property
    def n_star(self) -> int:
        return len(self.removed)

    @property
    def n_off_domain(self) -> int:
        return sum(r.off_domain for r in self.removed)

    def retained_errors(self) -> DetectionErrorMap:
        return self.errors.subset(self.retained_indices)

    def to_dict(self) -> dict:
        return {
            "delta_D": self.delta_D,
            "achieved_correctness": self.achieved_correctness,
            "transform_id": self.errors.transform_id,
            "retained": self.retained.to_dict(),
            "retained_indices": list(self.retained_indices),
            "removed": [{"index": r.index, "x": r.point.x, "y": r.point.y, "error": r.error,
                         "off_domain": r.off_domain} for r in self.removed],
            "errors": self.errors.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def _check_errors(src: InterestPointSet, errors: DetectionErrorMap):
    if len(errors) != len(src):
        raise ConsistencyError(f"error map has {len(errors)} entries for {len(src)} points")


def prune(src: InterestPointSet, errors: DetectionErrorMap, delta_D: float) -> PruneResult:
    """Drop every point whose error exceeds ``delta_D`` (or is absent) in one pass."""
    if not delta_D >= 0:
        raise ParameterError("delta_D must be >= 0")
    _check_errors(src, errors)
    keep, removed = [], []
    for i, e in enumerate(errors.errors):
        if e is None or e > delta_D:
            removed.append(RemovedPoint(i, src[i], e))
        else:
            keep.append(i)
    # the trivial 0-correct detector when nothing survives
    achieved = max((errors.errors[i] for i in keep), default=0.0)
    label = src.detector_id if src.detector_id.endswith("+pruned") else f"{src.detector_id}+pruned"
    return PruneResult(src.subset(keep, label), tuple(keep), tuple(removed),
                       float(achieved), float(delta_D), errors)


def prune_sequential(src: InterestPointSet, errors: DetectionErrorMap, delta_D: float
                     ) -> tuple[tuple[int, ...], list[float]]:
    """Remove one redundant point at a time, tracking the correctness level.

    Returns the surviving indices and the correctness sequence
    lambda_0, lambda_1, ... ending at the first level <= delta_D.
    """
    _check_errors(src, errors)

    def err(i):
        e = errors.errors[i]
        return math.inf if e is None else e

    current = list(range(len(src)))
    lambdas = []
    while True:
        lam = max((err(i) for i in current), default=0.0)
        lambdas.append(lam)
        if lam <= delta_D:
            return tuple(current), lambdas
        victim = next(i for i in current if err(i) > delta_D)
        current.remove(victim)


def verify_embedding(original: InterestPointSet, result: PruneResult) -> bool:
    """Check the pruned detector is embedded in the original one.

    Retained points must be a subset of the original, every removed point must
    carry an error above delta_D (or be off-domain), and the retained points
    must be ``achieved_correctness``-correct with that level at most delta_D.
    """
    n = len(original)
    if len(result.errors) != n:
        return False
    idx = list(result.retained_indices)
    rem = [r.index for r in result.removed]
    if sorted(idx + rem) != list(range(n)) or len(result.retained) != len(idx):
        return False
    if any(result.retained[k] != original[i] for k, i in enumerate(idx)):
        return False
    if any(r.point != original[r.index] for r in result.removed):
        return False
    lam = result.achieved_correctness
    if lam > result.delta_D:
        return False
    for i in idx:
        e = result.errors.errors[i]
        if e is None or e > lam:
            return False
    for r in result.removed:
        if r.error != result.errors.errors[r.index]:
            return False
        if r.error is not None and not r.error > result.delta_D:
            return False
    return True


@dataclass(frozen=True)
class PairedDetection:
    """One detector's output on the reference image and on the transformed image."""

    source: InterestPointSet
    target: InterestPointSet
    label: str = ""


def correspondence_coordinates(run: PairedDetection, t: Transform, delta_D: float) -> frozenset:
    gt = ground_truth_correspondences(run.source, run.target, t, delta_D)
    return gt.coordinates(run.source, run.target)


def verify_equivalence(a: PairedDetection, b: PairedDetection, t: Transform, delta_D: float,
                       descriptors=None) -> bool:
    """True iff both detectors yield the same ground-truth correspondence set.

    ``descriptors`` optionally lists every descriptor computed for the four
    point sets; mixing descriptor kinds is refused.
    """
    if descriptors is not None:
        check_compatible([d for group in descriptors for d in group])
    return correspondence_coordinates(a, t, delta_D) == correspondence_coordinates(b, t, delta_D)


@dataclass(frozen=True)
class RelationLawReport:
    equivalent: tuple[tuple[bool, ...], ...]
    reflexive: bool
    symmetric: bool
    transitive: bool
    violations: tuple[str, ...] = field(default_factory=tuple)

    @property
    def holds(self) -> bool:
        return self.reflexive and self.symmetric and self.transitive

    def to_dict(self) -> dict:
        return {"equivalent": [list(r) for r in self.equivalent], "reflexive": self.reflexive,
                "symmetric": self.symmetric, "transitive": self.transitive, "violations": list(self.violations)}


def check_relation_laws(runs, t: Transform, delta_D: float, descriptors=None) -> RelationLawReport:
    """Evaluate reflexivity, symmetry and transitivity of equivalence over ``runs``."""
    runs = list(runs)
    k = len(runs)
    eq = [[verify_equivalence(runs[i], runs[j], t, delta_D, descriptors) for j in range(k)] for i in range(k)]
    violations = []
    for i in range(k):
        if not eq[i][i]:
            violations.append(f"reflexivity fails for set {i}")
    for i, j in itertools.combinations(range(k), 2):
        if eq[i][j] != eq[j][i]:
            violations.append(f"symmetry fails for sets {i},{j}")
    for i, j, m in itertools.permutations(range(k), 3):
        if eq[i][j] and eq[j][m] and not eq[i][m]:
            violations.append(f"transitivity fails for {i}~{j}~{m}")
    return RelationLawReport(
        tuple(tuple(r) for r in eq),
        not any(v.startswith("reflex") for v in violations),
        not any(v.startswith("symm") for v in violations),
        not any(v.startswith("trans") for v in violations),
        tuple(violations),
    )
