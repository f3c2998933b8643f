"""Calibration of the matching thresholds and indirect detection-error estimators.

Ground-truth detection errors need the true transform, which registration
never has. The estimators here replace the test ``error > delta_D`` with a
score test ``score > threshold`` computed from the image alone:

* ``sampling``  - mean detection error over synthetic transforms of the image
* ``laplacian`` - minus the Laplacian magnitude at the point
* ``learned``   - minus the probability from a logistic-regression classifier
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .correspond import CountingMetric, DetectionErrorMap, detection_error, ground_truth_correspondences
from .describe import DEFAULT_RADII, DescriptorField, DescriptorParams, continuity_modulus
from .detect import DetectorSpec, InterestPointSet
from .errors import (
    CalibrationError,
    DegeneracyError,
    DegenerateDataError,
    IncompatibilityError,
    MarginError,
    ParameterError,
)
from .evaluate import MIN_MATCHES, approximation_error, fit_transform
from .image import Image, Transform, laplacian_array, sample_bilinear, smooth_array, warp

# score given to points that never land inside the transformed image
NEVER_SEEN = 1e18
FAMILIES = ("identity", "translation", "similarity", "affine")


@dataclass(frozen=True)
class TransformSampler:
    family: str = "similarity"
    max_translation: float = 10.0
    max_rotation: float = math.radians(15.0)
    scale_range: tuple[float, float] = (0.9, 1.1)
    max_shear: float = 0.1
    seed: int = 0
    # rotation/scale pivot, usually the image centre
    center: tuple[float, float] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown transform family {self.family!r}; choose from {FAMILIES}")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ParameterError("scale_range must satisfy 0 < low <= high")
        if self.max_translation < 0 or self.max_rotation < 0 or not 0 <= self.max_shear < 1:
            raise ParameterError("sampler ranges must be nonnegative (shear < 1)")

    def sample(self, n: int) -> list[Transform]:
        """``n`` transforms; the same seed always reproduces the same sequence."""
        if n < 0:
            raise ParameterError("n must be >= 0")
        rng = np.random.default_rng(self.seed)
        return [self._draw(rng) for _ in range(n)]

    def _draw(self, rng) -> Transform:
        if self.family == "identity":
            return Transform.identity()
        mag = rng.uniform(0.0, self.max_translation)
        heading = rng.uniform(0.0, 2.0 * math.pi)
        tx, ty = mag * math.cos(heading), mag * math.sin(heading)
        if self.family == "translation":
            return Transform.shift(tx, ty)
        angle = rng.uniform(-self.max_rotation, self.max_rotation)
        scale = rng.uniform(*self.scale_range)
        sim = Transform.similarity(scale, angle, tx, ty, center=self.center)
        if self.family == "similarity":
            return sim
        shear = rng.uniform(-self.max_shear, self.max_shear)
        stretch = rng.uniform(-self.max_shear, self.max_shear)
        local = np.array([[1.0 + stretch, shear], [0.0, 1.0 - stretch]])
        m = sim.A @ local
        ctr = np.zeros(2) if self.center is None else np.asarray(self.center, dtype=np.float64)
        # keep the pivot where the similarity alone would send it
        t = sim.A @ ctr + sim.t - m @ ctr
        return Transform.affine(m, tuple(t))

    def with_center(self, img: Image) -> TransformSampler:
        return TransformSampler(self.family, self.max_translation, self.max_rotation, self.scale_range,
                                self.max_shear, self.seed, ((img.width - 1) / 2.0, (img.height - 1) / 2.0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale_range"] = list(self.scale_range)
        d["center"] = list(self.center) if self.center is not None else None
        return d


@dataclass(frozen=True)
class CalibrationResult:
    epsilon_D: float
    delta_D: float | None
    descriptor_id: str
    transform_family: str
    sample_count: int
    percentile: float
    per_transform: tuple[float, ...] = ()
    achieved: bool = True
    approximation_error: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_transform"] = list(self.per_transform)
        return d

    @classmethod
    def from_dict(cls, d) -> CalibrationResult:
        d = dict(d)
        d["per_transform"] = tuple(d.get("per_transform", ()))
        return cls(**d)


@dataclass(frozen=True)
class ErrorEstimate:
    scores: tuple[float, ...]
    threshold: float
    estimator_id: str

    def __post_init__(self):
        if self.estimator_id not in ("sampling", "laplacian", "learned", "random"):
            raise ParameterError(f"unknown estimator {self.estimator_id!r}")
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))

    def __len__(self):
        return len(self.scores)

    def predicted_redundant(self) -> np.ndarray:
        if math.isnan(self.threshold):
            raise ParameterError(f"{self.estimator_id} estimate has no threshold")
        return np.array(self.scores) > self.threshold

    def to_dict(self) -> dict:
        return {"estimator_id": self.estimator_id, "threshold": self.threshold, "scores": list(self.scores)}

    @classmethod
    def from_dict(cls, d) -> ErrorEstimate:
        return cls(tuple(d["scores"]), float(d["threshold"]), d["estimator_id"])


# --- delta_D ---

def estimate_delta_D(img: Image, sampler: TransformSampler, n_transforms: int, desc: DescriptorParams,
                     pts: InterestPointSet, epsilon_D: float, radii=DEFAULT_RADII,
                     percentile: float = 95.0) -> CalibrationResult:
    """Worst case (minimum) of the continuity modulus over sampled transforms."""
    if n_transforms < 1:
        raise ParameterError("n_transforms must be >= 1")
    if len(pts) == 0:
        raise ParameterError("delta_D calibration needs a nonempty point set")
    moduli = tuple(continuity_modulus(img, t, desc, pts, epsilon_D, radii, percentile)
                   for t in sampler.sample(n_transforms))
    return CalibrationResult(float(epsilon_D), float(min(moduli)), desc.descriptor_id, sampler.family,
                             n_transforms, float(percentile), moduli)


# --- epsilon_D ---

@dataclass
class MatchObservation:
    """Detections and descriptors for one known transform, ready for matching."""

    src_xy: np.ndarray
    dst_xy: np.ndarray
    src_desc: np.ndarray
    dst_desc: np.ndarray
    transform: Transform
    domain: tuple[int, int]
    true_distances: np.ndarray = field(default_factory=lambda: np.zeros(0))


def observe(img: Image, t: Transform, detector: DetectorSpec, desc: DescriptorParams,
            pair_tolerance: float = 1.5) -> MatchObservation:
    src = detector(img)
    warped = warp(img, t)
    dst = detector(warped)
    d_src, ok_src = DescriptorField(img, desc).sample(src.xy())
    d_dst, ok_dst = DescriptorField(warped, desc).sample(dst.xy())
    src, dst = src.subset(np.nonzero(ok_src)[0]), dst.subset(np.nonzero(ok_dst)[0])
    d_src, d_dst = d_src[ok_src], d_dst[ok_dst]
    true_d = np.zeros(0)
    if len(src) and len(dst):
        gt = ground_truth_correspondences(src, dst, t, pair_tolerance)
        if len(gt):
            idx = np.array(gt.pairs)
            true_d = np.linalg.norm(d_src[idx[:, 0]] - d_dst[idx[:, 1]], axis=1)
    return MatchObservation(src.xy(), dst.xy(), d_src, d_dst, t, (img.width, img.height), true_d)


def registration_error_at(obs: list[MatchObservation], epsilon: float, model: str) -> float:
    """Worst rms approximation error over observations when matching at ``epsilon``.

    Infinite when some observation yields too few or degenerate matches.
    """
    worst = 0.0
    metric = CountingMetric()
    for o in obs:
        d = metric.pairwise(o.src_desc, o.dst_desc)
        ii, jj = np.nonzero(d <= epsilon)
        if len(ii) < MIN_MATCHES[model]:
            return math.inf
        try:
            est = fit_transform(o.src_xy[ii], o.dst_xy[jj], model)
        except DegeneracyError:
            return math.inf
        rms, _ = approximation_error(est, o.transform, o.domain)
        worst = max(worst, rms)
    return worst


def select_epsilon(obs: list[MatchObservation], admissible_error: float, model: str = "similarity",
                   descriptor_id: str = "", family: str = "") -> CalibrationResult:
    """Largest decile of true-pair descriptor distances whose registration stays admissible."""
    if not admissible_error > 0:
        raise ParameterError("admissible_error must be > 0")
    dists = np.concatenate([o.true_distances for o in obs]) if obs else np.zeros(0)
    if dists.size == 0:
        raise CalibrationError("no true correspondences observed; cannot calibrate epsilon_D")
    candidates = np.unique(np.percentile(dists, np.arange(10, 101, 10)))
    errs = [registration_error_at(obs, float(c), model) for c in candidates]
    if all(math.isinf(e) for e in errs):
        raise CalibrationError(f"too few correspondences for a {model} fit at every candidate epsilon_D")
    ok = [i for i, e in enumerate(errs) if e <= admissible_error]
    pick, achieved = (ok[-1], True) if ok else (0, False)
    err = errs[pick]
    return CalibrationResult(float(candidates[pick]), None, descriptor_id, family, len(obs), 100.0,
                             tuple(float(c) for c in candidates), achieved,
                             None if math.isinf(err) else float(err))


def estimate_epsilon_D(img: Image, sampler: TransformSampler, n_transforms: int, detector: DetectorSpec,
                       desc: DescriptorParams, admissible_error: float, model: str = "similarity",
                       pair_tolerance: float = 1.5) -> CalibrationResult:
    """Registration-driven epsilon_D: the loosest match threshold still registering accurately.

    ``per_transform`` of the result lists the candidate thresholds that were swept.
    """
    if not admissible_error > 0:
        raise ParameterError("admissible_error must be > 0")
    obs = [observe(img, t, detector, desc, pair_tolerance) for t in sampler.sample(n_transforms)]
    return select_epsilon(obs, admissible_error, model, desc.descriptor_id, sampler.family)


# --- sampling estimator ---

def sampled_errors(img: Image, detector: DetectorSpec, sampler: TransformSampler, n_transforms: int,
                   src: InterestPointSet | None = None, target=None
                   ) -> tuple[InterestPointSet, list[DetectionErrorMap]]:
    """Detection error maps of ``src`` (default: detected on ``img``) per sampled transform.

    ``target(t, k)`` may replace the plain warp that produces the k-th
    transformed image, e.g. to add pixel noise.
    """
    if n_transforms < 1:
        raise ParameterError("n_transforms must be >= 1")
    src = detector(img) if src is None else src
    maps = []
    for k, t in enumerate(sampler.sample(n_transforms)):
        dst = detector(warp(img, t) if target is None else target(t, k))
        if len(dst) == 0:
            maps.append(DetectionErrorMap((None,) * len(src), t.ident))
        else:
            maps.append(detection_error(src, dst, t))
    return src, maps


def aggregate_errors(maps: list[DetectionErrorMap], how: str = "mean") -> np.ndarray:
    """Per-point mean (or median) of present errors; NEVER_SEEN when none is present."""
    if how not in ("mean", "median"):
        raise ParameterError(f"unknown aggregate {how!r}")
    n = len(maps[0]) if maps else 0
    out = np.empty(n)
    for i in range(n):
        vals = np.array([m.errors[i] for m in maps if m.errors[i] is not None], dtype=np.float64)
        if vals.size == 0:
            out[i] = NEVER_SEEN
        elif how == "mean":
            out[i] = math.fsum(vals) / vals.size
        else:
            out[i] = float(np.median(vals))
    return out


def sampling_estimator(img: Image, detector: DetectorSpec, sampler: TransformSampler, n_transforms: int,
                       threshold: float = math.nan, aggregate: str = "mean") -> ErrorEstimate:
    """Averaged detection error over synthetic transforms with known ground truth."""
    _, maps = sampled_errors(img, detector, sampler, n_transforms)
    return ErrorEstimate(tuple(aggregate_errors(maps, aggregate)), float(threshold), "sampling")


# --- Laplacian estimator ---

def laplacian_estimator(img: Image, pts: InterestPointSet, delta_hat: float, sigma: float | None = None
                        ) -> ErrorEstimate:
    """Score -|Laplacian| per point: a point is predicted redundant when |Laplacian| < delta_hat.

    ``sigma`` optionally smooths the image first.
    """
    arr = img.data if sigma is None else smooth_array(img.data, sigma)
    lap = laplacian_array(arr)
    xy = pts.xy()
    inner = img.contains(xy[:, 0], xy[:, 1], margin=1.0) if len(xy) else np.zeros(0, dtype=bool)
    if not np.all(inner):
        bad = xy[~inner][0]
        raise MarginError(f"point ({bad[0]:.3f}, {bad[1]:.3f}) lies in the Laplacian's zeroed border")
    vals = sample_bilinear(lap, xy[:, 0], xy[:, 1]) if len(xy) else np.zeros(0)
    return ErrorEstimate(tuple(-np.abs(vals)), -float(delta_hat), "laplacian")


def youden_threshold(scores, redundant) -> float:
    """Threshold on ``scores`` (redundant when score > threshold) maximising TPR - FPR."""
    scores = np.asarray(scores, dtype=np.float64)
    redundant = np.asarray(redundant, dtype=bool)
    pos, neg = redundant.sum(), (~redundant).sum()
    if pos == 0 or neg == 0:
        raise DegenerateDataError("threshold selection needs both redundant and correct points")
    cands = np.concatenate([[scores.min() - 1.0], np.unique(scores)])
    best, best_j = cands[0], -math.inf
    for c in cands:
        pred = scores > c
        j = (pred & redundant).sum() / pos - (pred & ~redundant).sum() / neg
        if j > best_j:
            best, best_j = c, j
    return float(best)


# --- learned estimator ---

FEATURE_NAMES = ("abs_laplacian", "detector_response", "local_variance", "jet2_magnitude")


def point_features(img: Image, pts: InterestPointSet, sigma: float = 1.0, window: int = 2) -> np.ndarray:
    """(N, 4) features per point, in FEATURE_NAMES order.

    Deliberately distinct from the matching descriptor: Laplacian magnitude,
    detector response, raw intensity variance over a (2w+1)^2 window, and the
    norm of the smoothed second-derivative jet.
    """
    xy = pts.xy()
    if len(xy) == 0:
        return np.zeros((0, len(FEATURE_NAMES)))
    sm = smooth_array(img.data, sigma)
    lap = np.abs(sample_bilinear(laplacian_array(sm), xy[:, 0], xy[:, 1]))
    resp = np.array([p.response for p in pts])
    oy, ox = np.mgrid[-window : window + 1, -window : window + 1]
    sx = np.clip(xy[:, 0:1] + ox.ravel()[None, :], 0, img.width - 1)
    sy = np.clip(xy[:, 1:2] + oy.ravel()[None, :], 0, img.height - 1)
    var = sample_bilinear(img.data, sx, sy).var(axis=1)
    gx = np.gradient(sm, axis=1)
    gy = np.gradient(sm, axis=0)
    hxx, hxy, hyy = np.gradient(gx, axis=1), np.gradient(gx, axis=0), np.gradient(gy, axis=0)
    jet = np.sqrt(sum(sample_bilinear(h, xy[:, 0], xy[:, 1]) ** 2 for h in (hxx, hxy, hyy)))
    return np.stack([lap, resp, var, jet], axis=1)


@dataclass(frozen=True)
class LearnedModel:
    feature_names: tuple[str, ...]
    mean: tuple[float, ...]
    std: tuple[float, ...]
    weights: tuple[float, ...]
    bias: float
    seed: int
    config: dict = field(default_factory=dict)
    losses: tuple[float, ...] = ()

    def probability(self, features) -> np.ndarray:
        """P(point is delta_D-correct)."""
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != len(self.weights):
            raise IncompatibilityError(f"expected {len(self.weights)} features per point, got shape {x.shape}")
        z = (x - np.array(self.mean)) / np.array(self.std)
        return _sigmoid(z @ np.array(self.weights) + self.bias)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("feature_names", "mean", "std", "weights", "losses"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d) -> LearnedModel:
        d = dict(d)
        for k in ("feature_names", "mean", "std", "weights", "losses"):
            d[k] = tuple(d.get(k, ()))
        return cls(**d)


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def _loss(w, b, z, y):
    s = z @ w + b
    # mean binary cross-entropy, written stably
    return float(np.mean(np.logaddexp(0.0, s) - y * s))


def train_learned_estimator(features, labels, learning_rate: float = 0.5, iterations: int = 2000, seed: int = 0,
                            init_scale: float = 0.0, feature_names=None) -> LearnedModel:
    """Logistic regression by full-batch gradient descent on standardised features.

    ``labels`` are True for delta_D-correct points. A step that would raise the
    loss is retried at half the rate, so the recorded loss never increases.
    Weights start at zero unless ``init_scale`` > 0, in which case they are
    drawn from N(0, init_scale^2) with ``seed``.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=bool).astype(np.float64)
    if x.ndim != 2 or len(x) != len(y):
        raise ParameterError("features must be (N, d) with one label per row")
    n_pos = int(y.sum())
    if min(n_pos, len(y) - n_pos) < 2:
        raise DegenerateDataError("training needs at least 2 examples of each class")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    z = (x - mean) / std
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, init_scale, size=z.shape[1]) if init_scale > 0 else np.zeros(z.shape[1])
    b = 0.0
    lr = float(learning_rate)
    loss = _loss(w, b, z, y)
    losses = [loss]
    for _ in range(iterations):
        r = _sigmoid(z @ w + b) - y
        gw, gb = z.T @ r / len(y), float(r.mean())
        step = lr
        while True:
            nw, nb = w - step * gw, b - step * gb
            nl = _loss(nw, nb, z, y)
            if nl <= loss or step < 1e-12:
                break
            step *= 0.5
        if nl > loss:
            break
        w, b, loss = nw, nb, nl
        losses.append(loss)
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(z.shape[1]))
    cfg = {"learning_rate": learning_rate, "iterations": iterations, "init_scale": init_scale}
    return LearnedModel(names, tuple(mean.tolist()), tuple(std.tolist()), tuple(w.tolist()), float(b), int(seed),
                        cfg, tuple(losses))


def predict_learned(model: LearnedModel, features) -> ErrorEstimate:
    """Score -P(correct); redundant when that probability is below 0.5."""
    p = model.probability(features)
    return ErrorEstimate(tuple(-p), -0.5, "learned")


# --- evaluation of estimators against ground truth ---

@dataclass(frozen=True)
class EstimatorEvaluation:
    estimator_id: str
    # positive class = redundant
    tp: int
    fp: int
    tn: int
    fn: int
    agreement: float
    auc: float
    roc: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roc"] = [list(p) for p in self.roc]
        return d


def roc_auc(scores, redundant) -> float:
    """P(score of a redundant point > score of a correct one), ties counted half.

    Computed by exhaustive pair counting.
    """
    s = np.asarray(scores, dtype=np.float64)
    r = np.asarray(redundant, dtype=bool)
    pos, neg = s[r], s[~r]
    if pos.size == 0 or neg.size == 0:
        return math.nan
    gt = (pos[:, None] > neg[None, :]).sum()
    eq = (pos[:, None] == neg[None, :]).sum()
    return float((gt + 0.5 * eq) / (pos.size * neg.size))


def roc_points(scores, redundant) -> tuple[tuple[float, float], ...]:
    s = np.asarray(scores, dtype=np.float64)
    r = np.asarray(redundant, dtype=bool)
    pos, neg = max(r.sum(), 1), max((~r).sum(), 1)
    pts = [(0.0, 0.0)]
    for c in np.unique(s)[::-1]:
        pred = s >= c
        pts.append((float((pred & ~r).sum() / neg), float((pred & r).sum() / pos)))
    if pts[-1] != (1.0, 1.0):
        pts.append((1.0, 1.0))
    return tuple(pts)


def evaluate_estimator(est: ErrorEstimate, redundant) -> EstimatorEvaluation:
    r = np.asarray(redundant, dtype=bool)
    if len(r) != len(est):
        raise IncompatibilityError(f"{len(est)} scores for {len(r)} labels")
    pred = est.predicted_redundant()
    tp = int((pred & r).sum())
    fp = int((pred & ~r).sum())
    tn = int((~pred & ~r).sum())
    fn = int((~pred & r).sum())
    agreement = (tp + tn) / len(r) if len(r) else math.nan
    return EstimatorEvaluation(est.estimator_id, tp, fp, tn, fn, float(agreement), roc_auc(est.scores, r),
                               roc_points(est.scores, r))


def random_estimator(n: int, seed: int) -> ErrorEstimate:
    """Seeded uniform scores: the no-information baseline."""
    rng = np.random.default_rng(seed)
    return ErrorEstimate(tuple(rng.uniform(0.0, 1.0, size=n)), 0.5, "random")
