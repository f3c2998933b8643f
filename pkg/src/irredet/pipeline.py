"""End-to-end runs: detection through pruning, matching, cost and registration.

``run_pipeline`` and ``run_estimators`` take a plain config dict and return
a JSON-ready report dict that embeds the config. Reports are deterministic:
the same config yields the same bytes from :func:`dumps_report`.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .calibrate import (
    FEATURE_NAMES,
    ErrorEstimate,
    TransformSampler,
    aggregate_errors,
    estimate_delta_D,
    estimate_epsilon_D,
    evaluate_estimator,
    laplacian_estimator,
    point_features,
    predict_learned,
    random_estimator,
    sampled_errors,
    train_learned_estimator,
    youden_threshold,
)
from .correspond import (
    CorrespondenceSet,
    DetectionErrorMap,
    detection_error,
    ground_truth_correspondences,
    match_by_descriptor,
)
from .cost import cost_report
from .describe import DescriptorField, DescriptorParams, DescriptorVector
from .detect import DetectorParams, DetectorSpec, InterestPointSet
from .errors import DegeneracyError, DegenerateDataError, IrredetError, ParameterError
from .evaluate import approximation_error, estimate_transform, repeatability_of
from .image import Image, load_image, warp
from .irredundant import PairedDetection, prune, verify_embedding, verify_equivalence
from .synthetic import add_noise

REPORT_VERSION = 1

DEFAULTS = {
    "image": None,
    "detector": "log",
    "detector_params": {"smoothing_sigma": 2.0, "response_threshold": 2.0, "nms_radius": 3, "max_points": None},
    "descriptor": {"kind": "njet", "sigma": 2.0, "order": 2, "radius": 3, "normalize": False},
    "family": "similarity",
    "max_translation": 10.0,
    "max_rotation_deg": 15.0,
    "scale_range": [0.9, 1.1],
    "max_shear": 0.1,
    "n_transforms": 20,
    "seed": 0,
    "delta_d": None,
    # null in a config file switches on registration-driven calibration
    "epsilon_d": 32.0,
    "admissible_error": 1.0,
    "percentile": 95.0,
    "noise_sigma": 0.0,
    "model": "similarity",
    "threads": 1,
}


class StageError(IrredetError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


def resolve_config(config: dict) -> dict:
    cfg = {k: (dict(v) if isinstance(v, dict) else v) for k, v in DEFAULTS.items()}
    for k, v in config.items():
        if k not in DEFAULTS:
            raise ParameterError(f"unknown config key {k!r}")
        if isinstance(v, dict) and isinstance(cfg.get(k), dict):
            cfg[k].update(v)
        else:
            cfg[k] = v
    return cfg


def detector_from(cfg) -> DetectorSpec:
    return DetectorSpec(cfg["detector"], DetectorParams(**cfg["detector_params"]))


def descriptor_from(cfg) -> DescriptorParams:
    return DescriptorParams(**cfg["descriptor"])


def sampler_from(cfg, img: Image) -> TransformSampler:
    return TransformSampler(cfg["family"], float(cfg["max_translation"]), math.radians(cfg["max_rotation_deg"]),
                            tuple(cfg["scale_range"]), float(cfg["max_shear"]), int(cfg["seed"])).with_center(img)


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except IrredetError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc


def target_image(img: Image, t, k: int, cfg) -> Image:
    """Warped image for transform ``k``, with the configured pixel noise."""
    w = warp(img, t)
    if cfg["noise_sigma"] > 0:
        w = add_noise(w, cfg["noise_sigma"], seed=[int(cfg["seed"]), k])
    return w


def _descriptors(field: DescriptorField, pts: InterestPointSet):
    vals, ok = field.sample(pts.xy())
    did = field.params.descriptor_id
    idx = np.nonzero(ok)[0]
    return [DescriptorVector(vals[i], did) for i in idx], idx


def _match(desc_a, idx_a, desc_b, idx_b, eps) -> tuple[CorrespondenceSet, int]:
    """Threshold match on describable points, with pairs mapped back to set indices."""
    pairs, cost = match_by_descriptor(desc_a, desc_b, eps, "threshold")
    back = tuple((int(idx_a[i]), int(idx_b[j])) for i, j in pairs)
    return CorrespondenceSet(back, "descriptor_matched"), cost.measured_evaluations


def _transform_stage(k, t, img, src, cfg, detector, desc_params, src_desc, delta_D, eps_D):
    warped = _stage("warp", target_image, img, t, k, cfg)
    dst = _stage("redetect", detector, warped)
    if len(dst) == 0:
        errors = DetectionErrorMap((None,) * len(src), t.ident)
    else:
        errors = _stage("detection_error", detection_error, src, dst, t)
    pr = _stage("prune", prune, src, errors, delta_D)
    embedded = verify_embedding(src, pr)
    original = PairedDetection(src, dst, "original")
    pruned = PairedDetection(pr.retained, dst, "pruned")
    equivalent = _stage("equivalence", verify_equivalence, original, pruned, t, delta_D)
    gt_full = ground_truth_correspondences(src, dst, t, delta_D)
    gt_pruned = ground_truth_correspondences(pr.retained, dst, t, delta_D)

    # descriptor matching, restricted to points whose descriptor support fits the image
    d_src, i_src = src_desc
    keep = {int(i): n for n, i in enumerate(i_src)}
    r_pos = [keep[i] for i in pr.retained_indices if i in keep]
    r_rows = [n for n, i in enumerate(pr.retained_indices) if i in keep]
    d_dst, i_dst = _descriptors(DescriptorField(warped, desc_params), dst)
    m_full, eval_full = _stage("match", _match, d_src, i_src, d_dst, i_dst, eps_D)
    m_pruned, eval_pruned = _stage("match", _match, [d_src[p] for p in r_pos], np.array(r_rows, dtype=np.intp),
                                   d_dst, i_dst, eps_D)
    true_full = m_full.as_set() & gt_full.as_set()
    true_pruned = m_pruned.as_set() & gt_pruned.as_set()
    as_xy = lambda pairs, s: {((s[i].x, s[i].y), (dst[j].x, dst[j].y)) for i, j in pairs}  # noqa: E731
    matches_coincide = as_xy(true_full, src) == as_xy(true_pruned, pr.retained)

    cost = cost_report(len(src), pr.n_star, eval_pruned)

    registration = None
    try:
        reg = estimate_transform(CorrespondenceSet(tuple(true_pruned), "descriptor_matched"),
                                 pr.retained, dst, cfg["model"])
        rms, mx = approximation_error(reg.estimated, t, (img.width, img.height))
        registration = {**reg.to_dict(), "approximation_rms": rms, "approximation_max": mx}
    except DegeneracyError as exc:
        registration = {"error": str(exc)}

    return {
        "index": k,
        "transform": t.to_dict(),
        "n_target": len(dst),
        "errors": [e for e in errors.errors],
        "n": len(src),
        "n_star": pr.n_star,
        "n_off_domain": pr.n_off_domain,
        "achieved_correctness": pr.achieved_correctness,
        "correctness_original": max(errors.present().values(), default=0.0),
        "embedded": embedded,
        "equivalent": equivalent,
        "n_ground_truth_pairs": len(gt_full),
        "matches_original": len(m_full),
        "matches_pruned": len(m_pruned),
        "true_matches_coincide": matches_coincide,
        "cost": cost.to_dict(),
        "measured_evaluations_original": eval_full,
        "repeatability_original": repeatability_of(errors, delta_D),
        "repeatability_pruned": repeatability_of(pr.retained_errors(), delta_D),
        "registration": registration,
    }


def run_pipeline(config: dict, image: Image | None = None) -> dict:
    """Detect, calibrate, prune, match, count and register over sampled transforms.

    ``image`` overrides loading ``config['image']`` (the path is still recorded).
    """
    cfg = resolve_config(config)
    img = image if image is not None else _stage("load", load_image, cfg["image"])
    detector = _stage("config", detector_from, cfg)
    desc_params = _stage("config", descriptor_from, cfg)
    sampler = _stage("config", sampler_from, cfg, img)
    n_tf = int(cfg["n_transforms"])
    if n_tf < 1:
        raise StageError("config", ParameterError("n_transforms must be >= 1"))

    # work with the coordinates exactly as the report stores them, so replays are exact
    src = _stage("detect", detector, img).rounded()
    if len(src) == 0:
        raise StageError("detect", ParameterError("no interest points detected in the reference image"))
    transforms = sampler.sample(n_tf)

    calibration = {}
    eps_D = cfg["epsilon_d"]
    if eps_D is None:
        res = _stage("calibrate_epsilon", estimate_epsilon_D, img, sampler, n_tf, detector, desc_params,
                     float(cfg["admissible_error"]), cfg["model"])
        calibration["epsilon"] = res.to_dict()
        eps_D = res.epsilon_D
    delta_D = cfg["delta_d"]
    if delta_D is None:
        res = _stage("calibrate_delta", estimate_delta_D, img, sampler, n_tf, desc_params, src, float(eps_D),
                     percentile=float(cfg["percentile"]))
        calibration["delta"] = res.to_dict()
        delta_D = res.delta_D
    eps_D, delta_D = float(eps_D), float(delta_D)

    src_desc = _descriptors(DescriptorField(img, desc_params), src)
    work = lambda kt: _transform_stage(kt[0], kt[1], img, src, cfg, detector, desc_params,  # noqa: E731
                                       src_desc, delta_D, eps_D)
    threads = max(1, int(cfg["threads"]))
    if threads == 1:
        per = [work(kt) for kt in enumerate(transforms)]
    else:
        with ThreadPoolExecutor(threads) as pool:
            per = list(pool.map(work, enumerate(transforms)))

    maps = [DetectionErrorMap(tuple(p["errors"]), "") for p in per]
    mean_err = aggregate_errors(maps)
    regs = [p["registration"] for p in per if "approximation_rms" in p["registration"]]
    summary = {
        "n": len(src),
        "delta_D": delta_D,
        "epsilon_D": eps_D,
        "all_equivalent": all(p["equivalent"] for p in per),
        "all_embedded": all(p["embedded"] for p in per),
        "all_true_matches_coincide": all(p["true_matches_coincide"] for p in per),
        "max_achieved_correctness": max(p["achieved_correctness"] for p in per),
        "total_n_star": sum(p["n_star"] for p in per),
        "total_savings": sum(p["cost"]["savings"] for p in per),
        "min_savings": min(p["cost"]["savings"] for p in per),
        "mean_repeatability_original": float(np.mean([p["repeatability_original"] for p in per])),
        "mean_repeatability_pruned": float(np.mean([p["repeatability_pruned"] for p in per])),
        "registrations": len(regs),
        "worst_approximation_rms": max((r["approximation_rms"] for r in regs), default=None),
    }
    return {
        "kind": "pipeline",
        "version": REPORT_VERSION,
        "config": cfg,
        "image_size": [img.width, img.height],
        "calibration": calibration,
        "points": src.to_dict(),
        "ground_truth": {
            "delta_D": delta_D,
            "mean_errors": [float(e) for e in mean_err],
            "redundant": [bool(e > delta_D) for e in mean_err],
        },
        "transforms": per,
        "summary": summary,
    }


def run_estimators(report: dict, image: Image | None = None, delta_hat: float | None = None,
                   laplacian_sigma: float | None = None, seed: int | None = None) -> dict:
    """Score the sampling, Laplacian and learned estimators against a pipeline's labels.

    Labels come from the pipeline's mean ground-truth errors (redundant when
    above delta_D). The points are split once, by ``seed``, into a
    calibration half (Laplacian threshold, classifier training) and an
    evaluation half.
    """
    if report.get("kind") != "pipeline":
        raise ParameterError("estimators need a pipeline report as ground truth")
    cfg = resolve_config(report["config"])
    img = image if image is not None else load_image(cfg["image"])
    seed = int(cfg["seed"]) if seed is None else int(seed)
    src = InterestPointSet.from_dict(report["points"])
    delta_D = float(report["ground_truth"]["delta_D"])
    truth = np.array(report["ground_truth"]["mean_errors"], dtype=np.float64)
    redundant = truth > delta_D
    n = len(src)

    # sampling: replay the same transform sample on the reference image
    sampler = sampler_from(cfg, img)
    detector = detector_from(cfg)
    _, maps = sampled_errors(img, detector, sampler, int(cfg["n_transforms"]), src=src,
                             target=lambda t, k: target_image(img, t, k, cfg))
    samp = ErrorEstimate(tuple(aggregate_errors(maps)), delta_D, "sampling")
    out = {"sampling": {**evaluate_estimator(samp, redundant).to_dict(),
                        "max_abs_deviation": float(np.max(np.abs(np.array(samp.scores) - truth))) if n else 0.0}}

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    calib, test = np.sort(perm[: n // 2]), np.sort(perm[n // 2 :])

    # Laplacian: restricted to the interior where it is defined
    xy = src.xy()
    interior = np.nonzero(img.contains(xy[:, 0], xy[:, 1], margin=1.0))[0] if n else np.zeros(0, dtype=np.intp)
    lap_all = laplacian_estimator(img, src.subset(interior), 0.0, sigma=laplacian_sigma)
    abs_lap = np.zeros(n)
    abs_lap[interior] = -np.array(lap_all.scores)
    inside = np.zeros(n, dtype=bool)
    inside[interior] = True
    lap_entry = {"excluded_border_points": int(n - len(interior))}
    if delta_hat is None:
        c_idx = calib[inside[calib]]
        try:
            # redundant when -|lap| > -delta_hat
            delta_hat = -youden_threshold(-abs_lap[c_idx], redundant[c_idx])
            lap_entry["delta_hat_source"] = "youden"
        except DegenerateDataError as exc:
            delta_hat = 0.0
            lap_entry["delta_hat_source"] = f"fallback: {exc}"
    else:
        lap_entry["delta_hat_source"] = "supplied"
    t_idx = test[inside[test]]
    lap_est = ErrorEstimate(tuple(-abs_lap[t_idx]), -float(delta_hat), "laplacian")
    out["laplacian"] = {**lap_entry, "delta_hat": float(delta_hat),
                        **evaluate_estimator(lap_est, redundant[t_idx]).to_dict()}

    # learned classifier on features distinct from the matching descriptor
    feats = point_features(img, src)
    try:
        model = train_learned_estimator(feats[calib], ~redundant[calib], seed=seed, feature_names=FEATURE_NAMES)
        pred = predict_learned(model, feats[test])
        out["learned"] = {**evaluate_estimator(pred, redundant[test]).to_dict(), "model": model.to_dict()}
    except DegenerateDataError as exc:
        out["learned"] = {"error": str(exc)}

    rand = random_estimator(len(t_idx), seed)
    out["random"] = evaluate_estimator(rand, redundant[t_idx]).to_dict()
    return {
        "kind": "estimators",
        "version": REPORT_VERSION,
        "config": {**cfg, "estimator_seed": seed, "laplacian_sigma": laplacian_sigma},
        "delta_D": delta_D,
        "n_points": n,
        "n_redundant": int(redundant.sum()),
        "split": {"calibration": calib.tolist(), "evaluation": test.tolist()},
        "estimators": out,
    }


def _clean(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) else obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_report(report: dict) -> str:
    """Canonical JSON: sorted keys, nan as null, trailing newline."""
    return json.dumps(_clean(report), sort_keys=True, indent=1, allow_nan=False) + "\n"


def transforms_csv(report: dict) -> str:
    cols = ["index", "n", "n_star", "n_off_domain", "achieved_correctness", "equivalent", "cost_full",
            "cost_pruned", "savings", "measured_evaluations", "measured_evaluations_original",
            "repeatability_original", "repeatability_pruned", "approximation_rms"]
    lines = [",".join(cols)]
    for p in report["transforms"]:
        reg = p["registration"] or {}
        row = [p["index"], p["n"], p["n_star"], p["n_off_domain"], repr(p["achieved_correctness"]),
               p["equivalent"], p["cost"]["cost_full"], p["cost"]["cost_pruned"], p["cost"]["savings"],
               p["cost"]["measured_evaluations"], p["measured_evaluations_original"],
               repr(p["repeatability_original"]), repr(p["repeatability_pruned"]),
               repr(reg["approximation_rms"]) if "approximation_rms" in reg else ""]
        lines.append(",".join(str(v) for v in row))
    return "\n".join(lines) + "\n"


def estimators_csv(report: dict) -> str:
    lines = ["estimator,tp,fp,tn,fn,agreement,auc"]
    for name, e in report["estimators"].items():
        if "tp" not in e:
            lines.append(f"{name},,,,,,")
            continue
        lines.append(f"{name},{e['tp']},{e['fp']},{e['tn']},{e['fn']},{e['agreement']!r},{e['auc']!r}")
    return "\n".join(lines) + "\n"
