"""Command-line interface: ``irredet <command> [options]``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import pipeline as pl
from .calibrate import TransformSampler, estimate_delta_D, estimate_epsilon_D
from .correspond import CorrespondenceSet, detection_error, match_by_descriptor
from .describe import DescriptorField, DescriptorParams, DescriptorVector
from .detect import DetectorParams, DetectorSpec, InterestPointSet
from .errors import IrredetError, ParameterError
from .image import Transform, load_image, save_pgm
from .irredundant import prune, verify_embedding
from .synthetic import corner_image, multi_blob_image, square_image


def _write(path, text: str):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParameterError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path} is not valid JSON: {exc}") from None


def _dump(obj) -> str:
    return pl.dumps_report(obj)


def _stage(msg):
    print(msg, file=sys.stderr)


# --- shared option groups ---

def _detector_opts(p, defaults=True):
    d = pl.DEFAULTS["detector_params"]
    g = p.add_argument_group("detector")
    g.add_argument("--detector", choices=["harris", "log"], default=pl.DEFAULTS["detector"] if defaults else None)
    g.add_argument("--sigma", type=float, default=d["smoothing_sigma"] if defaults else None,
                   help="detector smoothing sigma")
    g.add_argument("--threshold", type=float, default=d["response_threshold"] if defaults else None,
                   help="minimum detector response")
    g.add_argument("--nms-radius", type=int, default=d["nms_radius"] if defaults else None)
    g.add_argument("--max-points", type=int, default=None)


def _descriptor_opts(p, defaults=True):
    d = pl.DEFAULTS["descriptor"]
    g = p.add_argument_group("descriptor")
    g.add_argument("--descriptor", choices=["njet", "patch"], default=d["kind"] if defaults else None)
    g.add_argument("--desc-sigma", type=float, default=d["sigma"] if defaults else None)
    g.add_argument("--order", type=int, default=d["order"] if defaults else None)
    g.add_argument("--radius", type=int, default=d["radius"] if defaults else None)
    g.add_argument("--normalize", action="store_true", default=None if not defaults else False)


def _sampler_opts(p, defaults=True):
    g = p.add_argument_group("transform sampling")
    dd = pl.DEFAULTS
    g.add_argument("--family", choices=["identity", "translation", "similarity", "affine"],
                   default=dd["family"] if defaults else None)
    g.add_argument("--n-transforms", type=int, default=dd["n_transforms"] if defaults else None)
    g.add_argument("--max-translation", type=float, default=dd["max_translation"] if defaults else None)
    g.add_argument("--max-rotation-deg", type=float, default=dd["max_rotation_deg"] if defaults else None)
    g.add_argument("--scale-range", type=float, nargs=2, default=dd["scale_range"] if defaults else None)
    g.add_argument("--max-shear", type=float, default=dd["max_shear"] if defaults else None)
    g.add_argument("--seed", type=int, default=dd["seed"] if defaults else None)


def _detector(a) -> DetectorSpec:
    return DetectorSpec(a.detector, DetectorParams(a.sigma, a.threshold, a.nms_radius, a.max_points))


def _descriptor(a) -> DescriptorParams:
    return DescriptorParams(a.descriptor, a.desc_sigma, a.order, a.radius, bool(a.normalize))


def _sampler(a, img) -> TransformSampler:
    return TransformSampler(a.family, a.max_translation, math.radians(a.max_rotation_deg), tuple(a.scale_range),
                            a.max_shear, a.seed).with_center(img)


def _transform(arg) -> Transform:
    text = arg.strip()
    d = json.loads(text) if text.startswith("{") else _read_json(arg)
    return Transform.from_dict(d)


# --- commands ---

def cmd_synth(a):
    if a.kind == "square":
        img = square_image(a.size, a.side)
    elif a.kind == "blobs":
        img = multi_blob_image(a.size, seed=a.seed)
    else:
        img = corner_image(a.size, seed=a.seed)
    save_pgm(img, a.out)
    print(f"wrote {a.kind} image {img.width}x{img.height} to {a.out}")


def cmd_detect(a):
    img = load_image(a.image)
    pts = _detector(a)(img)
    _write(a.out, pts.to_json() + "\n")
    print(f"{len(pts)} points", file=sys.stderr if a.out in (None, "-") else sys.stdout)


def cmd_describe(a):
    img = load_image(a.image)
    pts = InterestPointSet.from_dict(_read_json(a.points))
    p = _descriptor(a)
    vals, ok = DescriptorField(img, p).sample(pts.xy())
    out = {"descriptor_id": p.descriptor_id, "params": p.to_dict(), "points": a.points,
           "valid": ok.tolist(),
           "descriptors": [v.tolist() if k else None for v, k in zip(vals, ok)]}
    _write(a.out, _dump(out))
    print(f"described {int(ok.sum())} of {len(pts)} points (others too close to the border)")


def _load_descriptors(path):
    d = _read_json(path)
    idx = [i for i, v in enumerate(d["descriptors"]) if v is not None]
    return [DescriptorVector(d["descriptors"][i], d["descriptor_id"]) for i in idx], idx


def cmd_match(a):
    d1, i1 = _load_descriptors(a.desc1)
    d2, i2 = _load_descriptors(a.desc2)
    pairs, cost = match_by_descriptor(d1, d2, a.epsilon_d, a.mode)
    mapped = CorrespondenceSet(tuple((i1[i], i2[j]) for i, j in pairs), "descriptor_matched")
    if a.format == "csv":
        _write(a.out, "i,j\n" + "".join(f"{i},{j}\n" for i, j in mapped))
    else:
        _write(a.out, _dump({"config": vars_clean(a), "correspondences": mapped.to_dict(),
                             "cost": cost.to_dict()}))
    print(f"{len(mapped)} matches, {cost.measured_evaluations} metric evaluations")


def cmd_prune(a):
    src = InterestPointSet.from_dict(_read_json(a.points))
    dst = InterestPointSet.from_dict(_read_json(a.target))
    t = _transform(a.transform)
    errors = detection_error(src, dst, t)
    res = prune(src, errors, a.delta_d)
    if not verify_embedding(src, res):
        raise IrredetError("pruned set failed the embedding check")
    if a.format == "csv":
        _write(a.out, errors.to_csv())
    else:
        _write(a.out, _dump({"config": vars_clean(a), "embedded": True, **res.to_dict()}))
    print(f"kept {len(res.retained)} of {len(src)} points ({res.n_off_domain} off-domain), "
          f"achieved correctness {res.achieved_correctness:.4g}")


def cmd_calibrate(a):
    img = load_image(a.image)
    sampler = _sampler(a, img)
    p = _descriptor(a)
    if a.epsilon_d is not None:
        pts = InterestPointSet.from_dict(_read_json(a.points)) if a.points else _detector(a)(img)
        res = estimate_delta_D(img, sampler, a.n_transforms, p, pts, a.epsilon_d, percentile=a.percentile)
        msg = f"delta_D = {res.delta_D:.4g} px at epsilon_D = {a.epsilon_d:.4g}"
    else:
        res = estimate_epsilon_D(img, sampler, a.n_transforms, _detector(a), p, a.admissible_error)
        msg = f"epsilon_D = {res.epsilon_D:.4g} ({'achieved' if res.achieved else 'NOT achieved'})"
    _write(a.out, _dump({"config": vars_clean(a), "calibration": res.to_dict()}))
    print(msg)


def _pipeline_config(a) -> dict:
    cfg = _read_json(a.config) if a.config else {}
    over = {
        "image": a.image,
        "detector": a.detector,
        "family": a.family,
        "n_transforms": a.n_transforms,
        "max_translation": a.max_translation,
        "max_rotation_deg": a.max_rotation_deg,
        "scale_range": a.scale_range,
        "max_shear": a.max_shear,
        "seed": a.seed,
        "delta_d": a.delta_d,
        "epsilon_d": a.epsilon_d,
        "admissible_error": a.admissible_error,
        "percentile": a.percentile,
        "noise_sigma": a.noise,
        "model": a.model,
        "threads": a.threads,
    }
    cfg.update({k: v for k, v in over.items() if v is not None})
    det = {"smoothing_sigma": a.sigma, "response_threshold": a.threshold, "nms_radius": a.nms_radius,
           "max_points": a.max_points}
    cfg["detector_params"] = {**cfg.get("detector_params", {}), **{k: v for k, v in det.items() if v is not None}}
    desc = {"kind": a.descriptor, "sigma": a.desc_sigma, "order": a.order, "radius": a.radius,
            "normalize": a.normalize}
    cfg["descriptor"] = {**cfg.get("descriptor", {}), **{k: v for k, v in desc.items() if v is not None}}
    if cfg.get("image") is None:
        raise ParameterError("pipeline needs --image or an 'image' entry in --config")
    return cfg


def cmd_pipeline(a):
    cfg = _pipeline_config(a)
    _stage(f"pipeline: {cfg['image']} with {cfg.get('n_transforms', pl.DEFAULTS['n_transforms'])} transforms")
    report = pl.run_pipeline(cfg)
    s = report["summary"]
    if a.format == "csv":
        _write(a.out, pl.transforms_csv(report))
    else:
        _write(a.out, pl.dumps_report(report))
    if a.csv:
        _write(a.csv, pl.transforms_csv(report))
    print(f"n={s['n']} delta_D={s['delta_D']:.4g} epsilon_D={s['epsilon_D']:.4g} "
          f"equivalent={s['all_equivalent']} total_savings={s['total_savings']}")


def cmd_estimators(a):
    if not a.report:
        raise ParameterError("estimators needs --report (a pipeline report with ground-truth errors)")
    truth = _read_json(a.report)
    img = load_image(a.image) if a.image else None
    report = pl.run_estimators(truth, img, a.delta_hat, a.laplacian_sigma, a.seed)
    if a.format == "csv":
        _write(a.out, pl.estimators_csv(report))
    else:
        _write(a.out, pl.dumps_report(report))
    for name, e in report["estimators"].items():
        if "agreement" in e:
            auc = "n/a" if e["auc"] is None or (isinstance(e["auc"], float) and math.isnan(e["auc"])) \
                else f"{e['auc']:.3f}"
            print(f"{name}: agreement={e['agreement']:.3f} auc={auc}")
        else:
            print(f"{name}: {e.get('error')}")


def cmd_report(a):
    from .plotting import render_report

    rep = _read_json(a.input)
    out_dir = Path(a.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    figs = render_report(rep, out_dir)
    kind = rep.get("kind")
    if kind == "pipeline":
        table = pl.transforms_csv(rep)
        summary = rep["summary"]
    else:
        table = pl.estimators_csv(rep)
        summary = {k: {kk: v.get(kk) for kk in ("agreement", "auc", "tp", "fp", "tn", "fn")}
                   for k, v in rep["estimators"].items()}
    if a.format == "csv":
        (out_dir / f"{kind}.csv").write_text(table)
    else:
        (out_dir / f"{kind}_summary.json").write_text(pl.dumps_report(summary))
    for f in figs:
        print(f)


def vars_clean(a) -> dict:
    return {k: v for k, v in sorted(vars(a).items()) if k != "func"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="irredet", description="Irredundant interest point detection toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic test image as PGM")
    p.add_argument("--kind", choices=["square", "blobs", "corners"], default="square")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--side", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("detect", help="detect interest points")
    p.add_argument("--image", required=True)
    _detector_opts(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("describe", help="describe detected points")
    p.add_argument("--image", required=True)
    p.add_argument("--points", required=True)
    _descriptor_opts(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("match", help="threshold or mutual-nearest descriptor matching")
    p.add_argument("--desc1", required=True)
    p.add_argument("--desc2", required=True)
    p.add_argument("--epsilon-d", type=float, required=True)
    p.add_argument("--mode", choices=["threshold", "mutual_nearest"], default="threshold")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("prune", help="remove redundant points given a known transform")
    p.add_argument("--points", required=True, help="points detected in the reference image")
    p.add_argument("--target", required=True, help="points detected in the transformed image")
    p.add_argument("--transform", required=True, help="transform JSON file or inline JSON")
    p.add_argument("--delta-d", type=float, required=True)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("calibrate", help="estimate delta_D (given --epsilon-d) or epsilon_D")
    p.add_argument("--image", required=True)
    p.add_argument("--points", help="points to calibrate on (default: detect)")
    p.add_argument("--epsilon-d", type=float)
    p.add_argument("--admissible-error", type=float, default=1.0)
    p.add_argument("--percentile", type=float, default=95.0)
    _detector_opts(p)
    _descriptor_opts(p)
    _sampler_opts(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("pipeline", help="run detect -> calibrate -> prune -> match -> report")
    p.add_argument("--image")
    p.add_argument("--config", help="JSON config; flags override its entries")
    _detector_opts(p, defaults=False)
    _descriptor_opts(p, defaults=False)
    _sampler_opts(p, defaults=False)
    p.add_argument("--delta-d", type=float)
    p.add_argument("--epsilon-d", type=float)
    p.add_argument("--admissible-error", type=float)
    p.add_argument("--percentile", type=float)
    p.add_argument("--noise", type=float, help="Gaussian pixel noise added to transformed images")
    p.add_argument("--model", choices=["similarity", "affine"])
    p.add_argument("--threads", type=int)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--csv", help="also write the per-transform table here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("estimators", help="compare indirect error estimators against pipeline ground truth")
    p.add_argument("--report", help="pipeline report JSON")
    p.add_argument("--image", help="override the image path recorded in the report")
    p.add_argument("--delta-hat", type=float)
    p.add_argument("--laplacian-sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimators)

    p = sub.add_parser("report", help="render figures and tables from a pipeline or estimators report")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (IrredetError, OSError) as exc:
        print(f"irredet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
