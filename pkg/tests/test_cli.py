import csv
import io
import json

import numpy as np
import pytest

from irredet.cli import main
from irredet.correspond import CorrespondenceSet
from irredet.detect import InterestPointSet
from irredet.image import Transform, load_image
from irredet.pipeline import dumps_report, run_pipeline
from irredet.synthetic import square_corners


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--kind", "square", "--out", str(d / "sq.pgm")]) == 0
    assert main(["synth", "--kind", "blobs", "--size", "128", "--seed", "1", "--out", str(d / "blobs.pgm")]) == 0
    return d


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_detect_square(workdir, capsys):
    out = workdir / "pts.json"
    code, stdout, _ = run(["detect", "--image", workdir / "sq.pgm", "--detector", "harris", "--sigma", "1",
                           "--threshold", "0", "--out", out], capsys)
    assert code == 0 and "4 points" in stdout
    pts = InterestPointSet.from_json(out.read_text())
    assert len(pts) == 4
    d = np.linalg.norm(pts.xy()[:, None] - square_corners()[None], axis=2).min(axis=1)
    assert np.all(d <= 1.0)


def test_detect_max_points(workdir, capsys):
    out = workdir / "pts2.json"
    code, _, _ = run(["detect", "--image", workdir / "sq.pgm", "--detector", "harris", "--sigma", "1",
                      "--threshold", "0", "--max-points", "2", "--out", out], capsys)
    assert code == 0 and len(InterestPointSet.from_json(out.read_text())) == 2


def test_missing_file(workdir, capsys):
    code, _, err = run(["detect", "--image", workdir / "absent.pgm"], capsys)
    assert code != 0 and "absent.pgm" in err and "error" in err


def test_describe_match_prune_chain(workdir, capsys):
    img = workdir / "blobs.pgm"
    t = Transform.similarity(1.03, 0.1, 2.0, -1.0, center=(63.5, 63.5))
    from irredet.image import save_pgm, warp
    save_pgm(warp(load_image(img), t), workdir / "warped.pgm")
    (workdir / "t.json").write_text(json.dumps(t.to_dict()))
    for name in ("blobs", "warped"):
        assert run(["detect", "--image", workdir / f"{name}.pgm", "--out", workdir / f"{name}_pts.json"], capsys)[0] == 0
        code, _, _ = run(["describe", "--image", workdir / f"{name}.pgm", "--points", workdir / f"{name}_pts.json",
                          "--out", workdir / f"{name}_desc.json"], capsys)
        assert code == 0
    code, stdout, _ = run(["match", "--desc1", workdir / "blobs_desc.json", "--desc2", workdir / "warped_desc.json",
                           "--epsilon-d", "32", "--out", workdir / "m.json"], capsys)
    assert code == 0
    m = json.loads((workdir / "m.json").read_text())
    pairs = CorrespondenceSet.from_dict(m["correspondences"])
    n2 = sum(v is not None for v in json.loads((workdir / "warped_desc.json").read_text())["descriptors"])
    assert m["cost"]["measured_evaluations"] == m["cost"]["n"] * n2
    assert len(pairs) > 0
    code, _, _ = run(["prune", "--points", workdir / "blobs_pts.json", "--target", workdir / "warped_pts.json",
                      "--transform", workdir / "t.json", "--delta-d", "1.5", "--out", workdir / "pr.json"], capsys)
    assert code == 0
    pr = json.loads((workdir / "pr.json").read_text())
    assert pr["embedded"] is True and pr["achieved_correctness"] <= 1.5
    code, _, _ = run(["prune", "--points", workdir / "blobs_pts.json", "--target", workdir / "warped_pts.json",
                      "--transform", json.dumps(t.to_dict()), "--delta-d", "1.5", "--format", "csv",
                      "--out", workdir / "pr.csv"], capsys)
    rows = list(csv.DictReader(io.StringIO((workdir / "pr.csv").read_text())))
    assert code == 0 and len(rows) == len(pr["errors"]["entries"])


def test_calibrate_delta(workdir, capsys):
    out = workdir / "cal.json"
    code, stdout, _ = run(["calibrate", "--image", workdir / "blobs.pgm", "--epsilon-d", "32",
                           "--n-transforms", "3", "--out", out], capsys)
    assert code == 0 and "delta_D" in stdout
    r = json.loads(out.read_text())
    assert r["calibration"]["delta_D"] == min(r["calibration"]["per_transform"])
    assert r["config"]["epsilon_d"] == 32.0


def pipeline_args(workdir, out, *extra):
    return ["pipeline", "--image", workdir / "blobs.pgm", "--n-transforms", "4", "--out", out, *extra]


def test_pipeline_square_translation(workdir, capsys):
    out = workdir / "sq_rep.json"
    code, _, _ = run(["pipeline", "--image", workdir / "sq.pgm", "--detector", "harris", "--sigma", "1",
                      "--threshold", "0", "--family", "translation", "--seed", "3", "--n-transforms", "5",
                      "--delta-d", "1.5", "--out", out], capsys)
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["summary"]["all_equivalent"] is True
    assert all(p["cost"]["savings"] >= 0 for p in rep["transforms"])
    assert rep["summary"]["n"] == 4


def test_pipeline_identity_family(workdir, capsys):
    out = workdir / "id.json"
    code, _, _ = run(pipeline_args(workdir, out, "--family", "identity", "--delta-d", "1.0"), capsys)
    rep = json.loads(out.read_text())
    assert code == 0
    for p in rep["transforms"]:
        assert p["n_star"] == p["n_off_domain"] == 0 and p["cost"]["savings"] == 0


def test_pipeline_zero_delta(workdir, capsys):
    out = workdir / "z.json"
    code, _, _ = run(pipeline_args(workdir, out, "--delta-d", "0"), capsys)
    rep = json.loads(out.read_text())
    assert code == 0 and rep["summary"]["all_equivalent"]
    assert all(p["n_ground_truth_pairs"] == 0 for p in rep["transforms"])


def test_pipeline_embeds_config_and_roundtrips(workdir, capsys):
    out = workdir / "rep.json"
    code, _, _ = run(pipeline_args(workdir, out, "--csv", workdir / "rep.csv"), capsys)
    text = out.read_text()
    rep = json.loads(text)
    assert code == 0
    assert rep["config"]["n_transforms"] == 4 and rep["config"]["image"].endswith("blobs.pgm")
    assert dumps_report(json.loads(text)) == text
    rows = list(csv.DictReader(io.StringIO((workdir / "rep.csv").read_text())))
    assert len(rows) == 4 and all(r["equivalent"] == "True" for r in rows)


def test_pipeline_config_file_and_threads(workdir, capsys):
    cfg = workdir / "cfg.json"
    cfg.write_text(json.dumps({"image": str(workdir / "blobs.pgm"), "n_transforms": 4, "seed": 2}))
    a, b = workdir / "c1.json", workdir / "c2.json"
    assert run(["pipeline", "--config", cfg, "--out", a], capsys)[0] == 0
    assert run(["pipeline", "--config", cfg, "--threads", "3", "--out", b], capsys)[0] == 0
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    assert ra["transforms"] == rb["transforms"] and ra["summary"] == rb["summary"]


def test_pipeline_matches_library_call(workdir, capsys):
    out = workdir / "lib.json"
    run(pipeline_args(workdir, out), capsys)
    lib = run_pipeline({"image": str(workdir / "blobs.pgm"), "n_transforms": 4})
    assert dumps_report(lib) == out.read_text()


def test_pipeline_stage_error(workdir, capsys):
    blank = workdir / "blank.pgm"
    blank.write_bytes(b"P5\n32 32\n255\n" + bytes(32 * 32))
    code, _, err = run(["pipeline", "--image", blank, "--out", workdir / "x.json"], capsys)
    assert code != 0 and "stage 'detect'" in err
    code, _, err = run(["pipeline", "--out", workdir / "x.json"], capsys)
    assert code != 0 and "--image" in err


def test_estimators_and_report(workdir, capsys, tmp_path):
    rep = workdir / "est_src.json"
    assert run(pipeline_args(workdir, rep, "--n-transforms", "6"), capsys)[0] == 0
    est = workdir / "est.json"
    code, stdout, _ = run(["estimators", "--report", rep, "--out", est], capsys)
    assert code == 0 and "sampling: agreement=1.000" in stdout
    e = json.loads(est.read_text())
    assert e["estimators"]["sampling"]["max_abs_deviation"] == 0.0
    assert {"laplacian", "learned", "random", "sampling"} <= set(e["estimators"])
    code, stdout, _ = run(["report", "--input", rep, "--out-dir", tmp_path / "figs"], capsys)
    assert code == 0
    for name in ("detection_errors.png", "matching_cost.png", "repeatability.png", "pipeline.csv"):
        assert (tmp_path / "figs" / name).stat().st_size > 0
    code, _, _ = run(["report", "--input", est, "--out-dir", tmp_path / "figs", "--format", "json"], capsys)
    assert code == 0 and (tmp_path / "figs" / "estimator_roc.png").exists()
    assert json.loads((tmp_path / "figs" / "estimators_summary.json").read_text())["sampling"]["agreement"] == 1.0


def test_estimators_need_report(capsys, tmp_path):
    code, _, err = run(["estimators", "--out", tmp_path / "e.json"], capsys)
    assert code != 0 and "--report" in err
    code, _, err = run(["estimators", "--report", tmp_path / "none.json"], capsys)
    assert code != 0 and "none.json" in err
