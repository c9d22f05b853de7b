import csv
import json
import math

import pytest

from coroplaque.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from coroplaque.evaluation import METRIC_NAMES, metrics_report
from coroplaque.pipeline import clear_payload_cache

TINY_PHANTOM = {"n_patients": 4, "dims": [40, 40, 84], "vessel_length": 30.0,
                "lesions_per_vessel": [1, 2], "lesion_extent_range": [5.0, 8.0]}
SHAPE_ONLY = {"variant": "radiomics_gbt",
              "radiomics": {"transforms": ["original"], "classes": ["shape"]}}


def write_config(path, out, **extra):
    doc = {"phantom": TINY_PHANTOM, "approaches": [SHAPE_ONLY], "k": 2, "seed": 7,
           "output": str(out)}
    doc.update(extra)
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def tiny_config(tmp_path):
    return write_config(tmp_path / "exp.json", tmp_path / "run")


def test_phantom_two_patients_is_reproducible(tmp_path, capsys):
    cfg = write_config(tmp_path / "exp.json", tmp_path / "run",
                       phantom=dict(TINY_PHANTOM, n_patients=2))
    assert main(["phantom", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["phantom", "--config", cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
    dirs = sorted(p.name for p in (tmp_path / "a").iterdir() if p.is_dir())
    assert dirs == ["patient_000", "patient_001"]
    assert (tmp_path / "a" / "manifest.json").exists()
    for pid in dirs:
        assert ((tmp_path / "a" / pid / "volume.raw").read_bytes()
                == (tmp_path / "b" / pid / "volume.raw").read_bytes())
    assert "wrote 2 patients" in capsys.readouterr().out


def test_features_shape_only(tmp_path, tiny_config):
    assert main(["phantom", "--config", tiny_config]) == EXIT_OK
    clear_payload_cache()
    out = tmp_path / "f.csv"
    assert main(["features", "--config", tiny_config, "--out", str(out)]) == EXIT_OK
    rows = list(csv.reader(out.open()))
    assert len(rows[0]) == 2 + 10
    manifest = json.loads((tmp_path / "run" / "dataset" / "manifest.json").read_text())
    assert len(rows) - 1 == manifest["n_lesions"]
    clear_payload_cache()
    again = tmp_path / "g.csv"
    main(["features", "--config", tiny_config, "--out", str(again)])
    assert out.read_bytes() == again.read_bytes()


def test_crossval_and_rerun_identical(tmp_path, tiny_config, capsys):
    assert main(["phantom", "--config", tiny_config]) == EXIT_OK
    assert main(["crossval", "--config", tiny_config]) == EXIT_OK
    run = tmp_path / "run" / "stenosis50"
    first = (run / "radiomics_gbt" / "scores.csv").read_bytes()
    report = (run / "report.txt").read_text()
    manifest = json.loads((run / "run_manifest.json").read_text())
    assert manifest["approaches"][0]["variant"] == "radiomics_gbt"
    assert len(manifest["approaches"][0]["fold_seeds"]) == 2
    clear_payload_cache()
    assert main(["crossval", "--config", tiny_config]) == EXIT_OK
    assert (run / "radiomics_gbt" / "scores.csv").read_bytes() == first
    assert (run / "report.txt").read_text() == report


def test_crossval_k_exceeds_patients(tmp_path, capsys):
    cfg = write_config(tmp_path / "exp.json", tmp_path / "run", k=10)
    assert main(["phantom", "--config", cfg]) == EXIT_OK
    assert main(["crossval", "--config", cfg]) == EXIT_CONFIG
    assert "exceeds" in capsys.readouterr().err


def test_crossval_missing_dataset(tiny_config):
    assert main(["crossval", "--config", tiny_config]) == EXIT_DATA


def test_config_errors(tmp_path):
    assert main(["crossval", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["phantom", "--config", str(bad)]) == EXIT_CONFIG
    bad.write_text(json.dumps({"k": 10, "unknown_key": 1}))
    assert main(["phantom", "--config", str(bad)]) == EXIT_CONFIG
    cfg = write_config(tmp_path / "exp.json", tmp_path / "run")
    assert main(["crossval", "--config", cfg, "--approach", "svm"]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["crossval", "--target", "stenosis70"])
    assert exc.value.code == 2


def _write_scores(path, scores, targets):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "segment_id", "target", "score", "fold"])
        for i, (s, y) in enumerate(zip(scores, targets)):
            w.writerow([i, 0, y, s, 0])


def test_report_hand_confusion(tmp_path, capsys):
    # TP=3, FP=1, TN=4, FN=2 at threshold 0.5
    scores = [0.9, 0.8, 0.7, 0.6, 0.1, 0.2, 0.3, 0.4, 0.45, 0.35]
    targets = [1, 1, 1, 0, 0, 0, 0, 0, 1, 1]
    path = tmp_path / "hand.csv"
    _write_scores(path, scores, targets)
    assert main(["report", str(path), "--out", str(tmp_path / "rep")]) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "rep" / "report.csv").open()))
    assert len(rows) == 1 and rows[0]["approach"] == "hand"
    row = {k: float(v) for k, v in rows[0].items() if k not in ("approach",)}
    assert row["Acc"] == pytest.approx(0.7, abs=1e-12)
    assert row["Sens"] == pytest.approx(0.6, abs=1e-12)
    assert row["Spec"] == pytest.approx(0.8, abs=1e-12)
    assert row["PPV"] == pytest.approx(0.75, abs=1e-12)
    assert row["NPV"] == pytest.approx(2 / 3, abs=1e-12)
    assert row["F1"] == pytest.approx(2 / 3, abs=1e-12)
    assert row["MCC"] == pytest.approx(10 / math.sqrt(600), abs=1e-12)
    ref = metrics_report(scores, targets, 0.5).as_dict()
    for k in METRIC_NAMES:
        assert row[k] == pytest.approx(ref[k], abs=1e-15)
    assert "hand" in capsys.readouterr().out


def test_report_errors(tmp_path):
    assert main(["report", str(tmp_path / "missing.csv")]) == EXIT_DATA
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["report", str(bad)]) == EXIT_DATA
    assert main(["phantom", "--jobs", "0"]) == EXIT_CONFIG


def test_reproduce_bit_identical(tmp_path, tiny_config, capsys):
    assert main(["phantom", "--config", tiny_config]) == EXIT_OK
    assert main(["crossval", "--config", tiny_config]) == EXIT_OK
    clear_payload_cache()
    manifest = tmp_path / "run" / "stenosis50" / "run_manifest.json"
    assert main(["reproduce", "--config", str(manifest), "--out", str(tmp_path / "again")]) \
        == EXIT_OK
    assert "bit-identical" in capsys.readouterr().out
    assert ((tmp_path / "again" / "stenosis50" / "radiomics_gbt" / "scores.csv").read_bytes()
            == (tmp_path / "run" / "stenosis50" / "radiomics_gbt" / "scores.csv").read_bytes())
    assert main(["reproduce", "--config", tiny_config]) == EXIT_CONFIG
