"""Acceptance suite: one or more tests per criterion, summarised per criterion at the end.

Criteria 5 and 6 generate the default 40-patient phantom cohort and run the
full ten-fold evaluation through the command-line driver; they are marked
``slow`` and can be deselected with ``-m "not slow"``.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from conftest import details
from coroplaque.cli import EXIT_OK, main
from coroplaque.evaluation import (ConfusionCounts, classification_metrics, prevalence,
                                   roc_auc)
from coroplaque.gbt import BoostConfig, grow_tree, split_gain
from coroplaque.mpr import from_polar, resample_centerline, rotation_minimizing_frames, to_polar
from coroplaque.phantom import PhantomSpec, generate_patient
from coroplaque.pipeline import clear_payload_cache
from coroplaque.radiomics.texture import glcm_matrices, glrlm_matrices
from gradcases import CASES, GRID
from oracles import (ORACLE_DIRECTIONS, brute_auc, brute_glcm, brute_glrlm, exhaustive_tree,
                     nested_equal, tree_as_nested)


def note(n, text):
    details[n].append(text)


# 1. gradients

def test_criterion_1_gradient_suite():
    t0 = time.perf_counter()
    worst, where = 0.0, None
    for name, seed in GRID:
        err = CASES[name](seed)
        if err > worst:
            worst, where = err, (name, seed)
    elapsed = time.perf_counter() - t0
    note(1, f"{len(GRID)} shape/seed cases, worst relative error {worst:.2e} at {where}, "
            f"{elapsed:.1f} s")
    assert len(GRID) >= 20
    assert worst < 1e-5
    assert elapsed < 60


# 2. oracles

def test_criterion_2_texture_oracle():
    rng = np.random.default_rng(20)
    for _ in range(200):
        shape = tuple(int(s) for s in rng.integers(1, 7, 3))
        ng = int(rng.integers(1, 6))
        levels = rng.integers(1, ng + 1, shape)
        mask = rng.random(shape) < rng.uniform(0.3, 1.0)
        mats = glcm_matrices(levels, mask, ng)
        for k, d in enumerate(ORACLE_DIRECTIONS):
            assert np.array_equal(mats[k], brute_glcm(levels, mask, ng, d))
        if mask.any():
            runs = glrlm_matrices(levels, mask, ng)
            for k, d in enumerate(ORACLE_DIRECTIONS):
                assert np.array_equal(runs[k], brute_glrlm(levels, mask, ng, d))
    note(2, "GLCM/GLRLM: 200 random level maps up to 6x6x6, 13 directions each, exact")


def test_criterion_2_auc_oracle():
    rng = np.random.default_rng(21)
    done = 0
    while done < 500:
        n = int(rng.integers(2, 21))
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            continue
        scores = rng.integers(0, 8, n) / 8  # coarse grid forces ties
        assert roc_auc(scores, labels) == float(brute_auc(scores.tolist(), labels.tolist()))
        done += 1
    note(2, "AUC: 500 random datasets of 2..20 samples, exact against rational pair counting")


def test_criterion_2_tree_oracle():
    rng = np.random.default_rng(22)
    for _ in range(300):
        n = int(rng.integers(2, 9))
        n_feat = int(rng.integers(1, 3))
        X = rng.integers(0, 5, (n, n_feat)).astype(float)
        g = rng.integers(-64, 65, n) / 64
        h = rng.integers(1, 17, n) / 64
        depth = int(rng.integers(0, 3))
        lam = float(rng.choice([0.0, 0.5, 1.0]))
        mch = float(rng.choice([0.0, 0.125]))
        cfg = BoostConfig(max_depth=depth, reg_lambda=lam, gamma=0.0, min_child_hessian=mch,
                          learning_rate=0.3, colsample=1.0)
        got = tree_as_nested(grow_tree(X, g, h, np.arange(n_feat), cfg))
        assert nested_equal(got, exhaustive_tree(X, g, h, depth, lam, 0.0, mch, 0.3))
    note(2, "trees: 300 random datasets of 2..8 samples, depth <= 2, match exhaustive search")


# 3. hand values

def test_criterion_3_split_gain():
    assert split_gain(2, 2, -2, 2, 1, 0) == pytest.approx(4 / 3, abs=1e-12)


def test_criterion_3_confusion_metrics():
    m, degenerate = classification_metrics(ConfusionCounts(tp=3, fp=1, tn=4, fn=2))
    hand = {"Acc": 0.7, "Sens": 0.6, "Spec": 0.8, "PPV": 0.75, "NPV": 2 / 3, "F1": 2 / 3,
            "MCC": 10 / math.sqrt(600)}
    for k, v in hand.items():
        assert abs(m[k] - v) <= 1e-9, k
    assert not degenerate


def test_criterion_3_prevalence_high_stenosis():
    p = prevalence([1] * 85 + [0] * 260)
    assert round(100 * p, 2) == 24.64
    note(3, f"85/345 -> {100 * p:.4f}% -> 24.64% as reported")


@pytest.mark.xfail(strict=True, reason="93/345 = 26.9565%, which rounds to 26.96%, not the "
                                       "reported 26.97%; no exact count over 345 gives 26.97%")
def test_criterion_3_prevalence_revascularization():
    p = prevalence([1] * 93 + [0] * 252)
    note(3, f"93/345 -> {100 * p:.4f}% -> {round(100 * p, 2)}% (reported 26.97%; see ledger)")
    assert round(100 * p, 2) == 26.97


# 4. geometry

def test_criterion_4_polar_round_trip():
    off = (np.arange(33) - 16) * 0.3
    disc = np.hypot(off[:, None], off[None, :]) <= 4.5
    worst = 0.0
    for seed in range(10):
        img = gaussian_filter(np.random.default_rng(seed).normal(size=(33, 33)), 3.0)
        back = from_polar(to_polar(img, 64, 16, 4.5, 0.3), 33, 4.5, 0.3)
        worst = max(worst, np.abs(back - img)[disc].mean() / np.ptp(img[disc]))
    note(4, f"polar round trip (A=64, R=16): worst MAE {100 * worst:.2f}% of range over 10 slices")
    assert worst < 0.02


def test_criterion_4_rotation_is_cyclic_shift():
    off = (np.arange(33) - 16) * 0.3
    x, y = np.meshgrid(off, off, indexing="ij")

    def image(theta):
        c, s = math.cos(theta), math.sin(theta)
        xr, yr = c * x + s * y, -s * x + c * y
        return np.exp(-(x * x + y * y) / 8) * (1 + 0.125 * (xr * xr - yr * yr) + 0.3 * yr)

    base = to_polar(image(0.0), 16, 12, 4.5, 0.3)
    worst = 0.0
    for k in range(16):
        rot = to_polar(image(2 * math.pi * k / 16), 16, 12, 4.5, 0.3)
        worst = max(worst, np.abs(rot - np.roll(base, k, axis=0)).max() / np.ptp(base))
    note(4, f"rotation by k steps vs cyclic shift: worst {100 * worst:.2f}% of range (k=0..15)")
    assert worst < 0.02


def test_criterion_4_frames_orthonormal():
    curves = [resample_centerline(np.cumsum(np.random.default_rng(s).normal(size=(12, 3)), 0), 0.3)
              for s in range(10)]
    spec = PhantomSpec()
    curves += [generate_patient(spec, p, render=False).centerline for p in range(5)]
    worst = 0.0
    for cl in curves:
        fr = rotation_minimizing_frames(cl)
        for a in (fr.tangents, fr.u, fr.v):
            worst = max(worst, np.abs(np.linalg.norm(a, axis=1) - 1).max())
        for a, b in ((fr.tangents, fr.u), (fr.tangents, fr.v), (fr.u, fr.v)):
            worst = max(worst, np.abs(np.einsum("ij,ij->i", a, b)).max())
    note(4, f"frames on 15 curves: worst orthonormality defect {worst:.1e}")
    assert worst < 1e-9


# 5 and 6. end-to-end

STENOSIS_APPROACHES = ["radiomics_gbt", "radiomics_gru"]
ALL_APPROACHES = ["radiomics_gbt", "radiomics_gru", "rcnn2d_polar", "rcnn3d_baseline"]


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    base = tmp_path_factory.mktemp("acceptance")
    dataset = base / "dataset"
    configs = {}
    for target, approaches in (("stenosis50", STENOSIS_APPROACHES),
                               ("revascularization", ALL_APPROACHES)):
        path = base / f"{target}.json"
        path.write_text(json.dumps({"approaches": approaches, "target": target, "k": 10,
                                    "seed": 42, "output": str(base / "run"),
                                    "dataset": str(dataset)}))
        configs[target] = str(path)
    clear_payload_cache()
    t0 = time.perf_counter()
    assert main(["phantom", "--config", configs["stenosis50"]]) == EXIT_OK
    for target in configs:
        assert main(["crossval", "--config", configs[target]]) == EXIT_OK
    elapsed = time.perf_counter() - t0
    metrics = {}
    for target, approaches in (("stenosis50", STENOSIS_APPROACHES),
                               ("revascularization", ALL_APPROACHES)):
        for a in approaches:
            m = json.loads((base / "run" / target / a / "metrics.json").read_text())
            metrics[target, a] = m["pooled"]["AUC"]
    return {"base": base, "elapsed": elapsed, "auc": metrics, "dataset": dataset}


@pytest.mark.slow
def test_criterion_5_stenosis_auc(e2e):
    auc = e2e["auc"]
    note(5, "stenosis50 pooled AUC: " + ", ".join(
        f"{a} {auc['stenosis50', a]:.3f}" for a in STENOSIS_APPROACHES))
    for a in STENOSIS_APPROACHES:
        assert auc["stenosis50", a] >= 0.90, a


@pytest.mark.slow
def test_criterion_5_revascularization_auc(e2e):
    auc = e2e["auc"]
    note(5, "revascularization pooled AUC: " + ", ".join(
        f"{a} {auc['revascularization', a]:.3f}" for a in ALL_APPROACHES))
    for a in STENOSIS_APPROACHES:
        assert auc["revascularization", a] >= 0.80, a


# From-scratch CNNs trained on ~130 lesions per fold stay in the low 0.70s on
# this target (see the ledger); the threshold is kept and the miss recorded.
@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="CNN variants reach AUC ~0.70-0.74 on the 40-patient "
                                       "revascularization cohort, below 0.80")
@pytest.mark.parametrize("approach", ["rcnn2d_polar", "rcnn3d_baseline"])
def test_criterion_5_revascularization_auc_cnn(e2e, approach):
    assert e2e["auc"]["revascularization", approach] >= 0.80, approach


@pytest.mark.slow
def test_criterion_5_ordering(e2e):
    auc = {a: e2e["auc"]["revascularization", a] for a in ALL_APPROACHES}
    ordered = auc["radiomics_gru"] >= auc["radiomics_gbt"] >= auc["rcnn2d_polar"]
    note(5, "ordering gru >= gbt >= rcnn2d on revascularization: "
            + ("reproduced" if ordered else "not reproduced (documented deviation, see ledger)"))
    # Reported, not asserted: the criterion admits a documented deviation.


@pytest.mark.slow
def test_criterion_5_runtime(e2e):
    note(5, f"dataset generation plus all cross-validation runs: {e2e['elapsed'] / 60:.1f} min")
    assert e2e["elapsed"] < 30 * 60


@pytest.mark.slow
def test_criterion_6_no_leakage(e2e):
    checked = 0
    for target, approaches in (("stenosis50", STENOSIS_APPROACHES),
                               ("revascularization", ALL_APPROACHES)):
        for a in approaches:
            folds = json.loads((e2e["base"] / "run" / target / a / "folds.json").read_text())
            all_test = []
            for f in folds:
                assert not set(f["test"]) & (set(f["train"]) | set(f["val"]))
                assert not set(f["train"]) & set(f["val"])
                all_test += f["test"]
                checked += 1
            assert sorted(all_test) == list(range(40))
    note(6, f"{checked} folds: test patients disjoint from train/val, every patient tested once")


@pytest.mark.slow
def test_criterion_6_rerun_bit_identical(e2e):
    clear_payload_cache()
    out = e2e["base"] / "replay"
    manifest = e2e["base"] / "run" / "stenosis50" / "run_manifest.json"
    assert main(["reproduce", "--config", str(manifest), "--out", str(out)]) == EXIT_OK
    for a in STENOSIS_APPROACHES:
        first = (e2e["base"] / "run" / "stenosis50" / a / "scores.csv").read_bytes()
        again = (out / "stenosis50" / a / "scores.csv").read_bytes()
        assert first == again, a
    note(6, "stenosis50 run regenerated from its manifest (dataset and all folds): "
            "score files bit-identical")
