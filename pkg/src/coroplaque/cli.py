"""Command-line driver.

Subcommands::

    coroplaque phantom   --config exp.json [--out DIR] [--seed N] [--jobs N]
    coroplaque features  --config exp.json [--out FILE] [--jobs N]
    coroplaque crossval  --config exp.json [--approach NAME] [--target T] [--seed N] [--jobs N]
    coroplaque report    SCORES.csv [SCORES.csv ...] [--out DIR] [--threshold X]
    coroplaque reproduce --config RUN_MANIFEST.json --out DIR [--jobs N]

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .evaluation import METRIC_NAMES, metrics_report
from .phantom import read_manifest, write_dataset
from .pipeline import (VARIANTS, LeakageError, build_samples, crossval, default_approach,
                       read_scores, write_scores)
from .radiomics import extract_radiomics
from .seeding import derive_seed

log = logging.getLogger("coroplaque")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
RUN_MANIFEST_FORMAT = "coroplaque-run/1"


class DataError(RuntimeError):
    pass


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "target", None):
        cfg.target = args.target
        cfg.validate()
    return cfg


def _require_dataset(root: Path) -> dict:
    try:
        return read_manifest(root)
    except (FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"dataset at {root}: {exc}") from None


def cmd_phantom(args) -> int:
    cfg = _experiment(argparse.Namespace(config=args.config, seed=None, target=None))
    spec = cfg.phantom
    if args.seed is not None:
        spec.seed = args.seed
    out = Path(args.out) if args.out else cfg.dataset_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise DataError(f"cannot write to {out}: {exc}") from None
    write_dataset(spec, out, jobs=args.jobs)
    m = read_manifest(out)
    print(f"wrote {len(m['patients'])} patients, {m['n_lesions']} lesions to {out}")
    return EXIT_OK


def _radiomics_config(cfg: ExperimentConfig):
    for a in cfg.approaches:
        if a.variant == "radiomics_gbt":
            return a
    return default_approach("radiomics_gbt")


def cmd_features(args) -> int:
    cfg = _experiment(argparse.Namespace(config=args.config, seed=None, target=None))
    root = cfg.dataset_dir
    _require_dataset(root)
    acfg = _radiomics_config(cfg)
    try:
        samples = build_samples(root, acfg, cfg.target, jobs=args.jobs)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from None
    names = acfg.radiomics.feature_names()
    out = Path(args.out) if args.out else Path(cfg.output) / "features.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "segment_id"] + names)
        for s in samples:
            w.writerow([s.patient_id, s.segment_id] + [repr(float(v)) for v in s.payload])
    print(f"wrote {len(samples)} rows x {len(names)} features to {out}")
    return EXIT_OK


def _report_rows(results, threshold):
    rows = []
    for name, score_rows in results:
        rep = metrics_report([r.score for r in score_rows], [r.target for r in score_rows],
                             threshold)
        rows.append((name, rep))
    return rows


def format_table(rows) -> str:
    width = max([len("Approach")] + [len(n) for n, _ in rows])
    head = "Approach".ljust(width) + "".join(f"{m:>8}" for m in METRIC_NAMES)
    lines = [head, "-" * len(head)]
    for name, rep in rows:
        d = rep.as_dict()
        lines.append(name.ljust(width) + "".join(f"{d[m]:8.3f}" for m in METRIC_NAMES))
    return "\n".join(lines)


def write_report(out_dir: Path, rows, threshold) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["approach"] + list(METRIC_NAMES) + ["threshold", "n", "n_positive"])
        for name, rep in rows:
            d = rep.as_dict()
            w.writerow([name] + [repr(float(d[m])) for m in METRIC_NAMES]
                       + [threshold, rep.n, rep.n_positive])
    (out_dir / "report.txt").write_text(format_table(rows) + "\n")


def cmd_crossval(args) -> int:
    cfg = _experiment(args)
    approaches = cfg.approaches
    if args.approach:
        if args.approach not in VARIANTS:
            raise ConfigError(f"unknown approach {args.approach!r}")
        approaches = [a for a in approaches if a.variant == args.approach] or \
            [default_approach(args.approach)]
    root = cfg.dataset_dir
    dataset_manifest = _require_dataset(root)
    n_patients = len(dataset_manifest["patients"])
    if cfg.k > n_patients:
        raise ConfigError(f"k={cfg.k} exceeds the number of patients ({n_patients})")
    run_dir = Path(cfg.output) / cfg.target
    run_dir.mkdir(parents=True, exist_ok=True)
    entries, table = [], []
    t_all = time.perf_counter()
    for acfg in approaches:
        t0 = time.perf_counter()
        try:
            samples = build_samples(root, acfg, cfg.target, jobs=args.jobs)
        except FileNotFoundError as exc:
            raise DataError(str(exc)) from None
        adir = run_dir / acfg.variant
        res = crossval(samples, acfg, k=cfg.k, seed=cfg.seed, out_dir=adir, jobs=args.jobs)
        score_path = adir / "scores.csv"
        write_scores(score_path, res.rows)
        pooled = res.pooled(cfg.threshold)
        per_fold = res.per_fold(cfg.threshold)
        metrics = {"pooled": pooled.as_dict(),
                   "per_fold": {str(k): v.as_dict() for k, v in per_fold.items()},
                   "degenerate": pooled.degenerate}
        (adir / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
        (adir / "folds.json").write_text(json.dumps(
            [{"fold": f.index, "test": f.test, "train": f.train, "val": f.val, **info}
             for f, info in zip(res.folds, res.fold_info)], indent=2) + "\n")
        elapsed = time.perf_counter() - t0
        entries.append({"variant": acfg.variant, "config": acfg.to_dict(),
                        "scores": str(score_path.relative_to(run_dir)),
                        "scores_sha256": sha256_file(score_path),
                        "fold_seeds": [i["seed"] for i in res.fold_info],
                        "seconds": round(elapsed, 1)})
        table.append((acfg.variant, pooled))
        print(f"{acfg.variant}: pooled AUC {pooled.AUC:.3f} ({elapsed:.0f} s)", flush=True)
    write_report(run_dir, table, cfg.threshold)
    manifest = {
        "format": RUN_MANIFEST_FORMAT,
        "experiment": cfg.to_dict(),
        "dataset_manifest_sha256": sha256_file(root / "manifest.json"),
        "fold_seed": derive_seed(cfg.seed, "folds"),
        "approaches": entries,
        "versions": {"coroplaque": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "seconds": round(time.perf_counter() - t_all, 1),
    }
    (run_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(format_table(table))
    return EXIT_OK


def cmd_report(args) -> int:
    results = []
    for p in args.scores:
        path = Path(p)
        if not path.exists():
            raise DataError(f"score file not found: {path}")
        try:
            rows = read_scores(path)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        name = path.parent.name if path.stem == "scores" else path.stem
        results.append((name, rows))
    table = _report_rows(results, args.threshold)
    if args.out:
        write_report(Path(args.out), table, args.threshold)
    print(format_table(table))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    """Regenerate dataset and cross-validation from a run manifest and compare score files."""
    if not args.config:
        raise ConfigError("reproduce needs --config pointing at a run_manifest.json")
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"run manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if manifest.get("format") != RUN_MANIFEST_FORMAT:
        raise ConfigError(f"{path}: not a run manifest")
    exp = dict(manifest["experiment"])
    out = Path(args.out) if args.out else path.parent / "reproduce"
    exp["output"] = str(out)
    exp["dataset"] = str(out / "dataset")
    exp["approaches"] = [a["config"] for a in manifest["approaches"]]
    cfg = ExperimentConfig.from_dict(exp)
    write_dataset(cfg.phantom, cfg.dataset_dir, jobs=args.jobs)
    if sha256_file(cfg.dataset_dir / "manifest.json") != manifest["dataset_manifest_sha256"]:
        log.warning("dataset manifest differs from the recorded one (paths or versions changed)")
    cfg_path = out / "experiment.json"
    cfg_path.write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    rc = cmd_crossval(argparse.Namespace(config=str(cfg_path), seed=None, target=None,
                                         approach=None, jobs=args.jobs))
    new = json.loads((out / cfg.target / "run_manifest.json").read_text())
    mismatched = [a["variant"] for a, b in zip(manifest["approaches"], new["approaches"])
                  if a["scores_sha256"] != b["scores_sha256"]]
    if mismatched:
        print(f"score files differ from the manifest for: {', '.join(mismatched)}")
        return EXIT_DATA
    print("all score files are bit-identical to the manifest")
    return rc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coroplaque", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, target=False, approach=False, out=True):
        sp.add_argument("--config", metavar="PATH", help="experiment config (JSON)")
        if out:
            sp.add_argument("--out", metavar="DIR", help="output location")
        if seed:
            sp.add_argument("--seed", type=int, metavar="N", help="override the master seed")
        if target:
            sp.add_argument("--target", choices=["stenosis50", "revasc", "revascularization"])
        if approach:
            sp.add_argument("--approach", metavar="NAME", help=f"one of {', '.join(VARIANTS)}")
        sp.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes")

    common(sub.add_parser("phantom", help="generate the synthetic dataset"))
    common(sub.add_parser("features", help="radiomics feature table"), seed=False)
    common(sub.add_parser("crossval", help="k-fold evaluation of the approaches"),
           target=True, approach=True, out=False)
    rp = sub.add_parser("report", help="metric table from score files")
    rp.add_argument("scores", nargs="+", metavar="SCORES.csv")
    rp.add_argument("--out", metavar="DIR")
    rp.add_argument("--threshold", type=float, default=0.5)
    common(sub.add_parser("reproduce", help="rerun everything from a run manifest"), seed=False)
    return p


COMMANDS = {"phantom": cmd_phantom, "features": cmd_features, "crossval": cmd_crossval,
            "report": cmd_report, "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        # Multi-component masks are routine for clipped cubes.
        logging.getLogger("coroplaque.radiomics.shape").setLevel(logging.ERROR)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, LeakageError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
