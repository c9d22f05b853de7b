"""End-to-end wiring of the four lesion classifiers.

Each approach turns a lesion into a payload, trains on the training
patients of a fold and scores the test patients:

* ``radiomics_gbt``: one radiomics vector per segment, boosted trees.
* ``rcnn2d_polar``: Cartesian cubes along the centerline, transformed to
  polar coordinates at input time, slice-wise 2D CNN with slice fusion, GRU.
* ``rcnn3d_baseline``: Cartesian cubes, 3D CNN, GRU.
* ``radiomics_gru``: per-cube shape features of the wall mask, MLP, GRU.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import gbt, nn
from .evaluation import Fold, metrics_report, stratified_patient_kfold
from .mpr import (cut_cubes, extract_mpr_stack, nearest_centerline_index,
                  rotation_minimizing_frames, to_polar)
from .phantom import load_patient, read_manifest
from .radiomics import RadiomicsConfig, extract_radiomics
from .radiomics.shape import SHAPE_FEATURES, shape_features
from .seeding import derive_seed
from .volume import Volume, histogram_equalize

log = logging.getLogger(__name__)

VARIANTS = ("radiomics_gbt", "rcnn2d_polar", "rcnn3d_baseline", "radiomics_gru")
TARGETS = {"stenosis50": "high_stenosis", "revascularization": "revascularize"}
TARGET_ALIASES = {"revasc": "revascularization"}
SCORE_COLUMNS = ("patient_id", "segment_id", "target", "score", "fold")


class LeakageError(RuntimeError):
    """A test patient also appears in the training or validation data."""


def canonical_target(name: str) -> str:
    name = TARGET_ALIASES.get(name, name)
    if name not in TARGETS:
        raise ValueError(f"unknown target {name!r}; expected one of {sorted(TARGETS)}")
    return name


@dataclass
class GeometryConfig:
    size: int = 33
    spacing: float = 0.3
    cube_len: int = 16
    stride: int = 8
    n_angles: int = 16
    n_radii: int = 12
    r_max: float = 4.5

    def __post_init__(self):
        if self.size % 2 != 1 or self.size < 3:
            raise ValueError("slice size must be odd and >= 3")
        if self.spacing <= 0 or self.r_max <= 0:
            raise ValueError("spacing and r_max must be positive")
        if not 1 <= self.stride <= self.cube_len:
            raise ValueError("need 1 <= stride <= cube_len")
        if self.r_max > (self.size - 1) / 2 * self.spacing + 1e-9:
            raise ValueError("r_max exceeds the slice half-width")


@dataclass
class PreprocessConfig:
    bins: int = 256
    clip: tuple = (-200.0, 1000.0)
    neighbourhood_mm: float = 1.5  # dilation of the vessel mask for the equalization histogram

    def __post_init__(self):
        self.clip = tuple(float(c) for c in self.clip)


@dataclass
class AugmentConfig:
    enabled: bool = True
    rotation: bool = True
    mirror: bool = True
    max_shift: float = 2.0  # in-plane pixels
    noise_sigma: float = 0.02  # in normalized intensity units


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-3


@dataclass
class ApproachConfig:
    variant: str
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    radiomics: RadiomicsConfig = field(default_factory=RadiomicsConfig)
    boost: gbt.BoostConfig = field(default_factory=gbt.BoostConfig)
    architecture: nn.ArchitectureConfig = field(default_factory=nn.ArchitectureConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name, cls in (("geometry", GeometryConfig), ("preprocess", PreprocessConfig),
                          ("radiomics", RadiomicsConfig), ("boost", gbt.BoostConfig),
                          ("architecture", nn.ArchitectureConfig), ("augment", AugmentConfig),
                          ("train", TrainConfig)):
            val = getattr(self, name)
            if isinstance(val, dict):
                setattr(self, name, cls(**val))

    def to_dict(self) -> dict:
        d = {"variant": self.variant, "seed": self.seed}
        for name in ("geometry", "preprocess", "boost", "augment", "train"):
            d[name] = asdict(getattr(self, name))
        d["preprocess"]["clip"] = list(self.preprocess.clip)
        d["radiomics"] = self.radiomics.to_dict()
        d["architecture"] = self.architecture.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ApproachConfig":
        base = default_approach(d["variant"]).to_dict()
        for k, v in d.items():
            if isinstance(v, dict) and isinstance(base.get(k), dict):
                base[k].update(v)
            else:
                base[k] = v
        return cls(**base)


def default_approach(variant: str, seed: int = 0) -> ApproachConfig:
    """Defaults per variant.

    The CNN variants use narrower layers than ``ArchitectureConfig`` and the
    3D baseline reads a coarser in-plane grid (17 px at 0.6 mm, the same
    field of view) so that ten folds of 50 epochs fit on a single CPU core.
    """
    cfg = ApproachConfig(variant, seed=seed)
    if variant == "rcnn2d_polar":
        cfg.architecture = nn.ArchitectureConfig(conv2d_channels=(8, 16), slice_features=32,
                                                 fuse_features=32, gru_hidden=32)
    elif variant == "rcnn3d_baseline":
        cfg.geometry = GeometryConfig(size=17, spacing=0.6)
        cfg.architecture = nn.ArchitectureConfig(conv3d_channels=(8, 16, 32), cube_features=32,
                                                 gru_hidden=32)
    elif variant == "radiomics_gru":
        cfg.architecture = nn.ArchitectureConfig(mlp_widths=(32, 32, 32), gru_hidden=32)
    return cfg


@dataclass
class LesionSample:
    patient_id: int
    segment_id: int
    payload: np.ndarray
    target: int
    kind: str  # "features", "cubes" or "shape_sequence"

    def __post_init__(self):
        if self.kind not in ("features", "cubes", "shape_sequence"):
            raise ValueError(f"unknown payload kind {self.kind!r}")


PAYLOAD_KIND = {"radiomics_gbt": "features", "rcnn2d_polar": "cubes",
                "rcnn3d_baseline": "cubes", "radiomics_gru": "shape_sequence"}


# ---------------------------------------------------------------- payloads

@dataclass
class PreparedPatient:
    patient_id: int
    equalized: Volume  # on the clip window
    normalized: Volume  # equalized, mapped to [0, 1]
    centerline: object
    frames: object
    lumen: np.ndarray
    wall: np.ndarray
    lesions: list


def prepare_patient(root, patient_id: int, pre: PreprocessConfig) -> PreparedPatient:
    ph = load_patient(root, patient_id)
    lumen = ph.lumen.data.astype(bool)
    wall = ph.wall.data.astype(bool)
    vessel = lumen | wall
    iters = max(1, int(math.ceil(pre.neighbourhood_mm / min(ph.volume.spacing))))
    neigh = ndimage.binary_dilation(vessel, iterations=iters)
    eq = histogram_equalize(ph.volume, bins=pre.bins, clip=pre.clip, mask=neigh)
    lo, hi = pre.clip
    norm = eq.with_data((eq.data - lo) / (hi - lo))
    frames = rotation_minimizing_frames(ph.centerline)
    return PreparedPatient(patient_id, eq, norm, ph.centerline, frames, lumen, wall, ph.lesions)


def segment_mask(pp: PreparedPatient, start: int, end: int, nearest=None) -> np.ndarray:
    """Vessel voxels (lumen or wall) whose nearest centerline point is in [start, end]."""
    vessel = pp.lumen | pp.wall
    idx = np.argwhere(vessel)
    if nearest is None:
        nearest = nearest_centerline_index(pp.centerline, pp.equalized.index_to_world(idx))
    keep = (nearest >= start) & (nearest <= end)
    out = np.zeros(vessel.shape, dtype=bool)
    out[tuple(idx[keep].T)] = True
    return out


def lesion_cubes(pp: PreparedPatient, rec, geo: GeometryConfig) -> np.ndarray:
    stack = extract_mpr_stack(pp.normalized, pp.centerline, pp.frames, geo.size, geo.spacing,
                              pad=0.0, start=rec.start, stop=rec.end + 1)
    return np.stack(cut_cubes(stack, geo.cube_len, geo.stride)).astype(np.float32)


def shape_sequence(pp: PreparedPatient, rec, geo: GeometryConfig) -> np.ndarray:
    """Per-cube shape features of the wall mask in MPR space, plus a presence flag.

    Cubes whose clipped mask is empty give a zero vector with flag 0.
    """
    wall = pp.equalized.with_data(pp.wall.astype(np.float64))
    stack = extract_mpr_stack(wall, pp.centerline, pp.frames, geo.size, geo.spacing,
                              pad=0.0, start=rec.start, stop=rec.end + 1)
    step = pp.centerline.step
    rows = []
    for cube in cut_cubes(stack.slices > 0.5, geo.cube_len, geo.stride):
        if cube.any():
            f = shape_features(cube, (step, geo.spacing, geo.spacing))
            rows.append([f[k] for k in SHAPE_FEATURES] + [1.0])
        else:
            rows.append([0.0] * len(SHAPE_FEATURES) + [0.0])
    return np.asarray(rows, dtype=np.float64)


def _patient_payloads(args):
    root, pid, cfg = args
    pp = prepare_patient(root, pid, cfg.preprocess)
    out = []
    nearest = None
    if cfg.variant == "radiomics_gbt":
        idx = np.argwhere(pp.lumen | pp.wall)
        nearest = nearest_centerline_index(pp.centerline, pp.equalized.index_to_world(idx))
    for rec in pp.lesions:
        if cfg.variant == "radiomics_gbt":
            mask = segment_mask(pp, rec.start, rec.end, nearest)
            payload = extract_radiomics(pp.equalized, mask, cfg.radiomics).values
        elif cfg.variant == "radiomics_gru":
            payload = shape_sequence(pp, rec, cfg.geometry)
        else:
            payload = lesion_cubes(pp, rec, cfg.geometry)
        out.append((rec, payload))
    return out


_PAYLOAD_CACHE: dict = {}


def _payload_key(root, cfg: ApproachConfig) -> str:
    manifest = read_manifest(root)
    parts = {"root": str(Path(root).resolve()), "spec": manifest["spec"],
             "kind": PAYLOAD_KIND[cfg.variant], "preprocess": asdict(cfg.preprocess)}
    if cfg.variant == "radiomics_gbt":
        parts["radiomics"] = cfg.radiomics.to_dict()
    else:
        parts["geometry"] = asdict(cfg.geometry)
        parts["variant"] = cfg.variant if cfg.variant == "radiomics_gru" else "cubes"
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()


def build_samples(root, cfg: ApproachConfig, target: str, jobs: int = 1) -> list[LesionSample]:
    """One sample per lesion of the dataset, in (patient, segment) order."""
    target = canonical_target(target)
    key = _payload_key(root, cfg)
    if key not in _PAYLOAD_CACHE:
        manifest = read_manifest(root)
        pids = [int(p.split("_")[-1]) for p in manifest["patients"]]
        tasks = [(root, pid, cfg) for pid in pids]
        if jobs > 1:
            with ProcessPoolExecutor(jobs) as ex:
                per_patient = list(ex.map(_patient_payloads, tasks))
        else:
            per_patient = [_patient_payloads(t) for t in tasks]
        _PAYLOAD_CACHE[key] = [item for pl in per_patient for item in pl]
    attr = TARGETS[target]
    kind = PAYLOAD_KIND[cfg.variant]
    return [LesionSample(rec.patient_id, rec.segment_id, payload, int(getattr(rec, attr)), kind)
            for rec, payload in _PAYLOAD_CACHE[key]]


def clear_payload_cache():
    _PAYLOAD_CACHE.clear()


# ------------------------------------------------------------ augmentation

def augment_polar(cubes, geo: GeometryConfig, angle_steps=0, mirror=False,
                  shift=(0.0, 0.0), noise=None) -> np.ndarray:
    """Cartesian cubes -> augmented polar cubes.

    Translation moves the polar origin before resampling; rotation by
    ``angle_steps`` shifts the angle axis cyclically; mirroring the first
    in-plane axis maps angle index ``a`` to ``(A/2 - a) mod A``.
    """
    polar = to_polar(cubes, geo.n_angles, geo.n_radii, geo.r_max, geo.spacing,
                     center_shift=shift)
    a = geo.n_angles
    if angle_steps % a:
        polar = np.roll(polar, int(angle_steps), axis=-2)
    if mirror:
        polar = polar[..., (a // 2 - np.arange(a)) % a, :]
    if noise is not None:
        polar = polar + noise
    return polar.astype(np.float32)


def augment_cartesian(cubes, angle=0.0, mirror=False, shift=(0.0, 0.0), noise=None) -> np.ndarray:
    """In-plane rotation by ``angle`` (radians, from +u towards +v), translation
    by ``shift`` pixels, optional flip of the first in-plane axis, then noise."""
    cubes = np.asarray(cubes, dtype=np.float64)
    out = cubes
    if angle != 0.0 or shift[0] != 0.0 or shift[1] != 0.0:
        c, s = math.cos(angle), math.sin(angle)
        h = (cubes.shape[-1] - 1) / 2.0
        mat = np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
        center = np.array([0.0, h, h])
        offset = center - mat @ center - np.array([0.0, shift[0], shift[1]])
        out = np.stack([ndimage.affine_transform(cube, mat, offset=offset, order=1, mode="nearest")
                        for cube in cubes])
    if mirror:
        out = out[..., ::-1, :]
    if noise is not None:
        out = out + noise
    return np.ascontiguousarray(out, dtype=np.float32)


def augment(sample: LesionSample, rng, cfg: ApproachConfig) -> np.ndarray:
    """Random train-time augmentation; returns the model input for the sample."""
    if sample.kind != "cubes":
        raise ValueError("augmentation applies to image payloads only")
    a = cfg.augment
    geo = cfg.geometry
    shift = rng.uniform(-a.max_shift, a.max_shift, size=2) if a.max_shift > 0 else np.zeros(2)
    k = int(rng.integers(geo.n_angles))
    angle = float(rng.uniform(0.0, 2 * math.pi))
    mirror = bool(rng.random() < 0.5)
    polar = cfg.variant == "rcnn2d_polar"
    shape = (sample.payload.shape[:2] + (geo.n_angles, geo.n_radii) if polar
             else sample.payload.shape)
    noise = rng.normal(0.0, a.noise_sigma, size=shape) if a.noise_sigma > 0 else None
    if not a.rotation:
        k, angle = 0, 0.0
    if not a.mirror:
        mirror = False
    if polar:
        return augment_polar(sample.payload, geo, k, mirror, tuple(shift), noise)
    return augment_cartesian(sample.payload, angle, mirror, tuple(shift), noise)


def model_input(sample: LesionSample, cfg: ApproachConfig) -> np.ndarray:
    """Un-augmented model input (validation, test, or augmentation disabled)."""
    if cfg.variant == "rcnn2d_polar":
        return augment_polar(sample.payload, cfg.geometry)
    return sample.payload


def balanced_batches(targets, batch_size: int, rng) -> list[np.ndarray]:
    """Class-balanced index batches for one epoch.

    Each batch takes ``batch_size // 2`` majority samples, walked without
    replacement through successive random permutations, and the rest from
    the minority class drawn with replacement. One epoch has
    ``ceil(2 * n_majority / batch_size)`` batches.
    """
    y = np.asarray(targets)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("balanced batching needs both classes")
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    major, minor = (neg, pos) if len(neg) >= len(pos) else (pos, neg)
    n_batches = int(math.ceil(2 * len(major) / batch_size))
    n_major = batch_size // 2
    n_minor = batch_size - n_major
    need = n_batches * n_major
    perms = [major[rng.permutation(len(major))] for _ in range(-(-need // len(major)))]
    major_draw = np.concatenate(perms)[:need]
    minor_draw = minor[rng.integers(0, len(minor), size=n_batches * n_minor)]
    return [np.concatenate([major_draw[i * n_major:(i + 1) * n_major],
                            minor_draw[i * n_minor:(i + 1) * n_minor]])
            for i in range(n_batches)]


# ---------------------------------------------------------------- training

@dataclass
class ApproachResult:
    scores: np.ndarray
    info: dict = field(default_factory=dict)


def build_model(cfg: ApproachConfig, n_features: int | None = None):
    arch = cfg.architecture
    geo = cfg.geometry
    seed = derive_seed(cfg.seed, "init")
    if cfg.variant == "rcnn2d_polar":
        return nn.PolarRCNN(arch, geo.cube_len, geo.n_angles, geo.n_radii, seed=seed)
    if cfg.variant == "rcnn3d_baseline":
        return nn.CartesianRCNN(arch, geo.cube_len, geo.size, seed=seed)
    if cfg.variant == "radiomics_gru":
        return nn.FeatureGRU(arch, n_features, seed=seed)
    raise ValueError(f"{cfg.variant} is not a network variant")


def _check_payloads(samples, cfg):
    kind = PAYLOAD_KIND[cfg.variant]
    for s in samples:
        if s.kind != kind:
            raise ValueError(f"{cfg.variant} expects {kind} payloads, got {s.kind}")


def run_approach(train, val, test, cfg: ApproachConfig, workdir=None) -> ApproachResult:
    """Train on ``train`` (+``val`` for the trees, as the selection set for
    networks) and return probabilities for ``test`` in order."""
    for group in (train, val, test):
        _check_payloads(group, cfg)
    if not test:
        return ApproachResult(np.zeros(0))
    if cfg.variant == "radiomics_gbt":
        fit = list(train) + list(val)
        X = np.stack([s.payload for s in fit])
        y = np.asarray([s.target for s in fit], dtype=np.float64)
        model = gbt.train(X, y, replace(cfg.boost, seed=derive_seed(cfg.seed, "boost")))
        if workdir is not None:
            gbt.save_model(model, Path(workdir) / "model.json")
        scores = gbt.predict_proba(model, np.stack([s.payload for s in test]))
        return ApproachResult(scores, {"n_trees": len(model.trees)})

    if cfg.variant == "radiomics_gru":
        cubes = np.concatenate([s.payload for s in train], axis=0)
        mean = cubes.mean(axis=0)
        std = cubes.std(axis=0)
        std[std == 0] = 1.0

        def prep(s):
            return ((s.payload - mean) / std).astype(np.float32)

        train_set = [(prep(s), s.target) for s in train]
        aug = None
        model = build_model(cfg, n_features=cubes.shape[1])
    else:
        prep = (lambda s: model_input(s, cfg))
        model = build_model(cfg)
        if cfg.augment.enabled:
            train_set = [(s, s.target) for s in train]

            def aug(s, rng):
                return augment(s, rng, cfg)
        else:
            train_set = [(prep(s), s.target) for s in train]
            aug = None
    val_set = [(prep(s), s.target) for s in val]
    log_path = Path(workdir) / "training_log.csv" if workdir is not None else None
    res = nn.train_loop(model, train_set, val_set, epochs=cfg.train.epochs,
                        batch_size=cfg.train.batch_size, lr=cfg.train.lr,
                        seed=derive_seed(cfg.seed, "train"), batcher=balanced_batches,
                        augment=aug, log_path=log_path)
    if workdir is not None:
        nn.save_checkpoint(Path(workdir) / "params.bin", model, cfg.to_dict())
    scores = model.predict([prep(s) for s in test])
    return ApproachResult(scores, {"best_epoch": res.best_epoch, "best_val": res.best_score})


# ------------------------------------------------------- cross-validation

@dataclass
class ScoreRow:
    patient_id: int
    segment_id: int
    target: int
    score: float
    fold: int


def assert_no_leakage(fold: Fold, train, val, test):
    """Hard failure if any test patient is present in training or validation data."""
    test_ids = {s.patient_id for s in test}
    seen = {s.patient_id for s in train} | {s.patient_id for s in val}
    leaked = test_ids & seen
    if leaked or not test_ids <= set(fold.test):
        raise LeakageError(f"fold {fold.index}: test patients leaked into training: "
                           f"{sorted(leaked)}")
    if {s.patient_id for s in val} & {s.patient_id for s in train}:
        raise LeakageError(f"fold {fold.index}: validation patients also in training")


def patient_flags(samples):
    flags: dict[int, bool] = {}
    for s in samples:
        flags[s.patient_id] = flags.get(s.patient_id, False) or bool(s.target)
    ids = sorted(flags)
    return ids, [flags[i] for i in ids]


def make_folds(samples, k: int, seed: int) -> list[Fold]:
    ids, flags = patient_flags(samples)
    return stratified_patient_kfold(ids, flags, k=k, seed=derive_seed(seed, "folds"))


def _run_fold(args):
    samples, fold, cfg, out_dir = args
    test_ids, train_ids, val_ids = set(fold.test), set(fold.train), set(fold.val)
    train = [s for s in samples if s.patient_id in train_ids]
    val = [s for s in samples if s.patient_id in val_ids]
    test = [s for s in samples if s.patient_id in test_ids]
    assert_no_leakage(fold, train, val, test)
    workdir = None
    if out_dir is not None:
        workdir = Path(out_dir) / f"fold_{fold.index:02d}"
        workdir.mkdir(parents=True, exist_ok=True)
    res = run_approach(train, val, test, cfg, workdir)
    rows = [ScoreRow(s.patient_id, s.segment_id, s.target, float(p), fold.index)
            for s, p in zip(test, res.scores)]
    return rows, res.info


@dataclass
class CrossvalResult:
    variant: str
    rows: list
    folds: list
    fold_info: list

    def pooled(self, threshold: float = 0.5):
        return metrics_report([r.score for r in self.rows], [r.target for r in self.rows],
                              threshold)

    def per_fold(self, threshold: float = 0.5):
        out = {}
        for f in self.folds:
            rows = [r for r in self.rows if r.fold == f.index]
            if rows:
                out[f.index] = metrics_report([r.score for r in rows],
                                              [r.target for r in rows], threshold)
        return out


def crossval(samples, cfg: ApproachConfig, k: int = 10, seed: int = 42, out_dir=None,
             jobs: int = 1) -> CrossvalResult:
    """Patient-stratified k-fold evaluation; per-fold seeds derive from ``seed``."""
    folds = make_folds(samples, k, seed)
    tasks = []
    for fold in folds:
        fcfg = copy.deepcopy(cfg)
        fcfg.seed = derive_seed(seed, cfg.variant, fold.index)
        tasks.append((samples, fold, fcfg, out_dir))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    rows = [r for fold_rows, _ in results for r in fold_rows]
    rows.sort(key=lambda r: (r.patient_id, r.segment_id))
    info = [dict(fold=f.index, seed=t[2].seed, **i) for f, t, (_, i) in zip(folds, tasks, results)]
    return CrossvalResult(cfg.variant, rows, folds, info)


def write_scores(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCORE_COLUMNS)
        for r in rows:
            w.writerow([r.patient_id, r.segment_id, r.target, repr(float(r.score)), r.fold])


def read_scores(path) -> list[ScoreRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != SCORE_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(SCORE_COLUMNS)}")
        for i, row in enumerate(reader, start=2):
            try:
                r = ScoreRow(int(row["patient_id"]), int(row["segment_id"]), int(row["target"]),
                             float(row["score"]), int(row["fold"]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{i}: malformed row ({exc})") from None
            if r.target not in (0, 1) or not 0.0 <= r.score <= 1.0:
                raise ValueError(f"{path}:{i}: target must be 0/1 and score in [0, 1]")
            rows.append(r)
    if not rows:
        raise ValueError(f"{path}: no score rows")
    return rows
