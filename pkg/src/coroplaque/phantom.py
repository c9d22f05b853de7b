"""Seeded synthetic coronary-vessel phantoms.

One vessel per patient: a planar circular arc with a small out-of-plane
sinusoid, a Gaussian-bump radius profile per lesion

    r(s) = r_ref * (1 - sum_i f_i * exp(-(s - c_i)^2 / (2 sigma_i^2)))

with ``sigma_i = extent_i / 4`` (the annotated segment is ``c_i +- 2 sigma_i``),
plaque rendered between ``r(s)`` and ``r_ref``, a healthy wall layer out to
``r_ref + wall_thickness`` and additive Gaussian noise.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .evaluation import propagate_revascularization, stenosis_binary_label
from .mpr import Centerline, resample_centerline, rotation_minimizing_frames
from .seeding import derive_seed, rng_for
from .volume import Mask, Volume, load_volume, save_volume

COMPONENTS = ("calcified", "lipid", "mixed")
MANIFEST_VERSION = "coroplaque-dataset/1"


@dataclass
class LesionSpec:
    center: float  # arclength, mm
    extent: float  # segment length, mm
    narrowing: float  # peak fractional radius reduction, [0, 1)
    component: str = "calcified"


@dataclass
class PhantomSpec:
    seed: int = 42
    n_patients: int = 40
    dims: tuple = (64, 64, 184)
    spacing: tuple = (0.5, 0.5, 0.5)
    vessel_length: float = 80.0
    curvature_range: tuple = (0.001, 0.005)
    out_of_plane_amplitude: float = 1.0
    out_of_plane_wavelength: float = 40.0
    r_ref: float = 2.0
    wall_thickness: float = 0.75
    lesions_per_vessel: tuple = (3, 5)
    lesion_extent_range: tuple = (7.0, 12.0)
    narrowing_range: tuple = (0.05, 0.70)
    component_probs: dict = field(
        default_factory=lambda: {"calcified": 0.35, "lipid": 0.35, "mixed": 0.30})
    intensities: dict = field(default_factory=lambda: {
        "background": 0.0, "lumen": 400.0, "wall": 40.0, "calcified": 900.0, "lipid": -50.0})
    noise_sigma: float = 25.0
    label_noise: float = 0.05
    min_gap: float = 2.0
    end_margin: float = 5.0
    centerline_step: float = 0.5
    # Fixed lesions for every patient instead of random draws (tests, demos).
    lesions: list | None = None

    def validate(self):
        if self.n_patients < 1:
            raise ValueError("n_patients must be >= 1")
        if len(self.dims) != 3 or min(self.dims) < 2:
            raise ValueError("dims must be three counts >= 2")
        if min(self.spacing) <= 0:
            raise ValueError("spacing must be positive")
        if self.r_ref <= 0 or self.wall_thickness < 0:
            raise ValueError("r_ref must be positive and wall_thickness non-negative")
        lo, hi = self.narrowing_range
        if not 0 <= lo <= hi < 1:
            raise ValueError("narrowing fractions must lie in [0, 1)")
        if min(self.lesion_extent_range) <= 0:
            raise ValueError("lesion extents must be positive")
        if self.lesions_per_vessel[0] < 0 or self.lesions_per_vessel[0] > self.lesions_per_vessel[1]:
            raise ValueError("invalid lesions_per_vessel range")
        if not 0 <= self.label_noise <= 1:
            raise ValueError("label_noise must be a probability")
        for les in self.lesions or []:
            les = _as_lesion(les)
            if not 0 <= les.narrowing < 1 or les.extent <= 0:
                raise ValueError(f"invalid lesion {les}")
            if les.component not in COMPONENTS:
                raise ValueError(f"unknown plaque component {les.component!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        d["spacing"] = list(self.spacing)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown phantom spec keys: {sorted(unknown)}")
        kw = dict(d)
        for key in ("dims", "spacing", "curvature_range", "lesions_per_vessel",
                    "lesion_extent_range", "narrowing_range"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if kw.get("lesions") is not None:
            kw["lesions"] = [_as_lesion(x) for x in kw["lesions"]]
        return cls(**kw)


def _as_lesion(x) -> LesionSpec:
    return x if isinstance(x, LesionSpec) else LesionSpec(**x)


@dataclass
class LesionRecord:
    patient_id: int
    branch_id: int
    segment_id: int
    start: int
    end: int
    stenosis_degree: float
    high_stenosis: int
    revascularize: int
    component: str = ""
    center_mm: float = 0.0
    extent_mm: float = 0.0
    narrowing: float = 0.0


@dataclass
class PatientPhantom:
    patient_id: int
    volume: Volume | None
    centerline: Centerline
    lumen: Mask | None
    wall: Mask | None
    lesions: list


@dataclass
class _Geometry:
    fine: np.ndarray  # dense arclength-uniform polyline
    fine_s: np.ndarray
    centerline: Centerline
    lesions: list  # LesionSpec, placed


def patient_seed(spec: PhantomSpec, patient_id: int) -> int:
    return derive_seed(spec.seed, "patient", int(patient_id))


def radius_profile(s, lesions, r_ref: float) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    narrowing = np.zeros_like(s)
    for les in lesions:
        sigma = les.extent / 4.0
        narrowing += les.narrowing * np.exp(-0.5 * ((s - les.center) / sigma) ** 2)
    return r_ref * np.clip(1.0 - narrowing, 0.0, None)


def stenosis_degree(les: LesionSpec, lesions, r_ref: float) -> float:
    """1 - min r(s)/r_ref over the lesion's segment (analytic profile)."""
    a, b = les.center - les.extent / 2, les.center + les.extent / 2
    s = np.append(np.linspace(a, b, int(np.ceil((b - a) / 0.01)) + 1), les.center)
    return float(1.0 - radius_profile(s, lesions, r_ref).min() / r_ref)


def _build_geometry(spec: PhantomSpec, rng: np.random.Generator) -> _Geometry:
    kappa = rng.uniform(*spec.curvature_range)
    bend = 1.0 if rng.random() < 0.5 else -1.0
    phase = rng.uniform(0, 2 * np.pi)
    t = np.linspace(0.0, spec.vessel_length, int(round(spec.vessel_length / 0.02)) + 1)
    if kappa > 0:
        radius = 1.0 / kappa
        along = radius * np.sin(t / radius)
        lateral = bend * radius * (1 - np.cos(t / radius))
    else:
        along, lateral = t, np.zeros_like(t)
    amp = spec.out_of_plane_amplitude
    wobble = amp * (np.sin(2 * np.pi * t / spec.out_of_plane_wavelength + phase) - np.sin(phase))
    extent = np.asarray(spec.dims) * np.asarray(spec.spacing)
    x0 = extent[0] / 2 - (lateral.max() + lateral.min()) / 2
    y0 = extent[1] / 2
    z0 = (extent[2] - along.max()) / 2
    dense = np.column_stack([x0 + lateral, y0 + wobble, z0 + along])
    margin = 2 * spec.r_ref
    if np.any(dense.min(axis=0) < margin) or np.any(dense.max(axis=0) > extent - spec.spacing - margin):
        raise ValueError("volume dims too small for the vessel path plus 2*r_ref margin")
    fine_cl = resample_centerline(dense, 0.05)
    fine = fine_cl.points
    fine_s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(fine, axis=0), axis=1))])
    centerline = resample_centerline(dense, spec.centerline_step)
    if spec.lesions is not None:
        lesions = [_as_lesion(x) for x in spec.lesions]
    else:
        lesions = _place_lesions(spec, rng, fine_s[-1])
    return _Geometry(fine, fine_s, centerline, lesions)


def _place_lesions(spec, rng, total_length) -> list:
    lo, hi = spec.lesions_per_vessel
    n = int(rng.integers(lo, hi + 1))
    usable = total_length - 2 * spec.end_margin
    extents = rng.uniform(*spec.lesion_extent_range, size=n)
    while n > 0 and extents.sum() + (n - 1) * spec.min_gap > usable:
        n -= 1
        extents = extents[:n]
    if n == 0:
        return []
    slack = usable - extents.sum() - (n - 1) * spec.min_gap
    cuts = np.sort(rng.uniform(0, slack, size=n))
    lesions = []
    pos = spec.end_margin
    prev_cut = 0.0
    names = list(spec.component_probs)
    probs = np.asarray([spec.component_probs[k] for k in names], dtype=np.float64)
    probs = probs / probs.sum()
    for i in range(n):
        pos += cuts[i] - prev_cut
        prev_cut = cuts[i]
        narrowing = float(rng.uniform(*spec.narrowing_range))
        comp = names[int(rng.choice(len(names), p=probs))]
        lesions.append(LesionSpec(float(pos + extents[i] / 2), float(extents[i]), narrowing, comp))
        pos += extents[i] + spec.min_gap
    return lesions


def _render(spec: PhantomSpec, geo: _Geometry, rng: np.random.Generator):
    dims = tuple(int(d) for d in spec.dims)
    spacing = np.asarray(spec.spacing, dtype=np.float64)
    inten = spec.intensities
    r_out = spec.r_ref + spec.wall_thickness
    h = float(spacing.min())
    reach = r_out + 2 * h

    lo = np.floor((geo.fine.min(axis=0) - reach) / spacing).astype(int)
    hi = np.ceil((geo.fine.max(axis=0) + reach) / spacing).astype(int)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.asarray(dims) - 1)
    ax = [np.arange(lo[d], hi[d] + 1) for d in range(3)]
    gi, gj, gk = np.meshgrid(*ax, indexing="ij")
    idx = np.column_stack([gi.ravel(), gj.ravel(), gk.ravel()])
    world = idx * spacing

    dist, near = cKDTree(geo.fine).query(world, distance_upper_bound=reach)
    hit = np.isfinite(dist)
    idx, world, dist, near = idx[hit], world[hit], dist[hit], near[hit]
    s = geo.fine_s[near]
    r = radius_profile(s, geo.lesions, spec.r_ref)

    # Plaque component per position: the lesion with the largest local bump.
    if geo.lesions:
        bumps = np.stack([les.narrowing * np.exp(-0.5 * ((s - les.center) / (les.extent / 4)) ** 2)
                          for les in geo.lesions])
        owner = np.argmax(bumps, axis=0)
        comp = np.asarray([les.component for les in geo.lesions])[owner]
        frames = rotation_minimizing_frames(Centerline(geo.fine, 0.05))
        w = world - geo.fine[near]
        theta = np.arctan2(np.einsum("ij,ij->i", w, frames.v[near]),
                           np.einsum("ij,ij->i", w, frames.u[near]))
        calc_side = (theta >= 0)
        plaque_val = np.where(comp == "calcified", inten["calcified"],
                              np.where(comp == "lipid", inten["lipid"],
                                       np.where(calc_side, inten["calcified"], inten["lipid"])))
        in_plaque = (dist < spec.r_ref) & (r < spec.r_ref - 1e-6)
    else:
        plaque_val = np.zeros_like(dist)
        in_plaque = np.zeros(dist.shape, dtype=bool)
    outer = np.where(in_plaque, plaque_val,
                     np.where(dist < r_out, inten["wall"], inten["background"]))
    alpha = np.clip(0.5 + (r - dist) / h, 0.0, 1.0)
    val = alpha * inten["lumen"] + (1 - alpha) * outer

    data = np.full(dims, inten["background"], dtype=np.float64)
    data[idx[:, 0], idx[:, 1], idx[:, 2]] = val
    if spec.noise_sigma > 0:
        data += rng.normal(0.0, spec.noise_sigma, size=dims)
    lumen = np.zeros(dims, dtype=np.uint8)
    wall = np.zeros(dims, dtype=np.uint8)
    lumen[tuple(idx[dist < r].T)] = 1
    wall[tuple(idx[(dist >= r) & (dist < r_out)].T)] = 1
    origin = (0.0, 0.0, 0.0)
    return (Volume(data, tuple(spacing), origin), Mask(lumen, tuple(spacing), origin),
            Mask(wall, tuple(spacing), origin))


def assign_branch_revascularization(degrees, lipid_present: bool, rng=None,
                                    high: float = 0.5, moderate: float = 0.35,
                                    label_noise: float = 0.05) -> int:
    """Synthetic clinical decision for one branch.

    Positive iff the worst lesion exceeds ``high``, or exceeds ``moderate``
    with lipid-bearing plaque in the branch; then flipped with probability
    ``label_noise``. One uniform draw is consumed from ``rng`` when
    ``label_noise > 0``.
    """
    degrees = np.asarray(degrees, dtype=np.float64)
    if degrees.size == 0:
        raise ValueError("a branch needs at least one lesion record")
    worst = degrees.max()
    positive = worst > high or (worst > moderate and lipid_present)
    if label_noise > 0:
        if rng is None:
            raise ValueError("label noise requires an rng")
        if rng.random() < label_noise:
            positive = not positive
    return int(positive)


def revascularization_rule(spec: PhantomSpec) -> dict:
    return {"high": 0.5, "moderate": 0.35, "lipid_components": ["lipid", "mixed"],
            "label_noise": spec.label_noise,
            "description": "positive iff max degree > high or (max degree > moderate and "
                           "lipid/mixed plaque present); flipped with probability label_noise; "
                           "propagated to the worst segment only"}


def _records(spec: PhantomSpec, patient_id: int, geo: _Geometry) -> list:
    n = len(geo.centerline)
    step = spec.centerline_step
    degrees = [stenosis_degree(les, geo.lesions, spec.r_ref) for les in geo.lesions]
    records = []
    for sid, (les, deg) in enumerate(zip(geo.lesions, degrees)):
        start = int(np.clip(round((les.center - les.extent / 2) / step), 0, n - 1))
        end = int(np.clip(round((les.center + les.extent / 2) / step), 0, n - 1))
        records.append(LesionRecord(patient_id, 0, sid, start, end, deg,
                                    stenosis_binary_label(deg), 0, les.component,
                                    les.center, les.extent, les.narrowing))
    if records:
        rule = revascularization_rule(spec)
        lipid = any(les.component in rule["lipid_components"] for les in geo.lesions)
        rng = rng_for(spec.seed, "revascularization", int(patient_id), 0)
        branch = assign_branch_revascularization(degrees, lipid, rng, rule["high"],
                                                 rule["moderate"], spec.label_noise)
        for rec, lab in zip(records, propagate_revascularization(branch, degrees)):
            rec.revascularize = int(lab)
    return records


def generate_patient(spec: PhantomSpec, patient_id: int, render: bool = True) -> PatientPhantom:
    """Deterministic phantom for one patient; ``render=False`` skips the voxels."""
    spec.validate()
    rng = np.random.default_rng(patient_seed(spec, patient_id))
    geo = _build_geometry(spec, rng)
    records = _records(spec, patient_id, geo)
    vol = lumen = wall = None
    if render:
        vol, lumen, wall = _render(spec, geo, np.random.default_rng(
            derive_seed(spec.seed, "noise", int(patient_id))))
    return PatientPhantom(patient_id, vol, geo.centerline, lumen, wall, records)


# -- dataset directory ------------------------------------------------------

LESION_COLUMNS = [f.name for f in fields(LesionRecord)]


def patient_dir(root, patient_id: int) -> Path:
    return Path(root) / f"patient_{patient_id:03d}"


def _write_patient(spec: PhantomSpec, root: Path, pid: int) -> list:
    ph = generate_patient(spec, pid)
    pdir = patient_dir(root, pid)
    pdir.mkdir(parents=True, exist_ok=True)
    save_volume(pdir / "volume", ph.volume)
    save_volume(pdir / "lumen", ph.lumen)
    save_volume(pdir / "wall", ph.wall)
    with open(pdir / "centerline.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z"])
        for p in ph.centerline.points:
            w.writerow([repr(float(c)) for c in p])
    write_lesions(pdir / "lesions.csv", ph.lesions)
    return ph.lesions


def write_lesions(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LESION_COLUMNS)
        w.writeheader()
        for rec in records:
            row = asdict(rec)
            for k in ("stenosis_degree", "center_mm", "extent_mm", "narrowing"):
                row[k] = repr(float(row[k]))
            w.writerow(row)


def read_lesions(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(LesionRecord(
                int(row["patient_id"]), int(row["branch_id"]), int(row["segment_id"]),
                int(row["start"]), int(row["end"]), float(row["stenosis_degree"]),
                int(row["high_stenosis"]), int(row["revascularize"]), row["component"],
                float(row["center_mm"]), float(row["extent_mm"]), float(row["narrowing"])))
    return out


def write_dataset(spec: PhantomSpec, root, jobs: int = 1) -> Path:
    """Render every patient to ``root`` and write ``manifest.json``."""
    spec.validate()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    ids = list(range(spec.n_patients))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            all_records = list(ex.map(_write_patient, [spec] * len(ids), [root] * len(ids), ids))
    else:
        all_records = [_write_patient(spec, root, pid) for pid in ids]
    n_lesions = sum(len(r) for r in all_records)
    manifest = {
        "format": MANIFEST_VERSION,
        "spec": spec.to_dict(),
        "revascularization_rule": revascularization_rule(spec),
        "patients": [patient_dir(root, pid).name for pid in ids],
        "n_lesions": n_lesions,
        "seed_derivation": "sha256(repr((master_seed, purpose, patient_id, ...)))[:8] little-endian",
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable) + "\n")
    return root


def _jsonable(o):
    if isinstance(o, LesionSpec):
        return asdict(o)
    raise TypeError(f"cannot serialize {type(o)}")


def read_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("format") != MANIFEST_VERSION:
        raise ValueError(f"unsupported dataset format {manifest.get('format')!r}")
    return manifest


def load_patient(root, patient_id: int) -> PatientPhantom:
    pdir = patient_dir(root, patient_id)
    for name in ("volume", "lumen", "wall"):
        if not (pdir / f"{name}.json").exists():
            raise FileNotFoundError(f"missing {name} for patient {patient_id} in {pdir}")
    vol = load_volume(pdir / "volume")
    lumen = load_volume(pdir / "lumen")
    wall = load_volume(pdir / "wall")
    with open(pdir / "centerline.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    pts = np.asarray([[float(c) for c in r] for r in rows])
    manifest = read_manifest(root)
    step = float(manifest["spec"]["centerline_step"])
    return PatientPhantom(patient_id, vol, Centerline(pts, step), lumen, wall,
                          read_lesions(pdir / "lesions.csv"))
