"""Feature bank over image transforms, in a fixed canonical order."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..volume import Mask, Volume
from .firstorder import FIRST_ORDER_FEATURES, DiscretizationSpec, discretize, first_order_features
from .shape import SHAPE_FEATURES, shape_features
from .texture import GLCM_FEATURES, GLRLM_FEATURES, glcm_features, glrlm_features
from .transforms import HAAR_BANDS, _log_response, haar_bands, log_kernel_radius

CLASSES = ("shape", "firstorder", "glcm", "glrlm")
CLASS_FEATURES = {"shape": SHAPE_FEATURES, "firstorder": FIRST_ORDER_FEATURES,
                  "glcm": GLCM_FEATURES, "glrlm": GLRLM_FEATURES}
DEFAULT_LOG_SIGMAS = (1.0, 2.0, 3.0)


def log_name(sigma: float) -> str:
    return f"log-sigma-{sigma:g}mm"


DEFAULT_TRANSFORMS = (("original",) + tuple(log_name(s) for s in DEFAULT_LOG_SIGMAS)
                      + tuple(f"wavelet-{b}" for b in HAAR_BANDS))


@dataclass
class RadiomicsConfig:
    transforms: tuple = DEFAULT_TRANSFORMS
    classes: tuple = CLASSES
    discretization: DiscretizationSpec = field(default_factory=DiscretizationSpec)

    def __post_init__(self):
        self.transforms = tuple(self.transforms)
        self.classes = tuple(self.classes)
        if isinstance(self.discretization, dict):
            self.discretization = DiscretizationSpec(**self.discretization)
        for c in self.classes:
            if c not in CLASSES:
                raise ValueError(f"unknown feature class {c!r}")
        for t in self.transforms:
            _parse_transform(t)

    def feature_names(self) -> list[str]:
        names = []
        if "shape" in self.classes:
            names += [f"original_shape_{f}" for f in SHAPE_FEATURES]
        for t in self.transforms:
            for c in CLASSES[1:]:
                if c in self.classes:
                    names += [f"{t}_{c}_{f}" for f in CLASS_FEATURES[c]]
        return names

    def to_dict(self) -> dict:
        d = self.discretization
        return {"transforms": list(self.transforms), "classes": list(self.classes),
                "discretization": {"mode": d.mode, "width": d.width, "count": d.count}}


def _parse_transform(name: str):
    if name == "original":
        return ("original", None)
    if name.startswith("log-sigma-") and name.endswith("mm"):
        return ("log", float(name[len("log-sigma-"):-2]))
    if name.startswith("wavelet-") and name[8:] in HAAR_BANDS:
        return ("wavelet", name[8:])
    raise ValueError(f"unknown transform {name!r}")


@dataclass
class FeatureVector:
    """Ordered ``(transform, class, feature, value)`` entries."""

    entries: list

    @property
    def names(self) -> list[str]:
        return [f"{t}_{c}_{f}" for t, c, f, _ in self.entries]

    @property
    def values(self) -> np.ndarray:
        return np.asarray([e[3] for e in self.entries], dtype=np.float64)

    def __len__(self):
        return len(self.entries)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))


def _bbox(m: np.ndarray):
    idx = np.argwhere(m)
    return idx.min(axis=0), idx.max(axis=0) + 1


def _crop(arr, lo, hi):
    return arr[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]


def _texture_entries(tname, values, mask, classes, disc, voxel_volume):
    out = []
    if "firstorder" in classes:
        fo = first_order_features(values, mask, disc, voxel_volume)
        out += [(tname, "firstorder", k, fo[k]) for k in FIRST_ORDER_FEATURES]
    if "glcm" in classes or "glrlm" in classes:
        levels, ng = discretize(values, mask, disc)
        if "glcm" in classes:
            g = glcm_features(levels, mask, ng)
            out += [(tname, "glcm", k, g[k]) for k in GLCM_FEATURES]
        if "glrlm" in classes:
            r = glrlm_features(levels, mask, ng)
            out += [(tname, "glrlm", k, r[k]) for k in GLRLM_FEATURES]
    return out


def extract_radiomics(vol: Volume, mask: Mask | np.ndarray, config: RadiomicsConfig | None = None
                      ) -> FeatureVector:
    """Shape once from the mask, then first-order/GLCM/GLRLM per enabled transform.

    Filters run on a crop around the mask's bounding box with enough margin
    that the in-mask responses equal those of the full volume.
    """
    config = config or RadiomicsConfig()
    m = np.asarray(mask.data if isinstance(mask, Mask) else mask).astype(bool)
    if m.shape != vol.dims:
        raise ValueError("mask and volume differ in shape")
    if not m.any():
        raise ValueError("empty mask")
    spacing = np.asarray(vol.spacing)
    dims = np.asarray(vol.dims)
    lo, hi = _bbox(m)
    entries = []
    if "shape" in config.classes:
        sf = shape_features(_crop(m, lo, hi), spacing)
        entries += [("original", "shape", k, sf[k]) for k in SHAPE_FEATURES]
    tex_classes = [c for c in config.classes if c != "shape"]
    if not tex_classes:
        return FeatureVector(entries)

    voxel_volume = float(np.prod(spacing))
    wavelet_cache = None
    for tname in config.transforms:
        kind, arg = _parse_transform(tname)
        if kind == "original":
            vals = _crop(vol.data, lo, hi)
            tm = _crop(m, lo, hi)
            vv = voxel_volume
        elif kind == "log":
            rad = np.asarray(log_kernel_radius(arg, spacing))
            if np.any(2 * rad + 1 > dims):
                raise ValueError(f"LoG sigma {arg} mm: kernel exceeds the volume extent")
            clo = np.maximum(lo - rad, 0)
            chi = np.minimum(hi + rad, dims)
            resp = _log_response(_crop(vol.data, clo, chi), spacing, arg)
            vals = _crop(resp, lo - clo, hi - clo)
            tm = _crop(m, lo, hi)
            vv = voxel_volume
        else:
            if wavelet_cache is None:
                wavelet_cache = _wavelet_crop(vol.data, m, lo, hi)
            bands, tm = wavelet_cache
            vals = bands[arg]
            vv = voxel_volume * 8.0
        entries += _texture_entries(tname, vals, tm, tex_classes, config.discretization, vv)
    fv = FeatureVector(entries)
    if not np.all(np.isfinite(fv.values)):
        bad = [n for n, v in zip(fv.names, fv.values) if not np.isfinite(v)]
        raise FloatingPointError(f"non-finite radiomics features: {bad[:5]}")
    return fv


def _wavelet_crop(data, m, lo, hi):
    # Align the crop to even indices so the decimation grid matches the full volume's.
    dims = np.asarray(data.shape)
    clo = (lo // 2) * 2
    chi = np.minimum(((hi + 1) // 2) * 2, dims)
    crop = _crop(data, clo, chi)
    mcrop = _crop(m, clo, chi)
    bands = haar_bands(crop)
    mp = np.pad(mcrop, [(0, n % 2) for n in mcrop.shape], mode="edge")
    s = mp.shape
    coarse = mp.reshape(s[0] // 2, 2, s[1] // 2, 2, s[2] // 2, 2).any(axis=(1, 3, 5))
    return bands, coarse
