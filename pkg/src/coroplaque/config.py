"""Experiment configuration files (JSON)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .phantom import PhantomSpec
from .pipeline import VARIANTS, ApproachConfig, canonical_target, default_approach


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    approaches: list = field(default_factory=lambda: [default_approach(v) for v in VARIANTS])
    target: str = "stenosis50"
    k: int = 10
    seed: int = 42
    output: str = "runs/default"
    dataset: str | None = None
    threshold: float = 0.5

    @property
    def dataset_dir(self) -> Path:
        return Path(self.dataset) if self.dataset else Path(self.output) / "dataset"

    def validate(self):
        try:
            self.target = canonical_target(self.target)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0, 1]")
        names = [a.variant for a in self.approaches]
        if len(set(names)) != len(names):
            raise ConfigError("each approach may appear only once")
        try:
            self.phantom.validate()
        except ValueError as exc:
            raise ConfigError(f"phantom: {exc}") from None
        return self

    def to_dict(self) -> dict:
        return {
            "phantom": self.phantom.to_dict(),
            "approaches": [a.to_dict() for a in self.approaches],
            "target": self.target,
            "k": self.k,
            "seed": self.seed,
            "output": self.output,
            "dataset": self.dataset,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"phantom", "approaches", "target", "k", "seed", "output", "dataset", "threshold"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            kw = {k: d[k] for k in ("target", "k", "seed", "output", "dataset", "threshold")
                  if k in d}
            if "phantom" in d:
                base = PhantomSpec().to_dict()
                base.update(d["phantom"])
                kw["phantom"] = PhantomSpec.from_dict(base)
            if "approaches" in d:
                aps = []
                for a in d["approaches"]:
                    aps.append(ApproachConfig.from_dict({"variant": a} if isinstance(a, str) else a))
                kw["approaches"] = aps
            cfg = cls(**kw)
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from None
        return cfg.validate()


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return ExperimentConfig.from_dict(doc)
