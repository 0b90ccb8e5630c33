"""Run configuration loaded from YAML; speeds are given in km/h."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .optimizer import GAConfig, NSGA2Config, SearchSpace

SWEEP_SPEEDS_KMH = (0.4, 0.6, 0.8)


def kmh_to_ms(v: float) -> float:
    return v / 3.6


def _section(cls, data: dict | None, where: str):
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {where} settings: {sorted(unknown)}")
    if "hv_reference" in data and data["hv_reference"] is not None:
        data["hv_reference"] = tuple(float(v) for v in data["hv_reference"])
    return cls(**data)


@dataclass
class RunConfig:
    model_path: str | None = None  # None -> bundled reference biped
    bounds: SearchSpace = field(default_factory=SearchSpace.default)
    speed: float = 0.5  # km/h
    speeds: tuple[float, ...] = ()  # km/h sweep for multi mode
    duration: float = 5.0
    sample_rate: float = 240.0
    step_width: float = 0.2
    ga: GAConfig = field(default_factory=GAConfig)
    nsga2: NSGA2Config = field(default_factory=NSGA2Config)
    seed: int | None = None
    out: str = "out"
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.speed < 0 or any(s < 0 for s in self.speeds):
            raise ValueError("speed must be non-negative")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.step_width <= 0:
            raise ValueError("step_width must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.seed is not None and not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.ga.validate()
        self.nsga2.validate()

    @property
    def speed_ms(self) -> float:
        return kmh_to_ms(self.speed)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "bounds" in data:
            merged = SearchSpace.default().to_dict()
            merged.update(data["bounds"] or {})
            data["bounds"] = SearchSpace.from_mapping(merged)
        if "ga" in data:
            data["ga"] = _section(GAConfig, data["ga"], "ga")
        if "nsga2" in data:
            data["nsga2"] = _section(NSGA2Config, data["nsga2"], "nsga2")
        if "speeds" in data:
            data["speeds"] = tuple(float(s) for s in data["speeds"] or ())
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["bounds"] = self.bounds.to_dict()
        out["ga"] = {f.name: getattr(self.ga, f.name) for f in fields(self.ga)}
        out["nsga2"] = {f.name: getattr(self.nsga2, f.name) for f in fields(self.nsga2)}
        out["speeds"] = list(self.speeds)
        if out["nsga2"]["hv_reference"] is not None:
            out["nsga2"]["hv_reference"] = list(out["nsga2"]["hv_reference"])
        return out

    def model_file(self) -> Path | None:
        return Path(self.model_path) if self.model_path else None
