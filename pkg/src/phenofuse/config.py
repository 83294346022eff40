"""Run configuration: a flat JSON object whose keys mirror :class:`PipelineConfig`.

Unknown keys are an error so that a typo never silently falls back to a
default.  Relative input paths are resolved against the config file's
directory; when a path is left empty the stage looks for the file the
``synth`` stage writes under ``<out_dir>/data``.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .ingest import CROPS
from .preprocess import INNER_BUFFER_M, MIN_FIELD_HA, OUTER_BUFFER_M
from .selection import PRESETS, resolve_preset
from .synth import SynthSpec


class ConfigError(ValueError):
    """The configuration file is malformed or inconsistent."""


@dataclass(frozen=True)
class PipelineConfig:
    phenology: str = ""
    climate: str = ""
    sentinel1: str = ""
    sentinel2: str = ""
    grids: str = ""
    out_dir: str = "run"
    crops: tuple[str, ...] = ()  # empty means every crop with observations
    seed: int = 0
    loess_fraction: float = 0.03
    cloud_threshold: float = 75.0
    idw_k: int = 10
    buffer_inner_m: float = INNER_BUFFER_M
    buffer_outer_m: float = OUTER_BUFFER_M
    min_field_ha: float = MIN_FIELD_HA
    cv_outer: int = 10
    cv_inner: int = 10
    n_trials: int = 50
    tolerance_days: float = 6.0
    feature_preset: str | tuple[str, ...] = "search"
    synth: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = [c for c in self.crops if c not in CROPS]
        if unknown:
            raise ConfigError(f"unknown crops {unknown}; expected a subset of {list(CROPS)}")
        if not 0 < self.loess_fraction <= 1:
            raise ConfigError("loess_fraction must lie in (0, 1]")
        if not 0 <= self.cloud_threshold <= 100:
            raise ConfigError("cloud_threshold must lie in [0, 100]")
        for name in ("idw_k", "cv_outer", "cv_inner", "n_trials"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.cv_outer < 2 or self.cv_inner < 2:
            raise ConfigError("cv_outer and cv_inner must be >= 2")
        if not 0 < self.buffer_outer_m <= self.buffer_inner_m:
            # the inner erosion only covers the outer buffer when it is at least as wide
            raise ConfigError("buffer_outer_m must lie in (0, buffer_inner_m]")
        if self.tolerance_days < 0:
            raise ConfigError("tolerance_days must be >= 0")
        try:
            resolve_preset(self.feature_preset)
            SynthSpec.from_dict(self.synth)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @property
    def fixed_features(self) -> tuple[str, ...] | None:
        return resolve_preset(self.feature_preset)

    def input_path(self, name: str) -> str:
        """Configured path for input ``name``, or the synth-stage default."""
        given = getattr(self, name)
        if given:
            return given
        default = {"phenology": "phenology.csv", "climate": "climate.csv", "sentinel1": "sentinel1.csv",
                   "sentinel2": "sentinel2.csv", "grids": "grids"}[name]
        return os.path.join(self.out_dir, "data", default)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["crops"] = list(self.crops)
        if not isinstance(self.feature_preset, str):
            d["feature_preset"] = list(self.feature_preset)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = "") -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        kw = dict(d)
        if "crops" in kw:
            kw["crops"] = tuple(kw["crops"])
        preset = kw.get("feature_preset")
        if isinstance(preset, list):
            kw["feature_preset"] = tuple(preset)
        elif isinstance(preset, str) and preset != "search" and preset not in PRESETS:
            raise ConfigError(f"unknown feature_preset {preset!r}")
        for name in ("phenology", "climate", "sentinel1", "sentinel2", "grids", "out_dir"):
            p = kw.get(name)
            if p and base_dir and not os.path.isabs(p):
                kw[name] = os.path.join(base_dir, p)
        try:
            return cls(**kw)
        except TypeError as e:
            raise ConfigError(str(e)) from None


def load_config(path: str) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return PipelineConfig.from_dict(doc, os.path.dirname(os.path.abspath(path)))
