"""Run configuration: one YAML/JSON file, overridable by environment and flags.

Precedence is flags > ``LEAKDETECT_*`` environment variables > config file >
defaults. Unknown keys anywhere in the file are rejected.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .features import FeatureConfig
from .pipeline import ParamGrid, PipelineOptions, SplitSpec
from .synth import PRESET_ALIASES, LeakSpec, ProcessSpec, SynthConfig, reference_preset

ENV_PREFIX = "LEAKDETECT_"


class ConfigError(ValueError):
    pass


@dataclass
class DatasetRef:
    spectrogram: str
    annotation: str | None = None
    name: str | None = None


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 1
    out: str = "out"
    dataset: DatasetRef | None = None
    targets: list[DatasetRef] = field(default_factory=list)
    # synth: {"preset": name} or a full SynthConfig mapping; "presets" lists several
    synth: dict = field(default_factory=dict)
    window_s: int = 10
    features: FeatureConfig = field(default_factory=FeatureConfig)
    grid: ParamGrid = field(default_factory=ParamGrid)
    split: SplitSpec = field(default_factory=SplitSpec)
    svm_tol: float = 1e-3
    svm_max_passes: int = 1000
    top_k: int = 5
    qualify_f1: float = 0.8

    def pipeline_options(self) -> PipelineOptions:
        return PipelineOptions(window_s=self.window_s, features=self.features, svm_tol=self.svm_tol,
                               svm_max_passes=self.svm_max_passes, top_k=self.top_k,
                               qualify_f1=self.qualify_f1, workers=self.workers)


def _build(cls, data: Any, where: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    kwargs = {}
    for k, v in data.items():
        kwargs[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _dataset_ref(data: Any, where: str) -> DatasetRef:
    return _build(DatasetRef, data, where)


def from_mapping(data: Mapping | None) -> RunConfig:
    data = dict(data or {})
    cfg = RunConfig()
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}")
    for key, value in data.items():
        if key == "dataset":
            cfg.dataset = None if value is None else _dataset_ref(value, "dataset")
        elif key == "targets":
            if not isinstance(value, list):
                raise ConfigError("targets: expected a list")
            cfg.targets = [_dataset_ref(v, f"targets[{i}]") for i, v in enumerate(value)]
        elif key == "features":
            cfg.features = _build(FeatureConfig, value, "features")
        elif key == "grid":
            cfg.grid = _build(ParamGrid, value, "grid")
        elif key == "split":
            cfg.split = _build(SplitSpec, value, "split")
        elif key == "synth":
            if not isinstance(value, Mapping):
                raise ConfigError("synth: expected a mapping")
            cfg.synth = dict(value)
        else:
            setattr(cfg, key, value)
    try:
        cfg.seed = int(cfg.seed)
        cfg.workers = int(cfg.workers)
        cfg.window_s = int(cfg.window_s)
        cfg.top_k = int(cfg.top_k)
        cfg.svm_max_passes = int(cfg.svm_max_passes)
        cfg.svm_tol = float(cfg.svm_tol)
        cfg.qualify_f1 = float(cfg.qualify_f1)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}".replace("\n", " ")) from None
    return from_mapping(data)


def apply_env(cfg: RunConfig, environ: Mapping[str, str] | None = None) -> RunConfig:
    env = os.environ if environ is None else environ
    for key, cast in (("seed", int), ("workers", int), ("out", str)):
        raw = env.get(ENV_PREFIX + key.upper())
        if raw is not None:
            try:
                setattr(cfg, key, cast(raw))
            except ValueError:
                raise ConfigError(f"{ENV_PREFIX}{key.upper()}: invalid value {raw!r}") from None
    return cfg


_SYNTH_KEYS = {f.name for f in dataclasses.fields(SynthConfig)}


def synth_configs(section: Mapping, seed: int) -> list[tuple[str, SynthConfig]]:
    """Resolve the ``synth`` section to named generator configs.

    Accepted forms: ``{preset: name}``, ``{presets: [names]}`` or a full custom
    config with ``name`` plus SynthConfig fields. Preset seeds are offset by
    their position so that several presets never share a noise stream.
    """
    section = dict(section)
    if "preset" in section or "presets" in section:
        extra = sorted(set(section) - {"preset", "presets", "leak_snr_db"})
        if extra:
            raise ConfigError(f"synth: unknown key(s) {extra}")
        names = section.get("presets") or [section["preset"]]
        kw = {}
        if "leak_snr_db" in section:
            kw["leak_snr_db"] = float(section["leak_snr_db"])
        out = []
        for i, n in enumerate(names):
            try:
                cfg = reference_preset(n, seed + i, **kw)
            except ValueError as exc:
                raise ConfigError(f"synth: {exc}") from None
            out.append((PRESET_ALIASES[str(n).lower()], cfg))
        return out
    name = section.pop("name", "custom")
    unknown = sorted(set(section) - _SYNTH_KEYS)
    if unknown:
        raise ConfigError(f"synth: unknown key(s) {unknown}")
    section.setdefault("seed", seed)
    try:
        section["leak_spec"] = tuple(
            LeakSpec(tuple(c["interval"]), tuple(c["band_hz"]), float(c["snr_db"]))
            for c in section.get("leak_spec", ())
        )
        section["process_spec"] = tuple(
            ProcessSpec(tuple(c["interval"]), tuple(c["band_hz"]), float(c["snr_db"]),
                        float(c["modulation_period_s"]))
            for c in section.get("process_spec", ())
        )
        return [(name, SynthConfig(**section))]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"synth: {exc}") from None

