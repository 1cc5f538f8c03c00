"""Pipeline configuration: one TOML file with a ``[stage.<name>]`` table per stage."""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
import tomli
import tomli_w


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthStage:
    num_train: int = 32
    num_val: int = 0
    num_test: int = 8
    dims: tuple[int, int, int] = (32, 32, 32)
    lesion_count: tuple[int, int] = (1, 2)
    lesion_radius: tuple[float, float] = (3.0, 5.0)


@dataclass(frozen=True)
class PreprocessStage:
    znorm: bool = True
    trim_front: int = 0
    trim_back: int = 0
    # negative disables cropping; otherwise the source-label bounding box grown by this margin
    crop_margin: int = -1


@dataclass(frozen=True)
class TranslateStage:
    epochs: int = 12
    lambda_cyc: float = 10.0
    lr: float = 2e-4
    beta1: float = 0.5
    batch_size: int = 8
    steps_per_epoch: int = 0
    gan_mode: str = "log"
    width: int = 16
    n_res: int = 4
    disc_width: int = 16


@dataclass(frozen=True)
class NetStage:
    num_classes: int = 2
    base_width: int = 8
    levels: int = 4
    flat_levels: int = 2
    dropout: float = 0.3
    momentum: float = 0.1
    eps: float = 1e-5


@dataclass(frozen=True)
class GeneratorStage:
    epochs: int = 40
    lr: float = 1e-3
    beta1: float = 0.9
    batch_size: int = 4
    patch_dims: tuple[int, int, int] = (16, 16, 16)
    steps_per_epoch: int = 25


@dataclass(frozen=True)
class RecordsStage:
    K: int = 5
    e: float = 0.2


@dataclass(frozen=True)
class SegmentorStage:
    # zero means half the generator epochs
    epochs: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    batch_size: int = 4
    patch_dims: tuple[int, int, int] = (16, 16, 16)
    steps_per_epoch: int = 25
    init_from_generator: bool = True


@dataclass(frozen=True)
class InferStage:
    patch_dims: tuple[int, int, int] = (16, 16, 16)
    overlap: tuple[float, float, float] = (0.5, 0.25, 0.25)
    split: str = "test"


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    synth: SynthStage = SynthStage()
    preprocess: PreprocessStage = PreprocessStage()
    translate: TranslateStage = TranslateStage()
    net: NetStage = NetStage()
    generator: GeneratorStage = GeneratorStage()
    records: RecordsStage = RecordsStage()
    segmentor: SegmentorStage = SegmentorStage()
    infer: InferStage = InferStage()

    @property
    def segmentor_epochs(self) -> int:
        return self.segmentor.epochs or max(1, self.generator.epochs // 2)

    def to_dict(self) -> dict:
        out: dict = {"seed": self.seed, "stage": {}}
        for f in fields(self):
            if f.name != "seed":
                out["stage"][f.name] = _jsonable(asdict(getattr(self, f.name)))
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        known = {f.name: f for f in fields(cls)}
        extra = set(raw) - {"seed", "stage"}
        if extra:
            raise ConfigError(f"unknown top-level config keys: {sorted(extra)}")
        cfg = cls(seed=int(raw.get("seed", 0)))
        for name, table in raw.get("stage", {}).items():
            if name not in known or name == "seed":
                raise ConfigError(f"unknown stage section [stage.{name}]")
            cfg = replace(cfg, **{name: _build(getattr(cfg, name), table, f"stage.{name}")})
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            raw = tomli.loads(Path(path).read_text())
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(raw)

    def stage_hash(self, *names: str) -> str:
        """Hash of the seed and the named sections; a stage's artifacts depend on exactly these."""
        payload = {"seed": self.seed, **{n: _jsonable(asdict(getattr(self, n))) for n in names}}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _build(default, table: dict, section: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    names = {f.name: f for f in fields(default)}
    unknown = set(table) - set(names)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    values = {}
    for key, value in table.items():
        current = getattr(default, key)
        if isinstance(current, tuple):
            if not isinstance(value, list) or len(value) != len(current):
                raise ConfigError(f"[{section}] {key} must be a list of {len(current)} values")
            value = tuple(type(c)(v) for c, v in zip(current, value))
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"[{section}] {key} must be a boolean")
        elif isinstance(current, (int, float)) and not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}] {key} must be a number")
        elif isinstance(current, str) and not isinstance(value, str):
            raise ConfigError(f"[{section}] {key} must be a string")
        elif isinstance(current, int) and not isinstance(current, bool):
            if int(value) != value:
                raise ConfigError(f"[{section}] {key} must be an integer")
            value = int(value)
        elif isinstance(current, float):
            value = float(value)
        values[key] = value
    return replace(default, **values)


def stage_seed(root_seed: int, stage: str) -> int:
    """Independent 31-bit seed for a named stage derived from the root seed."""
    seq = np.random.SeedSequence(root_seed, spawn_key=(zlib.crc32(stage.encode()),))
    return int(seq.generate_state(1)[0] & 0x7FFFFFFF)


def file_digest(paths) -> str:
    h = hashlib.sha256()
    for p in sorted(Path(p) for p in paths):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()

