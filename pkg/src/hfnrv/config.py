# Copyright 2026 The hfnrv Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Run configuration documents, presets and ablation variants.

A config file is JSON:

    {"schema": 1, "model": {...}, "train": {..., "loss": {...}},
     "compress": {...}, "paths": {...}}

Missing keys take the dataclass defaults; unknown keys are errors.
"""
import dataclasses
import json
import typing
from typing import Any, Dict, List, NamedTuple, Optional, Sequence
from hfnrv.model import ModelConfig
from hfnrv.train import TrainConfig


SCHEMA = 1


class ConfigError(ValueError):
    """A config value or key is invalid; the message names its key path."""


@dataclasses.dataclass(frozen=True)
class CompressConfig:
    prune_ratio: float = 0.15
    finetune_epochs: int = 0

    def validate(self):
        if not 0.0 <= self.prune_ratio < 1.0:
            raise ValueError(
                f"compress.prune_ratio must be in [0, 1), got {self.prune_ratio}"
            )
        if self.finetune_epochs < 0:
            raise ValueError(
                f"compress.finetune_epochs must be >= 0, got {self.finetune_epochs}"
            )


@dataclasses.dataclass(frozen=True)
class PathsConfig:
    input: Optional[str] = None
    output: Optional[str] = None
    workdir: Optional[str] = None


@dataclasses.dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = dataclasses.field(default_factory=ModelConfig)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    compress: CompressConfig = dataclasses.field(default_factory=CompressConfig)
    paths: PathsConfig = dataclasses.field(default_factory=PathsConfig)

    def validate(self) -> "RunConfig":
        try:
            self.model.validate()
            self.train.validate()
            self.compress.validate()
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return self


def to_dict(obj) -> Dict[str, Any]:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            value = to_dict(value)
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def _coerce(tp, value, key: str):
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, key)
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        (inner,) = [a for a in args if a is not type(None)]
        return _coerce(inner, value, key)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        return tuple(_coerce(args[0], v, f"{key}[{i}]") for i, v in enumerate(value))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{key}: unsupported field type {tp!r}")


def from_dict(cls, data, path: str = ""):
    """Builds dataclass `cls` from plain JSON values, checking every key."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {data!r}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for name, value in data.items():
        key = f"{path}.{name}" if path else name
        if name not in fields:
            raise ConfigError(f"Unknown config key {key}")
        kwargs[name] = _coerce(hints[name], value, key)
    return cls(**kwargs)


def parse_config(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("Config must be a JSON object")
    schema = data.pop("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError(f"schema: unsupported version {schema!r}, expected {SCHEMA}")
    return from_dict(RunConfig, data).validate()


def load_config(path: str) -> RunConfig:
    with open(path) as f:
        return parse_config(f.read())


def dump_config(cfg: RunConfig) -> str:
    return json.dumps({"schema": SCHEMA, **to_dict(cfg)}, indent=2, sort_keys=True)


def preset(name: str) -> RunConfig:
    """Built-in configurations.

    desk: 16x64x128 fixture scale. bunny: 640x1280 crops, strides (5, 4, 4, 2, 2).
    """
    if name == "desk":
        return RunConfig()
    if name == "bunny":
        return RunConfig(
            model=ModelConfig(
                content_strides=(5, 4, 4, 2, 2),
                hf_strides=(2, 2, 2, 2, 2),
                d_c=16,
                d_h=2,
                decoder_strides=(5, 4, 4, 2, 2),
                base_width=128,
                min_width=16,
                encoder_width=64,
                convnext_kernel=7,
            )
        )
    raise ConfigError(f"Unknown preset {name!r}, expected one of {PRESETS}")


PRESETS = ("desk", "bunny")


class AblationVariant(NamedTuple):
    id: str
    description: str
    model: Dict[str, Any] = {}
    loss: Dict[str, Any] = {}

    def apply(self, cfg: RunConfig) -> RunConfig:
        train = dataclasses.replace(
            cfg.train, loss=dataclasses.replace(cfg.train.loss, **self.loss)
        )
        return dataclasses.replace(
            cfg, model=dataclasses.replace(cfg.model, **self.model), train=train
        )


VARIANTS = {
    v.id: v
    for v in (
        AblationVariant("full", "complete model"),
        AblationVariant(
            "V1", "no high-frequency branch", model={"hf_branch_enabled": False}
        ),
        AblationVariant(
            "V2", "content encoder as hf encoder", model={"hf_encoder": "content"}
        ),
        AblationVariant("V3", "concat fusion", model={"fusion": "concat"}),
        AblationVariant("V4", "add fusion", model={"fusion": "add"}),
        AblationVariant(
            "V5", "inter-attention fusion", model={"fusion": "inter_attention"}
        ),
        AblationVariant("V6", "GELU activation", model={"activation": "gelu"}),
        AblationVariant("V7", "sine activation", model={"activation": "sine"}),
        AblationVariant("V8", "spatial loss only", loss={"variant": "spa_only"}),
        AblationVariant("V9", "L2 loss only", loss={"variant": "l2_only"}),
        AblationVariant(
            "V10", "unweighted log-free spectral loss", loss={"variant": "no_log"}
        ),
    )
}


def resolve_variants(ids: Sequence[str]) -> List[AblationVariant]:
    ids = [i.strip() for i in ids if i.strip()]
    if not ids:
        raise ConfigError("variants: at least one variant id is required")
    unknown = [i for i in ids if i not in VARIANTS]
    if unknown:
        raise ConfigError(
            f"variants: unknown ids {unknown}, expected {sorted(VARIANTS)}"
        )
    return [VARIANTS[i] for i in ids]
