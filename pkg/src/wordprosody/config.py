"""Experiment configuration and its ``key=value`` file format.

One assignment per line; ``#`` starts a comment. Nested settings use a dotted
section prefix, e.g. ``stage2.base_lr=0.0001`` or ``model1.decoder_lstm_hidden=128``.
Bare schedule keys (``base_lr=0.001``) address the stage-1 schedule.
Unknown keys and ill-typed values are errors that name the key and line.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import get_type_hints

from .prosodypred import Stage2Config
from .ttsmodel import Stage1Config


class ConfigFileError(ValueError):
    pass


@dataclass(frozen=True)
class StageSchedule:
    base_lr: float = 1e-3
    decay_factor: float = 0.98
    decay_interval_steps: int = 0  # 0 = one epoch
    steps: int = 20000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 1.0
    eval_interval: int = 500
    log_interval: int = 50

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if not 0 < self.decay_factor <= 1:
            raise ValueError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if self.decay_interval_steps < 0 or self.steps < 1:
            raise ValueError("decay_interval_steps must be >= 0 and steps >= 1")
        if self.eval_interval < 1 or self.log_interval < 1:
            raise ValueError("eval_interval and log_interval must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: str = ""
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    batch_size: int = 8
    seed: int = 0
    stage1: StageSchedule = field(default_factory=StageSchedule)
    stage2: StageSchedule = field(default_factory=lambda: StageSchedule(base_lr=1e-4, steps=8000))
    model1: Stage1Config = field(default_factory=Stage1Config)
    model2: Stage2Config = field(default_factory=Stage2Config)

    def __post_init__(self):
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {fr}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.train_fraction, self.val_fraction, self.test_fraction)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_SCHEDULE_KEYS = frozenset(f.name for f in dataclasses.fields(StageSchedule))


def _flatten(obj, prefix="") -> list[tuple[str, object]]:
    out = []
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            out += _flatten(v, f"{prefix}{f.name}.")
        else:
            out.append((f"{prefix}{f.name}", v))
    return out


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(_format(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    return "\n".join(f"{k}={_format(v)}" for k, v in _flatten(cfg)) + "\n"


def _convert(raw: str, typ, key: str, ln: int):
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return low in ("true", "1")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
        origin = getattr(typ, "__origin__", None)
        if origin is tuple:
            inner = typ.__args__[0]
            return tuple(_convert(x.strip(), inner, key, ln) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigFileError(f"line {ln}: {key}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from None
    raise ConfigFileError(f"line {ln}: {key}: unsupported type {typ}")


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    updates: dict[str, dict] = {}
    top: dict = {}
    hints = get_type_hints(ExperimentConfig)
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"line {ln}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if "." not in key and key not in hints and key in _SCHEDULE_KEYS:
            key = f"stage1.{key}"
        if "." in key:
            section, name = key.split(".", 1)
            sub = getattr(cfg, section, None)
            if section not in hints or not dataclasses.is_dataclass(sub):
                raise ConfigFileError(f"line {ln}: unknown section {section!r} in key {key!r}")
            sub_hints = get_type_hints(type(sub))
            if name not in sub_hints:
                raise ConfigFileError(f"line {ln}: unknown key {key!r}")
            value = _convert(raw, sub_hints[name], key, ln)
            try:  # validate now so the error can name this line
                dataclasses.replace(getattr(cfg, section), **{name: value})
            except ValueError as exc:
                raise ConfigFileError(f"line {ln}: {key}: {exc}") from None
            updates.setdefault(section, {})[name] = value
        else:
            if key not in hints or dataclasses.is_dataclass(getattr(cfg, key)):
                raise ConfigFileError(f"line {ln}: unknown key {key!r}")
            top[key] = _convert(raw, hints[key], key, ln)
    try:
        for section, changes in updates.items():
            top[section] = dataclasses.replace(getattr(cfg, section), **changes)
        return dataclasses.replace(cfg, **top)
    except ValueError as exc:
        raise ConfigFileError(f"invalid configuration: {exc}") from exc


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigFileError(f"cannot read config {p}: {exc}") from exc
    return parse_config_text(text)
