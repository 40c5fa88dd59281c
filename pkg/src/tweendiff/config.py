"""Flat key=value run configuration with typed parsing and provenance hashing.

One file carries every knob for the whole pipeline (data, schedule, model,
training, sampling, evaluation). Unknown keys are rejected so a typo cannot
silently fall back to a default. The canonical rendering is what gets hashed
and snapshotted next to every artifact.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigurationError


@dataclass
class RunConfig:
    seed: int = 0
    # data
    generator: str = "accel_ball"
    train_clips: int = 512
    test_clips: int = 20
    frames: int = 16
    size: int = 32
    # schedule
    schedule_steps: int = 50
    schedule_family: str = "cosine"
    # model
    base_channels: int = 32
    head_dim: int = 32
    time_dim: int = 64
    # training (pretraining is a from-scratch run and takes its own rate;
    # learning_rate drives the backward fine-tune)
    pretrain_learning_rate: float = 1e-3
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-2
    batch_size: int = 4
    pretrain_iterations: int = 2000
    finetune_iterations: int = 2000
    v_target_mode: str = "clean"
    # sampling (reuses schedule_steps for the step count)
    recurrence: int = 5
    fusion: str = "mean"
    sample_seed: int = 1234
    # evaluation
    background_level: float = 0.2
    min_displacement: float = 0.1

    def canonical_text(self) -> str:
        lines = [f"{key} = {value}" for key, value in sorted(asdict(self).items())]
        return "\n".join(lines) + "\n"

    @property
    def provenance_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.canonical_text())


def _parse_value(raw: str, target_type: type):
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return raw


def load_config(path: str | Path) -> RunConfig:
    """Parse a key=value file; '#' starts a comment, unknown keys are errors."""
    known = {f.name: f.type for f in fields(RunConfig)}
    types = {f.name: type(getattr(RunConfig(), f.name)) for f in fields(RunConfig)}
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in known:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(raw, types[key])
        except ValueError as exc:
            raise ConfigurationError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return RunConfig(**values)
