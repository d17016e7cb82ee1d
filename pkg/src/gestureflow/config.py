"""Pipeline configuration: one TOML file with a section per stage.

Every field has a default (the full-scale profile encodes the published
training/evaluation parameters); unknown keys are rejected; a short hash of
the canonical serialization is stamped into every output artifact.
"""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .audio import AudioConfig
from .data import DatasetConfig
from .errors import UsageError
from .evaluation import EvalConfig
from .flow import FlowConfig
from .synthesis import SamplingConfig
from .training import FORMAT_VERSION, TrainConfig


@dataclass(frozen=True)
class PipelineConfig:
    workdir: str = "work"
    seed: int = 0
    manifest: Optional[str] = None
    audio: AudioConfig = field(default_factory=AudioConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self):
        return {
            "workdir": self.workdir,
            "seed": self.seed,
            "manifest": self.manifest,
            "format_version": FORMAT_VERSION,
            "audio": self.audio.to_dict(),
            "dataset": self.dataset.to_dict(),
            "flow": self.flow.to_dict(),
            "train": self.train.to_dict(),
            "sampling": self.sampling.to_dict(),
            "eval": self.eval.to_dict(),
        }


_SECTIONS = {
    "audio": AudioConfig,
    "dataset": DatasetConfig,
    "flow": FlowConfig,
    "train": TrainConfig,
    "sampling": SamplingConfig,
    "eval": EvalConfig,
}
_TOP_KEYS = {"workdir", "seed", "manifest"}


def _build_section(cls, values, section):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise UsageError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    if section == "sampling" and values.get("init_pose") is not None:
        values = dict(values, init_pose=np.asarray(values["init_pose"], dtype=float))
    if section == "eval" and values.get("upper_body_joints") is not None:
        values = dict(values, upper_body_joints=tuple(values["upper_body_joints"]))
    return cls(**values)


def config_from_dict(raw):
    unknown = set(raw) - _TOP_KEYS - set(_SECTIONS)
    if unknown:
        raise UsageError(f"unknown top-level config key(s): {', '.join(sorted(unknown))}")
    kwargs = {k: raw[k] for k in _TOP_KEYS if k in raw}
    for section, cls in _SECTIONS.items():
        if section in raw:
            if not isinstance(raw[section], dict):
                raise UsageError(f"config section [{section}] must be a table")
            kwargs[section] = _build_section(cls, dict(raw[section]), section)
    return PipelineConfig(**kwargs)


def load_config(path):
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: invalid TOML ({exc})") from exc
    return config_from_dict(raw)


def config_hash(config):
    """Short stable hash of the full configuration."""
    blob = json.dumps(config.to_dict(), sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def toy_profile(**overrides):
    """Desk-scale profile: small model, 5000 steps, minutes on a CPU."""
    base = PipelineConfig(
        flow=FlowConfig(flow_steps=4, cond_dim=24, hidden_size=48, coupling_hidden=48),
        train=TrainConfig(steps=5000, batch_size=16, checkpoint_interval=1000),
    )
    return dataclasses.replace(base, **overrides) if overrides else base


def test_profile(**overrides):
    """Tiny profile for fast unit tests."""
    base = PipelineConfig(
        flow=FlowConfig(
            flow_steps=2, cond_dim=8, hidden_size=16, coupling_hidden=16,
            history_len=4, context_radius=2,
        ),
        train=TrainConfig(
            steps=40, batch_size=8, chunk_length=10,
            checkpoint_interval=20, log_interval=10,
        ),
    )
    return dataclasses.replace(base, **overrides) if overrides else base


def resolve_workdir(cli_value, config):
    """CLI flag > GESTUREFLOW_WORKDIR env var > config value."""
    if cli_value:
        return cli_value
    env = os.environ.get("GESTUREFLOW_WORKDIR")
    if env:
        return env
    return config.workdir
