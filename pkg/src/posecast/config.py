"""Run configuration: one JSON document echoing every field."""
from __future__ import annotations

import json
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .objective import LossWeights
from .regressor import RegressorConfig
from .temporal import TemporalConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    temporal: TemporalConfig = field(default_factory=TemporalConfig)
    regressor: RegressorConfig = field(default_factory=RegressorConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    window_stride: int = 2          # training windows are subsampled per epoch
    plateau_patience: int = 5
    plateau_factor: float = 0.1
    val_sequences: int = 0          # 0: whole validation split
    max_bad_batches: int = 3
    data: str = ""
    out: str = ""
    seed: int = 0

    def validate(self):
        try:
            self.temporal.validate()
            self.loss.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.regressor.n_iter < 1:
            raise ConfigError("regressor.n_iter must be >= 1")
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        for name in ("batch_size", "epochs", "window_stride", "plateau_patience", "max_bad_batches"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 < self.plateau_factor <= 1:
            raise ConfigError(f"plateau_factor must lie in (0, 1], got {self.plateau_factor}")
        return self

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        sub = {"temporal": TemporalConfig, "regressor": RegressorConfig, "loss": LossWeights}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        kw = {}
        for k, v in doc.items():
            if k in sub:
                sk = {f.name for f in fields(sub[k])}
                bad = sorted(set(v) - sk)
                if bad:
                    raise ConfigError(f"unknown {k} keys {bad}")
                kw[k] = sub[k](**v)
            else:
                kw[k] = v
        return cls(**kw)

    def replace(self, **changes):
        """Copy with dotted-key overrides, e.g. ``replace(**{"temporal.use_residual": True})``."""
        doc = self.to_dict()
        for key, val in changes.items():
            tgt = doc
            *head, last = key.split(".")
            for h in head:
                tgt = tgt[h]
            if last not in tgt:
                raise ConfigError(f"unknown config key {key!r}")
            tgt[last] = val
        return RunConfig.from_dict(doc)


def load_config(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return RunConfig.from_dict(doc).validate()


def save_config(config, path):
    Path(path).write_text(config.to_json() + "\n")


def write_manifest(out_dir, command, config=None, seed=None, extra=None):
    from . import __version__
    doc = {
        "command": command, "argv": sys.argv, "seed": seed,
        "config": config.to_dict() if config is not None else None,
        "versions": {"posecast": __version__, "python": platform.python_version(), "numpy": np.__version__},
        "platform": platform.platform(),
    }
    doc.update(extra or {})
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return path
