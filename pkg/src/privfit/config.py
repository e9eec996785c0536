"""Experiment configuration and run manifests.

Configs live in a flat, typed ``key = value`` text format ('#' starts a
comment; values are integers, reals, comma-separated real lists, or bare
words).  Every key has a schema entry; unknown keys and type errors are
rejected before any experiment output is written.  Defaults come in two
bundles: "desk" (CI-sized) and "paper" (the full-size experiment), selected
by a CLI flag; a config file overrides individual keys, and explicit CLI
flags override the file.

A :class:`RunManifest` is written to the output directory before any result
file and finalized (wall clock, output verification) at exit.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace

from .data import SyntheticSpec
from .optim import MODE_DPSGD, MODE_SGD, TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; reported before any output is produced."""


SCALE_DESK = "desk"
SCALE_PAPER = "paper"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment run depends on, apart from the code version.

    Field defaults are the desk-scale bundle.
    """

    master_seed: int = 1
    scale: str = SCALE_DESK
    out_dir: str = "out"
    # dataset
    records: int = 20_000
    attr_count: int = 200
    noise_attr_count: int = 100
    base_probability: float = 0.5
    bias_offset: float = 0.05
    folds: int = 10
    # training (gap experiment; lot_size doubles as the SGD minibatch size)
    learning_rate: float = 0.1
    epochs: int = 150
    lot_size: int = 96
    clip_norm: float = 4.0
    sigma_list: tuple = (2.0, 4.0, 8.0, 40.0)
    explosion_policy: str = "abort"
    eval_every: int | None = None
    curve_grid_step: float = 0.001
    # convergence experiment (per-arm batch sizes, one 50/50 train/test split)
    conv_train_records: int = 1000
    conv_test_records: int = 1000
    conv_epochs: int = 1000
    conv_lot_size: int = 960
    conv_batch_size: int = 96
    conv_eval_every: int = 10
    conv_sigma_list: tuple = (1.0, 4.0, 8.5, 9.5)
    conv_tol: float = 0.01
    # privacy accounting
    delta: float = 1e-5

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            n=self.records,
            attr_count=self.attr_count,
            noise_attr_count=self.noise_attr_count,
            p=self.base_probability,
            b=self.bias_offset,
        )

    def convergence_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            n=self.conv_train_records + self.conv_test_records,
            attr_count=self.attr_count,
            noise_attr_count=self.noise_attr_count,
            p=self.base_probability,
            b=self.bias_offset,
        )

    def sgd_config(self) -> TrainConfig:
        return TrainConfig(
            mode=MODE_SGD,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            lot_size=self.lot_size,
            explosion_policy=self.explosion_policy,
            eval_every=self.eval_every,
        )

    def dpsgd_config(self, sigma: float) -> TrainConfig:
        return TrainConfig(
            mode=MODE_DPSGD,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            lot_size=self.lot_size,
            noise_scale=sigma,
            clip_norm=self.clip_norm,
            explosion_policy=self.explosion_policy,
            eval_every=self.eval_every,
        )

    def conv_sgd_config(self) -> TrainConfig:
        return TrainConfig(
            mode=MODE_SGD,
            learning_rate=self.learning_rate,
            epochs=self.conv_epochs,
            lot_size=self.conv_batch_size,
            explosion_policy=self.explosion_policy,
            eval_every=self.conv_eval_every,
        )

    def conv_dpsgd_config(self, sigma: float) -> TrainConfig:
        return TrainConfig(
            mode=MODE_DPSGD,
            learning_rate=self.learning_rate,
            epochs=self.conv_epochs,
            lot_size=self.conv_lot_size,
            noise_scale=sigma,
            clip_norm=self.clip_norm,
            explosion_policy=self.explosion_policy,
            eval_every=self.conv_eval_every,
        )

    def validate(self) -> None:
        """Run every domain check the experiment would hit, up front."""
        try:
            self.synthetic_spec()
            self.convergence_spec()
            self.sgd_config()
            for sigma in self.sigma_list:
                self.dpsgd_config(sigma)
            self.conv_sgd_config()
            for sigma in self.conv_sigma_list:
                self.conv_dpsgd_config(sigma)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.scale not in (SCALE_DESK, SCALE_PAPER):
            raise ConfigError(f"scale must be 'desk' or 'paper', got {self.scale!r}")
        if self.folds <= 0:
            raise ConfigError(f"fold count must be positive, got {self.folds}")
        if self.records % self.folds != 0 or (self.records // self.folds) % 2 != 0:
            raise ConfigError(
                f"records={self.records} must split into {self.folds} folds of even size"
            )
        if self.lot_size > self.records // self.folds:
            raise ConfigError(
                f"lot_size={self.lot_size} exceeds the fold size "
                f"{self.records // self.folds}"
            )
        if not self.sigma_list:
            raise ConfigError("sigma_list must not be empty")
        if self.conv_train_records % 2 or self.conv_test_records % 2:
            raise ConfigError("convergence split sizes must be even (label balance)")
        if max(self.conv_lot_size, self.conv_batch_size) > self.conv_train_records:
            raise ConfigError("convergence lot/batch size exceeds the training split")
        if not 0.0 < self.curve_grid_step <= 0.1:
            raise ConfigError(f"curve_grid_step must be in (0, 0.1], got {self.curve_grid_step}")
        if self.conv_tol <= 0:
            raise ConfigError(f"conv_tol must be positive, got {self.conv_tol}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must be in (0, 1), got {self.delta}")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["sigma_list"] = list(self.sigma_list)
        d["conv_sigma_list"] = list(self.conv_sigma_list)
        return d

    def hash(self) -> str:
        canon = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()


_PAPER_OVERRIDES = {"records": 1_000_000, "lot_size": 960}


def _parse_int(raw: str) -> int:
    return int(raw, 10)


def _parse_float(raw: str) -> float:
    return float(raw)

def _parse_str(raw: str) -> str:
    return raw


def _parse_float_list(raw: str) -> tuple:
    items = [part.strip() for part in raw.split(",") if part.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(float(part) for part in items)


def _parse_opt_int(raw: str) -> int | None:
    return None if raw.lower() == "none" else int(raw, 10)


_SCHEMA = {
    "master_seed": _parse_int,
    "out_dir": _parse_str,
    "records": _parse_int,
    "attr_count": _parse_int,
    "noise_attr_count": _parse_int,
    "base_probability": _parse_float,
    "bias_offset": _parse_float,
    "folds": _parse_int,
    "learning_rate": _parse_float,
    "epochs": _parse_int,
    "lot_size": _parse_int,
    "clip_norm": _parse_float,
    "sigma_list": _parse_float_list,
    "explosion_policy": _parse_str,
    "eval_every": _parse_opt_int,
    "curve_grid_step": _parse_float,
    "conv_train_records": _parse_int,
    "conv_test_records": _parse_int,
    "conv_epochs": _parse_int,
    "conv_lot_size": _parse_int,
    "conv_batch_size": _parse_int,
    "conv_eval_every": _parse_int,
    "conv_sigma_list": _parse_float_list,
    "conv_tol": _parse_float,
    "delta": _parse_float,
}


def parse_config_file(path: str | os.PathLike) -> dict:
    """Parse a flat key=value config file into typed values."""
    values = {}
    with open(path, "r") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in _SCHEMA:
                raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
            try:
                values[key] = _SCHEMA[key](raw)
            except ValueError as exc:
                raise ConfigError(f"{path}:{line_no}: bad value for {key!r}: {exc}") from exc
    return values


def build_config(
    scale: str = SCALE_DESK,
    config_path: str | os.PathLike | None = None,
    overrides: dict | None = None,
) -> ExperimentConfig:
    """Defaults for ``scale``, overridden by a config file, overridden by
    explicit flags.  The result is fully validated."""
    if scale not in (SCALE_DESK, SCALE_PAPER):
        raise ConfigError(f"scale must be 'desk' or 'paper', got {scale!r}")
    config = ExperimentConfig(scale=scale)
    if scale == SCALE_PAPER:
        config = replace(config, **_PAPER_OVERRIDES)
    if config_path is not None:
        config = replace(config, **parse_config_file(config_path))
    if overrides:
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown config overrides: {sorted(unknown)}")
        config = replace(config, **overrides)
    config.validate()
    return config


@dataclass
class RunManifest:
    """What a run was going to produce and, once finished, what it did.

    Written to the output directory before any result file; ``finish``
    verifies that every listed output exists.
    """

    command: str
    config: dict
    config_hash: str
    master_seed: int
    runs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    started_unix: float = 0.0
    finished_unix: float | None = None
    duration_s: float | None = None

    @classmethod
    def start(cls, command: str, config: ExperimentConfig, outputs: list) -> "RunManifest":
        return cls(
            command=command,
            config=config.as_dict(),
            config_hash=config.hash(),
            master_seed=config.master_seed,
            outputs=list(outputs),
            started_unix=time.time(),
        )

    def path(self, out_dir: str | os.PathLike) -> str:
        return os.path.join(out_dir, "manifest.json")

    def write(self, out_dir: str | os.PathLike) -> None:
        with open(self.path(out_dir), "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def finish(self, out_dir: str | os.PathLike) -> None:
        missing = [
            name
            for name in self.outputs
            if not os.path.exists(os.path.join(out_dir, name))
        ]
        if missing:
            raise RuntimeError(f"run finished but outputs are missing: {missing}")
        self.finished_unix = time.time()
        self.duration_s = self.finished_unix - self.started_unix
        self.write(out_dir)
