"""Experiment configuration: defaults, JSON round trip, validation."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EXPERIMENTS = ("ou-grid", "ou-quant", "poisson", "converge", "simulate")
SCHEMES = ("lrw", "em", "two_point")
PRECISIONS = ("fp8", "fp16", "fp32", "fp64")
MODELS = ("ou", "poisson", "gaussian-flow")


class ConfigError(ValueError):
    pass


def _logspace(lo: float, hi: float, n: int) -> list[float]:
    return [float(v) for v in np.geomspace(lo, hi, n)]


@dataclass
class ExperimentConfig:
    """Everything needed to replay one experiment.

    ``dx_rule`` is ``"rule_of_thumb"`` (``dx = sqrt(2 dt T)``, i.e. the
    largest diffusion times ``sqrt(dt)``) or ``"multipliers"`` (that value
    scaled by each entry of ``dx_multipliers``).  ``fp64`` in
    ``precisions`` means no quantisation.
    """

    experiment: str
    schemes: list[str] = field(default_factory=lambda: ["lrw"])
    dt_grid: list[float] = field(default_factory=lambda: _logspace(1e-3, 1e-1, 7))
    dx_rule: str = "rule_of_thumb"
    dx_multipliers: list[float] = field(default_factory=lambda: [1.0])
    precisions: list[str] = field(default_factory=lambda: ["fp64"])
    n_seeds: int = 10
    base_seed: int = 0
    n_steps: int = 1_000_000
    burn_in_fraction: float = 1 / 3
    out: str | None = None
    dim: int = 3
    temperature: float = 0.5
    n_obs: int = 5
    sigma1: float = 10.0
    n_replicas: int = 1
    t_end: float = 1.0
    model: str = "ou"
    record_every: int = 1
    workers: int = 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "experiment" not in data:
            raise ConfigError("config needs an 'experiment' key")
        base = default_config(data["experiment"]).to_dict()
        base.update(data)
        cfg = cls(**base)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def scaled(self, scale: float) -> "ExperimentConfig":
        """Shrink step, seed and replica counts for desk-scale runs."""
        if not scale > 0:
            raise ConfigError("scale must be positive")
        if scale == 1:
            return self
        return dataclasses.replace(
            self,
            n_steps=max(1, round(self.n_steps * scale)),
            n_seeds=max(1, round(self.n_seeds * scale)),
            n_replicas=max(1, round(self.n_replicas * scale)),
        )

    def validate(self) -> None:
        problems = []
        if self.experiment not in EXPERIMENTS:
            problems.append(f"experiment must be one of {EXPERIMENTS}")
        for name in ("schemes", "dt_grid", "dx_multipliers", "precisions"):
            if not getattr(self, name):
                problems.append(f"{name} must be nonempty")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            problems.append(f"unknown schemes {bad}")
        bad = [p for p in self.precisions if p not in PRECISIONS]
        if bad:
            problems.append(f"unknown precisions {bad}")
        if any(not (isinstance(h, (int, float)) and math.isfinite(h) and h > 0) for h in self.dt_grid):
            problems.append("dt_grid entries must be positive")
        if any(not m > 0 for m in self.dx_multipliers):
            problems.append("dx_multipliers must be positive")
        if self.dx_rule not in ("rule_of_thumb", "multipliers"):
            problems.append("dx_rule must be 'rule_of_thumb' or 'multipliers'")
        for name in ("n_steps", "n_seeds", "n_replicas", "dim", "n_obs", "record_every", "workers"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                problems.append(f"{name} must be an integer >= 1")
        if not 0 <= self.burn_in_fraction < 1:
            problems.append("burn_in_fraction must lie in [0, 1)")
        if not (self.temperature > 0 and self.sigma1 > 0 and self.t_end > 0):
            problems.append("temperature, sigma1 and t_end must be positive")
        if self.model not in MODELS:
            problems.append(f"model must be one of {MODELS}")
        if self.experiment in ("ou-grid", "poisson", "converge", "simulate") and len(self.precisions) != 1:
            problems.append(f"{self.experiment} runs at a single precision")
        if problems:
            raise ConfigError("; ".join(problems))


def default_config(experiment: str) -> ExperimentConfig:
    """Full-scale defaults for each experiment."""
    if experiment == "ou-grid":
        return ExperimentConfig(
            experiment, schemes=["lrw"], dx_rule="multipliers",
            dx_multipliers=[0.5, 0.75, 1.0, 1.5, 2.0, 4.0], n_seeds=10, n_steps=1_000_000)
    if experiment == "ou-quant":
        return ExperimentConfig(
            experiment, schemes=["lrw", "em"], precisions=["fp8", "fp16", "fp32"],
            n_seeds=50, n_steps=1_000_000)
    if experiment == "poisson":
        return ExperimentConfig(
            experiment, schemes=["lrw", "em"], dt_grid=_logspace(1e-3, 0.5, 8),
            n_seeds=100, n_steps=50_000, burn_in_fraction=0.0, dim=51)
    if experiment == "converge":
        return ExperimentConfig(
            experiment, schemes=["lrw", "em"], dt_grid=[0.2, 0.1, 0.05, 0.025],
            n_seeds=1, n_steps=1, n_replicas=1_000_000, dim=1, burn_in_fraction=0.0)
    if experiment == "simulate":
        return ExperimentConfig(
            experiment, schemes=["lrw"], dt_grid=[0.01], n_seeds=1, n_steps=1000,
            burn_in_fraction=0.0)
    raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
