"""Configuration and metric containers for the synthetic lab."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import IO

from ..errors import ConfigError

NLL_REDUCTIONS = ("mean", "sum")


@dataclass(frozen=True)
class SynthConfig:
    """Everything a lab run depends on.

    ``nll_reduction`` picks how the likelihood is aggregated: "mean"
    averages per sample per dimension, "sum" keeps the per-sample sum
    over dimensions.  ``relabel`` recomputes pseudo-labels for every
    selected sample each round instead of freezing them at first entry;
    ``warm_start`` continues training from the previous round's weights
    instead of a fresh initialization.
    """

    d: int = 50
    n_lab: int = 1900
    n_unl: int = 4900
    n_test: int = 1000
    x_scale: float = 1.0
    noise_scale: float = 0.6
    hidden: tuple[int, ...] = (128, 128)
    lr: float = 1e-3
    batch: int = 128
    epochs: int = 50
    keep_frac: float = 0.4
    rounds: int = 3
    rng_seed: int = 0
    nll_reduction: str = "mean"
    relabel: bool = False
    warm_start: bool = False

    def __post_init__(self) -> None:
        for name in ("d", "n_lab", "n_unl", "n_test", "batch", "epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.rounds < 0:
            raise ConfigError("rounds must be non-negative")
        if not 0.0 < self.keep_frac <= 1.0:
            raise ConfigError("keep_frac must be in (0, 1]")
        if not self.hidden or any(w < 1 for w in self.hidden):
            raise ConfigError("hidden widths must all be at least 1")
        if self.x_scale < 0 or self.noise_scale < 0:
            raise ConfigError("scales must be non-negative")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if self.nll_reduction not in NLL_REDUCTIONS:
            raise ConfigError(f"nll_reduction must be one of {NLL_REDUCTIONS}")
        # dataclass is frozen; normalize hidden to a tuple via workaround
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**obj)

    @classmethod
    def from_file(cls, stream: IO[str]) -> "SynthConfig":
        try:
            obj = json.load(stream)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e.msg}") from e
        if not isinstance(obj, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(obj)

    def replace(self, **changes) -> "SynthConfig":
        merged = {**asdict(self), **changes}
        return SynthConfig.from_dict(merged)


@dataclass(frozen=True)
class SynthMetrics:
    """Test-set metrics for one training round."""

    nll: float
    mse: float
    r2: float

    def to_dict(self) -> dict:
        return {"nll": self.nll, "mse": self.mse, "r2": self.r2}
