"""Run configuration: every tunable constant in one serializable place.

The JSON layout mirrors the dataclass nesting so a run config file can
pin any subset of fields; unspecified fields keep their defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class ShfConfig:
    beta: float = 0.25
    zeta: float = 2.0
    utility_floor: float = -1.0e12
    chebyshev_gamma: float = 0.05


@dataclass(frozen=True)
class GpConfig:
    noise_variance: float = 1e-6
    jitter: float = 1e-8
    lengthscale_min: float = 0.05
    lengthscale_max: float = 2.0
    lengthscale_grid_size: int = 16
    signal_variance: float = 1.0


@dataclass(frozen=True)
class QueryConfig:
    dense_iterations: int = 32       # T, acquisition steps per round
    display_budget: int = 5          # k, points shown before the size-bound slack
    lambda_samples: int = 16         # |Lambda| preference draws for sparsification
    acq_candidates: int = 512
    acq_refiners: int = 8
    acq_refine_steps: int = 20
    duplicate_tol: float = 1e-9
    saturate_gap: float = 1e-6       # bisection gap is saturate_gap / |Lambda|


@dataclass(frozen=True)
class PreferenceConfig:
    particles: int = 512
    burn_in: int = 20
    proposal_concentration: float = 50.0


@dataclass(frozen=True)
class BoundsConfig:
    observation_var: float = 0.0004  # 0.02^2, Gaussian likelihood of a stated bound
    no_change_shrink: float = 0.9
    min_gap: float = 0.02            # enforced hard < soft separation
    prior_var: float = 0.0025        # 0.05^2
    initial_soft: float = 0.95
    initial_hard: float = 0.05


@dataclass(frozen=True)
class SensitivityConfig:
    enabled: bool = True
    epsilon: float = 0.05            # hard-bound relaxation, normalized units
    restarts: int = 10
    per_dim_cap: int = 2             # adjacent points kept per improvement dimension


@dataclass(frozen=True)
class DmConfig:
    soft_step: float = 0.3
    hard_step: float = 0.4
    proximity_threshold: float = 0.15   # switch to soft fine-tuning below this gap
    weight_std: float = 0.05
    observation_noise: float = 0.01     # noise on displayed objective values
    choice_noise: float = 0.05          # noise on hidden utilities for choice feedback
    confidence_boost: float = 0.05      # magnitude increase when an adjacent point helps


@dataclass(frozen=True)
class BudgetConfig:
    total_units: int = 10
    uniform_units: bool = False      # ablation: every mechanism costs 1 unit


@dataclass(frozen=True)
class MetricsConfig:
    good_delta: float = 0.05         # "good point" slack in the stop-efficiency metric


@dataclass(frozen=True)
class BaselineConfig:
    pool_size: int = 128             # evaluated candidate pool for non-native querying
    mi_particles: int = 128          # preference particles used in the info-gain estimate


@dataclass(frozen=True)
class RunConfig:
    problem: str = "branin_currin"
    seed: int = 0
    reference_grid_pow: int = 12     # 2^12 = 4096 grid points
    shf: ShfConfig = field(default_factory=ShfConfig)
    gp: GpConfig = field(default_factory=GpConfig)
    query: QueryConfig = field(default_factory=QueryConfig)
    preference: PreferenceConfig = field(default_factory=PreferenceConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    sensitivity: SensitivityConfig = field(default_factory=SensitivityConfig)
    dm: DmConfig = field(default_factory=DmConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        return _from_dict(cls, data)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))


def _from_dict(cls: type, data: dict[str, Any]):
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        ftype = hints[f.name]
        if dataclasses.is_dataclass(ftype) and isinstance(value, dict):
            kwargs[f.name] = _from_dict(ftype, value)
        else:
            kwargs[f.name] = value
    return cls(**kwargs)
