"""Reverse-SDE samplers for flow-matching models, with exact toy oracles."""

from .core import (
    CONSTANT,
    LOGSNR,
    DomainError,
    ExplorationSchedule,
    StepContext,
    TimeGrid,
    a_integral,
    eps_at,
    logsnr,
    progress_ratio,
    step_context,
    t_from_logsnr,
)
from .oracles import (
    DiagonalGaussian,
    DiscreteSupport,
    PointMass,
    PosteriorStats,
    RingSupport,
    make_double_ring,
    posterior,
)
from .rng import CounterRNG
from .samplers import (
    Cps,
    Euler,
    Precise,
    RolloutConfig,
    RolloutError,
    RolloutResult,
    Split,
    apply_rule,
    rollout,
)

__all__ = [
    "CONSTANT",
    "LOGSNR",
    "CounterRNG",
    "Cps",
    "DiagonalGaussian",
    "DiscreteSupport",
    "DomainError",
    "Euler",
    "ExplorationSchedule",
    "PointMass",
    "PosteriorStats",
    "Precise",
    "RingSupport",
    "RolloutConfig",
    "RolloutError",
    "RolloutResult",
    "Split",
    "StepContext",
    "TimeGrid",
    "a_integral",
    "apply_rule",
    "eps_at",
    "logsnr",
    "make_double_ring",
    "posterior",
    "progress_ratio",
    "rollout",
    "step_context",
    "t_from_logsnr",
]
