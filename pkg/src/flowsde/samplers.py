"""Finite-step reverse-SDE transitions and the rollout engine.

Transitions take the fresh standard-normal draw ``w`` explicitly, so they are
pure functions and can be driven by shared noise for coupling experiments.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DEFAULT_CLAMP_KAPPA,
    DomainError,
    ExplorationSchedule,
    StepContext,
    TimeGrid,
    step_context,
)
from .oracles import DataModel, eps_hat
from .rng import CounterRNG


class Split(enum.Enum):
    """How a coefficient-preserving step divides t' between eps_hat and fresh noise."""

    LOCAL = "local"
    EULER_ENERGY = "euler_energy"
    PRECISE_MATCHED = "precise_matched"
    # constant share of t' re-noised per step: k1 = t' cos(eta pi/2), k2 = t' sin(eta pi/2)
    FIXED_ANGLE = "fixed_angle"


@dataclass(frozen=True)
class Euler:
    name = "euler"


@dataclass(frozen=True)
class Cps:
    split: Split = Split.EULER_ENERGY
    name = "cps"


@dataclass(frozen=True)
class Precise:
    name = "precise"


StepRule = Euler | Cps | Precise


def parse_rule(name: str, split: str | None = None) -> StepRule:
    name = name.lower()
    if name == "euler":
        return Euler()
    if name == "precise":
        return Precise()
    if name == "cps":
        return Cps(Split(split) if split else Split.EULER_ENERGY)
    raise ValueError(f"unknown rule {name!r}")


def split_coeffs(split: Split, ctx: StepContext) -> tuple[float, float]:
    """Return ``(k1, k2)`` with k1^2 + k2^2 = t'^2."""
    tp = ctx.t_prime
    if split is Split.LOCAL:
        return 0.0, tp
    if split is Split.EULER_ENERGY:
        k2 = min(tp, ctx.eps_t * math.sqrt(ctx.dt))
        return math.sqrt(max(tp * tp - k2 * k2, 0.0)), k2
    if split is Split.PRECISE_MATCHED:
        return tp * ctx.rho, tp * math.sqrt(max(1.0 - ctx.rho * ctx.rho, 0.0))
    if split is Split.FIXED_ANGLE:
        angle = 0.5 * math.pi * min(ctx.eta, 1.0)
        return tp * math.cos(angle), tp * math.sin(angle)
    raise ValueError(f"unknown split {split!r}")


def mean_form_drift(z, s: float, eps: float, m):
    """dz/ds of the reverse SDE written through the posterior mean m."""
    return (z - m) / s + (eps * eps / (2.0 * s * s)) * (z - (1.0 - s) * m)


def euler_step(z, ctx: StepContext, m, w):
    """Euler-Maruyama step from t to t'; m must be the posterior mean at (z, t_eval)."""
    if ctx.dt == 0.0:
        return np.array(z, dtype=np.float64, copy=True)
    if ctx.t_eval <= 0.0:
        raise DomainError("Euler step evaluated at t = 0")
    drift = mean_form_drift(z, ctx.t_eval, ctx.eps_t, m)
    return z - ctx.dt * drift + ctx.eps_t * math.sqrt(ctx.dt) * w


def cps_step(z, ctx: StepContext, m, w, split: Split = Split.EULER_ENERGY):
    """(1 - t') m + k1 eps_hat + k2 w with m the posterior mean at (z, t)."""
    if ctx.dt == 0.0:
        return np.array(z, dtype=np.float64, copy=True)
    k1, k2 = split_coeffs(split, ctx)
    return (1.0 - ctx.t_prime) * m + k1 * eps_hat(z, ctx.t, m) + k2 * w


def precise_step(z, ctx: StepContext, m, w):
    """Exact transition of the reverse SDE with the posterior mean frozen at m."""
    if ctx.dt == 0.0:
        return np.array(z, dtype=np.float64, copy=True)
    tp, rho = ctx.t_prime, ctx.rho
    return (1.0 - tp) * m + tp * rho * eps_hat(z, ctx.t, m) + tp * math.sqrt(max(1.0 - rho * rho, 0.0)) * w


def apply_rule(rule: StepRule, model: DataModel, z, ctx: StepContext, w):
    """Evaluate the posterior where ``rule`` needs it and take one step."""
    if ctx.dt == 0.0:
        return np.array(z, dtype=np.float64, copy=True)
    if isinstance(rule, Euler):
        return euler_step(z, ctx, model.posterior_mean(z, ctx.t_eval), w)
    m = model.posterior_mean(z, ctx.t)
    if isinstance(rule, Cps):
        return cps_step(z, ctx, m, w, rule.split)
    return precise_step(z, ctx, m, w)


@dataclass(frozen=True)
class RolloutConfig:
    model: DataModel
    grid: TimeGrid
    schedule: ExplorationSchedule
    rule: StepRule
    n_samples: int
    seed: int = 0
    record_trajectory: bool = False
    kappa: float = DEFAULT_CLAMP_KAPPA
    chunk_size: int = 25_000
    workers: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")


@dataclass
class RolloutResult:
    final: np.ndarray
    # (n_nodes, n_samples, d) ordered by node index t_0..t_N when recorded
    trajectory: np.ndarray | None = field(default=None)


class RolloutError(RuntimeError):
    def __init__(self, sample: int, step: int, cause: Exception):
        super().__init__(f"rollout failed at sample {sample}, step {step}: {cause}")
        self.sample = sample
        self.step = step


def _rollout_chunk(config: RolloutConfig, lo: int, hi: int):
    rng = CounterRNG(config.seed)
    idx = np.arange(lo, hi, dtype=np.uint64)
    d = config.model.dim
    grid = config.grid
    z = rng.normal(idx, 0, d)
    traj = None
    if config.record_trajectory:
        traj = np.empty((grid.n_steps + 1, hi - lo, d))
        traj[grid.n_steps] = z
    for k, t, tp in grid.steps():
        try:
            ctx = step_context(config.schedule, t, tp, config.kappa)
            z = apply_rule(config.rule, config.model, z, ctx, rng.normal(idx, k, d))
        except Exception as exc:
            raise RolloutError(lo, k, exc) from exc
        if not np.all(np.isfinite(z)):
            bad = lo + int(np.flatnonzero(~np.isfinite(z).all(axis=1))[0])
            raise RolloutError(bad, k, FloatingPointError("non-finite state"))
        if traj is not None:
            traj[grid.n_steps - k] = z
    return z, traj


def rollout(config: RolloutConfig) -> RolloutResult:
    """Run ``n_samples`` independent chains from t = 1 down the grid.

    Sample s draws its initial state and every step's noise from
    ``CounterRNG(seed)`` at counter ``(s, step)``, so output does not depend on
    ``chunk_size`` or ``workers``.
    """
    bounds = [(lo, min(lo + config.chunk_size, config.n_samples)) for lo in range(0, config.n_samples, config.chunk_size)]
    if config.workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            parts = list(pool.map(lambda b: _rollout_chunk(config, *b), bounds))
    else:
        parts = [_rollout_chunk(config, *b) for b in bounds]
    final = np.concatenate([p[0] for p in parts])
    traj = np.concatenate([p[1] for p in parts], axis=1) if config.record_trajectory else None
    return RolloutResult(final, traj)


def fine_reference_step(
    z,
    t: float,
    t_prime: float,
    model: DataModel,
    schedule: ExplorationSchedule,
    substeps: int,
    increments=None,
    rng: np.random.Generator | None = None,
    frozen: bool = False,
    kappa: float = DEFAULT_CLAMP_KAPPA,
):
    """Integrate the mean-form reverse SDE over [t', t] with ``substeps`` Euler steps.

    ``increments`` holds standard normals of shape ``(substeps, *z.shape)``;
    pass the same array to a ``frozen=True`` run to couple the two paths.  With
    ``frozen`` the posterior mean stays at its value at the step start.
    """
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    z = np.array(z, dtype=np.float64, copy=True)
    if increments is None:
        if rng is None:
            raise ValueError("need increments or an rng")
        increments = rng.standard_normal((substeps, *z.shape))
    increments = np.asarray(increments)
    if increments.shape[0] != substeps:
        raise ValueError("one increment per substep required")
    h = (t - t_prime) / substeps
    m0 = None
    for j in range(substeps):
        s = t - j * h
        s_next = t_prime if j == substeps - 1 else s - h
        ctx = step_context(schedule, s, s_next, kappa)
        if frozen:
            if m0 is None:
                m0 = model.posterior_mean(z, ctx.t_eval)
            m = m0
        else:
            m = model.posterior_mean(z, ctx.t_eval)
        z = euler_step(z, ctx, m, increments[j])
    return z
