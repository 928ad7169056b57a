"""Time grids, logSNR geometry and exploration schedules.

Time runs over [0, 1] with larger t noisier; the path is
``z_t = (1 - t) z0 + t eps`` so alpha_t = 1 - t and sigma_t = t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

CONSTANT = "constant"
LOGSNR = "logsnr"
DEFAULT_PRECISE_ETA = 1.5
DEFAULT_CLAMP_KAPPA = 0.5


class DomainError(ValueError):
    """Raised when a time or parameter lies outside an operation's domain."""


@dataclass(frozen=True)
class TimeGrid:
    """Nodes ``0 = t_0 < ... < t_N = 1``, traversed from t_N down to t_0."""

    nodes: tuple[float, ...]

    def __post_init__(self):
        nodes = tuple(float(x) for x in self.nodes)
        if len(nodes) < 2:
            raise ValueError("a grid needs at least two nodes")
        if nodes[0] != 0.0 or nodes[-1] != 1.0:
            raise ValueError("grid must start at 0 and end at 1")
        if any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise ValueError("grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, n_steps: int) -> "TimeGrid":
        if n_steps < 1:
            raise ValueError("n_steps must be positive")
        return cls(tuple(i / n_steps for i in range(n_steps + 1)))

    @property
    def n_steps(self) -> int:
        return len(self.nodes) - 1

    def steps(self) -> Iterator[tuple[int, float, float]]:
        """Yield ``(k, t, t_prime)`` for k = 1..N in traversal order."""
        for k in range(1, self.n_steps + 1):
            i = self.n_steps - k
            yield k, self.nodes[i + 1], self.nodes[i]


@dataclass(frozen=True)
class ExplorationSchedule:
    kind: str = LOGSNR
    eta: float = DEFAULT_PRECISE_ETA

    def __post_init__(self):
        if self.kind not in (CONSTANT, LOGSNR):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.eta >= 0.0:
            raise ValueError("eta must be nonnegative")

    def eps_at(self, t):
        return eps_at(self, t)

    def a_integral(self, t_prime, t):
        return a_integral(self, t_prime, t)


@dataclass(frozen=True)
class StepContext:
    """Per-step quantities shared by every transition rule."""

    t: float
    t_prime: float
    dt: float
    t_eval: float
    eps_t: float
    a_value: float
    rho: float = field(default=1.0)
    eta: float = field(default=0.0)


def logsnr(t):
    """log((1 - t)^2 / t^2)."""
    t = np.asarray(t, dtype=np.float64)
    if np.any((t <= 0.0) | (t >= 1.0)):
        raise DomainError("logsnr is defined on the open interval (0, 1)")
    out = 2.0 * (np.log1p(-t) - np.log(t))
    return float(out) if out.ndim == 0 else out


def t_from_logsnr(lam):
    """Inverse of :func:`logsnr`."""
    lam = np.asarray(lam, dtype=np.float64)
    out = 1.0 / (1.0 + np.exp(lam / 2.0))
    return float(out) if out.ndim == 0 else out


def eps_at(schedule: ExplorationSchedule, t):
    """Noise level of the reverse SDE at time t."""
    t = np.asarray(t, dtype=np.float64)
    if schedule.kind == CONSTANT:
        out = np.full_like(t, schedule.eta)
    else:
        if np.any((t < 0.0) | (t >= 1.0)):
            raise DomainError("the logSNR schedule diverges at t = 1; clamp first")
        out = schedule.eta * np.sqrt(t / (1.0 - t))
    return float(out) if out.ndim == 0 else out


def a_integral(schedule: ExplorationSchedule, t_prime: float, t: float) -> float:
    """Integral of eps_s^2 / s^2 over [t', t].

    Returns ``inf`` for the logSNR schedule at t = 1, the limit in which the
    step fully re-randomises the residual.
    """
    if not t_prime > 0.0:
        raise DomainError("A(t', t) needs t' > 0")
    if t_prime > t:
        raise DomainError("A(t', t) needs t' <= t")
    if t > 1.0:
        raise DomainError("times must lie in [0, 1]")
    dt = t - t_prime
    eta2 = schedule.eta**2
    if dt == 0.0:
        return 0.0
    if schedule.kind == CONSTANT:
        return eta2 * dt / (t * t_prime)
    if t == 1.0:
        return math.inf if eta2 > 0 else 0.0
    # log(t / t') + log((1 - t') / (1 - t)) written through dt for accuracy when t' ~ t
    return eta2 * (math.log1p(dt / t_prime) + math.log1p(dt / (1.0 - t)))


def step_context(
    schedule: ExplorationSchedule,
    t: float,
    t_prime: float,
    kappa: float = DEFAULT_CLAMP_KAPPA,
) -> StepContext:
    """Bundle eps_t, A(t', t) and rho = exp(-A/2) for one step.

    Only a diverging schedule (logSNR with eta > 0) is clamped: there eps_t and
    the Euler evaluation time are taken at ``min(t, 1 - kappa * dt)``.
    """
    if not 0.0 <= t_prime <= t <= 1.0:
        raise DomainError(f"need 0 <= t' <= t <= 1, got t={t}, t'={t_prime}")
    dt = t - t_prime
    diverges = schedule.kind == LOGSNR and schedule.eta > 0
    t_eval = min(t, 1.0 - kappa * dt) if diverges and dt > 0 else t
    if schedule.eta == 0.0:
        eps_t = 0.0
    elif diverges and t_eval >= 1.0:
        eps_t = math.inf
    else:
        eps_t = eps_at(schedule, t_eval)
    if dt == 0.0:
        a_value, rho = 0.0, 1.0
    elif t_prime == 0.0:
        # the integrand blows up at s = 0 for eta > 0: the final step lands on the mean
        a_value = math.inf if schedule.eta > 0 else 0.0
        rho = 0.0 if schedule.eta > 0 else 1.0
    else:
        a_value = a_integral(schedule, t_prime, t)
        rho = math.exp(-0.5 * a_value)
    return StepContext(t=t, t_prime=t_prime, dt=dt, t_eval=t_eval, eps_t=eps_t, a_value=a_value, rho=rho, eta=schedule.eta)


def progress_ratio(schedule: ExplorationSchedule, t):
    """Score-to-velocity logSNR progress ratio (eps^2/t^2) / (2/(t(1-t)))."""
    t = np.asarray(t, dtype=np.float64)
    eps = np.asarray(eps_at(schedule, t))
    out = (eps**2 / t**2) / (2.0 / (t * (1.0 - t)))
    return float(out) if out.ndim == 0 else out
