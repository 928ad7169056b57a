"""Estimators for judging how well a sample batch matches its target law."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .oracles import DataModel

DEFAULT_RING_BOUNDARY = 0.75


@dataclass(frozen=True)
class RingMass:
    mass: float
    stderr: float
    n: int


def _as_2d(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def ring_mass(samples, boundary: float = DEFAULT_RING_BOUNDARY) -> RingMass:
    """Fraction of planar samples with norm above ``boundary``, with binomial stderr."""
    x = _as_2d(samples)
    if x.shape[1] != 2:
        raise ValueError(f"ring mass needs 2-d samples, got dimension {x.shape[1]}")
    if not boundary > 0:
        raise ValueError("boundary must be positive")
    n = x.shape[0]
    p = float(np.mean(np.hypot(x[:, 0], x[:, 1]) > boundary)) if n else math.nan
    return RingMass(p, math.sqrt(p * (1.0 - p) / n) if n else math.nan, n)


def sample_moments(samples) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and unbiased covariance."""
    x = _as_2d(samples)
    if x.shape[0] < 2:
        raise ValueError("need at least two samples")
    mean = x.mean(axis=0)
    c = x - mean
    return mean, c.T @ c / (x.shape[0] - 1)


def w1_1d(a, b) -> float:
    """Wasserstein-1 between two equal-size 1-d samples (sorted differences)."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError("1-d W1 via sorting needs equal sample counts")
    return float(np.mean(np.abs(a - b)))


def sliced_w1(samples_a, samples_b, n_directions: int = 64, rng: np.random.Generator | None = None) -> float:
    """Average 1-d W1 of the two sample sets projected on random unit directions.

    The larger set is subsampled without replacement to the smaller size.
    """
    a, b = _as_2d(samples_a), _as_2d(samples_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch")
    if n_directions < 1:
        raise ValueError("need at least one direction")
    rng = rng or np.random.default_rng(0)
    n = min(a.shape[0], b.shape[0])
    if a.shape[0] > n:
        a = a[np.sort(rng.choice(a.shape[0], n, replace=False))]
    if b.shape[0] > n:
        b = b[np.sort(rng.choice(b.shape[0], n, replace=False))]
    d = a.shape[1]
    if d == 1:
        dirs = np.ones((n_directions, 1))
    else:
        dirs = rng.standard_normal((n_directions, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return float(np.mean([w1_1d(a @ u, b @ u) for u in dirs]))


def radial_histogram(samples, bin_edges) -> np.ndarray:
    """Counts of sample norms per bin; norms outside the edges are dropped."""
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        return np.zeros(edges.size - 1, dtype=np.int64)
    counts, _ = np.histogram(np.linalg.norm(_as_2d(x), axis=1), bins=edges)
    return counts


@dataclass(frozen=True)
class GaussianTarget:
    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True)
class PointMassMarginal:
    signal_coeff: float
    noise_std: float


@dataclass(frozen=True)
class EmpiricalTarget:
    reference: np.ndarray


MarginalTarget = GaussianTarget | PointMassMarginal | EmpiricalTarget


def forward_target(model: DataModel, t: float) -> GaussianTarget:
    """Mean and per-dimension variance of z_t = (1 - t) z0 + t eps."""
    cov = np.atleast_2d(model.data_cov())
    return GaussianTarget((1.0 - t) * model.data_mean(), (1.0 - t) ** 2 * np.diag(cov) + t * t)


def regress_on_noise(z, base, noise) -> tuple[float, float]:
    """Fit z - base = b * noise + r per dimension, pooled; return (b, total std).

    The total std is sqrt(b^2 + Var(r)), the noise magnitude when ``noise`` is
    standard normal and r independent of it.
    """
    y = (np.asarray(z) - np.asarray(base)).reshape(-1)
    x = np.asarray(noise).reshape(-1)
    b = float(x @ y / (x @ x))
    r = y - b * x
    return b, math.sqrt(b * b + float(r @ r) / (r.size - 1))


def pointmass_node_coeffs(z, point) -> tuple[float, float]:
    """Signal coefficient and noise std of samples z = a * point + noise.

    ``a`` is the projection of the sample mean on ``point``; the noise std is
    the pooled RMS residual per coordinate.
    """
    z = _as_2d(z)
    p = np.asarray(point, dtype=np.float64).reshape(-1)
    a = float(z.mean(axis=0) @ p / (p @ p))
    r = z - a * p
    return a, math.sqrt(float(np.mean(r * r)))
