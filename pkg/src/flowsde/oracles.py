"""Analytic data models with exact posterior statistics.

All posterior quantities refer to ``z_t = (1 - t) z0 + t eps`` with
``eps ~ N(0, I)``.  Batched inputs are ``(n, d)`` arrays.  Posterior evaluation
at t = 1 is the prior (z_t carries no information there); t = 0 is rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import DomainError

_ROW_CHUNK = 2048


@dataclass(frozen=True)
class PosteriorStats:
    """Mean and covariance of z0 given z_t.

    ``cov`` is ``(n, d)`` (diagonal) or ``(n, d, d)`` (full).
    """

    mean: np.ndarray
    cov: np.ndarray

    def cov_matrix(self) -> np.ndarray:
        if self.cov.ndim == self.mean.ndim + 1:
            return self.cov
        return self.cov[..., :, None] * np.eye(self.cov.shape[-1])


def _as_batch(z, dim: int) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim <= 1
    z = z.reshape(1, -1) if single else z
    if z.shape[-1] != dim:
        raise ValueError(f"expected dimension {dim}, got {z.shape[-1]}")
    return z, single


def _check_t(t: float):
    if not 0.0 < t <= 1.0:
        raise DomainError(f"posterior needs t in (0, 1], got {t}")


class DataModel:
    """Common interface; subclasses supply sampling and posterior statistics."""

    dim: int

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def posterior(self, z, t: float) -> PosteriorStats:
        raise NotImplementedError

    def posterior_mean(self, z, t: float) -> np.ndarray:
        return self.posterior(z, t).mean

    def data_mean(self) -> np.ndarray:
        raise NotImplementedError

    def data_cov(self) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class PointMass(DataModel):
    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", np.atleast_1d(np.asarray(self.point, dtype=np.float64)))

    @property
    def dim(self) -> int:
        return self.point.shape[0]

    def sample(self, n, rng):
        return np.broadcast_to(self.point, (n, self.dim)).copy()

    def posterior(self, z, t):
        _check_t(t)
        zb, single = _as_batch(z, self.dim)
        mean = np.broadcast_to(self.point, zb.shape).copy()
        cov = np.zeros_like(zb)
        return PosteriorStats(mean[0], cov[0]) if single else PosteriorStats(mean, cov)

    def data_mean(self):
        return self.point.copy()

    def data_cov(self):
        return np.zeros((self.dim, self.dim))


@dataclass(frozen=True, eq=False)
class DiagonalGaussian(DataModel):
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        var = np.broadcast_to(np.asarray(self.variance, dtype=np.float64), mu.shape).copy()
        if np.any(var <= 0):
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "variance", var)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, n, rng):
        return self.mean + np.sqrt(self.variance) * rng.standard_normal((n, self.dim))

    def posterior(self, z, t):
        _check_t(t)
        zb, single = _as_batch(z, self.dim)
        a = 1.0 - t
        s2 = self.variance
        denom = a * a * s2 + t * t
        mean = self.mean + a * s2 * (zb - a * self.mean) / denom
        cov = np.broadcast_to(s2 * t * t / denom, zb.shape).copy()
        return PosteriorStats(mean[0], cov[0]) if single else PosteriorStats(mean, cov)

    def data_mean(self):
        return self.mean.copy()

    def data_cov(self):
        return np.diag(self.variance)


@dataclass(frozen=True, eq=False)
class DiscreteSupport(DataModel):
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        pts = pts.reshape(-1, 1) if pts.ndim == 1 else pts
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (pts.shape[0],):
            raise ValueError("one weight per support point required")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def sample(self, n, rng):
        idx = rng.choice(self.points.shape[0], size=n, p=self.weights)
        return self.points[idx].copy()

    def responsibilities(self, z, t: float) -> np.ndarray:
        """Posterior probabilities of each support point, rows sum to 1."""
        _check_t(t)
        zb, _ = _as_batch(z, self.dim)
        a = 1.0 - t
        logw = np.log(self.weights)
        out = np.empty((zb.shape[0], self.points.shape[0]))
        for lo in range(0, zb.shape[0], _ROW_CHUNK):
            rows = zb[lo : lo + _ROW_CHUNK]
            diff = rows[:, None, :] - a * self.points[None, :, :]
            logits = logw - np.einsum("nkd,nkd->nk", diff, diff) / (2.0 * t * t)
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            out[lo : lo + _ROW_CHUNK] = p / p.sum(axis=1, keepdims=True)
        return out

    def posterior(self, z, t):
        zb, single = _as_batch(z, self.dim)
        r = self.responsibilities(zb, t)
        mean = r @ self.points
        second = np.einsum("nk,kd,ke->nde", r, self.points, self.points)
        cov = second - mean[:, :, None] * mean[:, None, :]
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
        return PosteriorStats(mean[0], cov[0]) if single else PosteriorStats(mean, cov)

    def posterior_mean(self, z, t):
        zb, single = _as_batch(z, self.dim)
        r = self.responsibilities(zb, t)
        mean = np.einsum("nk,kd->nd", r, self.points)
        return mean[0] if single else mean

    def data_mean(self):
        return self.weights @ self.points

    def data_cov(self):
        c = self.points - self.data_mean()
        return np.einsum("k,kd,ke->de", self.weights, c, c)


@dataclass(frozen=True, eq=False)
class RingSupport(DiscreteSupport):
    """Equal-mass points equally spaced on concentric circles in the plane.

    Exposes the same support as :class:`DiscreteSupport` but evaluates the
    posterior mean per ring in closed form: a Bessel ratio while the angular
    concentration is small enough that aliasing between points is invisible,
    and an explicit sum over the nearest points otherwise.  Covariances use the
    generic path.
    """

    radii: tuple[float, ...] = (0.5, 1.0)
    points_per_ring: int = 512

    def __post_init__(self):
        super().__post_init__()
        k = self.points_per_ring
        # largest concentration at which the first aliased harmonic I_{K-1}
        # is below 1e-17 of I_0, so the continuous-ring formula is exact in floats
        grid = np.geomspace(1e-6, max(k * k / 50.0, 1.0), 4000)
        alias = special.ive(k - 1, grid) / special.i0e(grid)
        ok = grid[alias < 1e-17]
        switch = float(ok.max()) if ok.size else 0.0
        object.__setattr__(self, "_kappa_switch", switch)
        half = math.acos(max(-1.0, 1.0 - 80.0 / switch)) if switch > 0 else math.pi
        object.__setattr__(self, "_window", min(k // 2, int(math.ceil(k * half / (2 * math.pi))) + 1))

    def _ring_terms(self, rho_z: np.ndarray, phi: np.ndarray, a: float, t: float, radius: float):
        """Return (log partition, mean vector) of one ring for each row."""
        k = self.points_per_ring
        kappa = a * radius * rho_z / (t * t)
        log_s0 = np.empty_like(kappa)
        frac = np.empty_like(kappa)
        mean_dir = np.empty((kappa.shape[0], 2))
        small = kappa <= self._kappa_switch
        if np.any(small):
            ks = kappa[small]
            i0 = special.i0e(ks)
            log_s0[small] = math.log(k) + np.log(i0) + ks
            frac[small] = special.i1e(ks) / i0
            mean_dir[small, 0] = np.cos(phi[small])
            mean_dir[small, 1] = np.sin(phi[small])
        big = np.flatnonzero(~small)
        if big.size:
            # half-width needed so that dropped points sit below exp(-80) of the peak
            half = np.arccos(np.maximum(-1.0, 1.0 - 80.0 / kappa[big]))
            need = np.ceil(k * half / (2 * np.pi)).astype(np.int64) + 1
            width = np.minimum(2 ** np.ceil(np.log2(need)).astype(np.int64), self._window)
            for w in np.unique(width):
                rows = big[width == w]
                self._window_terms(kappa[rows], phi[rows], int(w), rows, log_s0, frac, mean_dir)
        return log_s0, radius * frac[:, None] * mean_dir

    def _window_terms(self, kb, pb, w, rows, log_s0, frac, mean_dir):
        k = self.points_per_ring
        step = 2.0 * np.pi / k
        if 2 * w + 1 >= k:
            centre = np.zeros(kb.shape[0])
            offsets = np.arange(k, dtype=np.float64)
        else:
            centre = np.rint(pb / step)
            offsets = np.arange(-w, w + 1, dtype=np.float64)
        lag = pb / step - centre
        # kappa * (cos(theta - phi) - 1), exact near the peak
        expo = -2.0 * kb[:, None] * np.sin(0.5 * step * (offsets[None, :] - lag[:, None])) ** 2
        shift = expo.max(axis=1, keepdims=True)
        p = np.exp(expo - shift)
        s0 = p.sum(axis=1)
        log_s0[rows] = np.log(s0) + shift[:, 0] + kb
        c = (p * np.cos(step * offsets)).sum(axis=1) / s0
        s = (p * np.sin(step * offsets)).sum(axis=1) / s0
        norm = np.hypot(c, s)
        ang = np.arctan2(s, c) + step * centre
        frac[rows] = norm
        mean_dir[rows, 0] = np.cos(ang)
        mean_dir[rows, 1] = np.sin(ang)

    def posterior_mean(self, z, t):
        _check_t(t)
        zb, single = _as_batch(z, 2)
        a = 1.0 - t
        rho_z = np.hypot(zb[:, 0], zb[:, 1])
        phi = np.arctan2(zb[:, 1], zb[:, 0])
        logw = math.log(1.0 / (len(self.radii) * self.points_per_ring))
        logs, means = [], []
        for r in self.radii:
            log_s0, m = self._ring_terms(rho_z, phi, a, t, r)
            logs.append(logw - (a * r) ** 2 / (2.0 * t * t) + log_s0)
            means.append(m)
        logs = np.stack(logs, axis=1)
        logs -= logs.max(axis=1, keepdims=True)
        resp = np.exp(logs)
        resp /= resp.sum(axis=1, keepdims=True)
        mean = sum(resp[:, j : j + 1] * means[j] for j in range(len(self.radii)))
        return mean[0] if single else mean


def make_double_ring(radii: tuple[float, float] = (0.5, 1.0), points_per_ring: int = 512) -> RingSupport:
    """Equal-mass double ring: K equally spaced points per circle, weights 1/(2K)."""
    k = int(points_per_ring)
    if k < 3:
        raise ValueError("need at least 3 points per ring")
    theta = 2.0 * np.pi * np.arange(k) / k
    unit = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    pts = np.concatenate([r * unit for r in radii])
    w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    return RingSupport(points=pts, weights=w, radii=tuple(float(r) for r in radii), points_per_ring=k)


def sample_data(model: DataModel, n: int, rng: np.random.Generator) -> np.ndarray:
    return model.sample(n, rng)


def forward_marginal(model: DataModel, t: float, n: int, rng: np.random.Generator):
    """Draw ``(z_t, z0, eps)`` from the forward path at time t."""
    if not 0.0 <= t <= 1.0:
        raise DomainError("t must lie in [0, 1]")
    z0 = model.sample(n, rng)
    eps = rng.standard_normal(z0.shape)
    return (1.0 - t) * z0 + t * eps, z0, eps


def posterior(model: DataModel, z, t: float) -> PosteriorStats:
    return model.posterior(z, t)


def eps_hat(z, t: float, m):
    """Posterior mean of the noise, (z - (1 - t) m) / t."""
    if not t > 0.0:
        raise DomainError("eps_hat needs t > 0")
    return (np.asarray(z) - (1.0 - t) * np.asarray(m)) / t


def score_and_velocity(z, t: float, m):
    """Score ((1-t) m - z)/t^2 and posterior-mean velocity (z - m)/t."""
    if not t > 0.0:
        raise DomainError("score needs t > 0")
    z = np.asarray(z, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    return ((1.0 - t) * m - z) / (t * t), (z - m) / t
