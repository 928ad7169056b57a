"""Analytic identities and error experiments for the reverse-SDE samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, ExplorationSchedule, logsnr, step_context
from .oracles import DataModel, DiagonalGaussian, PointMass, forward_marginal
from .samplers import Cps, Euler, Split, StepRule, fine_reference_step, split_coeffs


@dataclass(frozen=True)
class LogSnrTerms:
    vel: float
    sco: float
    sto: float


def _check_step(t: float, dt: float):
    if not (dt > 0.0 and 0.0 < t - dt and t < 1.0):
        raise DomainError(f"need 0 < t - dt < t < 1, got t={t}, dt={dt}")


def logsnr_terms(t: float, dt: float, eps: float) -> LogSnrTerms:
    """First-order logSNR progress of the velocity, score and noise terms."""
    _check_step(t, dt)
    sco = eps * eps * dt / (t * t)
    return LogSnrTerms(vel=2.0 * dt / (t * (1.0 - t)), sco=sco, sto=-sco)


def logsnr_exact_increments(t: float, dt: float, eps: float) -> tuple[float, float]:
    """Exact logSNR change of the velocity move and of the isolated noise kick."""
    _check_step(t, dt)
    vel = logsnr(t - dt) - logsnr(t)
    sto = -math.log1p(eps * eps * dt / (t * t))
    return vel, sto


def richardson_ratios(t: float, eps: float, dts=(1e-2, 5e-3, 2.5e-3)) -> dict[str, list[float]]:
    """Shrink factors of (exact - first order) between consecutive step sizes."""
    res = {"vel": [], "sto": []}
    for dt in dts:
        first = logsnr_terms(t, dt, eps)
        vel, sto = logsnr_exact_increments(t, dt, eps)
        res["vel"].append(vel - first.vel)
        res["sto"].append(sto - first.sto)
    return {k: [v[i] / v[i + 1] for i in range(len(v) - 1)] for k, v in res.items()}


@dataclass(frozen=True)
class PointMassEulerCoeffs:
    signal: float
    eps_coeff: float
    fresh: float
    total_noise: float


def pointmass_euler_coeffs(t: float, t_prime: float, eps: float, t_eval: float | None = None) -> PointMassEulerCoeffs:
    """Signal and noise coefficients after one Euler step on point-mass data.

    ``t_eval`` is where velocity and score are evaluated (the clamped time);
    it defaults to t, which gives signal 1 - t' and noise coefficient
    t' - eps^2 dt / (2t).
    """
    if not (0.0 <= t_prime < t and t > 0.0):
        raise DomainError("need 0 <= t' < t")
    te = t if t_eval is None else t_eval
    dt = t - t_prime
    signal = (1.0 - t) + dt * t / te - dt * eps * eps * (te - t) / (2.0 * te * te)
    eps_coeff = t * (1.0 - dt / te - eps * eps * dt / (2.0 * te * te))
    fresh = eps * math.sqrt(dt)
    return PointMassEulerCoeffs(signal, eps_coeff, fresh, math.hypot(eps_coeff, fresh))


@dataclass(frozen=True)
class ContractionReport:
    target_var: float
    cps_var: float
    gap: float
    mc_gap: float
    mc_stderr: float


def cps_transition(z, t: float, t_prime: float, m, k1: float, k2: float, w):
    """Raw coefficient-preserving formula, without the zero-length-step shortcut."""
    return (1.0 - t_prime) * m + k1 * (z - (1.0 - t) * m) / t + k2 * w


def cps_contraction_gaussian(
    s: float,
    t: float,
    t_prime: float,
    split: Split,
    schedule: ExplorationSchedule,
    n_mc: int = 100_000,
    rng: np.random.Generator | None = None,
) -> ContractionReport:
    """Variance lost by one CPS step on a 1-d N(0, s^2) prior.

    The analytic gap is ((1 - t') - k1 (1 - t)/t)^2 Var(z0 | z_t); the
    Monte-Carlo gap compares the sample variance of CPS outputs with the target
    (1 - t')^2 s^2 + t'^2.
    """
    if not 0.0 < t < 1.0 or not 0.0 <= t_prime <= t:
        raise DomainError("need 0 <= t' <= t < 1")
    ctx = step_context(schedule, t, t_prime)
    k1, k2 = split_coeffs(split, ctx)
    post_var = s * s * t * t / ((1.0 - t) ** 2 * s * s + t * t)
    gap = ((1.0 - t_prime) - k1 * (1.0 - t) / t) ** 2 * post_var
    target = (1.0 - t_prime) ** 2 * s * s + t_prime**2
    mc_gap, se = math.nan, math.nan
    if n_mc:
        rng = rng or np.random.default_rng(0)
        model = DiagonalGaussian([0.0], [s * s])
        zt, _, _ = forward_marginal(model, t, n_mc, rng)
        m = model.posterior_mean(zt, t)
        out = cps_transition(zt, t, t_prime, m, k1, k2, rng.standard_normal(zt.shape))[:, 0]
        dev = out - out.mean()
        var = float(dev @ dev / (n_mc - 1))
        m4 = float(np.mean(dev**4))
        se = math.sqrt(max(m4 - var * var, 0.0) / n_mc)
        mc_gap = target - var
    return ContractionReport(target, target - gap, gap, mc_gap, se)


def jacobian_identity_residual(model: DataModel, z, t: float, h: float = 1e-4) -> float:
    """Max-entry gap between the FD Jacobian of the posterior mean and ((1-t)/t^2) Cov."""
    if not 0.0 < t < 1.0:
        raise DomainError("need t in (0, 1)")
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    d = z.shape[0]
    probes = np.concatenate([z + h * np.eye(d), z - h * np.eye(d)])
    means = model.posterior(probes, t).mean
    jac = ((means[:d] - means[d:]) / (2.0 * h)).T
    cov = model.posterior(z[None, :], t).cov_matrix()[0]
    return float(np.max(np.abs(jac - (1.0 - t) / t**2 * cov)))


def renoise_coeffs(t_prime: float, t: float) -> tuple[float, float]:
    """(scale, fresh std) that move an Eq.-path latent from t' to t."""
    if not 0.0 < t_prime <= t < 1.0:
        raise DomainError("renoising needs 0 < t' <= t < 1")
    scale = (1.0 - t) / (1.0 - t_prime)
    return scale, math.sqrt(max(t * t - (scale * t_prime) ** 2, 0.0))


def renoise(z_tp, t_prime: float, t: float, xi):
    """Scale a latent at t' and add fresh noise so it sits on the path at t."""
    scale, fresh = renoise_coeffs(t_prime, t)
    return scale * np.asarray(z_tp) + fresh * np.asarray(xi)


@dataclass(frozen=True)
class StabilityResult:
    ratios: np.ndarray
    mean: float
    std: float
    rms: float  # sqrt(sum |dm|^2 / sum |dz|^2), pooled over probes


def stability_ratio(model: DataModel, t_prime: float, t: float, n_probes: int, rng: np.random.Generator) -> StabilityResult:
    """How far the posterior mean moves under renoising, relative to the latent."""
    if not t > t_prime:
        raise DomainError("stability ratio needs t > t'")
    z_tp, _, _ = forward_marginal(model, t_prime, n_probes, rng)
    z_t = renoise(z_tp, t_prime, t, rng.standard_normal(z_tp.shape))
    dm = model.posterior_mean(z_t, t) - model.posterior_mean(z_tp, t_prime)
    dz = z_t - z_tp
    num = np.einsum("nd,nd->n", dm, dm)
    den = np.einsum("nd,nd->n", dz, dz)
    ratios = np.sqrt(num / den)
    return StabilityResult(ratios, float(ratios.mean()), float(ratios.std()), float(math.sqrt(num.sum() / den.sum())))


def gaussian_stability_rms(s: float, t_prime: float, t: float) -> float:
    """Exact pooled RMS stability ratio for an isotropic N(0, s^2) prior."""
    def slope(u):
        return (1.0 - u) * s * s / ((1.0 - u) ** 2 * s * s + u * u)

    scale, fresh = renoise_coeffs(t_prime, t)
    var_tp = (1.0 - t_prime) ** 2 * s * s + t_prime**2
    # dz = (scale - 1) z' + fresh xi ; dm = c_t dz + (c_t - c_t') z'
    ct, ctp = slope(t), slope(t_prime)
    a = ct * (scale - 1.0) + (ct - ctp)
    num = a * a * var_tp + (ct * fresh) ** 2
    den = (scale - 1.0) ** 2 * var_tp + fresh**2
    return math.sqrt(num / den)


def logsnr_anchor_times(lo: float = -5.0, hi: float = 1.5, n: int = 12) -> np.ndarray:
    """Times whose logSNR values are uniform on [lo, hi], in increasing t."""
    lam = np.linspace(hi, lo, n)
    return 1.0 / (1.0 + np.exp(lam / 2.0))


def coupled_endpoints(
    model: DataModel,
    z_t,
    t: float,
    delta: float,
    schedule: ExplorationSchedule,
    substeps: int,
    increments,
):
    """Endpoints of the re-evaluated and frozen-mean integrators on shared noise."""
    fine = fine_reference_step(z_t, t, t - delta, model, schedule, substeps, increments=increments)
    frozen = fine_reference_step(z_t, t, t - delta, model, schedule, substeps, increments=increments, frozen=True)
    return fine, frozen


def coupling_error(
    model: DataModel,
    t: float,
    delta: float,
    schedule: ExplorationSchedule,
    substeps: int = 64,
    n_paths: int = 10_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean distance between synchronously coupled fine and frozen-mean endpoints."""
    if not 0.0 < t - delta < t < 1.0:
        raise DomainError("need [t - delta, t] inside (0, 1)")
    rng = rng or np.random.default_rng(0)
    z_t, _, _ = forward_marginal(model, t, n_paths, rng)
    inc = rng.standard_normal((substeps, *z_t.shape))
    fine, frozen = coupled_endpoints(model, z_t, t, delta, schedule, substeps, inc)
    return float(np.linalg.norm(fine - frozen, axis=1).mean())


def reference_refinement_gap(
    model: DataModel,
    t: float,
    delta: float,
    schedule: ExplorationSchedule,
    substeps: int = 64,
    n_paths: int = 10_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean distance between fine references with M and 2M substeps on one Brownian path."""
    rng = rng or np.random.default_rng(0)
    z_t, _, _ = forward_marginal(model, t, n_paths, rng)
    fine_inc = rng.standard_normal((2 * substeps, *z_t.shape))
    coarse_inc = (fine_inc[0::2] + fine_inc[1::2]) / math.sqrt(2.0)
    a = fine_reference_step(z_t, t, t - delta, model, schedule, substeps, increments=coarse_inc)
    b = fine_reference_step(z_t, t, t - delta, model, schedule, 2 * substeps, increments=fine_inc)
    return float(np.linalg.norm(a - b, axis=1).mean())


def gaussian_rollout_variance(s: float, grid, schedule: ExplorationSchedule, rule: StepRule, kappa: float = 0.5) -> float:
    """Exact final variance of a rollout on a 1-d N(0, s^2) prior.

    Every rule is linear in z there (m = c_t z), so the variance obeys
    v' = g^2 v + k^2 with per-step gain g and fresh-noise std k.
    """
    def gain(u):
        return (1.0 - u) * s * s / ((1.0 - u) ** 2 * s * s + u * u)

    v = 1.0
    for _, t, tp in grid.steps():
        ctx = step_context(schedule, t, tp, kappa)
        if isinstance(rule, Euler):
            te, e2, c = ctx.t_eval, ctx.eps_t**2, gain(ctx.t_eval)
            drift = (1.0 - c) / te + e2 / (2.0 * te * te) * (1.0 - (1.0 - te) * c)
            g, k = 1.0 - ctx.dt * drift, ctx.eps_t * math.sqrt(ctx.dt)
        else:
            k1, k = split_coeffs(rule.split, ctx) if isinstance(rule, Cps) else (tp * ctx.rho, tp * math.sqrt(1.0 - ctx.rho**2))
            c = gain(t)
            g = (1.0 - tp) * c + k1 * (1.0 - (1.0 - t) * c) / t
        v = g * g * v + k * k
    return v


def is_point_mass(model: DataModel) -> bool:
    return isinstance(model, PointMass)
