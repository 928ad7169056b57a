import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowsde import analysis
from flowsde.core import CONSTANT, LOGSNR, ExplorationSchedule, TimeGrid, logsnr
from flowsde.oracles import DiagonalGaussian, PointMass, make_double_ring
from flowsde.samplers import Cps, Euler, Precise, RolloutConfig, Split, rollout


@given(st.floats(0.05, 0.95), st.floats(1e-4, 0.02), st.floats(0.0, 3.0))
def test_score_and_noise_terms_cancel(t, dt, eps):
    terms = analysis.logsnr_terms(t, min(dt, t / 2), eps)
    assert terms.sco + terms.sto == 0.0


def test_velocity_term_is_logsnr_derivative():
    t, dt = 0.3, 1e-7
    exact = logsnr(t - dt) - logsnr(t)
    assert analysis.logsnr_terms(t, dt, 0.5).vel == pytest.approx(exact, rel=1e-5)


@pytest.mark.parametrize("t", [0.3, 0.4, 0.6, 0.7, 0.8])
@pytest.mark.parametrize("eps", [0.25, 0.5, 1.0])
def test_richardson_ratio_near_four(t, eps):
    for ratios in analysis.richardson_ratios(t, eps).values():
        assert all(3.5 <= r <= 4.5 for r in ratios)


def test_euler_coeffs_default_evaluation():
    c = analysis.pointmass_euler_coeffs(0.5, 0.4, 1.5)
    assert c.signal == pytest.approx(0.6)
    assert c.eps_coeff == pytest.approx(0.4 - 2.25 * 0.1 / 1.0)
    assert c.total_noise == pytest.approx(0.505594, abs=5e-7)


@given(st.floats(0.1, 0.9), st.floats(0.1, 0.9), st.floats(0.1, 2.0))
def test_euler_noise_exceeds_t_prime(t, frac, eps):
    c = analysis.pointmass_euler_coeffs(t, t * frac, eps)
    assert c.total_noise > t * frac


@given(st.floats(0.1, 0.9), st.floats(0.0, 1.0), st.sampled_from(list(Split)), st.floats(0.05, 3.0))
def test_contraction_gap_nonnegative(t, frac, split, s):
    r = analysis.cps_contraction_gaussian(s, t, t * frac, split, ExplorationSchedule(LOGSNR, 0.7), n_mc=0)
    assert r.gap >= 0.0
    assert r.cps_var == pytest.approx(r.target_var - r.gap)


def test_local_gap_instance(rng):
    r = analysis.cps_contraction_gaussian(1.0, 0.5, 0.5, Split.LOCAL, ExplorationSchedule(), 100_000, rng)
    assert r.gap == pytest.approx(0.125, abs=1e-15)
    assert abs(r.mc_gap - r.gap) <= 3 * r.mc_stderr


def test_precise_gap_vanishes_on_point_mass_limit():
    r = analysis.cps_contraction_gaussian(1e-6, 0.5, 0.3, Split.PRECISE_MATCHED, ExplorationSchedule(), n_mc=0)
    assert r.gap < 1e-11


@pytest.mark.parametrize(
    "model",
    [DiagonalGaussian([0.5, -1.0], [0.3, 2.0]), make_double_ring(points_per_ring=64)],
    ids=["gaussian", "ring"],
)
def test_jacobian_identity(model, rng):
    for t in (0.35, 0.6, 0.9):
        z = rng.standard_normal(2)
        assert analysis.jacobian_identity_residual(model, z, t) < 1e-6


@given(st.floats(0.05, 0.9), st.floats(0.0, 1.0))
def test_renoise_keeps_path_coefficients(tp, frac):
    t = tp + frac * (0.95 - tp)
    scale, fresh = analysis.renoise_coeffs(tp, t)
    assert scale * (1 - tp) == pytest.approx(1 - t)
    assert math.hypot(scale * tp, fresh) == pytest.approx(t)


def test_renoise_identity_at_equal_times():
    assert analysis.renoise_coeffs(0.4, 0.4) == (1.0, 0.0)


def test_stability_ratio_point_mass_is_zero(rng):
    res = analysis.stability_ratio(PointMass([0.1, 0.2]), 0.2, 0.4, 100, rng)
    assert np.all(res.ratios == 0.0)


def test_stability_rms_matches_gaussian_oracle(rng):
    model = DiagonalGaussian([0.0], [2.0])
    res = analysis.stability_ratio(model, 0.3, 0.45, 200_000, rng)
    assert res.rms == pytest.approx(analysis.gaussian_stability_rms(math.sqrt(2.0), 0.3, 0.45), rel=0.01)


def test_anchor_times_are_uniform_in_logsnr():
    t = analysis.logsnr_anchor_times()
    assert t.shape == (12,)
    assert np.all(np.diff(t) > 0)
    np.testing.assert_allclose(np.diff(logsnr(t)), -6.5 / 11)


def test_point_mass_coupling_is_exact(rng):
    err = analysis.coupling_error(PointMass([0.3]), 0.5, 0.1, ExplorationSchedule(LOGSNR, math.sqrt(2)), 16, 200, rng)
    assert err == 0.0


def test_coupling_error_shrinks_with_delta():
    sch = ExplorationSchedule(LOGSNR, math.sqrt(2))
    model = DiagonalGaussian([0.0], [1.0])
    e1 = analysis.coupling_error(model, 0.5, 0.1, sch, 32, 4000, np.random.default_rng(1))
    e2 = analysis.coupling_error(model, 0.5, 0.05, sch, 32, 4000, np.random.default_rng(1))
    assert e2 < 0.6 * e1


@pytest.mark.parametrize(
    "rule, schedule",
    [
        (Precise(), ExplorationSchedule(LOGSNR, 1.5)),
        (Cps(), ExplorationSchedule(LOGSNR, 0.7)),
        (Cps(Split.LOCAL), ExplorationSchedule(LOGSNR, 0.7)),
        (Euler(), ExplorationSchedule(LOGSNR, 0.7)),
        (Euler(), ExplorationSchedule(CONSTANT, 0.3)),
    ],
)
def test_gaussian_variance_recursion_matches_rollout(rule, schedule):
    grid = TimeGrid.uniform(12)
    n = 60_000
    x = rollout(RolloutConfig(DiagonalGaussian([0.0], [1.5]), grid, schedule, rule, n, seed=9)).final
    exact = analysis.gaussian_rollout_variance(math.sqrt(1.5), grid, schedule, rule)
    assert x.var(ddof=1) == pytest.approx(exact, rel=4 * math.sqrt(2 / n))


@settings(max_examples=20)
@given(st.integers(2, 200))
def test_precise_recursion_converges_from_below(n):
    sch = ExplorationSchedule(LOGSNR, 1.5)
    v = analysis.gaussian_rollout_variance(1.0, TimeGrid.uniform(n), sch, Precise())
    assert 0.0 < v < 1.0
