import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import integrate

from flowsde.core import (
    CONSTANT,
    LOGSNR,
    DomainError,
    ExplorationSchedule,
    TimeGrid,
    a_integral,
    eps_at,
    logsnr,
    progress_ratio,
    step_context,
    t_from_logsnr,
)

unit_open = st.floats(1e-4, 1 - 1e-4)
etas = st.floats(0.05, 3.0)
kinds = st.sampled_from([CONSTANT, LOGSNR])


def test_uniform_grid_traversal():
    grid = TimeGrid.uniform(4)
    assert grid.nodes == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert list(grid.steps()) == [(1, 1.0, 0.75), (2, 0.75, 0.5), (3, 0.5, 0.25), (4, 0.25, 0.0)]


@pytest.mark.parametrize("nodes", [(0.0,), (0.1, 1.0), (0.0, 0.9), (0.0, 0.5, 0.5, 1.0), (0.0, 0.6, 0.4, 1.0)])
def test_grid_rejects_bad_nodes(nodes):
    with pytest.raises(ValueError):
        TimeGrid(nodes)


@given(unit_open)
def test_logsnr_roundtrip(t):
    assert t_from_logsnr(logsnr(t)) == pytest.approx(t, rel=1e-12)


def test_logsnr_at_half_is_zero():
    assert logsnr(0.5) == 0.0
    with pytest.raises(DomainError):
        logsnr(1.0)


def test_eps_schedules():
    assert eps_at(ExplorationSchedule(CONSTANT, 0.3), 0.9) == 0.3
    assert eps_at(ExplorationSchedule(LOGSNR, 0.7), 0.5) == pytest.approx(0.7)
    assert eps_at(ExplorationSchedule(LOGSNR, 1.5), 0.8) == pytest.approx(3.0)
    with pytest.raises(DomainError):
        eps_at(ExplorationSchedule(LOGSNR, 1.0), 1.0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        ExplorationSchedule("linear", 1.0)
    with pytest.raises(ValueError):
        ExplorationSchedule(LOGSNR, -0.1)


@given(kinds, etas, unit_open, unit_open)
def test_a_integral_matches_quadrature(kind, eta, a, b):
    a, b = sorted((a, b))
    assume(b - a > 1e-6 and b < 0.999)
    sch = ExplorationSchedule(kind, eta)
    quad, _ = integrate.quad(lambda s: eps_at(sch, s) ** 2 / s**2, a, b, epsabs=0, epsrel=1e-12, limit=200)
    assert a_integral(sch, a, b) == pytest.approx(quad, rel=1e-9)


def test_a_integral_known_values():
    # log(0.5*0.6/(0.4*0.5)) = log 1.5
    assert a_integral(ExplorationSchedule(LOGSNR, 1.0), 0.4, 0.5) == pytest.approx(math.log(1.5), rel=1e-14)
    assert a_integral(ExplorationSchedule(CONSTANT, 2.0), 0.25, 0.5) == pytest.approx(4.0 * (4.0 - 2.0))
    assert a_integral(ExplorationSchedule(LOGSNR, 1.5), 0.9, 1.0) == math.inf


@given(kinds, etas, unit_open)
def test_rho_is_one_on_empty_step(kind, eta, t):
    assert step_context(ExplorationSchedule(kind, eta), t, t).rho == 1.0


@given(kinds, etas, unit_open, st.lists(st.floats(0.01, 0.99), min_size=2, max_size=6))
def test_rho_monotone_in_t_prime(kind, eta, t, fracs):
    sch = ExplorationSchedule(kind, eta)
    rhos = [step_context(sch, t, t * f).rho for f in sorted(fracs)]
    assert all(y >= x for x, y in zip(rhos, rhos[1:]))
    assert all(0.0 <= r <= 1.0 for r in rhos)


def test_rho_vanishes_at_prior_end():
    sch = ExplorationSchedule(LOGSNR, 1.5)
    assert step_context(sch, 1.0, 0.9).rho == 0.0
    assert step_context(sch, 1.0 - 1e-12, 0.9).rho < 1e-10


def test_last_step_lands_on_mean_for_positive_eta():
    ctx = step_context(ExplorationSchedule(LOGSNR, 1.5), 0.1, 0.0)
    assert ctx.rho == 0.0 and ctx.a_value == math.inf
    ctx = step_context(ExplorationSchedule(LOGSNR, 0.0), 0.1, 0.0)
    assert ctx.rho == 1.0


def test_clamp_only_for_diverging_schedule():
    ctx = step_context(ExplorationSchedule(LOGSNR, 0.7), 1.0, 0.9, kappa=0.5)
    assert ctx.t_eval == pytest.approx(0.95)
    assert ctx.eps_t == pytest.approx(0.7 * math.sqrt(0.95 / 0.05))
    assert step_context(ExplorationSchedule(CONSTANT, 0.3), 1.0, 0.9).t_eval == 1.0
    zero = step_context(ExplorationSchedule(LOGSNR, 0.0), 1.0, 0.9)
    assert zero.t_eval == 1.0 and zero.eps_t == 0.0


def test_step_context_rejects_bad_times():
    sch = ExplorationSchedule()
    for t, tp in [(0.5, 0.6), (1.1, 0.5), (0.5, -0.1)]:
        with pytest.raises(DomainError):
            step_context(sch, t, tp)


@given(etas)
def test_progress_ratio_constant_for_logsnr(eta):
    t = np.linspace(0.01, 0.99, 50)
    np.testing.assert_allclose(progress_ratio(ExplorationSchedule(LOGSNR, eta), t), eta * eta / 2, rtol=1e-12)
