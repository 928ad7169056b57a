import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp
from scipy import stats

from flowsde import metrics
from flowsde.oracles import DiagonalGaussian


def test_ring_mass_counts_strictly_outside():
    x = np.array([[0.75, 0.0], [0.8, 0.0], [0.0, 0.2], [1.0, 0.0]])
    rm = metrics.ring_mass(x)
    assert rm.mass == 0.5 and rm.n == 4
    assert rm.stderr == pytest.approx(0.25)


def test_ring_mass_needs_planar_samples():
    with pytest.raises(ValueError):
        metrics.ring_mass(np.zeros((3, 3)))


finite = st.floats(-50, 50, allow_nan=False)


@given(hnp.arrays(np.float64, st.integers(1, 40), elements=finite), hnp.arrays(np.float64, st.integers(1, 40), elements=finite))
def test_w1_1d_matches_scipy(a, b):
    n = min(a.size, b.size)
    assert metrics.w1_1d(a[:n], b[:n]) == pytest.approx(stats.wasserstein_distance(a[:n], b[:n]), abs=1e-9)


@given(hnp.arrays(np.float64, (30, 2), elements=finite))
def test_sliced_w1_zero_on_self(x):
    assert metrics.sliced_w1(x, x.copy(), 8) == pytest.approx(0.0, abs=1e-12)


def test_sliced_w1_translation():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4000, 2))
    # projections of a shift c onto uniform directions average |c| * 2/pi
    d = metrics.sliced_w1(a, a + [3.0, 0.0], 2000, rng)
    assert d == pytest.approx(3.0 * 2 / math.pi, rel=0.03)


def test_radial_histogram():
    x = np.array([[0.1, 0.0], [0.0, 0.6], [1.0, 0.0], [3.0, 4.0]])
    np.testing.assert_array_equal(metrics.radial_histogram(x, [0, 0.5, 0.75, np.inf]), [1, 1, 2])
    with pytest.raises(ValueError):
        metrics.radial_histogram(x, [0, 0.5, 0.5])


def test_sample_moments_unbiased():
    m, c = metrics.sample_moments(np.array([[0.0], [2.0]]))
    assert m[0] == 1.0 and c[0, 0] == 2.0


def test_forward_target_gaussian():
    tgt = metrics.forward_target(DiagonalGaussian([2.0], [4.0]), 0.25)
    assert tgt.mean[0] == pytest.approx(1.5)
    assert tgt.variance[0] == pytest.approx(0.75**2 * 4 + 0.0625)


def test_regress_on_noise_recovers_coefficients(rng):
    e = rng.standard_normal((200_000, 2))
    w = rng.standard_normal((200_000, 2))
    b, total = metrics.regress_on_noise(0.3 * e + 0.4 * w + 1.0, 1.0, e)
    assert b == pytest.approx(0.3, abs=0.005)
    assert total == pytest.approx(0.5, rel=0.005)


def test_node_coeffs_exact_on_noiseless_samples():
    p = np.array([3.0, -4.0])
    a, s = metrics.pointmass_node_coeffs(np.tile(0.25 * p, (10, 1)), p)
    assert a == pytest.approx(0.25) and s == pytest.approx(0.0, abs=1e-15)
