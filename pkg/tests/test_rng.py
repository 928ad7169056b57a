import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from flowsde.rng import CounterRNG, philox4x32


@pytest.mark.parametrize(
    "counter, key, expected",
    [
        ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
        ((0xFFFFFFFF,) * 4, (0xFFFFFFFF, 0xFFFFFFFF), (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
        (
            (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344),
            (0xA4093822, 0x299F31D0),
            (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1),
        ),
    ],
)
def test_philox_known_answers(counter, key, expected):
    out = philox4x32(np.array([counter], dtype=np.uint64), key)
    assert tuple(int(x) for x in out[0]) == expected


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**40), st.integers(0, 1000), st.integers(1, 7))
def test_stream_is_a_pure_function_of_counters(seed, sample, step, dim):
    rng = CounterRNG(seed)
    a = rng.normal(np.array([sample], dtype=np.uint64), step, dim)
    b = CounterRNG(seed).normal(np.array([sample, sample + 1], dtype=np.uint64), step, dim)[:1]
    np.testing.assert_array_equal(a, b)
    assert np.all(np.isfinite(a))


def test_prefix_of_wider_draw():
    rng = CounterRNG(5)
    idx = np.arange(10, dtype=np.uint64)
    np.testing.assert_array_equal(rng.normal(idx, 3, 3), rng.normal(idx, 3, 4)[:, :3])


def test_streams_differ_by_step_and_seed():
    idx = np.arange(1000, dtype=np.uint64)
    a = CounterRNG(1).normal(idx, 1, 2)
    assert not np.array_equal(a, CounterRNG(1).normal(idx, 2, 2))
    assert not np.array_equal(a, CounterRNG(2).normal(idx, 1, 2))
    assert not np.array_equal(a, CounterRNG(1).normal(idx, 1, 2, draw=1))


def test_normals_look_standard():
    z = CounterRNG(11).normal(np.arange(200_000, dtype=np.uint64), 0, 2).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / z.size)
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_uniform_range():
    u = CounterRNG(3).uniform(np.arange(50_000, dtype=np.uint64), 7, 5)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert stats.kstest(u.ravel(), "uniform").pvalue > 1e-3


def test_seed_range_checked():
    with pytest.raises(ValueError):
        CounterRNG(-1)
    with pytest.raises(ValueError):
        CounterRNG(2**64)
