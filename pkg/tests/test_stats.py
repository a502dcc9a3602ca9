import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluxsampling import BinningMismatch, EmptyHistogram, Histogram, cost_of_partition, cumulant
from fluxsampling.stats import (agree_within, binomial_se, converged, equal_barrier_partition,
                                quantile_from_cumulant, summarize)

counts_strategy = st.lists(st.integers(0, 1000), min_size=1, max_size=50).filter(lambda c: sum(c) > 0)


def test_single_bin_step():
    h = Histogram(0.0, 1.0, np.array([0, 0, 7, 0]))
    np.testing.assert_array_equal(cumulant(h), [0, 0, 1, 1])


def test_uniform_counts_ramp():
    h = Histogram(0.0, 0.5, np.full(8, 3))
    np.testing.assert_allclose(cumulant(h), np.arange(1, 9) / 8)


@settings(max_examples=200)
@given(counts_strategy)
def test_cumulant_matches_prefix_sum(counts):
    h = Histogram(2.0, 0.1, np.array(counts))
    total = sum(counts)
    ref = []
    acc = 0
    for c in counts:
        acc += c
        ref.append(acc / total)
    c = cumulant(h)
    assert np.all(np.diff(c) >= 0)
    assert c[-1] == 1.0
    np.testing.assert_allclose(c, ref, rtol=1e-12, atol=0)


@settings(max_examples=200)
@given(counts_strategy, st.floats(1e-3, 10.0))
def test_density_normalizes(counts, width):
    h = Histogram(0.0, width, np.array(counts))
    assert h.total == sum(counts)
    assert math.isclose(float(np.sum(h.density()) * width), 1.0, rel_tol=1e-12)


def test_empty_histogram():
    with pytest.raises(EmptyHistogram):
        cumulant(Histogram(0.0, 1.0))
    with pytest.raises(EmptyHistogram):
        Histogram(0.0, 1.0).density()


def test_histogram_add_and_merge():
    h = Histogram(1.0, 0.5)
    assert h.add([0.2, 1.0, 1.49, 1.5, 3.2]) == 4
    np.testing.assert_array_equal(h.counts, [2, 1, 0, 0, 1])
    g = Histogram(1.0, 0.5, np.array([1]))
    np.testing.assert_array_equal(h.merge(g).counts, [3, 1, 0, 0, 1])
    with pytest.raises(BinningMismatch):
        h.merge(Histogram(0.0, 0.5))


def test_histogram_table_round_trip():
    h = Histogram(-0.8, 0.01, np.array([3, 0, 5, 2]))
    text = h.to_table("demo")
    lines = text.splitlines()
    assert lines[0] == "# demo"
    assert lines[1].split("\t") == ["bin_left", "count", "density", "cumulant"]
    assert len(lines) == 2 + 4
    back = Histogram.from_table(text)
    np.testing.assert_array_equal(back.counts, h.counts)
    assert back.origin == pytest.approx(h.origin) and back.width == pytest.approx(h.width)


def test_converged_examples():
    a = np.linspace(0, 1, 20)
    assert converged(a, a.copy(), 1e-9)
    b = a.copy()
    b[7] += 0.02
    assert not converged(a, b, 0.01)
    with pytest.raises(BinningMismatch):
        converged(a, a[:-1], 0.01)


def test_binomial_se_examples():
    assert binomial_se(0, 100) == 0.0
    assert binomial_se(50, 100) == pytest.approx(0.05, rel=1e-12)
    assert binomial_se(92, 100) == pytest.approx(0.02713, abs=5e-6)
    with pytest.raises(ValueError):
        binomial_se(5, 0)
    with pytest.raises(ValueError):
        binomial_se(11, 10)


def test_quantile_interpolates_within_bin():
    c = np.array([0.1, 0.5, 1.0])
    assert quantile_from_cumulant(0.0, 1.0, c, 0.3) == pytest.approx(1.5)
    assert quantile_from_cumulant(0.0, 1.0, c, 0.05) == pytest.approx(0.5)
    assert quantile_from_cumulant(0.0, 1.0, np.array([0.2, 0.4]), 0.9) is None


def test_cost_flat_profile():
    grid = np.linspace(0, 1, 101)
    cp = cost_of_partition(grid, np.zeros_like(grid), [0, 0.3, 0.5, 1.0])
    np.testing.assert_array_equal(cp.barriers, 0.0)
    assert cp.cost == 3.0


def test_cost_linear_profile_equal_spacing():
    grid = np.linspace(0, 4, 401)
    cp = cost_of_partition(grid, 2.0 * grid, [0, 1, 2, 3, 4])
    np.testing.assert_allclose(cp.barriers, 2.0, rtol=1e-12)
    assert cp.cost == pytest.approx(4 * math.exp(2.0), rel=1e-12)
    assert cp.cost == float(np.sum(np.exp(cp.barriers)))


def test_cost_uses_in_segment_maximum():
    grid = np.linspace(0, 2, 201)
    f = np.where(grid < 1, 3 * grid, 3 - 2 * (grid - 1))   # peak of 3 at 1
    cp = cost_of_partition(grid, f, [0.0, 2.0])
    assert cp.barriers[0] == pytest.approx(3.0)


def test_equal_barrier_partition_beats_random_partitions():
    rng = np.random.default_rng(11)
    grid = np.linspace(0, 1, 2001)
    f = np.cumsum(rng.gamma(0.5, 1.0, grid.size))
    f = 12 * (f - f[0]) / (f[-1] - f[0])
    n_seg = 6
    best = cost_of_partition(grid, f, equal_barrier_partition(grid, f, n_seg))
    np.testing.assert_allclose(best.barriers, 2.0, atol=0.05)
    costs = []
    spreads = []
    for _ in range(2000):
        inner = np.sort(rng.uniform(0, 1, n_seg - 1))
        cp = cost_of_partition(grid, f, np.r_[0.0, inner, 1.0])
        costs.append(cp.cost)
        spreads.append(np.ptp(cp.barriers))
    assert np.mean(best.cost <= np.array(costs)) >= 0.99
    assert np.mean(np.ptp(best.barriers) < np.array(spreads)) >= 0.99


def test_repeat_summary():
    s = summarize([1.0, 2.0, 3.0, 4.0], [0.1, 0.2, 0.3, 10.0])
    assert s.n == 4 and s.mean == 2.5
    assert s.se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert s.median_time == pytest.approx(0.25)
    assert math.isnan(summarize([1.0]).se)
    assert agree_within(summarize([1.0, 1.1]), summarize([1.05, 1.0]))
    assert not agree_within(summarize([1.0, 1.01]), summarize([5.0, 5.01]))
