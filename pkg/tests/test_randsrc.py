import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgescale.errors import ConfigError, DomainError
from edgescale.randsrc import (
    FAMILIES, NoisePath, PotentialSpec, brownian_bridge, brownian_path, coarse_grain_draws,
    new_stream, partial_sum_noise, rw_bridge, sample_potential,
)


def test_stream_determinism():
    a = new_stream(42, 0).generator().standard_normal(100)
    b = new_stream(42, 0).generator().standard_normal(100)
    assert np.array_equal(a, b)


def test_sibling_streams_uncorrelated():
    a = new_stream(42, 0).generator().standard_normal(10_000)
    b = new_stream(42, 1).generator().standard_normal(10_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05


def test_seed_sensitivity():
    a = new_stream(42, 0).generator().standard_normal(1)
    b = new_stream(43, 0).generator().standard_normal(1)
    assert a[0] != b[0]


def test_split_children_distinct_and_stable():
    root = new_stream(7, 3)
    first = [root.split(i).generator().random() for i in range(5)]
    assert len(set(first)) == 5
    assert root.split(0).generator().random() != root.generator().random()
    # a child's draws do not depend on a sibling having been used
    s1 = root.split(1)
    s1.generator().random(1000)
    assert root.split(2).generator().random() == first[2]


def test_split_depth_limit():
    s = new_stream(1).split(0).split(1).split(2)
    with pytest.raises(ConfigError):
        s.split(3)


def test_stream_rejects_negative_seed():
    with pytest.raises(ConfigError):
        new_stream(-1)


@pytest.mark.parametrize("family", FAMILIES)
def test_families_standardized(family):
    x = sample_potential(PotentialSpec(family), 100_000, new_stream(11))
    assert abs(x.mean()) < 0.02
    assert 0.97 < x.var() < 1.03


def test_rademacher_values():
    x = sample_potential(PotentialSpec("rademacher"), 1000, new_stream(2))
    assert set(np.unique(x)) == {-1.0, 1.0}


def test_gaussian_fourth_moment():
    x = sample_potential(PotentialSpec("gaussian"), 100_000, new_stream(5))
    assert 2.8 < np.mean(x**4) < 3.2


@pytest.mark.parametrize("family", FAMILIES)
def test_single_draw_finite(family):
    x = sample_potential(PotentialSpec(family), 1, new_stream(0))
    assert x.shape == (1,) and np.isfinite(x[0])


def test_unknown_family():
    with pytest.raises(ConfigError):
        PotentialSpec("cauchy")


def test_brownian_path_grid():
    w = brownian_path(1.0, 0.25, new_stream(1))
    assert len(w.values) == 5 and w.values[0] == 0.0


def test_brownian_path_single_cell():
    w = brownian_path(1.0, 1.0, new_stream(1))
    g = new_stream(1).generator().standard_normal(1)[0]
    assert np.array_equal(w.values, [0.0, g])


def test_brownian_path_variance():
    ends = np.array([brownian_path(1.0, 0.25, new_stream(3, i)).values[-1] for i in range(10_000)])
    assert 0.95 < ends.var() < 1.05


def test_brownian_path_bad_grid():
    with pytest.raises(ConfigError):
        brownian_path(1.0, 0.3, new_stream(1))


def test_partial_sum_all_ones():
    w = partial_sum_noise(np.ones(4), 4)
    a = np.linspace(0, 1, 5)
    assert np.allclose(w.values, np.floor(4 * a) / 2)
    assert w.origin == "partial_sum"


def test_partial_sum_zero_and_mismatch():
    assert np.all(partial_sum_noise(np.zeros(8), 8).values == 0.0)
    with pytest.raises(ConfigError):
        partial_sum_noise(np.zeros(7), 8)


def test_partial_sum_rademacher_variance():
    spec = PotentialSpec("rademacher")
    ends = np.array([partial_sum_noise(sample_potential(spec, 10_000, new_stream(9, i)), 10_000).values[-1]
                     for i in range(1000)])
    assert 0.9 < ends.var() < 1.1


def test_coarse_grain_matches_partial_sums():
    d = new_stream(4).generator().standard_normal(2000)
    fine = partial_sum_noise(d, 2000)
    coarse = partial_sum_noise(coarse_grain_draws(d, 4), 500)
    assert np.allclose(fine.values[::4], coarse.values, atol=1e-12)


def test_noise_path_interpolation_and_negation():
    w = NoisePath(0.5, np.array([0.0, 1.0, -1.0]))
    assert w(0.25) == pytest.approx(0.5)
    assert np.array_equal(w.negated().values, -w.values)


def test_rw_bridge_two_steps():
    seen = Counter(tuple(rw_bridge(2, 2, 0, 0, False, new_stream(1, i)).positions) for i in range(2000))
    assert set(seen) == {(0, 1, 0), (0, -1, 0)}
    assert abs(seen[(0, 1, 0)] / 2000 - 0.5) < 0.05
    confined = {tuple(rw_bridge(2, 2, 0, 0, True, new_stream(1, i)).positions) for i in range(200)}
    assert confined == {(0, 1, 0)}


def test_rw_bridge_zero_steps():
    assert list(rw_bridge(3, 0, 5, 5, False, new_stream(0)).positions) == [5]


def test_rw_bridge_domain_errors():
    with pytest.raises(DomainError):
        rw_bridge(10, 3, 0, 0, False, new_stream(0))
    with pytest.raises(DomainError):
        rw_bridge(10, 2, 0, 4, False, new_stream(0))


def _enumerate_confined(n, steps, x0, x1):
    out = []
    for moves in itertools.product((-1, 1), repeat=steps):
        pos = np.concatenate(([x0], x0 + np.cumsum(moves)))
        if pos[-1] == x1 and pos.min() >= 0 and pos.max() <= n:
            out.append(tuple(int(p) for p in pos))
    return out


@pytest.mark.parametrize("n,steps,x0,x1", [(10, 4, 0, 0), (3, 7, 1, 2), (2, 6, 0, 2)])
def test_confined_bridge_uniform_over_enumeration(n, steps, x0, x1):
    paths = _enumerate_confined(n, steps, x0, x1)
    draws = 10_000
    seen = Counter(tuple(rw_bridge(n, steps, x0, x1, True, new_stream(21, i)).positions) for i in range(draws))
    assert set(seen) <= set(paths)
    p = 1.0 / len(paths)
    sd = np.sqrt(p * (1 - p) / draws)
    for path in paths:
        assert abs(seen[path] / draws - p) < 4 * sd


@settings(max_examples=300, deadline=None)
@given(n=st.integers(1, 12), steps=st.integers(0, 40), x0=st.integers(0, 12), x1=st.integers(0, 12),
       seed=st.integers(0, 2**32), confined=st.booleans())
def test_bridge_invariants(n, steps, x0, x1, seed, confined):
    x0, x1 = min(x0, n), min(x1, n)
    gap = abs(x1 - x0)
    if gap > steps or (steps - gap) % 2:
        with pytest.raises(DomainError):
            rw_bridge(n, steps, x0, x1, confined, new_stream(seed))
        return
    path = rw_bridge(n, steps, x0, x1, confined, new_stream(seed))
    pos = path.positions
    assert pos[0] == x0 and pos[-1] == x1 and len(pos) == steps + 1
    assert np.all(np.abs(np.diff(pos)) == 1)
    if confined:
        assert pos.min() >= 0 and pos.max() <= n


def test_brownian_bridge_endpoints_and_variance():
    b = brownian_bridge(0.3, 0.7, 1.0, 1 / 64, new_stream(2))
    assert b[0] == 0.3 and b[-1] == 0.7
    assert np.array_equal(brownian_bridge(0.3, 0.7, 1.0, 1.0, new_stream(2)), [0.3, 0.7])
    mids = np.array([brownian_bridge(0.0, 0.0, 1.0, 1 / 8, new_stream(8, i))[4] for i in range(10_000)])
    assert 0.23 < mids.var() < 0.27


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**63), index=st.integers(0, 2**20))
def test_sampler_purity(seed, index):
    s = new_stream(seed, index)
    spec = PotentialSpec("uniform_sym")
    assert np.array_equal(sample_potential(spec, 16, s), sample_potential(spec, 16, s))
