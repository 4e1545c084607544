import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ks_2samp

from edgescale.edge_stats import (
    EdgeSampleBatch, TailFit, inverse_rescale, ks_critical, ks_distance, laplace_sum, log_laplace_sum,
    read_batch, rescale_edge, tail_fit, tail_monotone, to_eta, write_batch,
)
from edgescale.errors import ConfigError, DomainError, FitError
from edgescale.operators import OperatorConfig, build_hn
from edgescale.randsrc import PotentialSpec, new_stream, sample_potential
from edgescale.tridiag_eig import eigen_extreme

THETA_T1 = 0.00719188603111436  # sum_j exp(-pi^2 j^2 / 2), evaluated independently with mpmath

finite = st.floats(-50, 50, allow_nan=False)
# values exp keeps distinct, for transform-invariance checks
grid = st.integers(-500, 500).map(lambda k: k / 10)


def test_rescale_free_top_eigenvalue():
    b = rescale_edge([2 * np.cos(np.pi / 101)], 100)
    assert b.values[0] == pytest.approx(100**2 * (2 - 2 * np.cos(np.pi / 101)), rel=1e-12)
    assert f"{b.values[0]:.3f}" == "9.674"
    assert b.side == "lambda"


def test_rescale_identity_case():
    eigs = np.array([-1.0, 0.25, 3.0])
    b = rescale_edge(eigs, 7, c=0.0, center=0.0, sign=-1.0)
    assert np.array_equal(b.values, eigs) and b.side == "raw"


def test_rescale_tw_scaling():
    b = rescale_edge([1.99], 8000, c=2 / 3)
    assert b.values[0] == pytest.approx(8000 ** (2 / 3) * 0.01)


def test_rescale_empty():
    with pytest.raises(DomainError):
        rescale_edge([], 10)


def test_batch_validation():
    with pytest.raises(DomainError):
        EdgeSampleBatch(np.array([np.inf]), 2, 2.0, "hn")
    with pytest.raises(ConfigError):
        EdgeSampleBatch(np.array([1.0]), 2, 2.0, "")


def test_eta_view_sign():
    b = rescale_edge([1.999, 1.99], 10)
    e = to_eta(b)
    assert np.array_equal(e.values, -b.values) and e.side == "eta"
    with pytest.raises(DomainError):
        to_eta(e)


@settings(max_examples=100, deadline=None)
@given(eigs=st.lists(st.floats(-2.5, 2.5), min_size=1, max_size=20), n=st.integers(1, 5000),
       c=st.sampled_from([2.0, 2 / 3, 1.0]), sign=st.sampled_from([1.0, -1.0]))
def test_rescale_roundtrip(eigs, n, c, sign):
    b = rescale_edge(eigs, n, c=c, sign=sign)
    assert np.allclose(inverse_rescale(b), eigs, atol=1e-12 * n**c + 1e-12)


def test_laplace_dirichlet_series():
    etas = -np.pi**2 * np.arange(1, 51) ** 2
    assert laplace_sum(etas, 1.0) == pytest.approx(THETA_T1, rel=1e-13)


def test_laplace_single_zero():
    assert laplace_sum([0.0], 3.0) == 1.0


@settings(max_examples=100, deadline=None)
@given(a=st.lists(finite, min_size=1, max_size=30), b=st.lists(finite, min_size=1, max_size=30),
       T=st.floats(0.01, 5.0))
def test_laplace_additive(a, b, T):
    assert laplace_sum(a + b, T) == pytest.approx(laplace_sum(a, T) + laplace_sum(b, T), rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(a=st.lists(st.floats(-10, 10), min_size=1, max_size=30), i=st.integers(0, 29), T=st.floats(0.01, 5.0))
def test_laplace_increasing_and_continuous(a, i, T):
    i %= len(a)
    bumped = list(a)
    bumped[i] += 0.5
    before, after = laplace_sum(a, T), laplace_sum(bumped, T)
    assert after >= before
    if math.exp(T * a[i] / 2) * math.expm1(T / 4) > 1e-12 * before:
        assert after > before
    assert laplace_sum(a, T + 1e-9) == pytest.approx(laplace_sum(a, T), rel=1e-6)


def test_laplace_overflow_guard():
    assert math.isfinite(laplace_sum([1400.0, 1300.0], 1.0))
    assert log_laplace_sum([5000.0], 1.0) == pytest.approx(2500.0)
    with pytest.raises(OverflowError):
        laplace_sum([5000.0], 1.0)
    with pytest.raises(DomainError):
        laplace_sum([1.0], 0.0)


def test_ks_trivial_cases():
    x = np.arange(10.0)
    assert ks_distance(x, x) == 0.0
    assert ks_distance([0.0], [1.0]) == 1.0
    with pytest.raises(DomainError):
        ks_distance([], [1.0])


def test_ks_normal_batches_below_critical():
    g = new_stream(13)
    a = g.split(0).generator().standard_normal(4000)
    b = g.split(1).generator().standard_normal(4000)
    assert ks_critical(4000, 4000) == pytest.approx(0.0364, abs=1e-4)
    assert ks_distance(a, b) < 0.0365


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@settings(max_examples=100, deadline=None)
@given(a=st.lists(grid, min_size=1, max_size=60), b=st.lists(grid, min_size=1, max_size=60))
def test_ks_matches_scipy_symmetric_and_invariant(a, b):
    d = ks_distance(a, b)
    assert d == pytest.approx(ks_2samp(a, b, method="asymp").statistic, abs=1e-12)
    assert d == ks_distance(b, a)
    assert d == ks_distance(np.exp(np.asarray(a) / 10), np.exp(np.asarray(b) / 10))


def test_tail_fit_synthetic_recovery():
    a = np.array([4.0, 6.0, 8.0])
    p = np.exp(-2.6667 * a**1.5)
    fit = tail_fit(a, p, 1.5)
    assert fit.coefficient == pytest.approx(2.6667, abs=1e-6)
    assert fit.intercept == pytest.approx(0.0, abs=1e-6)


def test_tail_fit_order_invariance():
    a = np.array([3.0, 5.0, 7.0, 9.0])
    p = np.array([0.2, 0.05, 0.004, 0.0006])
    f1 = tail_fit(a, p, 2.0, replicas=10_000, stream=new_stream(1))
    f2 = tail_fit(a[::-1], p[::-1], 2.0, replicas=10_000, stream=new_stream(1))
    assert f1.coefficient == f2.coefficient
    assert (f1.ci_low, f1.ci_high) == (f2.ci_low, f2.ci_high)


def test_tail_fit_ci_brackets_truth():
    gen = np.random.default_rng(3)
    a = np.array([1.0, 1.5, 2.0, 2.5])
    truth = np.exp(-0.5 * a**2)
    p = gen.binomial(100_000, truth) / 100_000
    fit = tail_fit(a, p, 2.0, replicas=100_000, stream=new_stream(2))
    assert fit.ci_low <= fit.coefficient <= fit.ci_high
    assert fit.ci_low - 0.02 <= 0.5 <= fit.ci_high + 0.02


def test_tail_fit_needs_three_points():
    with pytest.raises(FitError):
        tail_fit([1.0, 2.0, 3.0], [0.1, 0.0, 0.0], 1.5)


def test_tailfit_ci_invariant():
    with pytest.raises(FitError):
        TailFit(1.5, 2.0, 2.5, 3.0, np.array([1.0]))


def test_tail_monotone():
    assert tail_monotone([3, 4.5, 6], [0.1, 0.01, 0.01])
    assert not tail_monotone([3, 4.5, 6], [0.1, 0.2, 0.01])
    assert tail_monotone([6, 3, 4.5], [0.01, 0.1, 0.05])


@pytest.mark.parametrize("shape", [(5,), (4, 3)])
def test_batch_roundtrip(tmp_path, shape):
    vals = np.random.default_rng(0).standard_normal(shape) * 1e3
    b = EdgeSampleBatch(vals, 2000, 2.0, "hn/gaussian", {"root_seed": 7}, side="lambda")
    csv_path, side = write_batch(b, tmp_path / "samples.csv")
    raw = csv_path.read_bytes()
    assert b"\r" not in raw and raw.splitlines()[0].startswith(b"value")
    back = read_batch(csv_path)
    assert np.array_equal(back.values, vals)
    assert (back.n, back.exponent_c, back.ensemble_tag, back.seed) == (2000, 2.0, "hn/gaussian", {"root_seed": 7})


def _lambda0_batch(family, reps, n=2000):
    spec = PotentialSpec(family, 1.0, 1.5)
    cfg = OperatorConfig(n, spec)
    root = new_stream(2024, 1)
    tops = [eigen_extreme(build_hn(cfg, sample_potential(spec, n, root.split(i))), 1)[0] for i in range(reps)]
    return rescale_edge(np.array(tops), n, ensemble_tag=f"hn/{family}").values


@pytest.mark.slow
def test_universality_gaussian_vs_rademacher():
    assert ks_distance(_lambda0_batch("gaussian", 4000), _lambda0_batch("rademacher", 4000)) < 0.06
