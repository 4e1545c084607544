import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgescale.errors import ConfigError
from edgescale.operators import (
    OperatorConfig, TridiagonalMatrix, build_gsigma, build_hbar, build_hn, build_hn_beta, build_sao,
)
from edgescale.randsrc import PotentialSpec, brownian_path, new_stream
from edgescale.tridiag_eig import eigen_all, eigen_extreme


def _cfg(n, sigma=1.0, alpha=1.5, **kw):
    return OperatorConfig(n, PotentialSpec("gaussian", sigma, alpha), **kw)


def test_hn_zero_sigma_spectrum():
    h = build_hn(_cfg(3, sigma=0.0), np.zeros(3))
    assert np.all(h.diag == 0) and np.all(h.offdiag == 1)
    assert np.allclose(eigen_all(h), [-np.sqrt(2), 0.0, np.sqrt(2)], atol=1e-10)


def test_hn_one_by_one():
    h = build_hn(_cfg(1, sigma=2.0), [3.0])
    assert h.diag.tolist() == [6.0] and h.offdiag.size == 0


def test_hn_diag_scaling():
    h = build_hn(_cfg(4, sigma=2.0), [1, -1, 1, -1])
    assert np.array_equal(h.diag, [0.25, -0.25, 0.25, -0.25])


def test_hn_length_mismatch():
    with pytest.raises(ConfigError):
        build_hn(_cfg(4), np.zeros(3))


def test_hbar_small():
    hb = build_hbar(_cfg(2, sigma=0.0), np.zeros(2))
    assert np.array_equal(hb.diag, [8.0, 8.0]) and np.array_equal(hb.offdiag, [-4.0])


def test_hbar_defining_relation():
    gen = np.random.default_rng(0)
    for _ in range(100):
        n = int(gen.integers(1, 40))
        cfg = _cfg(n, sigma=float(gen.uniform(0, 3)))
        d = gen.standard_normal(n)
        h, hb = build_hn(cfg, d), build_hbar(cfg, d)
        assert np.array_equal(hb.diag, -float(n) ** 2 * (h.diag - 2.0))
        assert np.array_equal(hb.offdiag, -float(n) ** 2 * h.offdiag)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 50), seed=st.integers(0, 2**32))
def test_hbar_eigen_relation(n, seed):
    cfg = _cfg(n, sigma=1.0)
    d = np.random.default_rng(seed).standard_normal(n)
    lam = eigen_all(build_hn(cfg, d), tol=1e-13)
    mu = eigen_all(build_hbar(cfg, d), tol=1e-13 * n * n)
    expected = np.sort(n * n * (2.0 - lam))
    assert np.allclose(mu, expected, rtol=1e-10, atol=1e-10 * n * n)


def test_hn_beta_plugin():
    h = build_hn_beta(_cfg(1, beta=4.0, m=1), [1.0])
    assert h.diag[0] == pytest.approx(0.0, abs=1e-15)


def test_hn_beta_zero_draws_decreasing():
    n, m = 30, 3
    h = build_hn_beta(_cfg(n, beta=2.0, m=m), np.zeros(n))
    assert np.allclose(h.diag, -np.arange(1, n + 1) / m**3)
    assert np.all(np.diff(h.diag) < 0)


def test_scaling_index_default():
    assert _cfg(8000).scaling_index() == 20
    assert _cfg(8001).scaling_index() == 21
    assert _cfg(1).scaling_index() == 1


def test_config_validation():
    with pytest.raises(ConfigError):
        _cfg(10, m=11)
    with pytest.raises(ConfigError):
        _cfg(10, beta=0.0)


@pytest.mark.slow
def test_hn_beta_edge_bound():
    n, m = 8000, 20
    cfg = _cfg(n, beta=2.0, m=m)
    spec = PotentialSpec("gaussian")
    from edgescale.randsrc import sample_potential
    below = sum(eigen_extreme(build_hn_beta(cfg, sample_potential(spec, n, new_stream(5, i))), 1)[0] < 2 + 10 / m**2
                for i in range(100))
    assert below >= 99


def test_sao_zero_noise_increasing():
    s = build_sao(2.0, 10.0, 50, None)
    assert s.n == 500 and np.all(np.diff(s.diag) > 0)


def test_sao_airy_ground_state():
    s = build_sao(2.0, 20.0, 400, None)
    assert eigen_extreme(s, 1, "smallest", tol=1e-9)[0] == pytest.approx(2.33811, abs=0.01)


def test_sao_noise_grid_mismatch():
    w = brownian_path(10.0, 1 / 50, new_stream(1))
    with pytest.raises(ConfigError):
        build_sao(2.0, 10.0, 100, w)


def test_gsigma_structure():
    w = brownian_path(1.0, 1 / 16, new_stream(3))
    g = build_gsigma(1.5, w)
    assert g.n == 15
    assert np.allclose(g.diag, 2 * 256 + 1.5 * 16 * np.diff(w.values)[:15])
    assert np.all(g.offdiag == -256)


def test_shift_covariance_exact():
    w = brownian_path(1.0, 1 / 256, new_stream(4))
    g = build_gsigma(1.0, w)
    base = eigen_extreme(g, 3, "smallest", tol=1e-9)
    shifted = eigen_extreme(g.shifted(7.5), 3, "smallest", tol=1e-9)
    assert np.allclose(shifted - base, 7.5, atol=2e-9)


def test_tridiagonal_shape_check():
    with pytest.raises(ConfigError):
        TridiagonalMatrix(np.zeros(3), np.zeros(3))
