"""Compiled and numpy backends must agree on every kernel."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calibench import _purepy, kernels
from calibench.dataset import EPS


def test_backend_is_reported():
    assert kernels.BACKEND in ("compiled", "python")
    assert "python" in kernels.backends()


def _naive_stats(e, W, Ws):
    n = len(e)
    mu, sd, ms = (np.full(n, np.nan) for _ in range(3))
    for t in range(W - 1, n):
        win = e[t - W + 1 : t + 1]
        if np.isnan(win).any():
            continue
        mu[t] = win.mean()
        sd[t] = max(win.std(ddof=1), EPS)
        ms[t] = e[t - Ws + 1 : t + 1].mean()
    return mu, sd, ms


@pytest.mark.parametrize("W,Ws", [(2, 1), (3, 2), (17, 5), (64, 32)])
def test_rolling_stats_match_naive_loop(backend, W, Ws):
    rng = np.random.default_rng(W)
    e = rng.gamma(2.0, size=300)
    e[:7] = np.nan
    got = backend.rolling_stats(e, W, Ws, EPS)
    for g, want in zip(got, _naive_stats(e, W, Ws)):
        np.testing.assert_allclose(g, want, rtol=1e-9, atol=1e-9, equal_nan=True)


def test_constant_series_gives_eps_sigma(backend):
    mu, sd, ms = backend.rolling_stats(np.full(50, 3.25), 10, 3, EPS)
    assert np.all(mu[9:] == 3.25) and np.all(sd[9:] == EPS) and np.all(ms[9:] == 3.25)


def test_too_short_is_all_nan(backend):
    mu, _, _ = backend.rolling_stats(np.arange(5.0), 6, 2, EPS)
    assert np.isnan(mu).all()


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 80), st.integers(0, 10_000), st.floats(1e-3, 1e4))
def test_likelihood_backends_agree(W, seed, scale):
    rng = np.random.default_rng(seed)
    e = scale * rng.exponential(size=W + 200)
    Ws = max(1, W // 3)
    ref = _purepy.rolling_likelihood(e, W, Ws, EPS)
    for name, mod in kernels.backends().items():
        np.testing.assert_allclose(mod.rolling_likelihood(e, W, Ws, EPS), ref,
                                   atol=1e-8, equal_nan=True, err_msg=name)


def test_long_series_stays_accurate(backend):
    # drift of sliding updates is bounded by periodic resync
    rng = np.random.default_rng(3)
    e = 1e6 + rng.normal(size=20_000)
    mu, sd, _ = backend.rolling_stats(e, 100, 5, EPS)
    t = 19_999
    assert mu[t] == pytest.approx(e[t - 99 : t + 1].mean(), rel=1e-12)
    assert sd[t] == pytest.approx(e[t - 99 : t + 1].std(ddof=1), rel=1e-6)


def _nab_inputs(seed):
    rng = np.random.default_rng(seed)
    n = 400
    flags = rng.random(n) < 0.05
    k = int(rng.integers(0, 6))
    cuts = np.sort(rng.choice(np.arange(5, n - 5), size=2 * k, replace=False))
    return flags, cuts[0::2].astype(np.int64), cuts[1::2].astype(np.int64)


@pytest.mark.parametrize("seed", range(15))
def test_nab_kernel_parity(seed):
    flags, starts, ends = _nab_inputs(seed)
    ref = _purepy.nab_window_scores(flags, starts, ends, 1.0, 0.11, 5.0)
    for mod in kernels.backends().values():
        got = mod.nab_window_scores(flags, starts, ends, 1.0, 0.11, 5.0)
        for g, r in zip(got, ref):
            np.testing.assert_allclose(g, r, rtol=0, atol=1e-15)


def test_iforest_kernel_parity():
    from calibench.detectors import fit_isolation_forest
    from calibench.dataset import chronological_split
    from calibench.synthetic import latent_telemetry

    f = latent_telemetry(5, n=800, dim=6, windows=((100, 110), (650, 660)))
    m = fit_isolation_forest(f, chronological_split(f), tree_count=20, subsample_size=64, seed=1)
    args = (f.values, m.feature, m.threshold, m.left, m.right, m.leaf_value, m.roots)
    ref = _purepy.iforest_path_lengths(*args)
    for mod in kernels.backends().values():
        np.testing.assert_allclose(mod.iforest_path_lengths(*args), ref, rtol=1e-14)
