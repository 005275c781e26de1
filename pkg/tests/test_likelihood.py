import math

import numpy as np
import pytest
from scipy.stats import norm

from calibench.dataset import EPS
from calibench.likelihood import (
    LikelihoodError,
    LikelihoodParams,
    detect,
    dump_likelihood_csv,
    likelihood,
    likelihood_series,
    normal_cdf,
    rolling_stats,
)

# standard normal table values
PHI = {-3.0: 0.0013498980, -1.0: 0.1586552539, 0.0: 0.5, 1.0: 0.8413447461,
       1.6449: 0.9500048, 3.0: 0.9986501020}


def test_constant_errors():
    st = rolling_stats(np.full(20, 4.0), LikelihoodParams(5, 2, 0.9))
    assert np.all(st.mu[4:] == 4.0) and np.all(st.sigma[4:] == EPS)
    assert np.all(st.mu_short[4:] == 4.0)
    assert np.isnan(st.mu[:4]).all()


def test_hand_window():
    st = rolling_stats([1.0, 2.0, 3.0, 4.0], LikelihoodParams(3, 1, 0.9))
    assert st.mu[3] == pytest.approx(3.0) and st.sigma[3] == pytest.approx(1.0)


def test_short_window_one_is_identity():
    e = np.random.default_rng(0).random(50)
    st = rolling_stats(e, LikelihoodParams(10, 1, 0.9))
    assert np.allclose(st.mu_short[9:], e[9:], atol=1e-12)


def test_not_enough_history():
    with pytest.raises(LikelihoodError):
        rolling_stats([1.0, np.nan], LikelihoodParams(3, 1, 0.9))


@pytest.mark.parametrize("z,want", sorted(PHI.items()))
def test_cdf_table(z, want):
    assert normal_cdf(z) == pytest.approx(want, abs=1e-7)
    assert normal_cdf(z) == pytest.approx(norm.cdf(z), abs=1e-12)


def test_likelihood_examples():
    assert likelihood(2.0, 1.0, 2.0) == 0.5
    assert likelihood(0.0, 1.0, 1.6449) == pytest.approx(0.95, abs=1e-3)
    assert likelihood(0.0, 1.0, -3.0) == pytest.approx(0.00135, abs=1e-4)


def test_series_matches_scalar():
    e = np.random.default_rng(1).gamma(2.0, size=200)
    p = LikelihoodParams(30, 4, 0.99)
    L = likelihood_series(e, p)
    st = rolling_stats(e, p)
    for t in (29, 77, 199):
        assert L[t] == pytest.approx(likelihood(st.mu[t], st.sigma[t], st.mu_short[t]), abs=1e-12)


class TestDetect:
    def test_strict(self):
        assert not detect([0.999], 0.999)[0]

    def test_example(self):
        assert detect([0.5, 0.9991, 0.9], 0.9990).tolist() == [False, True, False]

    def test_warmup(self):
        assert not detect([np.nan] * 4, 0.5).any()

    def test_bad_threshold(self):
        with pytest.raises(LikelihoodError):
            detect([0.5], 1.0)


@pytest.mark.parametrize("bad", [(1, 1, 0.5), (5, 5, 0.5), (5, 2, 0.0), (5, 2, 1.0)])
def test_params_validation(bad):
    with pytest.raises(LikelihoodError):
        LikelihoodParams(*bad)


def test_dump(tmp_path):
    e = np.arange(12.0) ** 1.5
    dump_likelihood_csv(tmp_path / "l.csv", np.arange(12), e, LikelihoodParams(5, 2, 0.9), "epoch")
    rows = (tmp_path / "l.csv").read_text().splitlines()
    assert rows[0] == "timestamp,mu,sigma,mu_short,likelihood"
    assert len(rows) == 1 + 8
    assert rows[1].startswith("4,")
    assert math.isfinite(float(rows[-1].split(",")[-1]))
