import math

import numpy as np
import pytest

from calibench.dataset import SplitView, chronological_split
from calibench.detectors import (
    DetectorError,
    average_path_length,
    fit_isolation_forest,
    fit_pca,
    import_error_series,
    pca_error,
    rolling_predictor_error,
    score_isolation_forest,
)
from calibench.detectors.base import ErrorSeries
from calibench.synthetic import blob_with_outliers

from conftest import make_file


def whole(n):
    # training period covering every row
    return SplitView((0, n - 1), (n - 1, n), (n, n))


# ---------------------------------------------------------------------------
# isolation forest


def test_c_of_small_n():
    assert average_path_length(1) == 0.0
    assert average_path_length(2) == 1.0
    assert average_path_length(3) == pytest.approx(2 * 1.5 - 4 / 3)


def brute_force_scores(X, seed):
    """Grow one tree over all rows on plain Python lists and score every row.

    Draw order: subsample permutation, then per node (depth-first, left
    first) a feature among the non-constant ones and a split point.
    """
    rng = np.random.default_rng(seed)
    n = len(X)
    rows = sorted(int(i) for i in rng.choice(n, size=n, replace=False))
    limit = math.ceil(math.log2(n))
    pts = [tuple(float(v) for v in r) for r in X]

    def c(m):
        if m <= 1:
            return 0.0
        return 2 * math.fsum(1.0 / k for k in range(1, m)) - 2 * (m - 1) / m

    def grow(members, depth):
        if depth >= limit or len(members) <= 1:
            return ("leaf", depth + c(len(members)))
        feats = [q for q in range(X.shape[1])
                 if min(pts[i][q] for i in members) < max(pts[i][q] for i in members)]
        if not feats:
            return ("leaf", depth + c(len(members)))
        q = feats[int(rng.integers(len(feats)))]
        lo = min(pts[i][q] for i in members)
        hi = max(pts[i][q] for i in members)
        while True:
            p = lo + rng.random() * (hi - lo)
            if lo < p <= hi:
                break
        left = [i for i in members if pts[i][q] < p]
        right = [i for i in members if not pts[i][q] < p]
        return ("split", q, p, grow(left, depth + 1), grow(right, depth + 1))

    tree = grow(rows, 0)

    def h(x):
        node = tree
        while node[0] == "split":
            node = node[3] if x[node[1]] < node[2] else node[4]
        return node[1]

    return np.array([2.0 ** (-h(x) / c(n)) for x in pts])


@pytest.mark.parametrize("seed", range(5))
def test_single_tree_matches_brute_force(seed):
    X = np.random.default_rng(100 + seed).normal(size=(64, 3))
    X[::7, 1] = 0.0  # ties within a feature
    f = make_file(X)
    m = fit_isolation_forest(f, whole(64), tree_count=1, subsample_size=64, seed=seed)
    got = score_isolation_forest(m, f).values
    assert np.array_equal(got, brute_force_scores(X, seed))


def test_identical_rows_score_equal():
    f = make_file(np.ones((256, 2)))
    m = fit_isolation_forest(f, whole(256), tree_count=1, subsample_size=256)
    s = score_isolation_forest(m, f).values
    assert len(m.feature) == 1 and m.feature[0] == -1
    # root leaf: h = c(256), so s = 2^-1
    assert np.all(s == 0.5)


def test_fit_is_deterministic():
    f = make_file(np.random.default_rng(0).normal(size=(500, 4)))
    v = chronological_split(f)
    assert fit_isolation_forest(f, v, seed=9).equals(fit_isolation_forest(f, v, seed=9))
    assert not fit_isolation_forest(f, v, seed=9).equals(fit_isolation_forest(f, v, seed=10))


def test_tree_structure_invariants():
    f = make_file(np.random.default_rng(2).normal(size=(400, 3)))
    m = fit_isolation_forest(f, chronological_split(f), tree_count=10, subsample_size=128)
    assert m.depth.max() <= math.ceil(math.log2(128))
    for t in range(m.tree_count):
        s = m.tree_slice(t)
        root = m.roots[t]
        assert m.size[root] == 128
        inner = np.flatnonzero(m.feature[s] >= 0) + s.start
        assert np.all(m.size[m.left[inner]] + m.size[m.right[inner]] == m.size[inner])


def test_planted_outliers_rank_top():
    X, out = blob_with_outliers(0)
    m = fit_isolation_forest(X, whole(len(X)), seed=0)
    s = score_isolation_forest(m, X).values
    assert set(np.argsort(-s)[:5]) == set(out)


def test_dimension_mismatch():
    f = make_file(np.zeros((50, 2)) + np.arange(50)[:, None])
    m = fit_isolation_forest(f, chronological_split(f), tree_count=2)
    with pytest.raises(DetectorError):
        score_isolation_forest(m, make_file(np.zeros((5, 3))))


# ---------------------------------------------------------------------------
# PCA


def diag_fixture(n=20_000, seed=0):
    rng = np.random.default_rng(seed)
    return make_file(rng.normal(size=(n, 3)) * np.sqrt([4.0, 1.0, 0.01]))


def test_pca_diag_cov_keeps_one():
    f = diag_fixture()
    m = fit_pca(f, whole(len(f)), 0.70)
    assert m.k == 1
    assert abs(m.components[0, 0]) == pytest.approx(1.0, abs=1e-2)


def test_pca_line_in_r3():
    t = np.linspace(-3, 3, 200)[:, None]
    f = make_file(t * np.array([[1.0, 2.0, -1.0]]) + np.array([1.0, 0.0, 5.0]))
    m = fit_pca(f, whole(200), 0.70)
    assert m.k == 1
    assert np.all(np.abs(pca_error(m, f).values) < 1e-9)


def test_pca_full_retention_is_lossless():
    f = make_file(np.random.default_rng(4).normal(size=(300, 5)))
    m = fit_pca(f, whole(300), 1.0)
    assert m.k == 5
    assert np.max(pca_error(m, f).values) < 1e-9


def test_pca_hand_residual():
    # component along axis 1 and zero mean by construction
    f = make_file([[-5.0, 0.0], [5.0, 0.0], [-1.0, 0.0], [1.0, 0.0], [0.0, 3.0]])
    m = fit_pca(f, SplitView((0, 3), (3, 4), (4, 5)), 0.70)
    assert m.k == 1 and np.allclose(m.mean, 0)
    assert pca_error(m, f).values[4] == pytest.approx(9 / 2, abs=1e-12)


def test_pca_signs_are_canonical():
    m = fit_pca(diag_fixture(2000, 3), whole(2000), 0.999)
    for row in m.components:
        assert row[np.argmax(np.abs(row))] > 0


def test_pca_constant_data():
    m = fit_pca(make_file(np.ones((20, 2))), whole(20))
    assert m.k == 0


# ---------------------------------------------------------------------------
# baselines and imports


def test_rolling_predictor_hand_value():
    e = rolling_predictor_error(make_file([0.0, 0.0, 0.0, 6.0]), 3).values
    assert np.isnan(e[:3]).all() and e[3] == 36.0


def test_rolling_predictor_constant():
    e = rolling_predictor_error(make_file(np.full(30, 2.5)), 5).values
    assert np.all(e[5:] == 0.0)


def test_rolling_predictor_window_too_big():
    with pytest.raises(DetectorError):
        rolling_predictor_error(make_file(np.zeros(4)), 4)


def _err_csv(path, rows):
    path.write_text("timestamp,error\n" + "".join(f"{t},{e}\n" for t, e in rows))
    return path


def test_import_full_coverage(tmp_path):
    f = make_file(np.zeros(20))
    vals = np.random.default_rng(0).random(20)
    s = import_error_series(_err_csv(tmp_path / "e.csv", zip(range(20), vals)), f)
    assert np.allclose(s.values, vals)


def test_import_leading_gap_is_warmup(tmp_path):
    f = make_file(np.zeros(30))
    s = import_error_series(_err_csv(tmp_path / "e.csv", [(t, 1.0) for t in range(10, 30)]), f)
    assert s.warmup == 10


def test_import_interior_gap_rejected(tmp_path):
    f = make_file(np.zeros(30))
    rows = [(t, 1.0) for t in range(30) if t != 17]
    with pytest.raises(DetectorError, match="index 17"):
        import_error_series(_err_csv(tmp_path / "e.csv", rows), f)


def test_import_unknown_timestamp(tmp_path):
    f = make_file(np.zeros(5))
    with pytest.raises(DetectorError, match="unknown timestamp"):
        import_error_series(_err_csv(tmp_path / "e.csv", [(t, 1.0) for t in range(6)]), f)


def test_error_series_rejects_inner_nan():
    with pytest.raises(DetectorError):
        ErrorSeries("f", "d", np.array([np.nan, 1.0, np.nan, 2.0]))
