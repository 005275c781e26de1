import math
from importlib import resources

import numpy as np
import pytest

from calibench.analysis import (
    ALL_TIE,
    NO_DETECTION,
    RANKED,
    ScoreMatrix,
    SubgroupScores,
    build_board,
    build_boards,
    centroid_diagnostics,
    dense_ranks,
    drift_summary,
    rank_subgroup,
    stability,
    training_centroid,
    write_board_csv,
    write_diagnostics_csv,
)
from calibench.dataset import SplitView, chronological_split
from calibench.synthetic import app5_style, app9_style

from conftest import make_file

ZERO_GT = {"App3", "App4", "App7", "mongodb-application-rps", "service-unavailable",
            "artificialNoAnomaly"}


@pytest.fixture(scope="module")
def reference():
    return ScoreMatrix.from_csv(resources.files("calibench") / "data" / "reference_scores.csv")


class TestRanking:
    def test_worked_examples(self):
        assert dense_ranks([10, 10, 3, -2]) == [1, 1, 2, 3]
        assert dense_ranks([0, 0, -5, -10]) == [1, 1, 2, 3]

    def test_rounding_before_ranking(self):
        assert dense_ranks([1.004, 1.0, 0.996]) == [1, 1, 1]

    def test_app2_row(self, reference):
        row = next(r for r in reference.rows if r.subgroup == "App2")
        out = rank_subgroup(row.scores, row.gt)
        assert out.kind == RANKED
        assert out.ranks == {"TSMixer": 1, "Transformer": 2, "Isolation Forest": 3,
                             "TCN": 4, "GRU": 5}

    def test_cases(self):
        assert rank_subgroup({"a": 0.0, "b": 0.0}, 0).kind == ALL_TIE
        assert rank_subgroup({"a": 0.0, "b": 0.0}, 3).kind == NO_DETECTION
        assert rank_subgroup({"a": 0.0, "b": 0.0}, None).kind == NO_DETECTION
        assert rank_subgroup({"a": 0.0, "b": -1.0}, 0).kind == RANKED

    def test_needs_two_detectors(self):
        with pytest.raises(ValueError):
            rank_subgroup({"a": 1.0}, 1)


class TestBoard:
    def test_single_tie_subgroup(self):
        m = ScoreMatrix(["a", "b"], [SubgroupScores("d", "s", {"a": 0.0, "b": 0.0}, 0)])
        b = build_board(m)
        assert b.tie_count == 1 and b.counts == {"a": {}, "b": {}}

    def test_reference_classification(self, reference):
        b = build_board(reference)
        ties = {k.split("/")[1] for k, o in b.outcomes.items() if o.kind == ALL_TIE}
        nodet = {k.split("/")[1] for k, o in b.outcomes.items() if o.kind == NO_DETECTION}
        assert ties == ZERO_GT
        assert {"data-ingress-rate", "middle-tier-api-dependency-latency"} <= nodet

    def test_every_pair_lands_once(self, reference):
        b = build_board(reference)
        n = len(reference.rows)
        for d in reference.detectors:
            assert sum(b.counts[d].values()) + b.tie_count + b.no_detection_count == n

    def test_per_dataset_boards(self, reference, tmp_path):
        boards = build_boards(reference)
        assert set(boards) == {"overall", "Exathlon", "Microsoft", "NAB", "IBM"}
        write_board_csv(tmp_path / "b.csv", boards)
        lines = (tmp_path / "b.csv").read_text().splitlines()
        assert len(lines) == 1 + 5 * 5

    def test_leave_one_out(self, reference):
        b = build_board(reference.drop_detector("Isolation Forest"))
        assert b.max_rank == 4 and "Isolation Forest" not in b.counts

    def test_incomplete_row(self):
        m = ScoreMatrix(["a", "b"], [SubgroupScores("d", "s", {"a": 1.0, "b": None}, 1)])
        with pytest.raises(ValueError):
            build_board(m)


class TestStability:
    def test_exathlon(self, reference):
        s = stability(reference.restrict("Exathlon"))
        assert (s.score_min, s.score_max) == (-8291.74, 97.57)
        assert (s.negative_count, s.total_count) == (17, 50)

    def test_microsoft(self, reference):
        s = stability(reference.restrict("Microsoft"))
        assert (s.negative_count, s.total_count) == (0, 45)
        assert s.std_dev == pytest.approx(18.28, abs=0.5)

    def test_all_equal(self):
        m = ScoreMatrix(["a", "b"], [SubgroupScores("d", "s", {"a": 3.0, "b": 3.0}, 1)])
        s = stability(m)
        assert s.std_dev == 0 and s.score_min == s.score_max

    def test_csv_roundtrip(self, reference, tmp_path):
        reference.to_csv(tmp_path / "m.csv")
        again = ScoreMatrix.from_csv(tmp_path / "m.csv")
        assert again.rows == reference.rows


class TestDrift:
    def test_constant_series(self):
        f = make_file(np.full((50, 3), 2.0))
        for log in (False, True):
            d = centroid_diagnostics(f, chronological_split(f), log)
            assert np.all(d.distances == 0)

    def test_basis_vectors(self):
        f = make_file([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [5.0, 5.0]])
        d = centroid_diagnostics(f, SplitView((0, 1), (1, 2), (2, 4)))
        assert np.allclose(d.centroid, [0.5, 0.5])
        assert d.distances[0] == pytest.approx(math.sqrt(0.5))

    def test_pairwise_centroid(self):
        x = np.full((1_000_000, 1), 0.1)
        assert training_centroid(x)[0] == pytest.approx(0.1, rel=1e-14)

    def test_shift_exceeds_training_max(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(1000, 4))
        X[700:] += 10.0
        f = make_file(X)
        d = centroid_diagnostics(f, chronological_split(f))
        assert d.distances[700:].min() > d.distances[:700].max()

    def test_iid_ratio_near_one(self):
        f = make_file(np.random.default_rng(1).normal(size=(3000, 5)))
        r = drift_summary(centroid_diagnostics(f, chronological_split(f)))["shift_ratio"]
        assert r == pytest.approx(1.0, abs=0.1)

    def test_ratio_ignores_log_scaling(self):
        f = app9_style(0)
        v = chronological_split(f)
        a = drift_summary(centroid_diagnostics(f, v, False))
        b = drift_summary(centroid_diagnostics(f, v, True))
        assert a["shift_ratio"] == pytest.approx(b["shift_ratio"], rel=1e-12)

    def test_fixture_ratios(self):
        s5 = drift_summary(centroid_diagnostics(app5_style(0), chronological_split(3000)))
        s9 = drift_summary(centroid_diagnostics(app9_style(0), chronological_split(3000)))
        assert 0.5 <= s5["shift_ratio"] <= 2 and s9["shift_ratio"] > 3

    def test_csv(self, tmp_path):
        f = make_file(np.random.default_rng(2).normal(size=(20, 2)), labels=[(15, 16)])
        write_diagnostics_csv(tmp_path / "d.csv", centroid_diagnostics(f, chronological_split(f)))
        rows = (tmp_path / "d.csv").read_text().splitlines()
        assert rows[0] == "timestamp,distance,segment,in_anomaly_window"
        assert rows[14].endswith(",train,0") and rows[15].endswith(",test,0")
        assert rows[16].endswith(",test,1")
