import csv
import json

import numpy as np
import pytest
from scipy import stats

from ranksim.metrics import (
    MetricReport,
    average_ranking_matrices,
    gm,
    label_sorted_batches,
    mae,
    mse,
    pearson,
    report,
    spearman,
)


def polar(angles):
    a = np.asarray(angles, dtype=float)
    return np.stack([np.cos(a), np.sin(a)], axis=1)


def test_basic_errors():
    assert mae([1, 2], [1, 2]) == 0 and mse([1, 2], [1, 2]) == 0
    assert mae([0, 0], [1, -3]) == 2.0
    assert mse([0, 0], [1, -3]) == 5.0
    assert gm([0, 0], [1, 4]) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        mae([], [])
    with pytest.raises(ValueError):
        mae([1, 2], [1])


def test_gm_zero_error_clamped():
    assert gm([1.0], [1.0]) == pytest.approx(1e-6)
    assert gm([1.0], [1.0], eps=1e-3) == pytest.approx(1e-3)


def test_gm_log_domain_matches_direct_product():
    rng = np.random.default_rng(0)
    for _ in range(20):
        e = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=50))
        direct = float(np.prod(e)) ** (1 / 50)
        assert gm(np.zeros(50), e) == pytest.approx(direct, rel=1e-10)


def test_correlations():
    p = np.array([0.5, 1.0, 4.0, 2.0, 3.0])
    assert pearson(p, 2 * p + 3) == pytest.approx(1.0)
    assert spearman(p, -(p**3)) == pytest.approx(-1.0)
    assert spearman(p, np.exp(p)) == pytest.approx(1.0)
    with pytest.raises(ValueError, match="degenerate correlation"):
        pearson([1, 2, 3], [5, 5, 5])
    with pytest.raises(ValueError):
        pearson([1], [2])


def test_spearman_closed_form_and_scipy():
    rng = np.random.default_rng(1)
    for _ in range(50):
        m = int(rng.integers(3, 30))
        p, t = rng.normal(size=m), rng.normal(size=m)
        d = stats.rankdata(p) - stats.rankdata(t)
        closed = 1 - 6 * np.sum(d**2) / (m * (m**2 - 1))
        assert spearman(p, t) == pytest.approx(closed, abs=1e-12)
    t = np.array([1, 2, 2, 3, 5, 5, 5])
    p = np.array([3, 1, 4, 1, 5, 9, 2])
    assert spearman(p, t) == pytest.approx(stats.spearmanr(p, t).statistic, abs=1e-12)
    assert pearson(p, t) == pytest.approx(stats.pearsonr(p, t).statistic, abs=1e-12)


def test_report_single_region_equals_overall():
    rep = report([1, 2, 3.5], [1, 2.5, 3], ["many"] * 3)
    assert rep.regions["many"] == rep.regions["all"]
    assert "few" not in rep.regions and rep.get("few", "mae") is None


def test_report_hand_case():
    p = [1, 2, 3, 10, 10, 10]
    t = [2, 2, 5, 12, 9, 10]
    rep = report(p, t, ["many", "many", "many", "few", "few", "few"])
    assert rep.get("many", "mae") == pytest.approx(1.0)
    assert rep.get("few", "mae") == pytest.approx(1.0)
    assert rep.get("many", "mse") == pytest.approx(5 / 3)
    assert rep.get("all", "mae") == pytest.approx(1.0)
    assert rep.counts == {"all": 6, "many": 3, "few": 3}
    assert rep.get("few", "pearson") is None  # constant predictions


def test_report_all_is_count_weighted_mean():
    rng = np.random.default_rng(2)
    p, t = rng.normal(size=40), rng.normal(size=40)
    regions = rng.choice(["many", "medium", "few", "zero"], size=40)
    rep = report(p, t, regions)
    weighted = sum(rep.counts[r] * rep.get(r, "mae") for r in rep.counts if r != "all") / 40
    assert rep.get("all", "mae") == pytest.approx(weighted, abs=1e-12)


def test_report_serialization(tmp_path):
    rep = report([1, 2, 3], [1, 3, 2], ["few", "few", "many"])
    again = MetricReport.from_dict(json.loads(rep.to_json()))
    assert again == rep
    rep.to_csv(tmp_path / "m.csv")
    rows = list(csv.DictReader(open(tmp_path / "m.csv")))
    assert [r["region"] for r in rows] == ["all", "many", "few"]
    assert rows[1]["pearson"] == ""
    assert "NaN" not in rep.to_json() and "nan" not in (tmp_path / "m.csv").read_text()


def test_average_ranking_matrices_worked_example():
    labels = [0.0, 1.0, 2.0, 3.0]
    # anchor 0 at angle 0; others placed so the first rows rank as [1,3,4,2] and [1,2,4,3]
    b1 = polar([0.0, 0.6, 0.9, 0.3])
    b2 = polar([0.0, 0.3, 0.9, 0.6])
    mats = average_ranking_matrices([(labels, b1), (labels, b2)])
    np.testing.assert_array_equal(mats.feature_matrix[0], [1, 2.5, 4, 2.5])
    np.testing.assert_array_equal(mats.label_matrix[0], [1, 2, 3, 4])
    assert mats.batch_count == 2


def test_average_ranking_matrices_perfect_model_and_single_batch():
    labels = np.array([0.0, 1.0, 3.0, 6.0, 10.0])
    z = polar(labels * 0.05)
    mats = average_ranking_matrices([(labels, z)])
    np.testing.assert_array_equal(mats.feature_matrix, mats.label_matrix)
    assert mats.label_matrix.min() >= 1 and mats.label_matrix.max() <= 5


def test_label_matrix_v_shape():
    labels = np.arange(6.0)
    mats = average_ranking_matrices([(labels, polar(labels * 0.1))])
    for i, row in enumerate(mats.label_matrix):
        dist = np.abs(np.arange(6) - i)
        assert np.all(np.diff(row[np.argsort(dist, kind="stable")]) >= 0)


def test_ragged_batches_rejected():
    with pytest.raises(ValueError, match="ragged"):
        average_ranking_matrices([([0.0, 1.0], polar([0, 1])), ([0.0, 1.0, 2.0], polar([0, 1, 2]))])


def test_label_sorted_batches_drop_remainder(tmp_path):
    y = np.array([5.0, 1.0, 3.0, 2.0, 4.0, 0.0, 9.0])
    z = np.arange(14.0).reshape(7, 2)
    batches = list(label_sorted_batches(y, z, 3))
    assert len(batches) == 2
    for yb, zb in batches:
        assert np.all(np.diff(yb) >= 0)
        for label, feat in zip(yb, zb):
            np.testing.assert_array_equal(feat, z[list(y).index(label)])
    mats = average_ranking_matrices(label_sorted_batches(y, z + 1, 3, np.random.default_rng(0)))
    mats.to_csv(tmp_path / "l.csv", tmp_path / "f.csv")
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "l.csv", delimiter=","), mats.label_matrix)
