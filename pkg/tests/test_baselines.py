import csv

import numpy as np
import pytest

from ranksim.baselines import (
    FocalRConfig,
    LdsKernel,
    RRTPlan,
    bin_labels,
    focal_r_weights,
    lds_smooth,
    reweight,
    rrt_schedule,
    sample_weights,
    write_density_csv,
)
from ranksim.data import SkewSpec, generate
from ranksim.estimator import RankSimRegressor


def naive_lds(counts, size=5, sigma=2.0):
    half = size // 2
    k = np.array([np.exp(-(j**2) / (2 * sigma**2)) for j in range(-half, half + 1)])
    k = k / k.sum()
    padded = np.pad(np.asarray(counts, dtype=float), half, mode="symmetric")
    out = np.zeros(len(counts))
    for i in range(len(counts)):
        for j in range(size):
            out[i] += k[j] * padded[i + j]
    return out


def test_bin_labels_examples():
    np.testing.assert_array_equal(bin_labels([1, 1, 2, 3], 1).counts, [2, 1, 1])
    d = bin_labels([4.2] * 7, 1)
    np.testing.assert_array_equal(d.counts, [7])
    d = bin_labels(np.arange(100).repeat(3), 1)
    assert d.n_bins == 100 and np.all(d.counts == 3)
    with pytest.raises(ValueError):
        bin_labels([], 1)


def test_bin_labels_pinned_grid():
    d = bin_labels([2.5, 3.0], 1, lo=0, n_bins=5)
    np.testing.assert_array_equal(d.counts, [0, 0, 1, 1, 0])
    np.testing.assert_array_equal(d.bin_index([-3, 4.99, 7]), [0, 4, 4])


def test_lds_kernel_weights():
    w = LdsKernel().weights
    assert w.size == 5 and w.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(w, w[::-1])
    with pytest.raises(ValueError):
        LdsKernel(size=4)


def test_lds_delta_interior():
    counts = np.zeros(11)
    counts[5] = 10
    sm = lds_smooth(bin_labels(np.repeat(np.arange(11), counts.astype(int)), 1, lo=0, n_bins=11)).smoothed
    expected = np.zeros(11)
    expected[3:8] = 10 * LdsKernel().weights
    np.testing.assert_allclose(sm, expected, atol=1e-12)


def test_lds_uniform_unchanged():
    d = bin_labels(np.arange(20).repeat(4), 1)
    np.testing.assert_allclose(lds_smooth(d).smoothed, 4.0, atol=1e-12)


def test_lds_matches_naive_oracle_and_preserves_mass():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 40))
        counts = rng.integers(0, 50, size=n)
        labels = np.repeat(np.arange(n), counts)
        if labels.size == 0:
            continue
        d = bin_labels(labels, 1, lo=0, n_bins=n)
        sm = lds_smooth(d).smoothed
        np.testing.assert_allclose(sm, naive_lds(counts), atol=1e-12, rtol=0)
        assert abs(sm.sum() - counts.sum()) <= 1e-9


def test_reweight_examples():
    d = bin_labels(np.arange(5).repeat(3), 1)
    np.testing.assert_allclose(reweight(d, "inv"), 1.0)
    np.testing.assert_allclose(reweight(d, "none"), 1.0)
    d = bin_labels([0] * 100 + [1], 1)
    w = reweight(d, "inv")
    assert w[1] / w[0] == pytest.approx(100)
    w = reweight(d, "sqinv")
    assert w[1] / w[0] == pytest.approx(10)


def test_reweight_mean_one_over_samples():
    rng = np.random.default_rng(1)
    labels = rng.integers(0, 30, size=500)
    d = bin_labels(labels, 1)
    for scheme in ("inv", "sqinv"):
        w = sample_weights(d, reweight(d, scheme), labels)
        assert w.mean() == pytest.approx(1.0, abs=1e-12)


def test_reweight_scale_invariant():
    rng = np.random.default_rng(2)
    labels = rng.integers(0, 10, size=200)
    once = reweight(bin_labels(labels, 1), "sqinv")
    thrice = reweight(bin_labels(np.repeat(labels, 3), 1), "sqinv")
    np.testing.assert_allclose(once, thrice, atol=1e-12)


def test_reweight_empty_bins():
    d = bin_labels([0, 0, 3], 1)
    w = reweight(d, "inv")
    assert np.isnan(w[1]) and np.isnan(w[2])
    with pytest.raises(ValueError, match="empty bin weight"):
        sample_weights(d, w, [1.5])
    # smoothing fills the gap
    assert np.all(np.isfinite(reweight(lds_smooth(d), "inv", use_smoothed=True)))
    with pytest.raises(ValueError):
        reweight(d, "inv", use_smoothed=True)


def test_focal_examples():
    assert focal_r_weights([0.0])[0] == 0.5
    assert focal_r_weights([5.0])[0] == pytest.approx(1 / (1 + np.exp(-1)), abs=1e-12)
    assert focal_r_weights([1e4])[0] == pytest.approx(1.0)
    assert focal_r_weights([-5.0])[0] == focal_r_weights([5.0])[0]
    np.testing.assert_allclose(focal_r_weights([2.0], FocalRConfig(0.2, 2.0)), focal_r_weights([2.0]) ** 2)
    with pytest.raises(ValueError):
        FocalRConfig(beta=0)


def test_focal_monotone_and_bounded():
    e = np.linspace(0, 50, 200)
    f = focal_r_weights(e, FocalRConfig(0.2, 1.5))
    assert np.all(np.diff(f) >= 0) and f[1] > f[0]
    assert f.min() >= 0.5**1.5 - 1e-15 and f.max() < 1.0 + 1e-15


def test_rrt_schedule():
    assert [s.name for s in rrt_schedule(RRTPlan())] == ["stage1", "stage2"]
    s1, s2 = rrt_schedule(RRTPlan(10, 5, "sqinv"))
    assert (s1.epochs, s1.trainable, s1.reweight, s1.ranksim) == (10, "all", "none", True)
    assert (s2.epochs, s2.trainable, s2.reweight, s2.ranksim) == (5, "head", "sqinv", False)
    assert len(rrt_schedule(RRTPlan(10, 0))) == 1
    with pytest.raises(ValueError):
        RRTPlan(stage2_reweight="focal")


def _small():
    ds = generate(SkewSpec(n_train=400, seed=3))
    return ds.X_train, ds.y_train


def test_rrt_freezes_hidden_layers():
    X, y = _small()
    stage1 = RankSimRegressor(epochs=3, restore_best=False, random_state=0).fit(X, y)
    both = RankSimRegressor(epochs=3, rrt=True, rrt_epochs=4, restore_best=False, random_state=0).fit(X, y)
    for name in stage1.net_.params:
        if name.startswith(("W", "b")):
            np.testing.assert_array_equal(both.net_.params[name], stage1.net_.params[name])
    assert not np.array_equal(both.net_.params["head_W"], stage1.net_.params["head_W"])
    assert [r["stage"] for r in both.history_] == ["stage1"] * 3 + ["stage2"] * 4


def test_rrt_zero_stage2_equals_stage1():
    X, y = _small()
    a = RankSimRegressor(epochs=3, restore_best=False, random_state=0).fit(X, y)
    b = RankSimRegressor(epochs=3, rrt=True, rrt_epochs=0, restore_best=False, random_state=0).fit(X, y)
    np.testing.assert_array_equal(a.net_.get_flat(), b.net_.get_flat())


def test_write_density_csv(tmp_path):
    d = lds_smooth(bin_labels([0, 0, 2], 1))
    path = tmp_path / "density.csv"
    write_density_csv(path, d, reweight(d, "inv"))
    rows = list(csv.DictReader(open(path)))
    assert [r["count"] for r in rows] == ["2", "0", "1"]
    assert rows[1]["weight"] == ""
    assert float(rows[0]["smoothed"]) > 0
