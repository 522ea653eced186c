import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cwtamc import harness
from cwtamc.errors import InvalidInputError
from cwtamc.harness import ConfusionMatrix, ExperimentConfig, FeatureScaler, FeatureSet
from cwtamc.siggen import NOISELESS, ModulationClass
from cwtamc.wavelets import WaveletKind

SMALL = ExperimentConfig(
    classes=(ModulationClass.PSK2, ModulationClass.FSK2, ModulationClass.QAM16),
    per_class=20,
    num_symbols=40,
    snr_list=(5.0,),
    classifier="pnn",
    master_seed=3,
)


@pytest.fixture(scope="module")
def small_features():
    return harness.extract_dataset(SMALL, 5.0, WaveletKind.MORLET)


def test_split_arithmetic():
    labels = np.repeat(np.arange(10), 50)
    train, test = harness.stratified_split(labels, 0.4, 1)
    assert train.size == 200 and test.size == 300
    assert np.all(np.bincount(labels[train]) == 20)
    assert np.intersect1d(train, test).size == 0 and np.union1d(train, test).size == 500


@given(st.lists(st.integers(1, 40), min_size=2, max_size=6), st.floats(0.05, 0.95), st.integers(0, 99))
@settings(max_examples=50, deadline=None)
def test_stratification_within_one_sample(counts, fraction, seed):
    labels = np.repeat(np.arange(len(counts)), counts)
    train, test = harness.stratified_split(labels, fraction, seed)
    for c, n in enumerate(counts):
        assert abs(np.sum(labels[train] == c) - fraction * n) <= 1
    assert np.array_equal(np.sort(np.concatenate([train, test])), np.arange(labels.size))


def test_config_validation_and_round_trip():
    cfg = replace(SMALL, snr_list=(-2.0, 8.0), wavelet_list=(WaveletKind.HAAR, WaveletKind.MEYER))
    back = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg
    with pytest.raises(InvalidInputError, match="bogus"):
        ExperimentConfig.from_dict({"bogus": 1})
    for bad in ({"per_class": 9}, {"train_fraction": 1.0}, {"classifier": "svm"}, {"pca_dim": 21},
                {"classes": (ModulationClass.PSK2,)}, {"sigma_grid": ()}):
        with pytest.raises(InvalidInputError):
            ExperimentConfig(**bad)


def test_log_ratio_features_are_gain_free():
    rng = np.random.default_rng(0)
    x = rng.uniform(0.5, 2.0, (4, 20))
    a = 1.37
    scaled = x * np.tile(a ** np.arange(1, 6), 4)
    r0, r1 = FeatureScaler.log_ratios(x), FeatureScaler.log_ratios(scaled)
    gain_cols = np.arange(0, 20, 5)
    keep = np.setdiff1d(np.arange(20), gain_cols)
    assert np.allclose(r0[:, keep], r1[:, keep], atol=1e-12)
    assert np.allclose(r1[:, gain_cols] - r0[:, gain_cols], np.log(a))
    with pytest.raises(InvalidInputError):
        FeatureScaler.log_ratios(-x)


def test_whitening_gives_identity_within_class_covariance():
    rng = np.random.default_rng(1)
    y = np.repeat([0, 1, 2], 40)
    x = rng.standard_normal((120, 4)) @ rng.standard_normal((4, 4)) + y[:, None] * 3.0
    z = x @ harness.whitening_matrix(x, y)
    assert np.allclose(harness.pooled_covariance(z, y, ridge=0), np.eye(4), atol=1e-6)


def test_derive_seed():
    assert harness.derive_seed(1, "a") == harness.derive_seed(1, "a")
    assert len({harness.derive_seed(1, "a"), harness.derive_seed(1, "b"), harness.derive_seed(2, "a")}) == 3


# ---------------------------------------------------------------- confusion matrix


def test_confusion_round_trip_and_rollup():
    names = tuple(c.name for c in ModulationClass)
    rng = np.random.default_rng(2)
    truth = [names[i] for i in rng.integers(0, 10, 400)]
    pred = [names[i] for i in rng.integers(0, 10, 400)]
    cm = ConfusionMatrix.from_predictions(names, truth, pred)
    back = ConfusionMatrix.from_csv(cm.to_csv())
    assert back.labels == names and np.array_equal(back.counts, cm.counts)
    assert np.array_equal(cm.counts.sum(axis=1), [truth.count(n) for n in names])
    pct = cm.percentages()
    assert np.allclose(pct.sum(axis=1)[cm.counts.sum(axis=1) > 0], 100, atol=0.01)
    sup = cm.superclasses()
    assert sup.labels == harness.SUPERCLASSES
    assert sup.counts.sum() == 400
    # PSK row of the roll-up collects the three PSK rows
    psk = [names.index(n) for n in ("PSK2", "PSK4", "PSK8")]
    assert sup.counts[2].sum() == cm.counts[psk].sum()
    assert sup.counts[2, 2] == cm.counts[np.ix_(psk, psk)].sum()


def test_confusion_accuracy_and_recall():
    cm = ConfusionMatrix(("A", "B"), np.array([[3, 1], [0, 4]]))
    assert cm.accuracy() == 7 / 8
    assert cm.recall() == {"A": 0.75, "B": 1.0}


def test_overall_is_mean_of_three():
    r = harness.ClassifierResult(1.0, 0.9, 0.8, "leave-one-out", None, None)
    assert r.overall_accuracy == pytest.approx(0.9)
    assert harness.ClassifierResult(1.0, 0.5, None, "x", None, None).overall_accuracy == 0.75


# ---------------------------------------------------------------- leave-one-out


def test_leave_one_out_examples():
    assert harness.leave_one_out_validate([[0.0], [1.0]], [0, 1], "pnn", 1.0) == (0.0, "leave-one-out")
    x = np.concatenate([np.zeros((5, 2)), np.full((5, 2), 10.0)]) + np.random.default_rng(0).normal(0, 0.1, (10, 2))
    y = np.repeat([0, 1], 5)
    assert harness.leave_one_out_validate(x, y, "pnn", 0.5)[0] == 1.0
    acc, method = harness.leave_one_out_validate(x, y, "mlp")
    assert method == "10-fold" and 0 <= acc <= 1
    with pytest.raises(InvalidInputError):
        harness.leave_one_out_validate([[0.0]], [0])


# ---------------------------------------------------------------- pipeline


def test_extract_dataset_layout(small_features):
    fs = small_features
    assert fs.features.shape == (60, 20) and len(fs) == 60
    assert fs.labels.tolist() == [4] * 20 + [7] * 20 + [0] * 20


def test_run_experiment_reports_every_split(small_features):
    point = harness.evaluate_features(small_features, SMALL, 5.0, WaveletKind.MORLET)
    assert point.split["train"].size == 24 and point.split["test"].size == 36
    r = point.results["pnn"]
    assert r.validation_method == "leave-one-out"
    assert r.confusion.counts.sum() == 36
    assert all(0 <= v <= 1 for v in (r.train_accuracy, r.validation_accuracy, r.test_accuracy))
    assert point.sigma in SMALL.sigma_grid


def test_no_leakage_from_test_rows(small_features):
    cfg = replace(SMALL, classifier="both")
    a = harness.evaluate_features(small_features, cfg, 5.0, WaveletKind.MORLET)
    noisy = small_features.features.copy()
    test = a.split["test"]
    noisy[test] = np.random.default_rng(9).uniform(0.1, 10, (test.size, 20))
    b = harness.evaluate_features(FeatureSet(noisy, small_features.labels, small_features.seeds), cfg, 5.0,
                                  WaveletKind.MORLET)
    assert json.dumps(a.pipeline.to_dict(), sort_keys=True) == json.dumps(b.pipeline.to_dict(), sort_keys=True)
    assert a.sigma == b.sigma


def test_pipeline_round_trip_predicts_identically(small_features):
    cfg = replace(SMALL, classifier="both")
    point = harness.evaluate_features(small_features, cfg, 5.0, WaveletKind.MORLET)
    back = harness.TrainedPipeline.from_dict(json.loads(json.dumps(point.pipeline.to_dict())))
    for name in ("pnn", "mlp"):
        assert np.array_equal(back.predict(name, small_features.features), point.pipeline.predict(name, small_features.features))
    data = point.pipeline.to_dict()
    data["feature_layout"] = "other"
    with pytest.raises(InvalidInputError):
        harness.TrainedPipeline.from_dict(data)


def test_stage_errors_name_the_stage():
    with pytest.raises(harness.StageError) as info:
        harness.train_pipeline(-np.ones((30, 20)), np.repeat([0, 1, 2], 10), SMALL, 0)
    assert info.value.stage == "scale"
    with pytest.raises(harness.StageError) as info:
        harness.run_stage("pca", lambda: 1 / 0)
    assert info.value.stage == "pca" and isinstance(info.value.cause, ZeroDivisionError)


def test_noiseless_pnn_is_near_perfect():
    cfg = ExperimentConfig(per_class=20, num_symbols=100, snr_list=(NOISELESS,), classifier="pnn", master_seed=4)
    point = harness.run_experiment(cfg)
    assert point.results["pnn"].overall_accuracy >= 0.99


def test_sweeps_emit_one_row_per_point_and_are_deterministic(small_features, tmp_path):
    cfg = replace(SMALL, snr_list=(-2.0, 1.0, 5.0, 6.0, 8.0))
    cache = {(cfg.master_seed, 5.0, WaveletKind.MORLET): small_features}
    sweep = harness.snr_sweep(cfg, cache=cache)
    rows = sweep.accuracy_csv("pnn").strip().splitlines()
    assert rows[0] == "snr,training,validation,testing,overall,validation_method"
    assert [r.split(",")[0] for r in rows[1:]] == ["-2", "1", "5", "6", "8"]
    again = harness.snr_sweep(cfg)
    assert again.accuracy_csv("pnn") == sweep.accuracy_csv("pnn")
    harness.write_sweep(sweep, tmp_path / "a")
    harness.write_sweep(again, tmp_path / "b")
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file() and f.name != "timings.json":
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()
    assert (tmp_path / "a" / "confusion" / "pnn_snr_-2_superclass.csv").exists()
    assert (tmp_path / "a" / "models" / "snr_8.json").exists()


def test_single_point_sweep_equals_run_experiment():
    sweep = harness.snr_sweep(SMALL)
    point = harness.run_experiment(SMALL)
    assert len(sweep.points) == 1
    a, b = sweep.points[0].results["pnn"], point.results["pnn"]
    assert (a.train_accuracy, a.validation_accuracy, a.test_accuracy) == (b.train_accuracy, b.validation_accuracy, b.test_accuracy)
    assert np.array_equal(a.confusion.counts, b.confusion.counts)


def test_wavelet_sweep_rows_and_controlled_inputs():
    cfg = replace(SMALL, per_class=10, pca_dim=4, wavelet_list=tuple(WaveletKind), wavelet_sweep_snr=8.0)
    cache = {}
    sweep = harness.wavelet_sweep(cfg, cache=cache)
    rows = sweep.accuracy_rows("pnn")
    assert [r["wavelet"] for r in rows] == [w.value for w in WaveletKind]
    assert all(0 <= r["overall"] <= 100 for r in rows)
    seeds = [fs.seeds for fs in cache.values()]
    assert all(np.array_equal(s, seeds[0]) for s in seeds)


def test_empty_sweeps_rejected():
    with pytest.raises(InvalidInputError):
        harness.snr_sweep(replace(SMALL, snr_list=()))


def test_timing_benchmark_contract():
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(10), 40)
    feats = rng.uniform(0.5, 2.0, (400, 20)) + labels[:, None] * 0.1
    fs = FeatureSet(feats, labels, np.zeros(400, dtype=np.uint64))
    rep = harness.timing_benchmark(fs, ExperimentConfig(), 5.0, runs=3, train_size=200, pattern_counts=(50, 100, 200))
    assert len(rep.runs) == 3
    assert [m for m, _ in rep.scaling] == [50, 100, 200]
    assert isinstance(rep.ordering_holds, bool)
    csv_rows = harness.timing_csv([rep]).strip().splitlines()
    assert csv_rows[0] == "snr_db,classifier,train_seconds,test_seconds,sigma_search_seconds,runs"
    assert [r.split(",")[1] for r in csv_rows[1:]] == ["PNN", "MLP"]
    assert json.dumps(rep.to_dict())


def test_linear_r2():
    assert harness._linear_r2([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert harness._linear_r2([1, 2, 3, 4], [1, 3, 1, 3]) < 0.5
