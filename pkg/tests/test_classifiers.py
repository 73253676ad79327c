"""分类器: T-LDA / T-LDA-NP / V-LDA / T-NN / T-NN-NP / Oracle"""

import math

import numpy as np
import pytest

from core.calibration import NpLevels, umbrella_threshold
from core.classifiers import (LinearScorer, NpClassifier, _bayes_threshold, fit_pair_tlda,
                              fit_pair_tnn, fit_tlda, fit_tlda_np, fit_tnn, fit_tnn_np, fit_vlda,
                              oracle_classifier, predict, split_class0)
from core.errors import CalibrationSetTooSmallError, EmptyClassError, TensorShapeError
from core.estimation import LabeledData
from core.numerics import RandomSource
from core.tensor_core import batch_inner, inner
from core.tensor_nn import NnSettings
from core.tgmm import TgmmParams, oracle_rule, random_tucker_signal, sample_class

SHAPE = (6, 5, 4)
RANKS = (2, 2, 2)
LEVELS = NpLevels(0.05, 0.1)


def _problem(rng, n0=200, n1=200, snr=5.0):
    B = random_tucker_signal(SHAPE, RANKS, snr, rng.split(0))
    params = TgmmParams.identity_model(B)
    return params, sample_class(params, 0, n0, rng.split(1)), sample_class(params, 1, n1, rng.split(2))


def _type1(classifier, params, rng, n=20000):
    return float(np.mean(classifier.predict(sample_class(params, 0, n, rng))))


class TestPredict:

    def test_tie_rules(self):
        scorer = LinearScorer(np.ones((2, 2)))
        X = np.full((2, 2), 0.25)
        np_rule = NpClassifier("T-LDA-NP", scorer, threshold=1.0)
        bayes_rule = NpClassifier("T-LDA", scorer, threshold=1.0, inclusive=True)
        assert predict(np_rule, X) == 0
        assert predict(bayes_rule, X) == 1

    def test_batch_and_single(self, np_rng):
        clf = NpClassifier("T-LDA-NP", LinearScorer(np.ones(3)), threshold=0.0)
        X = np_rng.standard_normal((10, 3))
        labels = clf.predict(X)
        assert labels.dtype == np.int8
        assert [clf.predict(x) for x in X] == labels.tolist()

    def test_shape_mismatch(self):
        clf = NpClassifier("T-LDA-NP", LinearScorer(np.ones((2, 3))), threshold=0.0)
        with pytest.raises(TensorShapeError):
            clf.predict(np.ones((3, 2)))

    def test_oracle_on_class1_mean(self):
        B = random_tucker_signal((5, 5, 5), (2, 2, 2), 7.0, RandomSource(3))
        params = TgmmParams.identity_model(B)
        clf = oracle_classifier(oracle_rule(params, 0.05))
        assert inner(params.mean1, B) == pytest.approx(49.0)
        assert predict(clf, params.mean1) == 1
        assert predict(clf, params.mean0) == 0

    def test_monotone_link_invariance(self, np_rng):
        calib = np_rng.standard_normal(100)
        test = np_rng.standard_normal(500)
        raw = umbrella_threshold(calib, LEVELS).threshold
        warped = umbrella_threshold(np.exp(calib), LEVELS).threshold
        np.testing.assert_array_equal(test > raw, np.exp(test) > warped)


class TestTlda:

    def test_bayes_threshold_prior_shift(self, np_rng):
        m0 = np_rng.standard_normal((3, 2))
        m1 = np_rng.standard_normal((3, 2))
        W = m1 - m0
        balanced = _bayes_threshold(m0, m1, W, 100, 100)
        assert balanced == pytest.approx(inner(0.5 * (m0 + m1), W))
        assert _bayes_threshold(m0, m1, W, 100, 200) == pytest.approx(balanced - math.log(2))

    def test_fit_and_threshold(self, rng):
        params, x0, x1 = _problem(rng, n0=150, n1=300)
        clf = fit_tlda(LabeledData.from_classes(x0, x1), RANKS)
        assert clf.inclusive
        W = clf.scorer.weights
        expected = inner(0.5 * (x0.mean(axis=0) + x1.mean(axis=0)), W) - math.log(2)
        assert clf.threshold == pytest.approx(expected, rel=1e-10)
        test = LabeledData.from_classes(sample_class(params, 0, 2000, rng.split(5)),
                                        sample_class(params, 1, 2000, rng.split(6)))
        assert np.mean(clf.predict(test.tensors) == test.labels) > 0.9

    def test_empty_class(self, rng):
        _, x0, _ = _problem(rng)
        with pytest.raises(EmptyClassError):
            fit_tlda(LabeledData(x0, np.zeros(len(x0))), RANKS)

    def test_np_threshold_from_calibration(self, rng):
        _, x0, x1 = _problem(rng)
        fit0, calib0 = split_class0(x0, rng.split(3))
        clf = fit_tlda_np(fit0, x1, calib0, RANKS, levels=LEVELS)
        scores = clf.scorer.score(calib0)
        assert clf.calibration.n_calib == len(calib0) == 100
        assert clf.threshold == np.sort(scores)[clf.calibration.k_star - 1]
        assert not clf.inclusive

    def test_np_calibration_too_small(self, rng):
        _, x0, x1 = _problem(rng)
        with pytest.raises(CalibrationSetTooSmallError, match="45") as info:
            fit_tlda_np(x0[:100], x1, x0[100:110], RANKS, levels=LEVELS)
        assert info.value.required == 45

    def test_np_empty_class_before_calibration(self, rng):
        _, x0, x1 = _problem(rng)
        empty = x0[:0]
        with pytest.raises(EmptyClassError):
            fit_tlda_np(x0[:100], empty, empty, RANKS, levels=LEVELS)
        with pytest.raises(EmptyClassError):
            fit_tnn_np(empty, x1, empty, None, TestTnn.SETTINGS, LEVELS, rng)

    def test_pair_uses_all_class0_for_tlda(self, rng):
        _, x0, x1 = _problem(rng)
        fit0, calib0 = split_class0(x0, rng.split(3))
        tlda, tlda_np = fit_pair_tlda(fit0, calib0, x1, RANKS, LEVELS)
        direct = fit_tlda(LabeledData.from_classes(np.concatenate([fit0, calib0]), x1), RANKS)
        np.testing.assert_allclose(tlda.scorer.weights, direct.scorer.weights, atol=1e-12)
        assert tlda_np.method == "T-LDA-NP"

    @pytest.mark.slow
    def test_agrees_with_bayes_rule(self, rng):
        params, x0, x1 = _problem(rng, n0=2500, n1=2500)
        clf = fit_tlda(LabeledData.from_classes(x0, x1), RANKS)
        B = params.mean1 - params.mean0
        test = np.concatenate([sample_class(params, 0, 10000, rng.split(5)),
                               sample_class(params, 1, 10000, rng.split(6))])
        bayes = batch_inner(test, B) >= inner(0.5 * (params.mean0 + params.mean1), B)
        assert np.mean(clf.predict(test) == bayes) >= 0.99

    @pytest.mark.slow
    def test_np_type1_guarantee(self):
        reps = 100
        violations = 0
        for rep in range(reps):
            rng = RandomSource(99).split(rep)
            params, x0, x1 = _problem(rng, n0=300, n1=300)
            fit0, calib0 = split_class0(x0, rng.split(3))
            clf = fit_tlda_np(fit0, x1, calib0, RANKS, levels=LEVELS)
            violations += _type1(clf, params, rng.split(4)) > LEVELS.alpha
        assert violations / reps <= 0.1 + 3 * math.sqrt(0.1 * 0.9 / reps)


class TestSplit:

    def test_sizes_disjoint(self, rng):
        x0 = np.arange(11.0).reshape(11, 1)
        fit0, calib0 = split_class0(x0, rng)
        assert len(calib0) == 5 and len(fit0) == 6
        assert sorted(np.concatenate([fit0, calib0]).ravel().tolist()) == list(range(11))


class TestVlda:

    def test_matches_closed_form(self, np_rng):
        cov = np.array([[1.0, 0.6], [0.6, 2.0]])
        L = np.linalg.cholesky(cov)
        x0 = np_rng.standard_normal((500, 2)) @ L.T
        x1 = np_rng.standard_normal((500, 2)) @ L.T + np.array([2.0, -1.0])
        clf = fit_vlda(LabeledData.from_classes(x0, x1), ridge_scale=0.0)
        c = np.concatenate([x0 - x0.mean(0), x1 - x1.mean(0)])
        w = np.linalg.solve(c.T @ c / 1000, x1.mean(0) - x0.mean(0))
        cosine = w @ clf.scorer.weights / (np.linalg.norm(w) * np.linalg.norm(clf.scorer.weights))
        assert cosine > 0.999

    def test_equal_means_zero_weights(self, np_rng):
        x = np_rng.standard_normal((20, 3, 2))
        clf = fit_vlda(LabeledData.from_classes(x, x.copy()))
        np.testing.assert_allclose(clf.scorer.weights, 0.0, atol=1e-12)

    def test_woodbury_matches_direct(self, np_rng):
        x0 = np_rng.standard_normal((8, 4, 5))
        x1 = np_rng.standard_normal((7, 4, 5)) + 0.3
        data = LabeledData.from_classes(x0, x1)
        clf = fit_vlda(data, ridge_scale=0.1)
        c = np.concatenate([(x0 - x0.mean(0)).reshape(8, -1), (x1 - x1.mean(0)).reshape(7, -1)])
        lam = 0.1 * np.sum(c ** 2) / 15 / 20
        w = np.linalg.solve(c.T @ c / 15 + lam * np.eye(20), (x1.mean(0) - x0.mean(0)).ravel())
        np.testing.assert_allclose(clf.scorer.weights.ravel(), w, rtol=1e-8, atol=1e-10)

    def test_negative_ridge(self, np_rng):
        x = np_rng.standard_normal((6, 2))
        with pytest.raises(ValueError):
            fit_vlda(LabeledData.from_classes(x, x + 1), ridge_scale=-1.0)


class TestTnn:

    SETTINGS = NnSettings(hidden=8, epochs=5, batch=32, rate=0.01)

    def test_fit_tnn(self, rng):
        _, x0, x1 = _problem(rng, snr=8.0)
        clf = fit_tnn(LabeledData.from_classes(x0, x1), None, self.SETTINGS, rng.split(7))
        assert clf.threshold == 0.5
        assert 1 <= clf.info['best_epoch'] <= 5
        scores = clf.score(x1)
        assert np.all((scores >= 0) & (scores <= 1))

    def test_logit_link_same_decisions(self, rng):
        _, x0, x1 = _problem(rng, snr=8.0)
        data = LabeledData.from_classes(x0, x1)
        a = fit_tnn(data, None, self.SETTINGS, rng.split(7))
        logit_settings = NnSettings(hidden=8, epochs=5, batch=32, rate=0.01, link="logit")
        b = fit_tnn(data, None, logit_settings, rng.split(7))
        assert b.threshold == 0.0
        np.testing.assert_array_equal(a.predict(data.tensors), b.predict(data.tensors))

    def test_pair_deterministic_and_calibrated(self, rng):
        _, x0, x1 = _problem(rng, snr=8.0)
        fit0, calib0 = split_class0(x0, rng.split(3))
        tnn, tnn_np = fit_pair_tnn(fit0, calib0, x1, self.SETTINGS, LEVELS, rng.split(8))
        again = fit_pair_tnn(fit0, calib0, x1, self.SETTINGS, LEVELS, rng.split(8))[1]
        assert tnn.method == "T-NN" and tnn_np.method == "T-NN-NP"
        assert tnn_np.threshold == again.threshold
        scores = tnn_np.scorer.score(calib0)
        assert tnn_np.threshold == np.sort(scores)[tnn_np.calibration.k_star - 1]

    def test_pair_calibration_too_small(self, rng):
        _, x0, x1 = _problem(rng)
        with pytest.raises(CalibrationSetTooSmallError):
            fit_pair_tnn(x0[:100], x0[100:120], x1, self.SETTINGS, LEVELS, rng)
