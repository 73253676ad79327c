"""伞形阈值校准"""

from fractions import Fraction
from math import comb

import numpy as np
import pytest

from core.calibration import (NpLevels, binomial_tail, min_calibration_size, umbrella_threshold,
                              violation_rate)
from core.errors import CalibrationSetTooSmallError
from core.numerics import RandomSource, std_normal_cdf


def _exact_tail(n, k, alpha):
    a = Fraction(alpha).limit_denominator(1000)
    return float(sum(comb(n, j) * (1 - a) ** j * a ** (n - j) for j in range(k, n + 1)))


class TestBinomialTail:

    def test_edges(self):
        assert binomial_tail(20, 20, 0.1) == pytest.approx(0.9 ** 20, rel=1e-12)
        assert binomial_tail(20, 1, 0.1) == pytest.approx(1 - 0.1 ** 20, rel=1e-12)
        assert binomial_tail(45, 45, 0.05) == pytest.approx(0.09944, abs=5e-6)

    @pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1, 0.5])
    def test_rational_oracle(self, alpha):
        for n in (1, 7, 30, 60):
            tails = [binomial_tail(n, k, alpha) for k in range(1, n + 1)]
            for k, value in enumerate(tails, start=1):
                assert value == pytest.approx(_exact_tail(n, k, alpha), rel=1e-10, abs=1e-300)
            assert all(b <= a for a, b in zip(tails, tails[1:]))

    def test_large_n(self):
        value = binomial_tail(10 ** 6, 950_500, 0.05)
        assert 0.0 <= value <= 1.0
        assert np.isfinite(value)

    @pytest.mark.parametrize("k", [0, 11])
    def test_range(self, k):
        with pytest.raises(ValueError):
            binomial_tail(10, k, 0.05)


class TestMinCalibrationSize:

    @pytest.mark.parametrize("alpha,delta,expected", [(0.05, 0.1, 45), (0.5, 0.5, 1), (0.1, 0.1, 22)])
    def test_values(self, alpha, delta, expected):
        assert min_calibration_size(NpLevels(alpha, delta)) == expected

    def test_levels_range(self):
        with pytest.raises(ValueError):
            NpLevels(0.0, 0.1)
        with pytest.raises(ValueError):
            NpLevels(0.05, 1.0)


class TestUmbrella:

    def test_minimal_size_takes_max(self, np_rng):
        scores = np_rng.standard_normal(45)
        result = umbrella_threshold(scores, NpLevels(0.05, 0.1))
        assert result.k_star == 45
        assert result.threshold == scores.max()
        assert result.tail_at_k == pytest.approx(0.09944, abs=5e-6)
        assert binomial_tail(45, 44, 0.05) > 0.1

    def test_too_small(self):
        with pytest.raises(CalibrationSetTooSmallError) as info:
            umbrella_threshold(np.zeros(44), NpLevels(0.05, 0.1))
        assert info.value.required == 45
        assert info.value.actual == 44

    def test_ties(self):
        scores = np.full(60, 1.5)
        result = umbrella_threshold(scores, NpLevels(0.05, 0.1))
        assert result.threshold == 1.5
        assert not np.any(scores > result.threshold)

    def test_minimality(self, np_rng):
        levels = NpLevels(0.1, 0.05)
        result = umbrella_threshold(np_rng.standard_normal(500), levels)
        assert result.tail_at_k <= levels.delta
        assert binomial_tail(500, result.k_star - 1, 0.1) > levels.delta

    def test_monotone_in_levels(self, np_rng):
        scores = np_rng.standard_normal(300)
        k = lambda a, d: umbrella_threshold(scores, NpLevels(a, d)).k_star
        assert k(0.05, 0.2) <= k(0.05, 0.1) <= k(0.05, 0.01)
        assert k(0.1, 0.1) <= k(0.05, 0.1)

    @pytest.mark.slow
    def test_type1_guarantee(self):
        levels = NpLevels(0.05, 0.1)
        root = RandomSource(2024)
        trials = 2000
        violations = 0
        for i in range(trials):
            threshold = umbrella_threshold(root.split(i).standard_normal(200), levels).threshold
            violations += (1.0 - std_normal_cdf(threshold)) > levels.alpha
        bound = levels.delta + 3 * np.sqrt(levels.delta * (1 - levels.delta) / trials)
        assert violations / trials <= bound


class TestViolationRate:

    def test_values(self):
        assert violation_rate([0.0, 0.0], 0.05) == 0.0
        assert violation_rate([1.0, 1.0, 1.0], 0.05) == 1.0
        assert violation_rate([0.04, 0.06, 0.05], 0.05) == pytest.approx(1 / 3)

    def test_empty(self):
        with pytest.raises(ValueError):
            violation_rate([], 0.05)
