import math

import mpmath as mp
import numpy as np
import pytest

from treeboost.stats import StatsError, t_density, t_two_tailed_p, ttest_unpaired


def mp_two_tailed(t: float, df: int) -> float:
    """Independent oracle: high-precision quadrature of the t density."""
    with mp.workdps(40):
        norm = mp.gamma((df + 1) / mp.mpf(2)) / (
            mp.sqrt(df * mp.pi) * mp.gamma(df / mp.mpf(2))
        )
        f = lambda x: norm * (1 + x * x / df) ** (-(df + 1) / mp.mpf(2))
        return float(2 * mp.quad(f, [abs(t), mp.inf]))


class TestTDistribution:
    @pytest.mark.parametrize("df,t,expected_p", [
        (4, 2.776, 0.05),     # textbook two-tailed 5% quantile
        (1, 1.0, 0.5),        # Cauchy: P(|T| > 1) is exactly 1/2
        (10, 2.228, 0.05),
        (2, 4.303, 0.05),
    ])
    def test_known_quantiles(self, df, t, expected_p):
        assert t_two_tailed_p(t, df) == pytest.approx(expected_p, abs=2e-3)

    @pytest.mark.parametrize("df", [1, 2, 4, 9, 30])
    @pytest.mark.parametrize("t", [0.3, 1.2, 2.5, 3.2423, 6.0])
    def test_matches_high_precision_oracle(self, df, t):
        assert t_two_tailed_p(t, df) == pytest.approx(mp_two_tailed(t, df), rel=1e-8)

    def test_reported_statistic_value(self):
        # a two-tailed CDF at t=3.2423, df=4 sits near 0.032, not 0.0118
        p = t_two_tailed_p(3.2423, 4)
        assert p == pytest.approx(mp_two_tailed(3.2423, 4), rel=1e-8)
        assert 0.02 < p < 0.04

    def test_density_integrates_to_one(self):
        from scipy.integrate import quad

        total, _ = quad(t_density, -50, 50, args=(4,), limit=300)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_zero_statistic(self):
        assert t_two_tailed_p(0.0, 5) == 1.0

    def test_bad_df(self):
        with pytest.raises(StatsError):
            t_two_tailed_p(1.0, 0)


class TestTTest:
    def test_identical_nonconstant_sequences(self):
        result = ttest_unpaired([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert result.t_stat == 0.0
        assert result.p_value == 1.0
        assert result.df == 4

    def test_zero_pooled_variance_is_an_error(self):
        with pytest.raises(StatsError, match="zero pooled variance"):
            ttest_unpaired([1.0, 1.0, 1.0], [0.0, 0.0, 0.0])

    def test_constant_baseline_with_varying_scores(self):
        scores = [0.41, 0.44, 0.40, 0.46, 0.42]
        result = ttest_unpaired(scores, [0.05] * 5)
        assert result.p_value < 1e-6
        assert result.t_stat > 0

    def test_pooled_variance_formula(self):
        a = np.array([1.0, 2.0, 3.0, 4.0])
        b = np.array([2.0, 4.0])
        result = ttest_unpaired(a, b)
        sp2 = (3 * a.var(ddof=1) + 1 * b.var(ddof=1)) / 4
        expected_t = (a.mean() - b.mean()) / math.sqrt(sp2 * (1 / 4 + 1 / 2))
        assert result.t_stat == pytest.approx(expected_t)
        assert result.df == 4

    def test_short_sequences_rejected(self):
        with pytest.raises(StatsError):
            ttest_unpaired([1.0], [1.0, 2.0])

    def test_symmetry(self):
        r1 = ttest_unpaired([1.0, 2.0, 3.0], [4.0, 5.0, 6.5])
        r2 = ttest_unpaired([4.0, 5.0, 6.5], [1.0, 2.0, 3.0])
        assert r1.t_stat == pytest.approx(-r2.t_stat)
        assert r1.p_value == pytest.approx(r2.p_value)
