import math

import numpy as np
import pytest
from scipy import integrate

from ltvstream.distributions import (
    logpdf_half_cauchy,
    logpdf_normal,
    logpdf_student_t,
    make_rng,
    sample_student_t,
    sample_truncated,
    split_rng,
)


class TestLogpdfNormal:
    def test_standard_at_zero(self):
        assert logpdf_normal(0.0, 0.0, 1.0) == pytest.approx(-0.9189385, abs=1e-6)

    def test_formula_oracle(self):
        # direct evaluation of -(x-mu)^2/(2 s^2) - log s - log sqrt(2 pi)
        x, mu, s = 1.0, 1.0, 2.0
        expected = -0.5 * ((x - mu) / s) ** 2 - math.log(s) - 0.5 * math.log(2 * math.pi)
        assert logpdf_normal(x, mu, s) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(-1.6120857, abs=1e-6)

    def test_mode_value_any_location(self):
        for mu, s in [(-3.0, 0.5), (7.0, 4.0)]:
            assert logpdf_normal(mu, mu, s) == pytest.approx(
                -math.log(s) - 0.5 * math.log(2 * math.pi), abs=1e-12
            )


class TestLogpdfStudentT:
    def test_cauchy_at_mode(self):
        assert logpdf_student_t(0.0, 0.0, 1.0, 1.0) == pytest.approx(
            math.log(1.0 / math.pi), abs=1e-9
        )

    def test_cauchy_at_one_formula_oracle(self):
        expected = math.log(1.0 / (math.pi * (1.0 + 1.0)))
        assert logpdf_student_t(1.0, 0.0, 1.0, 1.0) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(-1.8378771, abs=1e-6)

    def test_gaussian_limit(self):
        assert logpdf_student_t(0.0, 0.0, 1.0, 1e6) == pytest.approx(
            float(logpdf_normal(0.0, 0.0, 1.0)), abs=1e-3
        )
        # and off-mode
        assert logpdf_student_t(1.7, 0.3, 2.0, 1e6) == pytest.approx(
            float(logpdf_normal(1.7, 0.3, 2.0)), abs=1e-3
        )

    @pytest.mark.parametrize("nu", [1.0, 2.0, 5.0, 30.0])
    def test_integrates_to_one(self, nu):
        total, _ = integrate.quad(
            lambda x: math.exp(float(logpdf_student_t(x, 0.5, 1.3, nu))),
            -np.inf,
            np.inf,
        )
        assert total == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("nu", [1.0, 5.0, 30.0])
    def test_unimodal_decreasing_from_center(self, nu):
        xs = 2.0 + np.linspace(0.0, 50.0, 400)  # right of mu=2
        vals = logpdf_student_t(xs, 2.0, 1.0, nu)
        assert np.all(np.diff(vals) < 0)
        vals_left = logpdf_student_t(2.0 - (xs - 2.0), 2.0, 1.0, nu)
        assert np.allclose(vals, vals_left)


class TestLogpdfHalfCauchy:
    def test_mode(self):
        assert logpdf_half_cauchy(0.0, 1.0) == pytest.approx(
            math.log(2.0 / math.pi), abs=1e-9
        )
        assert float(logpdf_half_cauchy(0.0, 1.0)) == pytest.approx(-0.4515827, abs=1e-6)

    def test_formula_oracle_at_one(self):
        expected = math.log(2.0 / (math.pi * 1.0 * (1.0 + 1.0)))
        assert logpdf_half_cauchy(1.0, 1.0) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(-1.1447299, abs=1e-6)

    def test_out_of_support(self):
        assert logpdf_half_cauchy(-0.5, 1.0) == -np.inf

    def test_integrates_to_one(self):
        total, _ = integrate.quad(
            lambda x: math.exp(float(logpdf_half_cauchy(x, 2.0))), 0.0, np.inf
        )
        assert total == pytest.approx(1.0, abs=1e-3)


class TestSampling:
    def test_gaussian_limit_moments(self):
        rng = make_rng(123)
        draws = sample_student_t(0.0, 1.0, 1e6, rng, size=100_000)
        assert abs(draws.mean()) < 0.02
        assert abs(draws.std() - 1.0) < 0.02

    def test_cauchy_quartiles(self):
        # Cauchy(0,1): median 0, quartiles at +-1 -> IQR 2
        rng = make_rng(7)
        draws = sample_student_t(0.0, 1.0, 1.0, rng, size=100_000)
        assert abs(np.median(draws)) < 0.02
        q25, q75 = np.percentile(draws, [25, 75])
        assert abs((q75 - q25) - 2.0) < 0.05

    def test_reproducible_streams(self):
        a = sample_student_t(1.0, 2.0, 4.0, make_rng(99), size=1000)
        b = sample_student_t(1.0, 2.0, 4.0, make_rng(99), size=1000)
        assert np.array_equal(a, b)

    def test_split_streams_differ(self):
        rng = make_rng(5)
        children = split_rng(rng, 2)
        a = children[0].standard_normal(100)
        b = children[1].standard_normal(100)
        assert not np.array_equal(a, b)


class TestSampleTruncated:
    def test_no_truncation_matches_plain_sampler(self):
        a, ex = sample_truncated(0.0, 1.0, 30.0, -np.inf, make_rng(3), size=500)
        b = sample_student_t(0.0, 1.0, 30.0, make_rng(3), size=500)
        assert ex == 0
        assert np.array_equal(a, b)

    def test_mild_truncation_keeps_mean(self):
        # truncation mass below 0 for t(5,1,nu=30) is ~2e-7: negligible
        draws, ex = sample_truncated(5.0, 1.0, 30.0, 0.0, make_rng(11), size=100_000)
        assert np.all(draws >= 0.0)
        assert ex == 0
        assert abs(draws.mean() - 5.0) < 0.02

    def test_half_cauchy_median(self):
        # |Cauchy(0,1)| has median tan(pi/4) = 1
        draws, _ = sample_truncated(0.0, 1.0, 1.0, 0.0, make_rng(13), size=100_000)
        assert np.all(draws >= 0.0)
        assert abs(np.median(draws) - 1.0) < 0.05

    def test_exhaustion_clamps_and_counts(self):
        # nearly all mass below the bound: exhaustion is the norm
        draws, ex = sample_truncated(-50.0, 0.1, 30.0, 0.0, make_rng(17), max_attempts=3, size=200)
        assert np.all(draws >= 0.0)
        assert ex > 150

    def test_rejects_bad_max_attempts(self):
        with pytest.raises(ValueError):
            sample_truncated(0.0, 1.0, 1.0, 0.0, make_rng(1), max_attempts=0)
