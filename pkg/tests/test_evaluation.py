import logging
import math

import numpy as np
import pytest

from ltvstream.distributions import make_rng
from ltvstream.evaluation import (
    METRICS_COLUMNS,
    MetricsWriter,
    PrequentialRecord,
    location_fit,
    lppd,
    lppd_pointwise,
    point_errors,
    read_metrics,
)


class TestLppd:
    def test_single_row_single_draw_identity(self):
        assert lppd(np.array([[-1.5]])) == pytest.approx(-1.5)

    def test_mean_in_probability_space(self):
        # two draws with densities 0.2 and 0.4 average to 0.3
        mat = np.log(np.array([[0.2, 0.4]]))
        assert lppd(mat) == pytest.approx(math.log(0.3), abs=1e-12)
        assert lppd(mat) == pytest.approx(-1.2039728, abs=1e-6)

    def test_additivity_over_identical_rows(self):
        row = np.log(np.array([0.2, 0.4]))
        single = lppd(row[None, :])
        double = lppd(np.vstack([row, row]))
        assert double == pytest.approx(2.0 * single, rel=1e-12)

    def test_zero_density_rows_reported(self, caplog):
        mat = np.array([[-1.0], [-np.inf]])
        with caplog.at_level(logging.WARNING):
            total = lppd(mat)
        assert total == -np.inf
        assert any("zero predictive density" in m for m in caplog.messages)

    def test_better_calibrated_density_scores_higher(self):
        # oracle pair: true density vs wrong-location density on the same rows
        rng = make_rng(1)
        y = rng.normal(0.0, 1.0, 400)

        def normal_logpdf(y, mu):
            return -0.5 * (y - mu) ** 2 - 0.5 * math.log(2 * math.pi)

        true_dens = normal_logpdf(y, 0.0)[:, None]
        wrong_dens = normal_logpdf(y, 3.0)[:, None]
        assert lppd(true_dens) > lppd(wrong_dens)

    def test_stabilized_for_extreme_logs(self):
        mat = np.array([[-1200.0, -1201.0]])
        out = lppd(mat)
        assert np.isfinite(out)
        assert out == pytest.approx(-1200.0 + math.log((1 + math.e**-1) / 2), abs=1e-9)


class TestPointErrors:
    def test_exact_forecast(self):
        assert point_errors(np.array([[2.0]]), np.array([2.0])) == (0.0, 0.0)

    def test_symmetric_errors(self):
        mae, rmse = point_errors(np.array([[1.0], [3.0]]), np.array([2.0, 2.0]))
        assert (mae, rmse) == (1.0, 1.0)

    def test_arithmetic(self):
        mae, rmse = point_errors(np.array([[0.0], [4.0]]), np.array([2.0, 2.0]))
        assert mae == pytest.approx(2.0)
        assert rmse == pytest.approx(2.0)

    def test_forecast_is_draw_mean(self):
        draws = np.array([[1.0, 3.0]])  # forecast 2.0
        mae, rmse = point_errors(draws, np.array([2.0]))
        assert mae == 0.0

    def test_row_mismatch(self):
        with pytest.raises(ValueError):
            point_errors(np.zeros((2, 3)), np.zeros(3))


class TestLocationFit:
    def test_constant_draws(self):
        draws = np.full((4, 10), 5.0)
        pred, actual = location_fit(draws, np.full(4, 5.0))
        assert (pred, actual) == (5.0, 5.0)

    def test_median_robust_to_fat_tails(self):
        rng = make_rng(2)
        draws = 3.0 + rng.standard_cauchy((50, 2001))
        pred, _ = location_fit(draws, np.zeros(50))
        assert abs(pred - 3.0) < 0.2
        # the mean of the same draws is not a reliable location signal
        assert abs(float(draws.mean()) - 3.0) > abs(pred - 3.0) or abs(pred - 3.0) < 0.05

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            location_fit(np.zeros((0, 2)), np.array([]))

    def test_no_draws_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            pred, actual = location_fit(np.zeros((3, 0)), np.array([1.0, 2.0, 3.0]))
        assert math.isnan(pred)
        assert actual == pytest.approx(2.0)


class TestMetricsFile:
    def _record(self, i, rows=10, lppd_val=-5.0, mae=1.0, rmse=2.0):
        return PrequentialRecord(
            batch_index=i,
            rows=rows,
            lppd=lppd_val,
            mae=mae,
            rmse=rmse,
            pred_location=3.0,
            actual_mean=3.5,
            divergences=1,
        )

    def test_round_trip_and_schema(self, tmp_path):
        path = tmp_path / "metrics.csv"
        writer = MetricsWriter(path)
        writer.append(self._record(0))
        writer.append(self._record(1, rows=5, lppd_val=-2.0, mae=2.0, rmse=3.0))
        records = read_metrics(path)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(METRICS_COLUMNS)
        assert len(records) == 2
        assert records[0]["lppd"] == -5.0
        assert records[1]["rows"] == 5

    def test_cumulative_columns_match_direct_computation(self, tmp_path):
        # oracle: pool both batches and recompute the running aggregates
        path = tmp_path / "metrics.csv"
        writer = MetricsWriter(path)
        writer.append(self._record(0, rows=10, lppd_val=-5.0, mae=1.0, rmse=2.0))
        writer.append(self._record(1, rows=5, lppd_val=-2.0, mae=2.0, rmse=3.0))
        rec = read_metrics(path)[-1]
        assert rec["lppd_cum"] == pytest.approx((-5.0 - 2.0) / 15.0)
        assert rec["mae_cum"] == pytest.approx((1.0 * 10 + 2.0 * 5) / 15.0)
        assert rec["rmse_cum"] == pytest.approx(
            math.sqrt((2.0**2 * 10 + 3.0**2 * 5) / 15.0)
        )

    def test_timestamp_never_serialized(self, tmp_path):
        path = tmp_path / "metrics.csv"
        writer = MetricsWriter(path)
        writer.append(self._record(0))
        assert "timestamp" not in path.read_text()

    def test_deterministic_bytes(self, tmp_path):
        texts = []
        for name in ("a.csv", "b.csv"):
            path = tmp_path / name
            writer = MetricsWriter(path)
            writer.append(self._record(0, lppd_val=-1.2345678901234567))
            texts.append(path.read_bytes())
        assert texts[0] == texts[1]


def test_lppd_pointwise_shape_validation():
    with pytest.raises(ValueError):
        lppd_pointwise(np.zeros(3))
