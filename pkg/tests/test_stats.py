import numpy as np
import pytest

from takagi_scan import (
    AllZeroCounts,
    BoxEvent,
    InsufficientData,
    ScanReport,
    count_series_from_reports,
    expected_count_asymptotics,
    fit_power_law,
    quantile_levels,
    quarter_circle_pdf,
)
from takagi_scan.monodromy import (
    KIND_COALESCENCE,
    KIND_COMPOSITE,
    KIND_INCONCLUSIVE,
    KIND_RANK_LOSS,
    count_events,
)


def make_report(n, realization, kinds):
    events = [
        BoxEvent(i, 0, 0, (0.0, 1.0, 0.0, 1.0), kind, pair=1 if kind == KIND_COALESCENCE else 0)
        for i, kind in enumerate(kinds)
    ]
    return ScanReport(
        n=n,
        m=len(kinds) or 1,
        k=1,
        domain=(0.0, 1.0, 0.0, 1.0),
        events=events,
        counts=count_events(events, n),
        options={},
        meta={"realization": realization},
    )


class TestFitPowerLaw:
    def test_exact_quadratic(self):
        fit = fit_power_law([(10, 100.0), (20, 400.0), (40, 1600.0)])
        assert fit.q == pytest.approx(2.0, abs=1e-12)
        assert fit.c == pytest.approx(1.0, abs=1e-12)
        assert fit.residual <= 1e-12
        assert fit.point_count == 3

    def test_exact_linear_with_prefactor(self):
        fit = fit_power_law([(10, 30.0), (20, 60.0), (40, 120.0)])
        assert fit.q == pytest.approx(1.0, abs=1e-12)
        assert fit.c == pytest.approx(3.0, abs=1e-12)

    def test_recovers_own_synthetic_data(self):
        c, q = 0.731, 1.87
        series = [(n, c * n**q) for n in (8, 12, 18, 27, 40)]
        fit = fit_power_law(series)
        assert fit.c == pytest.approx(c, abs=1e-10)
        assert fit.q == pytest.approx(q, abs=1e-10)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(3)
        series = [(n, float(rng.integers(5, 50))) for n in (10, 15, 22, 30)]
        lam = 7.5
        base = fit_power_law(series)
        scaled = fit_power_law([(n, lam * c) for n, c in series])
        assert scaled.q == pytest.approx(base.q, abs=1e-12)
        assert scaled.c == pytest.approx(lam * base.c, rel=1e-12)

    def test_zero_rows_excluded_and_reported(self):
        fit = fit_power_law([(10, 100.0), (20, 400.0), (15, 0.0), (40, 1600.0)])
        assert fit.q == pytest.approx(2.0, abs=1e-12)
        assert fit.excluded == 1
        assert fit.point_count == 3

    def test_errors(self):
        with pytest.raises(InsufficientData):
            fit_power_law([])
        with pytest.raises(InsufficientData):
            fit_power_law([(10, 5.0), (10, 7.0)])
        with pytest.raises(AllZeroCounts):
            fit_power_law([(10, 0.0), (20, 0.0)])


class TestCountSeries:
    def test_rows_from_reports(self):
        reports = [
            make_report(4, 0, [KIND_COALESCENCE, KIND_COALESCENCE, KIND_RANK_LOSS]),
            make_report(4, 1, [KIND_COMPOSITE, KIND_INCONCLUSIVE]),
            make_report(8, 0, [KIND_COALESCENCE]),
        ]
        rows = count_series_from_reports(reports)
        assert [(r.n, r.realization) for r in rows] == [(4, 0), (4, 1), (8, 0)]
        assert rows[0].coalescence == 2
        assert rows[0].rank_loss == 1
        assert rows[0].inconclusive == 0
        # undecoded composite boxes pool with inconclusive, never with events
        assert rows[1].coalescence == 0
        assert rows[1].inconclusive == 2


class TestAsymptotics:
    def test_frozen_oracle_total(self):
        # quadrature + root-find oracle for n=8, p=2
        out = expected_count_asymptotics(8, 2.0)
        assert out.total == pytest.approx(8.807433630487385, abs=1e-9)
        assert out.per_pair.shape == (7,)

    def test_rank_loss_rate_closed_form(self):
        # the density at zero is sqrt(2n)/pi, so the p=2 rate is 2n/pi^2
        out = expected_count_asymptotics(10, 2.0)
        assert out.rank_loss == pytest.approx(20.0 / np.pi**2, rel=1e-12)

    def test_per_pair_values_match_levels(self):
        n = 6
        out = expected_count_asymptotics(n, 2.0)
        levels = quantile_levels(n)
        expected = [quarter_circle_pdf(n, levels[k]) ** 2 for k in range(1, n)]
        np.testing.assert_allclose(out.per_pair, expected, rtol=1e-12)

    def test_quadratic_total_ratio(self):
        # total ~ n^2 for p = 2: doubling n multiplies the total by ~4
        for n in (64, 128, 256):
            r = expected_count_asymptotics(2 * n, 2.0).total / expected_count_asymptotics(n, 2.0).total
            assert abs(r - 4.0) <= 0.1

    def test_rank_loss_rate_scales_linearly(self):
        r = expected_count_asymptotics(128, 2.0).rank_loss / expected_count_asymptotics(64, 2.0).rank_loss
        assert r == pytest.approx(2.0, rel=1e-12)

    def test_normalized_total_converges_monotonically(self):
        gaps = []
        prev = None
        for n in (8, 16, 32, 64, 128, 256, 512):
            val = expected_count_asymptotics(n, 2.0).total / n**2
            if prev is not None:
                gaps.append(val - prev)
            prev = val
        assert all(g > 0 for g in gaps)  # increasing toward the limit
        assert all(abs(b) < abs(a) for a, b in zip(gaps, gaps[1:]))  # shrinking
