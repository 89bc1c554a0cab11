import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advhopf import hetero
from advhopf.errors import HypothesisViolated, SignViolation
from advhopf.hetero import (compare_advection, compare_scale, h0_derivatives,
                            monotonicity_scan, ordering_over_r, proposition_integrand,
                            tau0_asymptotic, tau0_exact, tau0_sweep)
from advhopf.model import GrowthSpec

from conftest import make_params

LIN = GrowthSpec("linear")
SINE = GrowthSpec("sine_peak")


class TestTau0:
    @pytest.mark.parametrize("alpha,L", [(0.0, 1.0), (2.0, 0.7), (-1.0, 2.5)])
    def test_constant_growth_asymptotic(self, alpha, L):
        p = make_params(alpha=alpha, L=L, growth="constant", m0=2.0, r=0.05)
        assert tau0_asymptotic(p) == pytest.approx(math.pi / (2 * 0.05 * 2.0), rel=1e-12)

    def test_linear_zero_advection_value(self):
        p = make_params(alpha=0.0, r=0.1, n_cells=64)
        assert tau0_asymptotic(p) == pytest.approx(10 * math.pi, rel=1e-12)
        assert 10 * math.pi == pytest.approx(31.416, abs=1e-3)

    def test_exact_over_asymptotic_tends_to_one(self):
        p = make_params(alpha=1.0, n_cells=64)
        gaps = [abs(tau0_exact(p.with_(r=r)) / tau0_asymptotic(p.with_(r=r)) - 1)
                for r in (0.1, 0.05, 0.025)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 1e-2


class TestOrderings:
    def test_linear_advection_lowers_threshold(self):
        v = compare_advection(LIN, 1.0, 0.0, 1.0, 0.05, n_cells=64)
        assert v.holds and v.tau_first < v.tau_second

    def test_decreasing_profile_advection_raises_threshold(self):
        v = compare_advection(GrowthSpec("linear_decreasing", m0=2.0), 1.0, 0.0, 1.0, 0.05,
                              n_cells=64)
        assert v.holds and v.tau_first > v.tau_second

    def test_constant_growth_no_leading_order_change(self):
        v = compare_advection(GrowthSpec("constant"), 1.0, 0.0, 1.0, 0.05)
        assert v.holds
        assert abs(v.tau_first - v.tau_second) / v.tau_first < 1e-6

    def test_proposition_scale_ordering(self):
        v = compare_scale(LIN, 2.0, 1.0, 0.0, 0.05, n_cells=64)
        assert v.holds and v.tau_first < v.tau_second

    def test_sine_scale_ordering(self):
        v = compare_scale(SINE, 1.5, 1.0, 4.0, 0.05, mode="sine", n_cells=64)
        assert v.holds and v.tau_first > v.tau_second

    def test_sine_advection_ordering(self):
        v = compare_advection(SINE, 5.0, 4.0, 1.0, 0.05, n_cells=64)
        assert v.holds and v.tau_first > v.tau_second

    def test_equal_sizes(self):
        v = compare_scale(LIN, 1.0, 1.0, 0.5, 0.05, n_cells=32)
        assert v.sign == 0 and v.holds

    def test_hypothesis_checks(self):
        with pytest.raises(HypothesisViolated):
            compare_scale(SINE, 2.0, 1.0, 0.0, 0.05, mode="proposition")
        with pytest.raises(HypothesisViolated):
            compare_scale(GrowthSpec("constant"), 2.0, 1.0, 0.0, 0.05, mode="proposition")
        with pytest.raises(HypothesisViolated):
            compare_scale(SINE, 1.5, 1.0, 2.0, 0.05, mode="sine")
        with pytest.raises(HypothesisViolated):
            compare_advection(SINE, 2.0, 1.0, 1.0, 0.05)

    def test_ordering_ladder_reports_smallest_r(self):
        verdicts, smallest = ordering_over_r(compare_advection, growth=LIN, alpha1=1.0,
                                             alpha2=0.0, L=1.0, n_cells=32)
        assert all(v.holds for v in verdicts)
        assert smallest == 0.025

    @settings(max_examples=30, deadline=None)
    @given(alpha=st.floats(-3, 3), L=st.floats(0.2, 4))
    def test_proposition_integrand_positive(self, alpha, L):
        assert proposition_integrand(LIN, alpha, L) > 0


class TestMonotonicity:
    def test_linear_signs_and_cauchy_schwarz(self):
        table = monotonicity_scan(LIN, np.linspace(-2, 2, 21), np.linspace(0.5, 3, 21))
        assert table.shape == (21, 21)
        assert all(c["sign_ok"] for c in table.cells)
        assert all(c["dh0_dalpha"] > 0 for c in table.cells)
        assert all(c["cauchy_schwarz_gap"] > 0 for c in table.cells)

    def test_decreasing_signs(self):
        table = monotonicity_scan(GrowthSpec("linear_decreasing", m0=4.0),
                                  np.linspace(-2, 2, 9), np.linspace(0.5, 3, 9))
        assert all(c["dh0_dalpha"] < 0 and c["dh0_dL"] < 0 for c in table.cells)

    def test_sine_signs_only_where_claimed(self):
        table = monotonicity_scan(SINE, np.linspace(0.5, 6, 12), np.linspace(0.5, 3, 12))
        for c in table.cells:
            assert c["asserted"] == (c["alpha"] * c["L"] > math.pi)
            if c["asserted"]:
                assert c["dh0_dalpha"] < 0 and c["dh0_dL"] < 0

    def test_constant_derivatives_vanish(self):
        table = monotonicity_scan(GrowthSpec("constant", m0=1.3), [-1.0, 0.5], [0.7, 2.0])
        for c in table.cells:
            assert abs(c["dh0_dalpha"]) <= 1e-10 and abs(c["dh0_dL"]) <= 1e-10

    def test_derivatives_match_closed_form(self):
        # d h0 / d alpha for m = x equals the weighted variance of x
        alpha, L = 0.7, 1.3
        da, _ = h0_derivatives(LIN, alpha, L)
        from scipy.integrate import quad
        Z = quad(lambda x: math.exp(alpha * x), 0, L)[0]
        m1 = quad(lambda x: x * math.exp(alpha * x), 0, L)[0] / Z
        m2 = quad(lambda x: x * x * math.exp(alpha * x), 0, L)[0] / Z
        assert da == pytest.approx(m2 - m1**2, rel=1e-7)

    def test_violation_raises(self, monkeypatch):
        # claim increasing h0 where the sine profile's h0 actually decreases
        monkeypatch.setattr(hetero, "_expected_sign", lambda g, a, L: 1)
        with pytest.raises(SignViolation) as exc:
            monotonicity_scan(SINE, [4.0], [1.5], workers=1)
        assert exc.value.context["cells"] == [(4.0, 1.5)]
        table = monotonicity_scan(SINE, [4.0], [1.5], workers=1, raise_on_violation=False)
        assert not table.cells[0]["sign_ok"]

    def test_parallel_matches_serial(self):
        a, L = np.linspace(-1, 1, 4), np.linspace(0.5, 2, 3)
        s = monotonicity_scan(LIN, a, L, workers=1)
        p = monotonicity_scan(LIN, a, L, workers=2)
        assert s.cells == p.cells

    def test_grids_nonempty(self):
        with pytest.raises(ValueError):
            monotonicity_scan(LIN, [], [1.0])


class TestSweepTable:
    def test_tau0_sweep_and_exports(self, tmp_path):
        table = tau0_sweep(LIN, [0.0, 1.0], [1.0], [0.05, 0.025], n_cells=32, workers=1)
        assert table.shape == (2, 1, 2)
        assert all(c["status"] == "ok" for c in table.cells)
        for c in table.cells:
            assert 0.8 <= c["sandwich"] <= 1.2
        by_r = {}
        for c in table.cells:
            by_r.setdefault(c["alpha"], {})[c["r"]] = abs(c["sandwich"] - 1)
        for d in by_r.values():
            assert d[0.025] < d[0.05]
        assert table.claims["sandwich_0.8_1.2"]
        table.to_csv(tmp_path / "s.csv")
        table.write_summary(tmp_path / "s.json")
        assert (tmp_path / "s.csv").read_text().startswith("alpha,L,r,h0")
        import json
        assert json.loads((tmp_path / "s.json").read_text())["n_failed"] == 0

    def test_default_workers_from_environment(self, monkeypatch):
        monkeypatch.setenv(hetero.WORKERS_ENV, "3")
        assert hetero.default_workers() == 3
        monkeypatch.delenv(hetero.WORKERS_ENV)
        assert hetero.default_workers() >= 1
