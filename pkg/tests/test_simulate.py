import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import find_peaks

from advhopf import oracles, simulate
from advhopf.discretize import assemble
from advhopf.errors import BlowUp
from advhopf.simulate import (HistoryBuffer, IMEXStepper, classify, net_envelope_rate,
                              oscillation_metrics, perturbed_history, run, simulation_onset,
                              step_imex)
from advhopf.steady import solve_steady

from conftest import make_params


@pytest.fixture(scope="module")
def homogeneous():
    p = make_params(alpha=0.0, growth="constant", r=0.1, n_cells=16)
    ops = assemble(p)
    return p, ops, np.ones(ops.n), math.pi / (2 * p.r)


class TestHistory:
    def test_length_and_oldest_entry(self):
        buf = HistoryBuffer.from_function(lambda s: np.full(3, s), 2.0, 8, 3)
        assert len(buf) == 9
        assert buf.delayed[0] == -2.0 and buf.current[0] == 0.0
        buf.push(np.full(3, 0.25))
        assert len(buf) == 9
        assert buf.delayed[0] == pytest.approx(-1.75)

    def test_zero_delay(self):
        buf = HistoryBuffer.from_function(lambda s: np.ones(3), 0.0, 8, 3)
        assert len(buf) == 1 and buf.delayed is buf.current


class TestStep:
    def test_equilibrium_preserved(self, linear_hopf):
        ops, _, hopf = linear_hopf
        p = make_params().with_(tau=hopf.tau0)
        dt = p.tau / 256
        buf = HistoryBuffer([hopf.u_r] * 257)
        stepper = IMEXStepper(p, ops, dt)
        for _ in range(100):
            buf.push(stepper.step(buf))
        assert np.max(np.abs(buf.current - hopf.u_r)) <= 1e-8

    def test_zero_history_stays_zero(self):
        p = make_params(tau=5.0)
        ops = assemble(p)
        tr = run(p, ops, np.zeros(ops.n), lambda s: np.zeros(ops.n), 50.0)
        assert np.all(tr.final_state == 0.0)

    def test_single_step_helper_matches_stepper(self, rng):
        p = make_params(r=0.3, n_cells=16)
        ops = assemble(p)
        u0, ud = 0.5 + rng.uniform(size=(2, ops.n))
        hist = HistoryBuffer([ud, u0])
        new, f = step_imex(u0, hist, p, ops, 0.1)
        stepper = IMEXStepper(p, ops, 0.1)
        np.testing.assert_allclose(new, stepper.step(HistoryBuffer([ud, u0])), rtol=1e-14)
        new2, _ = step_imex(new, HistoryBuffer([u0, new]), p, ops, 0.1, f_prev=f)
        assert np.all(np.isfinite(new2))

    def test_blow_up_detected(self):
        p = make_params(r=1.0, n_cells=8)
        ops = assemble(p)
        with pytest.raises(BlowUp):
            step_imex(np.full(ops.n, 1e7), HistoryBuffer([np.full(ops.n, 1e7)]), p, ops, 0.1)


class TestAgainstScalarIntegrator:
    def test_constant_history_trajectory(self, homogeneous):
        p, ops, u, tau0 = homogeneous
        tau = 0.9 * tau0
        times = np.arange(0.0, 50.0 + 1e-9, 5.0)
        tr = run(p.with_(tau=tau), ops, u, perturbed_history(u, ops, 0.01, "const"), 50.0,
                 snapshot_times=times)
        t_act = [tr.snapshot_actual[t] for t in times]
        _, ref = oracles.integrate_delayed_logistic(p.r, tau, lambda s: 1.01, max(t_act),
                                                    t_eval=t_act)
        for i, t in enumerate(times):
            assert np.ptp(tr.snapshots[t]) <= 1e-13
            assert abs(tr.snapshots[t][0] - ref[i]) <= 1e-6

    def test_limit_cycle_period(self, homogeneous):
        p, ops, u, tau0 = homogeneous
        tau = 1.1 * tau0
        t_end = 6000.0
        tr = run(p.with_(tau=tau), ops, u, perturbed_history(u, ops, 0.01, "const"), t_end)
        assert tr.verdict == "oscillating"
        t = np.linspace(0.5 * t_end, t_end, 40001)
        _, y = oracles.integrate_delayed_logistic(p.r, tau, lambda s: 1.01, t_end, t_eval=t)
        peaks, _ = find_peaks(y)
        ref_period = float(np.mean(np.diff(t[peaks[-6:]])))
        assert tr.period == pytest.approx(ref_period, rel=2e-3)


class TestConvergenceAndPositivity:
    def test_second_order_in_time(self, linear_hopf):
        ops, _, hopf = linear_hopf
        p = make_params().with_(tau=1.05 * hopf.tau0)
        eta = perturbed_history(hopf.u_r, ops, 0.05)
        finals = [run(p, ops, hopf.u_r, eta, 3 * p.tau, M_delay=M).final_state
                  for M in (32, 64, 128, 256)]
        d = [np.max(np.abs(a - b)) for a, b in zip(finals, finals[1:])]
        assert d[0] / d[1] >= 3.2 and d[1] / d[2] >= 3.2

    @pytest.mark.parametrize("fac", [0.9, 1.1])
    def test_positive_states(self, linear_hopf, fac):
        ops, _, hopf = linear_hopf
        p = make_params().with_(tau=fac * hopf.tau0)
        tr = run(p, ops, hopf.u_r, perturbed_history(hopf.u_r, ops), 3000.0,
                 snapshot_times=np.linspace(0, 3000, 31))
        assert all(np.all(s > 0) for s in tr.snapshots.values())
        assert np.all(np.isfinite(tr.norms))

    def test_negative_history_rejected(self):
        p = make_params(tau=1.0, n_cells=8)
        ops = assemble(p)
        with pytest.raises(ValueError):
            run(p, ops, np.ones(ops.n), lambda s: -np.ones(ops.n), 1.0)

    def test_zero_delay_needs_dt(self):
        p = make_params(n_cells=8)
        ops = assemble(p)
        with pytest.raises(ValueError):
            run(p, ops, np.ones(ops.n), lambda s: np.ones(ops.n), 1.0)


class TestClassification:
    def test_decay_below_threshold(self, homogeneous):
        p, ops, u, tau0 = homogeneous
        tr = run(p.with_(tau=0.9 * tau0), ops, u, perturbed_history(u, ops, 0.01, "const"),
                 3000.0)
        assert tr.verdict == "decayed"
        assert tr.final_distance_to_steady < 1e-6

    def test_synthetic_oscillation(self):
        t = np.linspace(0, 200, 20001)
        y = 1 + 0.3 * np.sin(2 * np.pi * t / 7.0)
        pk_t, pk_a = oscillation_metrics(t, y)
        verdict, amp, period, _ = classify(t, y, np.abs(y - 1), pk_t, pk_a)
        assert verdict == "oscillating"
        assert amp == pytest.approx(0.6, rel=1e-6)
        assert period == pytest.approx(7.0, rel=1e-6)

    def test_growing_oscillation_is_indeterminate(self):
        t = np.linspace(0, 200, 20001)
        y = 1 + 0.01 * np.exp(t / 40) * np.sin(2 * np.pi * t / 7.0)
        pk_t, pk_a = oscillation_metrics(t, y)
        verdict, *_ = classify(t, y, np.abs(y - 1), pk_t, pk_a)
        assert verdict == "indeterminate"
        assert net_envelope_rate(pk_t, pk_a) == pytest.approx(1 / 40, rel=1e-2)

    def test_tiny_oscillation_is_not_oscillating(self):
        t = np.linspace(0, 200, 20001)
        y = 1 + 1e-5 * np.sin(2 * np.pi * t / 7.0)
        pk_t, pk_a = oscillation_metrics(t, y)
        verdict, *_ = classify(t, y, np.full_like(t, 1e-5), pk_t, pk_a)
        assert verdict == "indeterminate"

    @settings(max_examples=25, deadline=None)
    @given(period=st.floats(2.0, 20.0), phase=st.floats(0, 2 * math.pi))
    def test_peak_interpolation_recovers_period(self, period, phase):
        t = np.linspace(0, 30 * period, 6001)
        y = np.cos(2 * np.pi * t / period + phase)
        pk_t, _ = oscillation_metrics(t, y)
        assert np.mean(np.diff(pk_t)) == pytest.approx(period, rel=1e-4)


def test_onset_bisection_homogeneous(homogeneous):
    p, ops, u, tau0 = homogeneous
    onset = simulation_onset(p, ops, u, 0.85 * tau0, 1.15 * tau0, shape="const")
    assert onset == pytest.approx(tau0, rel=0.02)


def test_exports(tmp_path, homogeneous):
    p, ops, u, tau0 = homogeneous
    tr = run(p.with_(tau=tau0), ops, u, perturbed_history(u, ops, 0.01, "const"), 100.0,
             snapshot_times=[0.0, 50.0])
    tr.to_csv(tmp_path / "t.csv")
    tr.snapshots_to_csv(tmp_path / "s.csv", ops.x)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,norm,amplitude_envelope"
    head = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert head == "x,u_t=0.0,u_t=50.0"
