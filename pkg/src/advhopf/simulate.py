"""Time stepping of the delayed nonlocal equation and oscillation diagnostics.

Crank–Nicolson treats the diffusion ``e^{-αx} P0``; two-step Adams–Bashforth
treats the reaction ``r u (m - Kmat u(t - tau))``. The step is ``tau /
M_delay`` so the delayed state is a stored grid state, never interpolated.

Diagnostics use the scalar series ``‖u(·, t)‖`` (trapezoid L2 norm). To first
order it oscillates at the critical frequency; ``‖u - u_r‖`` would oscillate
at twice that frequency and is only used for the decay test.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .discretize import DiscreteOperators, check_length
from .errors import BlowUp

DEFAULT_M_DELAY = 256
BLOWUP_LIMIT = 1e6
DECAY_TOL = 1e-6
AMPLITUDE_AGREEMENT = 0.05
AMPLITUDE_FLOOR = 1e-4
N_PEAKS = 5


class HistoryBuffer:
    """States at ``t - tau, t - tau + dt, ..., t``; oldest first."""

    def __init__(self, states):
        states = [np.array(s, dtype=float) for s in states]
        if not states:
            raise ValueError("history needs at least one state")
        self._buf = deque(states, maxlen=len(states))

    def __len__(self):
        return len(self._buf)

    @property
    def delayed(self) -> np.ndarray:
        return self._buf[0]

    @property
    def current(self) -> np.ndarray:
        return self._buf[-1]

    def push(self, state) -> None:
        self._buf.append(state)

    @classmethod
    def from_function(cls, eta, tau, M_delay, n):
        if tau == 0:
            s = [0.0]
        else:
            s = [-tau + k * tau / M_delay for k in range(M_delay + 1)]
        states = [np.asarray(eta(sk), dtype=float) for sk in s]
        for st in states:
            check_length(st, n)
        return cls(states)


class IMEXStepper:
    """Crank–Nicolson / AB2 step with a prefactored implicit matrix."""

    def __init__(self, params, ops: DiscreteOperators, dt: float):
        self.r = float(params.r)
        self.ops = ops
        self.dt = float(dt)
        A = ops.P0 / ops.e[:, None]
        eye = np.eye(ops.n)
        self.lu = sla.lu_factor(eye - 0.5 * dt * A)
        self.explicit = eye + 0.5 * dt * A
        self.f_prev = None

    def reaction(self, u, u_delayed):
        return self.r * u * (self.ops.growth - self.ops.K(u_delayed))

    def step(self, history: HistoryBuffer) -> np.ndarray:
        u = history.current
        f = self.reaction(u, history.delayed)
        if self.f_prev is None:
            incr = self.dt * f
        else:
            incr = self.dt * (1.5 * f - 0.5 * self.f_prev)
        self.f_prev = f
        return sla.lu_solve(self.lu, self.explicit @ u + incr, check_finite=False)


def step_imex(state, history: HistoryBuffer, params, ops: DiscreteOperators, dt, f_prev=None):
    """One step from ``state``; returns ``(new_state, f)`` for the next AB2 step."""
    stepper = IMEXStepper(params, ops, dt)
    stepper.f_prev = f_prev
    buf = HistoryBuffer([history.delayed, state]) if len(history) > 1 else HistoryBuffer([state])
    new = stepper.step(buf)
    if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > BLOWUP_LIMIT:
        raise BlowUp("solution exceeded the blow-up limit")
    return new, stepper.f_prev


def perturbed_history(u_r, ops: DiscreteOperators, eps=0.01, shape="cos"):
    """Constant-in-time history ``u_r (1 + eps * shape(x))``.

    ``shape`` is ``"cos"`` for ``cos(pi x / L)`` or ``"const"`` for 1.
    """
    if shape == "cos":
        prof = np.cos(np.pi * ops.x / ops.grid.L)
    elif shape == "const":
        prof = np.ones(ops.n)
    else:
        raise ValueError(f"unknown perturbation shape {shape!r}")
    field_ = np.asarray(u_r, dtype=float) * (1.0 + eps * prof)
    return lambda s: field_


@dataclass
class SimTrace:
    times: np.ndarray
    norms: np.ndarray
    envelope: np.ndarray
    snapshots: dict
    verdict: str
    amplitude: float
    period: float
    final_distance_to_steady: float
    peak_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    peak_amplitudes: np.ndarray = field(default_factory=lambda: np.zeros(0))
    growth_rate: float = math.nan
    final_state: np.ndarray | None = None
    snapshot_actual: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "norm", "amplitude_envelope"])
            for t, nrm, env in zip(self.times, self.norms, self.envelope):
                out.writerow([repr(float(t)), repr(float(nrm)), repr(float(env))])

    def snapshots_to_csv(self, path, x) -> None:
        keys = sorted(self.snapshots)
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["x"] + [f"u_t={t!r}" for t in keys])
            for j, xj in enumerate(x):
                out.writerow([repr(float(xj))] + [repr(float(self.snapshots[t][j])) for t in keys])


def _extrema(t, y, kind):
    """Quadratically interpolated local maxima (``kind=1``) or minima (``-1``)."""
    s = kind * y
    idx = np.nonzero((s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:]))[0] + 1
    times, vals = [], []
    for i in idx:
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        denom = y0 - 2 * y1 + y2
        off = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        off = min(max(off, -0.5), 0.5)
        h = t[i + 1] - t[i]
        times.append(t[i] + off * h)
        vals.append(y1 - 0.25 * (y0 - y2) * off)
    return np.array(times), np.array(vals)


def oscillation_metrics(t, y):
    """Peak times and peak-to-peak amplitudes of ``y`` (each max minus the preceding min)."""
    tmax, vmax = _extrema(t, y, 1)
    tmin, vmin = _extrema(t, y, -1)
    pk_t, pk_a = [], []
    for tm, vm in zip(tmax, vmax):
        before = np.nonzero(tmin < tm)[0]
        if before.size:
            pk_t.append(tm)
            pk_a.append(vm - vmin[before[-1]])
    return np.array(pk_t), np.array(pk_a)


def _envelope(times, pk_t, pk_a):
    env = np.zeros_like(times)
    if pk_t.size:
        pos = np.searchsorted(pk_t, times, side="right") - 1
        ok = pos >= 0
        env[ok] = pk_a[pos[ok]]
    return env


def envelope_growth_rate(pk_t, pk_a, tail=0.5) -> float:
    """Least-squares slope of ``log(amplitude)`` over the last ``tail`` fraction of peaks."""
    good = pk_a > 0
    pk_t, pk_a = pk_t[good], pk_a[good]
    if pk_t.size < 3:
        return math.nan
    k = max(3, int(math.ceil(tail * pk_t.size)))
    return float(np.polyfit(pk_t[-k:], np.log(pk_a[-k:]), 1)[0])


def net_envelope_rate(pk_t, pk_a, skip=0.25) -> float:
    """``log(A_end / A_start) / (t_end - t_start)`` after dropping the first ``skip`` of peaks.

    Unlike a tail fit, the sign survives saturation onto a limit cycle.
    """
    good = pk_a > 0
    pk_t, pk_a = pk_t[good], pk_a[good]
    if pk_t.size < 3:
        return math.nan
    k0 = min(int(skip * pk_t.size), pk_t.size - 2)
    return float(math.log(pk_a[-1] / pk_a[k0]) / (pk_t[-1] - pk_t[k0]))


def classify(times, norms, dist, pk_t, pk_a):
    n_final = max(2, len(times) // 10)
    final_dist = float(np.max(dist[-n_final:]))
    if final_dist < DECAY_TOL:
        return "decayed", 0.0, math.nan, final_dist
    if pk_a.size >= N_PEAKS:
        last = pk_a[-N_PEAKS:]
        amp = float(np.mean(last))
        if amp > AMPLITUDE_FLOOR and (last.max() - last.min()) <= AMPLITUDE_AGREEMENT * last.min():
            period = float(np.mean(np.diff(pk_t[-N_PEAKS:])))
            return "oscillating", amp, period, final_dist
    return "indeterminate", float(pk_a[-1]) if pk_a.size else 0.0, math.nan, final_dist


def run(params, ops: DiscreteOperators, branch_state, eta, t_end: float,
        M_delay: int = DEFAULT_M_DELAY, dt: float | None = None,
        snapshot_times=(), sample_every: int = 1) -> SimTrace:
    """Integrate from history ``eta`` (callable on ``[-tau, 0]``) up to ``t_end``."""
    tau = float(params.tau)
    if tau > 0:
        dt = tau / M_delay
    elif dt is None:
        raise ValueError("tau = 0 needs an explicit dt")
    hist = HistoryBuffer.from_function(eta, tau, M_delay, ops.n)
    if np.any(hist.current < 0):
        raise ValueError("history must be nonnegative")
    stepper = IMEXStepper(params, ops, dt)
    n_steps = int(math.ceil(t_end / dt - 1e-9))
    u_r = np.asarray(branch_state, dtype=float)
    w = ops.w
    n_samples = n_steps // sample_every + 1
    times = np.empty(n_samples)
    norms = np.empty(n_samples)
    dist = np.empty(n_samples)
    snaps, actual = {}, {}
    targets = sorted(float(t) for t in snapshot_times)
    ti = 0

    def record(k, u, t):
        times[k] = t
        norms[k] = math.sqrt(float(w @ (u * u)))
        dist[k] = float(np.max(np.abs(u - u_r)))

    u = hist.current
    record(0, u, 0.0)
    while ti < len(targets) and targets[ti] <= 0.5 * dt:
        snaps[targets[ti]] = u.copy()
        actual[targets[ti]] = 0.0
        ti += 1
    k = 1
    for step in range(1, n_steps + 1):
        u = stepper.step(hist)
        if not np.isfinite(u[0]) or np.max(np.abs(u)) > BLOWUP_LIMIT:
            raise BlowUp(f"solution exceeded {BLOWUP_LIMIT:g} at t={step * dt:.4g}", t=step * dt)
        hist.push(u)
        t = step * dt
        if step % sample_every == 0:
            record(k, u, t)
            k += 1
        while ti < len(targets) and targets[ti] <= t + 0.5 * dt:
            snaps[targets[ti]] = u.copy()
            actual[targets[ti]] = t
            ti += 1
    times, norms, dist = times[:k], norms[:k], dist[:k]
    pk_t, pk_a = oscillation_metrics(times, norms)
    verdict, amp, period, final_dist = classify(times, norms, dist, pk_t, pk_a)
    return SimTrace(
        times=times, norms=norms, envelope=_envelope(times, pk_t, pk_a), snapshots=snaps,
        verdict=verdict, amplitude=amp, period=period, final_distance_to_steady=final_dist,
        peak_times=pk_t, peak_amplitudes=pk_a, growth_rate=envelope_growth_rate(pk_t, pk_a),
        final_state=u.copy(), snapshot_actual=actual,
    )


def simulation_onset(params, ops: DiscreteOperators, branch_state, tau_lo, tau_hi,
                     t_end_factor: float = 400.0, eps: float = 1e-3, rtol: float = 5e-3,
                     shape: str = "cos", M_delay: int = DEFAULT_M_DELAY) -> float:
    """Bisection in ``tau`` on the sign of the small-amplitude envelope growth rate.

    Each probe runs ``t_end_factor * tau`` time units from a history of
    relative size ``eps``.
    """
    eta = perturbed_history(branch_state, ops, eps, shape)

    def rate(tau):
        tr = run(params.with_(tau=tau), ops, branch_state, eta, t_end_factor * tau, M_delay,
                 sample_every=4)
        if tr.verdict == "decayed":
            return -1.0
        return net_envelope_rate(tr.peak_times, tr.peak_amplitudes)

    if not rate(tau_lo) < 0 or not rate(tau_hi) > 0:
        raise ValueError("simulation onset is not bracketed")
    while tau_hi - tau_lo > rtol * tau_hi:
        mid = 0.5 * (tau_lo + tau_hi)
        if rate(mid) > 0:
            tau_hi = mid
        else:
            tau_lo = mid
    return 0.5 * (tau_lo + tau_hi)
