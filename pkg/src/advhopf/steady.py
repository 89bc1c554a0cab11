"""Positive steady states by Newton continuation in the growth scale ``r``."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import model
from .discretize import DiscreteOperators, assemble, solve_P0_on_X1
from .errors import NewtonDiverged, PositivityLost

NEWTON_TOL = 1e-10
NEWTON_MAXITER = 25
MAX_HALVINGS = 6


@dataclass(frozen=True)
class SteadyBranch:
    r_values: np.ndarray
    states: tuple
    residual_norms: np.ndarray
    v_star: np.ndarray
    c0: float
    c1: float

    def state_at(self, r: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.r_values - r)))
        if abs(self.r_values[i] - r) > 1e-12 * max(1.0, r):
            raise KeyError(f"r={r} is not on the branch")
        return self.states[i]

    def to_csv(self, path, ops: DiscreteOperators) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["r", "x", "u_r", "residual_norm"])
            for r, u, res in zip(self.r_values, self.states, self.residual_norms):
                for xj, uj in zip(ops.x, u):
                    out.writerow([repr(float(r)), repr(float(xj)), repr(float(uj)), repr(float(res))])


def steady_residual(u, params, ops: DiscreteOperators):
    """``P0 u + r e^{αx} u (m - Kmat u)`` at every node."""
    u = np.asarray(u, dtype=float)
    return ops.apply_P0(u) + params.r * ops.e * u * (ops.growth - ops.K(u))


def steady_jacobian(u, params, ops: DiscreteOperators) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    r = params.r
    J = ops.P0 + np.diag(r * ops.e * (ops.growth - ops.K(u)))
    J -= (r * ops.e * u)[:, None] * ops.Kmat
    return J


def tangent_v_star(params, ops: DiscreteOperators):
    """Mean-zero ``v*`` with ``P0 v* = -c0 e^{αx} (m - c0 Kmat 1)``."""
    c0 = model.c0(params)
    m, k1 = ops.growth, ops.K(np.ones(ops.n))
    rhs = -c0 * ops.e * (m - c0 * k1)
    return solve_P0_on_X1(rhs, ops, scale=c0 * np.max(ops.e * (np.abs(m) + c0 * np.abs(k1))))


def branch_constant_shift(params, ops: DiscreteOperators, v_star=None) -> float:
    """Constant ``c1`` in ``u_r = c0 + r (v* + c1) + O(r^2)``.

    Fixed by solvability of the second-order problem:
    ``c1 = ∫ e^{αx}[v*(m - c0 Kmat 1) - c0 Kmat v*] / ∫ m e^{αx}``.
    """
    c0 = model.c0(params)
    if v_star is None:
        v_star = tangent_v_star(params, ops)
    one = np.ones(ops.n)
    integrand = ops.e * (v_star * (ops.growth - c0 * ops.K(one)) - c0 * ops.K(v_star))
    return float(ops.integrate(integrand) / ops.integrate(ops.growth * ops.e))


def newton_steady(u_init, params, ops: DiscreteOperators, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER):
    """Damped Newton for one ``r``. Returns ``(u, residual_norm, iterations)``."""
    u = np.array(u_init, dtype=float)
    F = steady_residual(u, params, ops)
    norm = float(np.max(np.abs(F)))
    for it in range(maxiter + 1):
        if norm <= tol:
            if np.any(u <= 0):
                raise PositivityLost(f"steady state not positive at r={params.r}", r=params.r, state=u)
            return u, norm, it
        if it == maxiter:
            break
        try:
            step = sla.lu_solve(sla.lu_factor(steady_jacobian(u, params, ops)), -F)
        except (ValueError, sla.LinAlgError) as exc:
            raise NewtonDiverged(f"singular Jacobian at r={params.r}", r=params.r, state=u) from exc
        lam = 1.0
        while True:
            trial = u + lam * step
            F_trial = steady_residual(trial, params, ops)
            n_trial = float(np.max(np.abs(F_trial)))
            if n_trial < norm or lam < 1e-4:
                break
            lam *= 0.5
        u, F, norm = trial, F_trial, n_trial
        if not np.all(np.isfinite(u)):
            break
    raise NewtonDiverged(
        f"Newton did not converge at r={params.r} (residual {norm:.3e})", r=params.r, state=u
    )


def solve_steady(params, ops: DiscreteOperators | None = None, u_init=None):
    """Steady state at ``params.r``, started from the first-order expansion."""
    if ops is None:
        ops = assemble(params)
    if u_init is None:
        vs = tangent_v_star(params, ops)
        u_init = model.c0(params) + params.r * (vs + branch_constant_shift(params, ops, vs))
    u, _, _ = newton_steady(u_init, params, ops)
    return u


def continue_branch(params, ops: DiscreteOperators | None = None, r_max: float = 0.5,
                    dr: float = 0.01, r_values=None) -> SteadyBranch:
    """Trace ``r ↦ u_r`` from ``r = 0`` up to ``r_max``.

    When ``r_values`` is given the branch is reported exactly at those
    (increasing, positive) values; intermediate points are inserted by step
    halving on Newton failure.
    """
    if ops is None:
        ops = assemble(params)
    c0 = model.c0(params)
    vs = tangent_v_star(params, ops)
    c1 = branch_constant_shift(params, ops, vs)
    if r_values is None:
        n_steps = int(round(r_max / dr))
        targets = [dr * (k + 1) for k in range(n_steps)]
        if targets and targets[-1] < r_max - 1e-12:
            targets.append(r_max)
    else:
        targets = [float(r) for r in r_values]
        if any(b <= a for a, b in zip(targets, targets[1:])) or targets[0] <= 0:
            raise ValueError("r_values must be positive and strictly increasing")
    r_done, states, norms = [], [], []
    r_prev, u_prev = 0.0, np.full(ops.n, c0)
    for target in targets:
        r_cur, u_cur = r_prev, u_prev
        step = target - r_prev
        halvings = 0
        while r_cur < target - 1e-15:
            r_try = min(target, r_cur + step)
            guess = u_cur if r_cur > 0 else c0 + r_try * (vs + c1)
            try:
                u_new, res, _ = newton_steady(guess, params.with_(r=r_try), ops)
            except NewtonDiverged:
                halvings += 1
                if halvings > MAX_HALVINGS:
                    raise
                step *= 0.5
                continue
            r_cur, u_cur = r_try, u_new
        r_done.append(target)
        states.append(u_cur)
        norms.append(float(np.max(np.abs(steady_residual(u_cur, params.with_(r=target), ops)))))
        r_prev, u_prev = target, u_cur
    return SteadyBranch(
        r_values=np.array(r_done),
        states=tuple(states),
        residual_norms=np.array(norms),
        v_star=vs,
        c0=c0,
        c1=c1,
    )
