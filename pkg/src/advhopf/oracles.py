"""Independent reference computations used to cross-check the main pipeline.

* Roots of the scalar delayed-logistic characteristic equation
  ``mu + a e^{-mu tau} = 0`` via the Lambert W function.
* The first Lyapunov coefficient of a delay system ``v' = J0 v + J1 v(t-tau)
  + B(v, v)`` from characteristic matrices only (no center-manifold
  bookkeeping in ``theta``).
* A method-of-steps integrator for ``u' = a u (1 - u(t - tau))``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import lambertw


def hutchinson_roots(a: float, tau: float, branches=range(-3, 4)) -> np.ndarray:
    """Roots of ``mu + a e^{-mu tau} = 0``, one per Lambert W branch, Newton-polished."""
    roots = []
    for k in branches:
        mu = complex(lambertw(-a * tau, k)) / tau
        for _ in range(8):
            f = mu + a * np.exp(-mu * tau)
            df = 1.0 - a * tau * np.exp(-mu * tau)
            mu -= f / df
        roots.append(mu)
    roots = np.array(roots)
    return roots[np.argsort(-roots.real)]


def hutchinson_crossing_speed(mu: complex, tau: float) -> complex:
    """``dmu/dtau`` on a root of ``mu + a e^{-mu tau} = 0``: ``-mu^2 / (1 + mu tau)``."""
    return -mu * mu / (1.0 + mu * tau)


def lyapunov_delay_system(J0, J1, tau, omega, q, bilinear, p=None):
    """First Lyapunov quantity ``c1`` for a Hopf point of a delay system.

    Parameters
    ----------
    J0, J1 : array_like
        Linear part ``v' = J0 v(t) + J1 v(t - tau)``.
    omega : float
        Critical frequency; ``i omega`` is a simple root.
    q : array_like
        Right null vector of ``Delta(i omega) = i omega - J0 - J1 e^{-i omega tau}``.
    bilinear : callable
        ``bilinear(a0, a1, b0, b1)`` returns the symmetric quadratic form on
        histories given by their values at lag 0 and lag ``tau``.
    p : array_like, optional
        Left null vector; computed by SVD when omitted.

    Returns
    -------
    complex
        ``c1 = 1/2 p [B(conj phi, h20) + 2 B(phi, h11)]`` with
        ``p Delta'(i omega) q = 1``.
    """
    J0 = np.atleast_2d(np.asarray(J0, dtype=complex))
    J1 = np.atleast_2d(np.asarray(J1, dtype=complex))
    n = J0.shape[0]
    eye = np.eye(n)
    q = np.asarray(q, dtype=complex).reshape(n)

    def char(lam):
        return lam * eye - J0 - J1 * np.exp(-lam * tau)

    lam = 1j * omega
    if p is None:
        _, _, vh = np.linalg.svd(char(lam).conj().T)
        p = vh[-1].conj()
    p = np.asarray(p, dtype=complex).reshape(n)
    dchar = eye + tau * J1 * np.exp(-lam * tau)
    p = p / (p @ dchar @ q)
    lag = np.exp(-lam * tau)
    q_lag, qc, qc_lag = q * lag, q.conj(), (q * lag).conj()
    h20 = np.linalg.solve(char(2 * lam), bilinear(q, q_lag, q, q_lag))
    h11 = np.linalg.solve(char(0.0), bilinear(q, q_lag, qc, qc_lag))
    h20_lag = h20 * np.exp(-2 * lam * tau)
    c1 = 0.5 * p @ (bilinear(qc, qc_lag, h20, h20_lag) + 2.0 * bilinear(q, q_lag, h11, h11))
    return complex(c1)


def hutchinson_lyapunov(a: float) -> tuple[complex, float, float]:
    """``(c1, omega, tau)`` for ``x' = -a x(t-tau) - a x x(t-tau)`` at its first Hopf point."""
    tau = math.pi / (2 * a)

    def bil(a0, a1, b0, b1):
        return -a * (a0 * b1 + b0 * a1)

    c1 = lyapunov_delay_system([[0.0]], [[-a]], tau, a, [1.0], bil, p=[1.0])
    return c1, a, tau


def integrate_delayed_logistic(a: float, tau: float, history, t_end: float,
                               t_eval=None, rtol=1e-12, atol=1e-14):
    """Method of steps for ``u' = a u (1 - u(t - tau))``.

    ``history`` is a callable on ``[-tau, 0]``. Returns a callable giving
    ``u(t)`` on ``[-tau, t_end]`` and, if ``t_eval`` is given, its values there.
    """
    pieces = []

    def delayed(t):
        s = t - tau
        if s <= 0:
            return history(s)
        for t0, t1, sol in pieces:
            if t0 <= s <= t1:
                return sol(s)[0]
        return pieces[-1][2](s)[0]

    t0, u0 = 0.0, float(history(0.0))
    while t0 < t_end - 1e-14:
        t1 = min(t0 + tau, t_end)
        sol = solve_ivp(lambda t, y: a * y * (1.0 - delayed(t)), (t0, t1), [u0],
                        method="DOP853", rtol=rtol, atol=atol, dense_output=True)
        pieces.append((t0, t1, sol.sol))
        t0, u0 = t1, float(sol.y[0, -1])

    def u(t):
        if t <= 0:
            return history(t)
        for a0, a1, s in pieces:
            if a0 <= t <= a1:
                return float(s(t)[0])
        return float(pieces[-1][2](t)[0])

    if t_eval is None:
        return u
    return u, np.array([u(t) for t in t_eval])
