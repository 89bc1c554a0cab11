"""Rightmost spectrum of the linearized delay equation by generator collocation.

The history segment on ``[-tau, 0]`` is collocated at Chebyshev–Gauss–Lobatto
points ``theta_0 = 0 > theta_1 > ... > theta_M = -tau``. Interior block rows
differentiate in ``theta``; the first block row is the domain condition

    d/dt phi(0) = J0 phi(0) + J1 phi(-tau),

with ``J0 = e^{-αx} P0 + r diag(m - Kmat u_r)`` and ``J1 = -r diag(u_r) Kmat``.
Eigenvalues of the resulting dense matrix approximate the characteristic
roots; the rightmost ones converge spectrally in ``M``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import PairTrackingLost, QRNoConvergence

DEFAULT_M = 24
DEFAULT_N_CELLS = 64
TOL_ZERO = 1e-7


def cheb(M: int):
    """Chebyshev differentiation matrix and nodes ``x_j = cos(pi j / M)``."""
    if M == 0:
        return np.zeros((1, 1)), np.ones(1)
    x = np.cos(np.pi * np.arange(M + 1) / M)
    c = np.ones(M + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(M + 1)
    dX = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dX + np.eye(M + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x


@dataclass(frozen=True)
class GeneratorMatrix:
    matrix: np.ndarray
    r: float
    tau: float
    M: int
    block: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("generator matrix has non-finite entries")


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    n_unstable: int
    rightmost_pair: complex
    tau: float = math.nan

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# n_unstable={self.n_unstable}\n")
            out = csv.writer(fh)
            out.writerow(["re", "im"])
            for lam in self.eigenvalues:
                out.writerow([repr(float(lam.real)), repr(float(lam.imag))])


def linear_blocks(r, branch_state, ops):
    """``(J0, J1)`` of the linearization ``v' = J0 v(t) + J1 v(t - tau)``."""
    u = np.asarray(branch_state, dtype=float)
    J0 = ops.P0 / ops.e[:, None] + np.diag(r * (ops.growth - ops.K(u)))
    J1 = -r * u[:, None] * ops.Kmat
    return J0, J1


def generator_from_blocks(J0, J1, tau, M=DEFAULT_M, r=math.nan) -> GeneratorMatrix:
    """Collocated generator for ``v' = J0 v + J1 v(t - tau)`` with ``tau > 0``."""
    if M < 8:
        raise ValueError("M must be >= 8")
    if not tau > 0:
        raise ValueError("tau must be positive; use delay_free_matrix for tau = 0")
    J0 = np.atleast_2d(np.asarray(J0, dtype=float))
    J1 = np.atleast_2d(np.asarray(J1, dtype=float))
    n = J0.shape[0]
    D, _ = cheb(M)
    A = np.kron(D * (2.0 / tau), np.eye(n))
    A[:n, :] = 0.0
    A[:n, :n] = J0
    A[:n, M * n:] = J1
    return GeneratorMatrix(matrix=A, r=float(r), tau=float(tau), M=int(M), block=n)


def build_generator(r, tau, branch_state, ops, M=DEFAULT_M) -> GeneratorMatrix:
    J0, J1 = linear_blocks(r, branch_state, ops)
    return generator_from_blocks(J0, J1, tau, M, r=r)


def delay_free_matrix(r, branch_state, ops) -> np.ndarray:
    J0, J1 = linear_blocks(r, branch_state, ops)
    return J0 + J1


def _eigvals(A):
    try:
        return np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise QRNoConvergence(f"eigenvalue iteration failed: {exc}") from exc


def report_from_eigenvalues(lam, k=None, tau=math.nan, tol_zero=TOL_ZERO) -> SpectrumReport:
    lam = np.asarray(lam, dtype=complex)
    if not np.all(np.isfinite(lam)):
        raise QRNoConvergence("non-finite eigenvalues")
    order = np.lexsort((-lam.imag, -lam.real))
    lam = lam[order]
    n_unstable = int(np.sum(lam.real > tol_zero))
    top = lam[0]
    pair = complex(top.real, abs(top.imag))
    if k is not None:
        lam = lam[:k]
    return SpectrumReport(eigenvalues=lam, n_unstable=n_unstable, rightmost_pair=pair, tau=tau)


def rightmost_spectrum(gen, k=20, tol_zero=TOL_ZERO) -> SpectrumReport:
    """The ``k`` rightmost eigenvalues and the unstable count of ``gen``.

    ``gen`` is a :class:`GeneratorMatrix` or a plain square array (the
    delay-free case).
    """
    A = gen.matrix if isinstance(gen, GeneratorMatrix) else np.asarray(gen)
    if k is not None and k > A.shape[0]:
        raise ValueError("k exceeds the matrix dimension")
    tau = gen.tau if isinstance(gen, GeneratorMatrix) else 0.0
    return report_from_eigenvalues(_eigvals(A), k=k, tau=tau, tol_zero=tol_zero)


def spectrum_at(r, tau, branch_state, ops, M=DEFAULT_M, k=20) -> SpectrumReport:
    if tau == 0:
        A = delay_free_matrix(r, branch_state, ops)
        return rightmost_spectrum(A, k=None if k is None else min(k, A.shape[0]))
    return rightmost_spectrum(build_generator(r, tau, branch_state, ops, M), k=k)


def _nearest(lam, target):
    lam = np.asarray(lam)
    return complex(lam[int(np.argmin(np.abs(lam - target)))])


def transversality(r, branch_state, hopf, ops, n=0, M=DEFAULT_M, rel_step=1e-4,
                   expected_speed=None) -> float:
    """``d Re mu / d tau`` at ``tau_n`` by central differences on the tracked root.

    The root is seeded at ``i nu`` and matched by nearest distance at
    ``tau_n +- delta``. ``expected_speed`` (default: the perturbative value
    from :mod:`charpoint`) bounds the admissible motion.
    """
    from . import charpoint

    tau_n = hopf.tau(n)
    dtau = rel_step * tau_n
    if expected_speed is None:
        expected_speed = abs(charpoint.crossing_speed(hopf, ops, n))
    lam0 = _nearest(_eigvals(build_generator(r, tau_n, branch_state, ops, M).matrix), 1j * hopf.nu)
    moves = []
    for sgn in (1.0, -1.0):
        lam = _eigvals(build_generator(r, tau_n + sgn * dtau, branch_state, ops, M).matrix)
        moves.append(_nearest(lam, lam0))
    allowed = 10.0 * max(expected_speed * dtau, 1e-10)
    for lam in moves:
        if abs(lam - lam0) > allowed:
            raise PairTrackingLost(
                f"root moved {abs(lam - lam0):.3e} for step {dtau:.3e} (allowed {allowed:.3e})",
                tau=tau_n, n=n,
            )
    return float((moves[0].real - moves[1].real) / (2.0 * dtau))


def spectral_onset(r, branch_state, ops, tau_lo, tau_hi, M=DEFAULT_M, rtol=1e-6,
                   maxiter=60) -> float:
    """Bisection on the first ``n_unstable`` flip from 0 to a positive count."""
    def unstable(tau):
        return spectrum_at(r, tau, branch_state, ops, M, k=None).n_unstable > 0

    if unstable(tau_lo) or not unstable(tau_hi):
        raise ValueError("onset is not bracketed by [tau_lo, tau_hi]")
    for _ in range(maxiter):
        mid = 0.5 * (tau_lo + tau_hi)
        if unstable(mid):
            tau_hi = mid
        else:
            tau_lo = mid
        if tau_hi - tau_lo <= rtol * tau_hi:
            break
    return 0.5 * (tau_lo + tau_hi)
