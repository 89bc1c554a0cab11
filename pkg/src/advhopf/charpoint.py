r"""Purely imaginary characteristic roots and their adjoint eigenfunctions.

The linearization at ``u_r`` has characteristic operator

.. math::

    \Delta(r, \mu, \tau)\psi = e^{-\alpha x}P_0\psi + r\tilde K(r)\psi
        - r u_r \textstyle\int K(x,y)e^{\alpha y}\psi(y)dy\, e^{-\mu\tau} - \mu\psi,

with :math:`\tilde K(r) = m - \int K e^{\alpha y} u_r`. Writing
``mu = i r h``, ``psi = beta c0 + r z`` (``z`` mean-zero) and
``theta = nu tau`` turns ``Delta psi = 0`` into a smooth system in
``(z, beta, h, theta)`` that is regular at ``r = 0``.

Newton runs on the real form of that system. Unknowns are
``(Re z, Im z, beta, h, theta)``: ``2(N+1) + 3`` reals. Equations are
``(Re g1, Im g1, g2, ∫Re z, ∫Im z)``, also ``2(N+1) + 3``. The two mean
constraints pin ``z`` to the mean-zero subspace, so the square system
needs no pseudo-inverse.

The adjoint problem is the W-adjoint of ``e^{αx} Delta`` in the plain
trapezoid product. It has the transposed kernel, ``+i h`` and
``e^{+i theta}``, and in the discrete setting the same ``(h, theta)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import model
from .discretize import DiscreteOperators, assemble, inner1, solve_P0_on_X1
from .errors import FrequencyCollapse, NewtonDiverged, SimplicityViolated
from .steady import SteadyBranch, continue_branch, newton_steady

CHAR_TOL = 1e-10
CHAR_MAXITER = 30
DEFAULT_N_MAX = 3
SIMPLICITY_THRESHOLD = 1e-8


@dataclass(frozen=True)
class HopfData:
    """Critical eigen-data at one ``r``; ``psi`` and ``psi_adj`` have ``‖·‖²_Y = c0² L``."""

    r: float
    c0: float
    h: float
    theta: float
    nu: float
    z: np.ndarray
    beta: float
    psi: np.ndarray
    h_adj: float
    theta_adj: float
    z_adj: np.ndarray
    beta_adj: float
    psi_adj: np.ndarray
    u_r: np.ndarray
    tau_ladder: np.ndarray
    S: np.ndarray

    @property
    def tau0(self) -> float:
        return float(self.tau_ladder[0])

    def tau(self, n: int) -> float:
        return (self.theta + 2.0 * math.pi * n) / self.nu

    def record(self) -> dict:
        rec = {"r": self.r, "h_r": self.h, "theta_r": self.theta, "nu_r": self.nu}
        for n, t in enumerate(self.tau_ladder):
            rec[f"tau_{n}"] = float(t)
        rec["re_S0"] = float(self.S[0].real)
        rec["im_S0"] = float(self.S[0].imag)
        return rec


# ---------------------------------------------------------------- operators

def _ktilde(u_r, ops):
    return ops.growth - ops.K(u_r)


def delta_apply(psi, r, mu, tau, u_r, ops: DiscreteOperators):
    """``Delta(r, mu, tau) psi``."""
    psi = np.asarray(psi)
    return (ops.apply_A(psi) + r * _ktilde(u_r, ops) * psi
            - r * u_r * ops.K(psi) * np.exp(-mu * tau) - mu * psi)


def delta_matrix(r, mu, tau, u_r, ops: DiscreteOperators) -> np.ndarray:
    D = ops.P0 / ops.e[:, None] + np.diag(r * _ktilde(u_r, ops) - mu)
    return D - (r * np.exp(-mu * tau) * u_r)[:, None] * ops.Kmat


def adjoint_apply(psi_adj, r, mu, tau, u_r, ops: DiscreteOperators):
    """Adjoint of ``e^{αx} Delta(r, mu, tau)`` in the plain product.

    For ``mu = i nu`` this is ``P0 ψ + r e K̃ ψ - r e ∫K(y,x) e^{αy} u_r ψ dy e^{iντ} + iν e ψ``.
    """
    psi_adj = np.asarray(psi_adj)
    mu_c = np.conj(mu)
    kern = ops.e * (ops.Kstar @ (ops.e * u_r * psi_adj))
    return (ops.apply_P0(psi_adj) + r * ops.e * _ktilde(u_r, ops) * psi_adj
            - r * np.exp(-mu_c * tau) * kern - mu_c * ops.e * psi_adj)


def _kernel_operator(u_r, ops, adjoint: bool) -> np.ndarray:
    if adjoint:
        return ops.e[:, None] * ops.Kstar * (ops.e * u_r)[None, :]
    return (ops.e * u_r)[:, None] * ops.Kmat


# ---------------------------------------------------------------- system

def _system_parts(z, beta, h, theta, r, u_r, ops, c0, adjoint):
    sgn = 1.0 if adjoint else -1.0
    kop = _kernel_operator(u_r, ops, adjoint)
    phase = np.exp(sgn * 1j * theta)
    T = np.diag(ops.e * _ktilde(u_r, ops) + sgn * 1j * h * ops.e) - phase * kop
    psi = beta * c0 + r * z
    return T, kop, phase, psi, sgn


def char_system_residual(z, beta, h, theta, r, ops: DiscreteOperators, u_r, c0,
                         adjoint: bool = False):
    """``(g1, g2)`` for the primal (or adjoint) characteristic system."""
    T, _, _, psi, _ = _system_parts(z, beta, h, theta, r, u_r, ops, c0, adjoint)
    g1 = ops.apply_P0(z) + T @ psi
    g2 = (beta**2 - 1.0) * c0**2 * ops.grid.L + r**2 * float(np.sum(ops.w * np.abs(z) ** 2))
    return g1, g2


def _pack(z, beta, h, theta):
    return np.concatenate([z.real, z.imag, [beta, h, theta]])


def _unpack(x, n):
    return x[:n] + 1j * x[n:2 * n], x[2 * n], x[2 * n + 1], x[2 * n + 2]


def _residual_and_jacobian(x, r, u_r, ops, c0, adjoint):
    n = ops.n
    z, beta, h, theta = _unpack(x, n)
    T, kop, phase, psi, sgn = _system_parts(z, beta, h, theta, r, u_r, ops, c0, adjoint)
    g1 = ops.apply_P0(z) + T @ psi
    g2 = (beta**2 - 1.0) * c0**2 * ops.grid.L + r**2 * float(np.sum(ops.w * np.abs(z) ** 2))
    F = np.concatenate([g1.real, g1.imag, [g2, ops.w @ z.real, ops.w @ z.imag]])

    Jz = ops.P0 + r * T
    d_beta = T @ np.full(n, c0)
    d_h = sgn * 1j * ops.e * psi
    d_theta = -sgn * 1j * phase * (kop @ psi)
    J = np.zeros((2 * n + 3, 2 * n + 3))
    J[:n, :n], J[:n, n:2 * n] = Jz.real, -Jz.imag
    J[n:2 * n, :n], J[n:2 * n, n:2 * n] = Jz.imag, Jz.real
    for col, d in ((2 * n, d_beta), (2 * n + 1, d_h), (2 * n + 2, d_theta)):
        J[:n, col], J[n:2 * n, col] = d.real, d.imag
    J[2 * n, :n] = 2 * r**2 * ops.w * z.real
    J[2 * n, n:2 * n] = 2 * r**2 * ops.w * z.imag
    J[2 * n, 2 * n] = 2 * beta * c0**2 * ops.grid.L
    J[2 * n + 1, :n] = ops.w
    J[2 * n + 2, n:2 * n] = ops.w
    return F, J


def _newton_char(x0, r, u_r, ops, c0, adjoint, tol=CHAR_TOL, maxiter=CHAR_MAXITER):
    x = np.array(x0, dtype=float)
    F, J = _residual_and_jacobian(x, r, u_r, ops, c0, adjoint)
    norm = float(np.max(np.abs(F)))
    for _ in range(maxiter):
        if norm <= tol:
            return x, norm
        step = sla.solve(J, -F)
        lam = 1.0
        while True:
            trial = x + lam * step
            F_t, J_t = _residual_and_jacobian(trial, r, u_r, ops, c0, adjoint)
            n_t = float(np.max(np.abs(F_t)))
            if n_t < norm or lam < 1e-3:
                break
            lam *= 0.5
        x, F, J, norm = trial, F_t, J_t, n_t
        if not np.all(np.isfinite(x)):
            break
    if norm <= tol:
        return x, norm
    raise NewtonDiverged(
        f"characteristic system did not converge at r={r} (residual {norm:.3e})", r=r
    )


def solve_r0(params, ops: DiscreteOperators | None = None, adjoint: bool = False):
    """Limit ``(z0, 1, h0, π/2)`` of the (adjoint) characteristic system at ``r = 0``."""
    if ops is None:
        ops = assemble(params)
    c0 = model.c0(params)
    h0 = model.h0(params)
    one = np.ones(ops.n)
    rhs = -c0 * ops.e * (ops.growth - c0 * ops.K(one)) + 1j * h0 * c0 * ops.e
    if adjoint:
        rhs = rhs - 2j * h0 * c0 * ops.e + 1j * c0**2 * ops.e * (ops.Kstar @ ops.e)
    else:
        rhs = rhs - 1j * c0**2 * ops.e * ops.K(one)
    terms = c0 * ops.e * (np.abs(ops.growth) + c0 * np.abs(ops.K(one)) + h0)
    if adjoint:
        terms = terms + c0**2 * ops.e * np.abs(ops.Kstar @ ops.e)
    z0 = solve_P0_on_X1(rhs, ops, scale=float(np.max(terms)))
    return z0, 1.0, h0, math.pi / 2


def _branch_points(branch: SteadyBranch, r, params, ops):
    pts = [(float(rv), u) for rv, u in zip(branch.r_values, branch.states) if rv < r - 1e-14]
    if np.any(np.abs(branch.r_values - r) <= 1e-12 * max(1.0, r)):
        pts.append((r, branch.state_at(r)))
    else:
        if r > branch.r_values[-1] + 1e-12:
            raise NewtonDiverged(f"r={r} lies beyond the computed steady branch", r=r)
        start = pts[-1][1] if pts else np.full(ops.n, branch.c0)
        u, _, _ = newton_steady(start, params.with_(r=r), ops)
        pts.append((r, u))
    return pts


def continue_char(params, ops: DiscreteOperators | None, branch: SteadyBranch, r: float,
                  n_max: int = DEFAULT_N_MAX) -> HopfData:
    """Continue the characteristic and adjoint systems from ``r = 0`` to ``r``."""
    if ops is None:
        ops = assemble(params)
    c0 = branch.c0
    n = ops.n
    x = _pack(*solve_r0(params, ops))
    x_adj = _pack(*solve_r0(params, ops, adjoint=True))
    u_r = np.full(n, c0)
    for r_k, u_k in _branch_points(branch, r, params, ops):
        x, _ = _newton_char(x, r_k, u_k, ops, c0, adjoint=False)
        x_adj, _ = _newton_char(x_adj, r_k, u_k, ops, c0, adjoint=True)
        u_r = u_k
    z, beta, h, theta = _unpack(x, n)
    z_a, beta_a, h_a, theta_a = _unpack(x_adj, n)
    if not h > 0:
        raise FrequencyCollapse(f"h={h:.3e} at r={r}", r=r)
    theta = float(theta % (2 * math.pi))
    theta_a = float(theta_a % (2 * math.pi))
    nu = r * h
    ladder = np.array([(theta + 2 * math.pi * k) / nu for k in range(n_max + 1)])
    hopf = HopfData(
        r=float(r), c0=c0, h=float(h), theta=theta, nu=float(nu), z=z, beta=float(beta),
        psi=beta * c0 + r * z, h_adj=float(h_a), theta_adj=theta_a, z_adj=z_a,
        beta_adj=float(beta_a), psi_adj=beta_a * c0 + r * z_a, u_r=u_r,
        tau_ladder=ladder, S=np.zeros(n_max + 1, dtype=complex),
    )
    S = np.array([_sn_value(hopf, ops, k) for k in range(n_max + 1)])
    object.__setattr__(hopf, "S", S)
    if np.any(np.abs(S) < SIMPLICITY_THRESHOLD):
        raise SimplicityViolated(f"|S_n| below threshold at r={r}", r=r, S=S)
    return hopf


def kernel_pairing(hopf: HopfData, ops: DiscreteOperators):
    """``∬ e^{αx} u_r(x) conj(ψ̃(x)) K(x,y) e^{αy} ψ(y) dy dx``."""
    f = hopf.psi
    return np.sum(ops.w * ops.e * hopf.u_r * np.conj(hopf.psi_adj) * ops.K(f))


def _sn_value(hopf, ops, n):
    tau_n = hopf.tau(n)
    return (inner1(hopf.psi_adj, hopf.psi, ops)
            - hopf.r * tau_n * np.exp(-1j * hopf.theta) * kernel_pairing(hopf, ops))


def compute_Sn(hopf: HopfData, ops: DiscreteOperators, n: int) -> complex:
    """Simplicity pairing S_n; raises ``SimplicityViolated`` when it (nearly) vanishes."""
    S = _sn_value(hopf, ops, n)
    if abs(S) < SIMPLICITY_THRESHOLD:
        raise SimplicityViolated(f"|S_{n}| = {abs(S):.3e}", r=hopf.r, n=n)
    return complex(S)


def crossing_speed(hopf: HopfData, ops: DiscreteOperators, n: int = 0) -> complex:
    """``dμ/dτ`` at ``τ_n`` from first-order perturbation of the simple root."""
    Q = kernel_pairing(hopf, ops)
    return complex(1j * hopf.nu * hopf.r * np.exp(-1j * hopf.theta) * Q / _sn_value(hopf, ops, n))


def hopf_point(params, ops: DiscreteOperators | None = None, dr: float = 0.01,
               n_max: int = DEFAULT_N_MAX):
    """Steady branch up to ``params.r`` and the critical data there.

    Returns ``(ops, branch, hopf)``.
    """
    if ops is None:
        ops = assemble(params)
    r = float(params.r)
    steps = max(1, int(math.ceil(r / dr - 1e-9)))
    r_values = [r * (k + 1) / steps for k in range(steps)]
    branch = continue_branch(params, ops, r_values=r_values)
    hopf = continue_char(params, ops, branch, r, n_max=n_max)
    return ops, branch, hopf


def write_records(path, records) -> None:
    with open(path, "w") as fh:
        json.dump(records, fh, indent=2, sort_keys=True)
        fh.write("\n")
