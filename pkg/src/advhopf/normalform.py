r"""Center-manifold normal form at a Hopf delay ``tau_n``.

Time is rescaled by ``tau_n`` so the history lives on ``[-1, 0]`` and the
critical pair is ``±i nu tau_n``. With ``p(theta) = psi e^{i nu tau_n theta}``
and the nonlinearity ``J(U) = -tau_n r U(0) (Kmat U(-1))`` the quadratic
coefficients are

.. math::

    g_{20} = -\frac{2 r\tau_n}{S_n} e^{-i\theta_r} B(\psi, \psi),\qquad
    g_{02} = -\frac{2 r\tau_n}{S_n} e^{i\theta_r} B(\bar\psi, \bar\psi),

    g_{11} = -\frac{r\tau_n}{S_n}\big(e^{i\theta_r} B(\psi, \bar\psi)
             + e^{-i\theta_r} B(\bar\psi, \psi)\big),

with ``B(f, g) = ∫ e^{αx} conj(ψ̃) f (Kmat g) dx``. ``g21`` additionally
needs ``w20`` and ``w11`` at ``theta in {-1, 0}``, which in turn need the
fields ``E`` (frequency ``2 nu``) and ``F`` (frequency 0).

The real part of ``C1`` and the sign of ``mu2`` do not depend on how
``psi`` is scaled; ``|C1|`` does. Everything here uses
``‖ψ‖²_Y = c0² L`` with a real positive mean.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .charpoint import HopfData, delta_matrix
from .discretize import DiscreteOperators
from .errors import NearSingular

COND_LIMIT = 1e12
GAUSS_POINTS = 16


@dataclass(frozen=True)
class NormalFormData:
    n: int
    r: float
    tau: float
    E: np.ndarray
    F: np.ndarray
    b_r: complex
    phi_r: np.ndarray
    w20: dict
    w11: dict
    g20: complex
    g11: complex
    g02: complex
    g21: complex
    C1: complex = complex(math.nan)
    mu2: float = math.nan
    direction: str = ""
    orbit_stability: str = ""

    def record(self) -> dict:
        rec = {"r": self.r, "n": self.n, "tau_n": self.tau}
        for name in ("g20", "g11", "g02", "g21", "C1", "b_r"):
            val = complex(getattr(self, name))
            rec[f"re_{name}"] = val.real
            rec[f"im_{name}"] = val.imag
        rec.update(mu2=self.mu2, direction=self.direction, orbit_stability=self.orbit_stability)
        return rec


def kernel_form(f, g, hopf: HopfData, ops: DiscreteOperators) -> complex:
    """``∫ e^{αx} conj(ψ̃(x)) f(x) ∫ K(x,y) e^{αy} g(y) dy dx``."""
    return complex(np.sum(ops.w * ops.e * np.conj(hopf.psi_adj) * f * ops.K(g)))


def _checked_solve(A, b, what):
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NearSingular(f"{what}: condition number {cond:.3e}", cond=cond)
    return np.linalg.solve(A, b)


def solve_Er(hopf: HopfData, ops: DiscreteOperators, n: int = 0):
    """``E`` with ``Delta(r, 2i nu, tau_n) E = 2 r e^{-i theta} psi (Kmat psi)``.

    Returns ``(E, b_r, phi_r)`` with ``E = b_r c0 + phi_r`` and ``phi_r`` mean-zero.
    """
    r, psi = hopf.r, hopf.psi
    A = delta_matrix(r, 2j * hopf.nu, hopf.tau(n), hopf.u_r, ops)
    rhs = 2 * r * np.exp(-1j * hopf.theta) * psi * ops.K(psi)
    E = _checked_solve(A, rhs, "2 i nu is (nearly) a characteristic root")
    mean = ops.integrate(E) / ops.grid.L
    return E, complex(mean / hopf.c0), E - mean


def solve_Fr(hopf: HopfData, ops: DiscreteOperators, n: int = 0):
    """``F`` with ``Delta(r, 0, tau_n) F = r [e^{iθ} ψ Kmat ψ̄ + e^{-iθ} ψ̄ Kmat ψ]``."""
    r, psi = hopf.r, hopf.psi
    A = delta_matrix(r, 0.0, hopf.tau(n), hopf.u_r, ops)
    ph = np.exp(1j * hopf.theta)
    rhs = r * (ph * psi * ops.K(psi.conj()) + ph.conjugate() * psi.conj() * ops.K(psi))
    return _checked_solve(A, rhs, "Delta(r, 0, tau) singular")


def quadratic_coefficients(psi, hopf: HopfData, ops: DiscreteOperators, n: int = 0):
    """``(g20, g11, g02)`` for eigenfunction ``psi`` (swap-testable)."""
    S = hopf.S[n]
    rt = hopf.r * hopf.tau(n)
    ph = np.exp(1j * hopf.theta)
    pc = psi.conj()
    g20 = -2 * rt / S * ph.conjugate() * kernel_form(psi, psi, hopf, ops)
    g11 = -rt / S * (ph * kernel_form(psi, pc, hopf, ops)
                     + ph.conjugate() * kernel_form(pc, psi, hopf, ops))
    g02 = -2 * rt / S * ph * kernel_form(pc, pc, hopf, ops)
    return complex(g20), complex(g11), complex(g02)


def w_fields(hopf: HopfData, g20, g11, g02, E, F, n: int = 0):
    """``w20`` and ``w11`` at ``theta = 0`` and ``theta = -1``."""
    nt = hopf.theta + 2 * math.pi * n
    psi = hopf.psi

    def p(th):
        return psi * np.exp(1j * nt * th)

    w20 = {th: 1j * g20 / nt * p(th) + 1j * np.conj(g02) / (3 * nt) * np.conj(p(th))
           + E * np.exp(2j * nt * th) for th in (0, -1)}
    w11 = {th: -1j * g11 / nt * p(th) + 1j * np.conj(g11) / nt * np.conj(p(th)) + F
           for th in (0, -1)}
    return w20, w11


def cubic_coefficient(hopf: HopfData, ops: DiscreteOperators, w20, w11, n: int = 0) -> complex:
    S = hopf.S[n]
    rt = hopf.r * hopf.tau(n)
    ph = np.exp(1j * hopf.theta)
    psi, pc = hopf.psi, hopf.psi.conj()
    total = (2 * kernel_form(psi, w11[-1], hopf, ops)
             + kernel_form(pc, w20[-1], hopf, ops)
             + ph * kernel_form(w20[0], pc, hopf, ops)
             + 2 * ph.conjugate() * kernel_form(w11[0], psi, hopf, ops))
    return complex(-rt / S * total)


def g_coefficients(hopf: HopfData, ops: DiscreteOperators, n: int = 0) -> NormalFormData:
    """Quadratic and cubic normal-form coefficients (``C1`` not yet set)."""
    g20, g11, g02 = quadratic_coefficients(hopf.psi, hopf, ops, n)
    E, b_r, phi_r = solve_Er(hopf, ops, n)
    F = solve_Fr(hopf, ops, n)
    w20, w11 = w_fields(hopf, g20, g11, g02, E, F, n)
    g21 = cubic_coefficient(hopf, ops, w20, w11, n)
    return NormalFormData(n=n, r=hopf.r, tau=hopf.tau(n), E=E, F=F, b_r=b_r, phi_r=phi_r,
                          w20=w20, w11=w11, g20=g20, g11=g11, g02=g02, g21=g21)


def first_lyapunov(nu_tau, g20, g11, g02, g21) -> complex:
    return (1j / (2 * nu_tau) * (g20 * g11 - 2 * abs(g11) ** 2 - abs(g02) ** 2 / 3)
            + g21 / 2)


def c1_and_verdict(nf: NormalFormData, transversality: float, nu: float) -> NormalFormData:
    """Attach ``C1``, ``mu2 = -Re C1 / Re mu'`` and the direction/stability flags."""
    C1 = first_lyapunov(nu * nf.tau, nf.g20, nf.g11, nf.g02, nf.g21)
    mu2 = -C1.real / transversality
    return replace(nf, C1=complex(C1), mu2=float(mu2),
                   direction="forward" if mu2 > 0 else "backward",
                   orbit_stability="stable" if C1.real < 0 else "unstable")


def normal_form(hopf: HopfData, ops: DiscreteOperators, n: int = 0, transversality=None):
    """Full pipeline; ``transversality`` defaults to the perturbative ``Re mu'``."""
    from .charpoint import crossing_speed

    if transversality is None:
        transversality = crossing_speed(hopf, ops, n).real
    return c1_and_verdict(g_coefficients(hopf, ops, n), transversality, hopf.nu)


# ------------------------------------------------------- rescaled generator

def generator_at_zero(phi0, phi_m1, hopf: HopfData, ops: DiscreteOperators, n: int = 0):
    """Rescaled generator's boundary value ``tau_n [A phi(0) + r K̃ phi(0) - r u Kmat phi(-1)]``."""
    r, u = hopf.r, hopf.u_r
    return hopf.tau(n) * (ops.apply_A(phi0) + r * (ops.growth - ops.K(u)) * phi0
                          - r * u * ops.K(phi_m1))


def adjoint_generator_at_zero(q0, q1, hopf: HopfData, ops: DiscreteOperators, n: int = 0):
    """Formal adjoint boundary value ``tau_n [A q(0) + r K̃ q(0) - r K*(e u q(1))]``."""
    r, u = hopf.r, hopf.u_r
    return hopf.tau(n) * (ops.apply_A(q0) + r * (ops.growth - ops.K(u)) * q0
                          - r * (ops.Kstar @ (ops.e * u * q1)))


def formal_duality(q, phi, hopf: HopfData, ops: DiscreteOperators, n: int = 0,
                   points: int = GAUSS_POINTS) -> complex:
    """Delay-augmented pairing of ``q(s), s in [0,1]`` with ``phi(theta), theta in [-1,0]``.

    ``<q(0), phi(0)>_1 - r tau_n ∫_{-1}^0 <q(s+1), u_r Kmat phi(s)>_1 ds``;
    ``q`` and ``phi`` are callables returning fields.
    """
    from .discretize import inner1

    nodes, weights = np.polynomial.legendre.leggauss(points)
    s = 0.5 * (nodes - 1.0)
    wts = 0.5 * weights
    integral = sum(wk * inner1(q(sk + 1.0), hopf.u_r * ops.K(phi(sk)), ops)
                   for sk, wk in zip(s, wts))
    return complex(inner1(q(0.0), phi(0.0), ops) - hopf.r * hopf.tau(n) * integral)


def biorthogonality(hopf: HopfData, ops: DiscreteOperators, n: int = 0) -> np.ndarray:
    """``<<Psi_I, Phi_I>>`` as a 2x2 matrix; should be the identity."""
    nt = hopf.theta + 2 * math.pi * n
    S = hopf.S[n]
    Phi = [lambda th: hopf.psi * np.exp(1j * nt * th),
           lambda th: np.conj(hopf.psi) * np.exp(-1j * nt * th)]
    Psi = [lambda s: hopf.psi_adj * np.exp(1j * nt * s) / np.conj(S),
           lambda s: np.conj(hopf.psi_adj) * np.exp(-1j * nt * s) / S]
    return np.array([[formal_duality(a, b, hopf, ops, n) for b in Phi] for a in Psi])


def ws_residuals(nf: NormalFormData, hopf: HopfData, ops: DiscreteOperators):
    """Residuals of the ``theta = 0`` rows of the ``w20`` / ``w11`` equations.

    ``(2 i nu tau - A) w20 = H20`` and ``-A w11 = H11`` at ``theta = 0``, with
    ``H20(0)``, ``H11(0)`` including the nonlinearity's boundary contribution.
    """
    n = nf.n
    nt = hopf.theta + 2 * math.pi * n
    rt = hopf.r * nf.tau
    psi, pc = hopf.psi, hopf.psi.conj()
    ph = np.exp(1j * hopf.theta)
    H20 = -(nf.g20 * psi + np.conj(nf.g02) * pc) - 2 * rt * ph.conjugate() * psi * ops.K(psi)
    H11 = (-(nf.g11 * psi + np.conj(nf.g11) * pc)
           - rt * (ph * psi * ops.K(pc) + ph.conjugate() * pc * ops.K(psi)))
    lhs20 = 2j * nt * nf.w20[0] - generator_at_zero(nf.w20[0], nf.w20[-1], hopf, ops, n)
    lhs11 = -generator_at_zero(nf.w11[0], nf.w11[-1], hopf, ops, n)
    return lhs20 - H20, lhs11 - H11


def write_records(path, records) -> None:
    records = list(records)
    if str(path).endswith(".json"):
        with open(path, "w") as fh:
            json.dump(records, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return
    with open(path, "w", newline="") as fh:
        out = csv.DictWriter(fh, fieldnames=list(records[0]))
        out.writeheader()
        for rec in records:
            out.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})
