"""Effect of advection and domain size on the first Hopf delay.

``tau0 ≈ pi / (2 r h0(α, L))`` for small ``r``, so orderings of ``tau0``
follow orderings of the weighted mean growth ``h0``. The functions here
compute both the asymptotic and the exact (continued) ``tau0`` and check
the expected orderings and derivative signs.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from . import model
from .charpoint import hopf_point
from .errors import AdvHopfError, HypothesisViolated, SignViolation
from .model import GrowthSpec, KernelSpec, ModelParams

DERIV_STEP = 1e-4
R_LADDER = (0.1, 0.05, 0.025)
WORKERS_ENV = "ADVHOPF_WORKERS"


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(fn, items, workers=None):
    """Order-preserving map; serial when ``workers <= 1``."""
    items = list(items)
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def tau0_asymptotic(params) -> float:
    h0 = model.h0(params)
    if not h0 > 0:
        raise ValueError("h0 must be positive")
    return math.pi / (2.0 * params.r * h0)


def tau0_exact(params, dr: float = 0.01) -> float:
    """First Hopf delay from the continued characteristic system."""
    _, _, hopf = hopf_point(params, dr=dr, n_max=1)
    return hopf.tau0


@dataclass(frozen=True)
class OrderingVerdict:
    """``sign(tau_first - tau_second)`` against the expected sign."""

    tau_first: float
    tau_second: float
    sign: int
    expected: int
    holds: bool
    label: str = ""

    def record(self) -> dict:
        return {"label": self.label, "tau_first": self.tau_first, "tau_second": self.tau_second,
                "sign": self.sign, "expected": self.expected, "holds": self.holds}


def _params(growth, alpha, L, r, kernel=None, n_cells=128):
    return ModelParams(alpha=alpha, L=L, r=r, growth=growth,
                       kernel=kernel or KernelSpec("delta"), n_cells=n_cells)


def _verdict(t1, t2, expected, label, tol=0.0):
    diff = t1 - t2
    sign = 0 if abs(diff) <= tol * max(abs(t1), abs(t2)) else int(np.sign(diff))
    return OrderingVerdict(t1, t2, sign, expected, sign == expected, label)


def compare_advection(growth: GrowthSpec, alpha1: float, alpha2: float, L: float, r: float,
                      kernel=None, n_cells: int = 128) -> OrderingVerdict:
    """Ordering of ``tau0`` at ``alpha1 > alpha2``.

    Expected sign is negative for ``m = x`` and positive for ``m = m0 - x``
    and for ``m = sin(pi x / L)`` with ``alpha2 L > pi``. For constant ``m`` the claim is equality at leading order, so the
    asymptotic ``tau0`` is compared (within ``1e-6`` relative).
    """
    if not alpha1 > alpha2:
        raise ValueError("alpha1 must exceed alpha2")
    if growth.variant == "sine_peak" and not alpha2 * L > math.pi:
        raise HypothesisViolated("the sine profile ordering needs alpha2 L > pi")
    tau0 = tau0_asymptotic if growth.variant == "constant" else tau0_exact
    t1 = tau0(_params(growth, alpha1, L, r, kernel, n_cells))
    t2 = tau0(_params(growth, alpha2, L, r, kernel, n_cells))
    expected = {"linear": -1, "linear_decreasing": 1, "sine_peak": 1,
                "constant": 0}.get(growth.variant)
    if expected is None:
        raise ValueError(f"no advection ordering is claimed for {growth.variant!r}")
    tol = 1e-6 if expected == 0 else 0.0
    return _verdict(t1, t2, expected, f"advection {growth.variant}", tol)


def proposition_integrand(growth: GrowthSpec, alpha: float, L: float, n_cells: int = 512) -> float:
    """``∫ (m(L) - m(x)) e^{αx} dx`` by trapezoid quadrature."""
    x = np.linspace(0.0, L, n_cells + 1)
    m = growth.evaluate(x, L)
    f = (growth.evaluate(np.array([L]), L)[0] - m) * np.exp(alpha * x)
    return float(trapezoid(f, x))


def compare_scale(growth: GrowthSpec, L1: float, L2: float, alpha: float, r: float,
                  mode: str = "proposition", kernel=None, n_cells: int = 128) -> OrderingVerdict:
    """Ordering of ``tau0`` at ``L1`` vs ``L2``.

    ``mode="proposition"``: ``m`` attains its maximum at ``x = L``; a larger
    domain lowers ``tau0``. ``mode="decreasing"``: ``m = m0 - x`` with
    ``m0 > L``; a larger domain raises ``tau0``. ``mode="sine"``: ``m = sin(pi x / L)`` with
    ``alpha L > pi`` at both sizes; a larger domain raises ``tau0``.
    """
    if mode == "proposition":
        for L in (L1, L2):
            x = np.linspace(0.0, L, 1001)
            m = growth.evaluate(x, L)
            if m[-1] < np.max(m) - 1e-12:
                raise HypothesisViolated(f"m(L) < max m at L={L}", L=L)
            if proposition_integrand(growth, alpha, L) <= 1e-12:
                raise HypothesisViolated(f"m is constant on [0, {L}]", L=L)
        expected = -1
    elif mode == "decreasing":
        if growth.variant != "linear_decreasing":
            raise HypothesisViolated("decreasing mode needs the linear_decreasing profile")
        expected = 1
    elif mode == "sine":
        if growth.variant != "sine_peak":
            raise HypothesisViolated("sine mode needs the sine_peak profile")
        if not (alpha * L1 > math.pi and alpha * L2 > math.pi):
            raise HypothesisViolated("sine mode needs alpha L > pi at both sizes")
        expected = 1
    else:
        raise ValueError(f"unknown mode {mode!r}")
    t1 = tau0_exact(_params(growth, alpha, L1, r, kernel, n_cells))
    t2 = tau0_exact(_params(growth, alpha, L2, r, kernel, n_cells))
    if L1 == L2:
        expected = 0
    sign_expected = expected if L1 > L2 else -expected
    return _verdict(t1, t2, sign_expected, f"scale {mode}", 1e-9 if expected == 0 else 0.0)


def ordering_over_r(compare, r_values=R_LADDER, **kwargs):
    """Run ``compare`` at descending ``r``; report verdicts and the smallest ``r`` that holds."""
    verdicts = [compare(r=r, **kwargs) for r in r_values]
    holding = [r for r, v in zip(r_values, verdicts) if v.holds]
    return verdicts, (min(holding) if holding else None)


# ------------------------------------------------------------ sweep tables

@dataclass
class SweepTable:
    axes: dict
    cells: list = field(default_factory=list)
    claims: dict = field(default_factory=dict)

    @property
    def shape(self):
        return tuple(len(v) for v in self.axes.values())

    def to_csv(self, path) -> None:
        keys = []
        for cell in self.cells:
            for k in cell:
                if k not in keys:
                    keys.append(k)
        with open(path, "w", newline="") as fh:
            out = csv.DictWriter(fh, fieldnames=keys)
            out.writeheader()
            for cell in self.cells:
                out.writerow({k: repr(v) if isinstance(v, float) else v for k, v in cell.items()})

    def summary(self) -> dict:
        failed = sum(1 for c in self.cells if c.get("status") != "ok")
        return {"axes": {k: list(map(float, v)) for k, v in self.axes.items()},
                "n_cells": len(self.cells), "n_failed": failed, "claims": self.claims}

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def h0_value(growth: GrowthSpec, alpha: float, L: float, n_cells: int = 256) -> float:
    closed = model.h0_closed_form(growth, alpha, L)
    if closed is not None:
        return closed
    return model.h0(_params(growth, alpha, L, 0.05, n_cells=n_cells))


def _richardson_derivative(f, x, step=DERIV_STEP):
    d1 = (f(x + step) - f(x - step)) / (2 * step)
    d2 = (f(x + step / 2) - f(x - step / 2)) / step
    return (4 * d2 - d1) / 3


def h0_derivatives(growth: GrowthSpec, alpha: float, L: float):
    da = _richardson_derivative(lambda a: h0_value(growth, a, L), alpha)
    dL = _richardson_derivative(lambda ell: h0_value(growth, alpha, ell), L)
    return da, dL


def _expected_sign(growth, alpha, L):
    if growth.variant == "linear":
        return 1
    if growth.variant == "linear_decreasing":
        return -1
    if growth.variant == "sine_peak":
        return -1 if alpha * L > math.pi else None
    if growth.variant == "constant":
        return 0
    return None


def _scan_cell(args):
    growth, alpha, L = args
    h0 = h0_value(growth, alpha, L)
    da, dL = h0_derivatives(growth, alpha, L)
    cell = {"alpha": float(alpha), "L": float(L), "h0": h0, "dh0_dalpha": da, "dh0_dL": dL,
            "status": "ok"}
    sign = _expected_sign(growth, alpha, L)
    if sign is None:
        cell["asserted"] = False
        cell["sign_ok"] = True
    else:
        cell["asserted"] = True
        if sign == 0:
            cell["sign_ok"] = abs(da) <= 1e-10 and abs(dL) <= 1e-10
        else:
            cell["sign_ok"] = bool(sign * da > 0 and sign * dL > 0)
    if growth.variant == "linear":
        x = np.linspace(0.0, L, 513)
        e = np.exp(alpha * x)
        cs = trapezoid(x * x * e, x) * trapezoid(e, x) - trapezoid(x * e, x) ** 2
        cell["cauchy_schwarz_gap"] = float(cs)
        cell["sign_ok"] = cell["sign_ok"] and cs > 0
    return cell


def monotonicity_scan(growth: GrowthSpec, alpha_grid, L_grid, workers=1,
                      raise_on_violation: bool = True) -> SweepTable:
    """Tabulate ``h0`` and its derivatives; check the expected signs cell by cell."""
    alpha_grid = list(map(float, alpha_grid))
    L_grid = list(map(float, L_grid))
    if not alpha_grid or not L_grid:
        raise ValueError("grids must be nonempty")
    items = [(growth, a, L) for a in alpha_grid for L in L_grid]
    cells = parallel_map(_scan_cell, items, workers)
    bad = [(c["alpha"], c["L"]) for c in cells if not c["sign_ok"]]
    table = SweepTable(axes={"alpha": alpha_grid, "L": L_grid}, cells=cells,
                       claims={f"h0 derivative signs ({growth.variant})": not bad})
    if bad and raise_on_violation:
        raise SignViolation(f"{len(bad)} cells violate the expected signs", cells=bad)
    return table


def _tau0_cell(args):
    growth, kernel, alpha, L, r, n_cells = args
    rec = {"alpha": float(alpha), "L": float(L), "r": float(r)}
    try:
        params = _params(growth, alpha, L, r, kernel, n_cells)
        _, _, hopf = hopf_point(params, n_max=1)
        h0 = model.h0(params)
        rec.update(h0=h0, theta_r=hopf.theta, h_r=hopf.h, tau0=hopf.tau0,
                   tau0_asymptotic=math.pi / (2 * r * h0),
                   sandwich=r * hopf.tau0 * 2 * h0 / math.pi, status="ok")
    except AdvHopfError as exc:
        rec.update(status="failed", error=type(exc).__name__)
    return rec


def tau0_sweep(growth: GrowthSpec, alpha_grid, L_grid, r_values, kernel=None,
               n_cells: int = 128, workers=None) -> SweepTable:
    """``tau0`` (exact and asymptotic) on an ``(alpha, L, r)`` grid."""
    kernel = kernel or KernelSpec("delta")
    axes = {"alpha": list(map(float, alpha_grid)), "L": list(map(float, L_grid)),
            "r": list(map(float, r_values))}
    items = [(growth, kernel, a, L, r, n_cells)
             for a in axes["alpha"] for L in axes["L"] for r in axes["r"]]
    cells = parallel_map(_tau0_cell, items, workers)
    ok = [c for c in cells if c["status"] == "ok"]
    claims = {"sandwich_0.8_1.2": all(0.8 <= c["sandwich"] <= 1.2 for c in ok
                                      if abs(c["r"] - 0.05) < 1e-12)}
    return SweepTable(axes=axes, cells=cells, claims=claims)
