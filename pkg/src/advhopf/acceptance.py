"""Acceptance checks with pinned configurations.

Each ``criterion_k`` runs one numbered check group and returns a
:class:`CriterionResult`. Informational lines are reported but do not
affect the verdict.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import charpoint, hetero, model, normalform, oracles, simulate, spectrum
from .discretize import assemble, inner
from .model import GrowthSpec, KernelSpec, ModelParams
from .steady import continue_branch

BUDGETS = {1: 10, 2: 60, 3: 300, 4: 600, 5: 900, 6: 120, 7: 600, 8: 120}
TITLES = {
    1: "operator correctness",
    2: "small-r limits",
    3: "spectrum counting",
    4: "cross-oracle tau0",
    5: "Hopf direction and orbit stability",
    6: "scalar-oracle equivalence",
    7: "heterogeneity orderings",
    8: "water-column profile",
}


@dataclass
class Check:
    label: str
    passed: bool
    detail: str = ""
    informational: bool = False


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    elapsed: float = 0.0
    budget: float = math.inf
    artifacts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational) and \
            self.elapsed <= self.budget

    def add(self, label, passed, detail="", informational=False):
        self.checks.append(Check(label, bool(passed), detail, informational))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number}: {self.title} ({self.elapsed:.1f}s)"


def _base(r=0.05, n_cells=64, alpha=1.0, growth="linear", kernel="delta", **kw):
    return ModelParams(alpha=alpha, L=kw.pop("L", 1.0), r=r, growth=GrowthSpec(growth, **kw),
                       kernel=KernelSpec(kernel), n_cells=n_cells)


def _timed(number):
    def deco(fn):
        def wrapper(*args, **kwargs):
            res = CriterionResult(number, TITLES[number], budget=BUDGETS[number])
            t0 = time.perf_counter()
            fn(res, *args, **kwargs)
            res.elapsed = time.perf_counter() - t0
            res.add(f"runtime < {BUDGETS[number]} s", res.elapsed <= BUDGETS[number],
                    f"{res.elapsed:.1f} s")
            return res
        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        return wrapper
    return deco


@_timed(1)
def criterion_1(res: CriterionResult, seed: int = 12345):
    """Flux operator, principal pencil pair, coercivity, discrete duality (N = 256)."""
    rng = np.random.default_rng(seed)
    params = _base(r=0.05, n_cells=256)
    ops = assemble(params)
    n = ops.n
    zeros = all(np.all(ops.apply_P0(np.full(n, c)) == 0.0) for c in (1.0, -3.7, 1e6, math.pi))
    res.add("P0 * const == 0 exactly", zeros)
    lam, vecs = ops.pencil_spectrum
    v1 = vecs[:, 0]
    spread = float(np.ptp(v1) / np.max(np.abs(v1)))
    res.add("|lambda_1| <= 1e-12", abs(lam[0]) <= 1e-12, f"{lam[0]:.2e}")
    res.add("lambda_1 eigenvector constant", spread <= 1e-10, f"spread {spread:.2e}")
    lam2 = ops.lambda2
    worst = math.inf
    for _ in range(1000):
        z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        z = z - ops.integrate(z) / ops.grid.L
        lhs = abs(inner(ops.apply_P0(z), z, ops))
        worst = min(worst, lhs / (lam2 * inner(z, z, ops).real))
    res.add("coercivity on 1000 mean-zero fields", worst >= 1.0 - 1e-12, f"min ratio {worst:.12f}")
    _, _, hopf = charpoint.hopf_point(params)
    mu, tau, u_r = 1j * hopf.nu, hopf.tau0, hopf.u_r
    err = 0.0
    for _ in range(100):
        a = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        right = ops.e * charpoint.delta_apply(b, params.r, mu, tau, u_r, ops)
        lhs = inner(a, right, ops)
        rhs = inner(charpoint.adjoint_apply(a, params.r, mu, tau, u_r, ops), b, ops)
        scale = math.sqrt(inner(a, a, ops).real * inner(right, right, ops).real)
        err = max(err, abs(lhs - rhs) / scale)
    res.add("duality identity <= 1e-11 (100 pairs)", err <= 1e-11, f"max rel {err:.2e}")


def _limit_runs(r_values=(0.1, 0.05, 0.025)):
    runs = []
    for r in r_values:
        params = _base(r=r, n_cells=128)
        ops, _, hopf = charpoint.hopf_point(params)
        runs.append((r, ops, hopf, normalform.g_coefficients(hopf, ops, 0)))
    return runs


@_timed(2)
def criterion_2(res: CriterionResult):
    """r -> 0 limits of the characteristic data and normal-form ingredients."""
    runs = _limit_runs()
    h0_lim = 1.0 / (math.e - 1.0)
    errs = []
    for r, _, hp, _ in runs:
        comps = (abs(hp.beta - 1.0), abs(hp.theta - math.pi / 2), abs(hp.h - h0_lim))
        errs.append(max(comps))
        res.add(f"r={r}: |beta-1|, |theta-pi/2|, |h-h0|", True,
                "{:.3e} {:.3e} {:.3e}".format(*comps), informational=True)
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    res.add("O(r) decay of (beta, theta, h) error", all(1.6 <= q <= 2.4 for q in ratios),
            "ratios " + ", ".join(f"{q:.3f}" for q in ratios))
    _, ops, hp, nf = runs[-1]
    target = complex(-0.8, 0.4)
    res.add("b_r within 0.05 of -0.8+0.4i at r=0.025", abs(nf.b_r - target) <= 0.05,
            f"b_r = {nf.b_r:.5f}")
    res.add("b_r within 0.05 of 0.8-0.4i (sign-corrected limit)",
            abs(nf.b_r + target) <= 0.05, f"b_r = {nf.b_r:.5f}", informational=True)
    g11 = [abs(x[3].g11) for x in runs]
    res.add("|g11| decreasing", all(a > b for a, b in zip(g11, g11[1:])),
            ", ".join(f"{v:.3e}" for v in g11))
    res.add("|g11| < 0.05 |g20| at r=0.025", g11[-1] < 0.05 * abs(nf.g20),
            f"{g11[-1] / abs(nf.g20):.3e}")
    res.add("Re g21 < 0", all(x[3].g21.real < 0 for x in runs),
            ", ".join(f"{x[3].g21.real:.4f}" for x in runs))
    S_lim = hp.c0**2 * (1 + 0.5j * math.pi) * (math.e - 1.0)
    rel = abs(hp.S[0] - S_lim) / abs(S_lim)
    res.add("S0 within 5% of its limit at r=0.025", rel <= 0.05, f"rel {rel:.2e}")


def _spectrum_setup(r=0.05):
    params = _base(r=r, n_cells=64)
    ops, _, hopf = charpoint.hopf_point(params)
    return params, ops, hopf


@_timed(3)
def criterion_3(res: CriterionResult):
    """Unstable counts along the delay ladder, crossing location and speed."""
    params, ops, hopf = _spectrum_setup()
    T = hopf.tau_ladder
    cases = [(0.0, 0), (0.5 * T[0], 0), (0.5 * (T[0] + T[1]), 2), (0.5 * (T[1] + T[2]), 4)]
    for tau, want in cases:
        rep = spectrum.spectrum_at(params.r, tau, hopf.u_r, ops, M=24, k=4)
        res.add(f"n_unstable = {want} at tau = {tau:.3f}", rep.n_unstable == want,
                f"got {rep.n_unstable}")
    rep = spectrum.spectrum_at(params.r, T[0], hopf.u_r, ops, M=24, k=4)
    rel = abs(rep.rightmost_pair - 1j * hopf.nu) / hopf.nu
    res.add("rightmost pair at tau0 within 1e-4 of i nu", rel <= 1e-4, f"rel {rel:.2e}")
    for n in (0, 1):
        d = spectrum.transversality(params.r, hopf.u_r, hopf, ops, n, M=24)
        res.add(f"transversality > 0 at tau_{n}", d > 0, f"{d:.4e}")


@_timed(4)
def criterion_4(res: CriterionResult):
    """Characteristic, spectral and simulated onset delays agree within 2%."""
    params, ops, hopf = _spectrum_setup()
    t_char = hopf.tau0
    T = hopf.tau_ladder
    t_spec = spectrum.spectral_onset(params.r, hopf.u_r, ops, 0.5 * T[0], 0.5 * (T[0] + T[1]),
                                     M=24)
    t_asym = hetero.tau0_asymptotic(params)
    t_sim = simulate.simulation_onset(params, ops, hopf.u_r, 0.85 * t_asym, 1.15 * t_asym)
    pairs = {"char/spectral": (t_char, t_spec), "char/simulation": (t_char, t_sim),
             "spectral/simulation": (t_spec, t_sim)}
    for label, (a, b) in pairs.items():
        rel = abs(a - b) / max(a, b)
        res.add(f"{label} within 2%", rel <= 0.02, f"{a:.5f} vs {b:.5f} (rel {rel:.2e})")


def _sim(params, ops, hopf, fac, t_end, eps=0.01, shape="cos"):
    eta = simulate.perturbed_history(hopf.u_r, ops, eps, shape)
    return simulate.run(params.with_(tau=fac * hopf.tau0), ops, hopf.u_r, eta, t_end,
                        sample_every=2)


@_timed(5)
def criterion_5(res: CriterionResult):
    """Supercritical, forward Hopf; simulated periodic orbit and decay."""
    for r in (0.05, 0.025):
        params, ops, hopf = _spectrum_setup(r)
        d = spectrum.transversality(r, hopf.u_r, hopf, ops, 0, M=24)
        nf = normalform.c1_and_verdict(normalform.g_coefficients(hopf, ops, 0), d, hopf.nu)
        res.add(f"r={r}: Re C1 < 0", nf.C1.real < 0, f"C1 = {nf.C1:.5f}")
        res.add(f"r={r}: mu2 > 0", nf.mu2 > 0, f"mu2 = {nf.mu2:.4e}")
    params, ops, hopf = _spectrum_setup(0.05)
    tr = _sim(params, ops, hopf, 1.1, 30000.0)
    expected = 2 * math.pi / hopf.nu
    res.add("tau=1.1 tau0 oscillating", tr.verdict == "oscillating",
            f"verdict {tr.verdict}, amplitude {tr.amplitude:.4f}")
    rel = abs(tr.period - expected) / expected
    res.add("period within 5% of 2 pi / nu_r", rel <= 0.05,
            f"period {tr.period:.3f} vs {expected:.3f} (rel {rel:.3f})")
    rel_scaled = abs(tr.period - 1.1 * expected) / (1.1 * expected)
    res.add("period within 5% of 2 pi tau / (nu_r tau0)", rel_scaled <= 0.05,
            f"rel {rel_scaled:.3f}", informational=True)
    slopes = []
    for fac, t_end in ((1.02, 60000.0), (1.04, 40000.0), (1.08, 40000.0)):
        tr = _sim(params, ops, hopf, fac, t_end)
        slopes.append(tr.amplitude**2 / ((fac - 1.0) * hopf.tau0)
                      if tr.verdict == "oscillating" else math.nan)
    spread = (max(slopes) - min(slopes)) / min(slopes) if all(np.isfinite(slopes)) else math.nan
    res.add("amplitude^2/(tau-tau0) constant within 20%", spread <= 0.20,
            ", ".join(f"{s:.5f}" for s in slopes))
    tr = _sim(params, ops, hopf, 0.9, 15000.0)
    res.add("tau=0.9 tau0 decays below 1e-6", tr.verdict == "decayed",
            f"final sup distance {tr.final_distance_to_steady:.2e}")


@_timed(6)
def criterion_6(res: CriterionResult):
    """Homogeneous problem against the scalar delayed-logistic oracles."""
    r = 0.1
    params = ModelParams(alpha=0.0, L=1.0, r=r, growth=GrowthSpec("constant"),
                         kernel=KernelSpec("delta"), n_cells=16)
    ops, _, hopf = charpoint.hopf_point(params)
    tau0 = hopf.tau0
    roots = oracles.hutchinson_roots(r, tau0)
    err = abs(roots[0] - 1j * hopf.nu)
    res.add("characteristic root matches Lambert-W root (1e-6)", err <= 1e-6, f"{err:.2e}")
    gen = spectrum.generator_from_blocks([[0.0]], [[-r]], 0.5 * tau0, M=24)
    lam = spectrum.rightmost_spectrum(gen, k=1).rightmost_pair
    ref = oracles.hutchinson_roots(r, 0.5 * tau0)[0]
    res.add("scalar generator root at tau0/2 (1e-6)", abs(lam - complex(ref.real, abs(ref.imag))) <= 1e-6,
            f"{abs(lam - complex(ref.real, abs(ref.imag))):.2e}")
    lam = spectrum.spectrum_at(r, 0.5 * tau0, hopf.u_r, ops, M=24, k=1).rightmost_pair
    res.add("full generator root at tau0/2 (1e-6)", abs(lam - complex(ref.real, abs(ref.imag))) <= 1e-6,
            f"{abs(lam - complex(ref.real, abs(ref.imag))):.2e}", informational=True)
    rel = abs(r * tau0 - math.pi / 2) / (math.pi / 2)
    res.add("r tau0 = pi/2 (1e-4 relative)", rel <= 1e-4, f"rel {rel:.2e}")
    nf = normalform.normal_form(hopf, ops, 0)
    c1_ref, _, tau_ref = oracles.hutchinson_lyapunov(r)
    res.add("supercritical sign matches oracle", (nf.C1.real < 0) == (c1_ref.real < 0) and nf.C1.real < 0,
            f"Re C1 {nf.C1.real:.5f}, oracle Re c1 {c1_ref.real:.5f}")
    rel_c1 = abs(nf.C1 - tau_ref * c1_ref) / abs(nf.C1)
    res.add("C1 equals tau0 * oracle c1 (1e-6 relative)", rel_c1 <= 1e-6, f"{rel_c1:.2e}",
            informational=True)
    tau = 0.9 * tau0
    times = np.arange(0.0, 50.0 + 1e-9, 1.0)
    eta = simulate.perturbed_history(hopf.u_r, ops, 0.01, "const")
    tr = simulate.run(params.with_(tau=tau), ops, hopf.u_r, eta, 50.0, snapshot_times=times)
    t_act = [tr.snapshot_actual[t] for t in times]
    _, ref = oracles.integrate_delayed_logistic(r, tau, lambda s: 1.01, max(t_act), t_eval=t_act)
    err = max(float(np.max(np.abs(tr.snapshots[t] - ref[i]))) for i, t in enumerate(times))
    res.add("trajectory agrees with scalar integrator over [0, 50] (1e-6)", err <= 1e-6, f"{err:.2e}")


@_timed(7)
def criterion_7(res: CriterionResult, workers: int = 1):
    """Orderings of tau0 in advection and domain size; h0 derivative signs."""
    r = 0.05
    lin, dec, sine = GrowthSpec("linear"), GrowthSpec("linear_decreasing", m0=3.0), \
        GrowthSpec("sine_peak")
    verdicts = [
        hetero.compare_advection(lin, 1.0, 0.0, 1.0, r),
        hetero.compare_advection(GrowthSpec("linear_decreasing", m0=2.0), 1.0, 0.0, 1.0, r),
        hetero.compare_scale(lin, 2.0, 1.0, 0.0, r, mode="proposition"),
        hetero.compare_scale(dec, 2.0, 1.0, 0.0, r, mode="decreasing"),
        hetero.compare_advection(sine, 5.0, 4.0, 1.0, r),
        hetero.compare_scale(sine, 1.5, 1.0, 4.0, r, mode="sine"),
        hetero.compare_scale(lin, 2.0, 1.0, 1.0, r, mode="proposition"),
    ]
    names = ["advection, m = x", "advection, m = m0 - x", "scale, m = x",
             "scale, m = m0 - x", "advection, sine, alpha L > pi", "scale, sine, alpha L > pi",
             "proposition ordering, m = x, alpha = 1"]
    for name, v in zip(names, verdicts):
        res.add(name, v.holds, f"{v.tau_first:.4f} vs {v.tau_second:.4f}")
    grids = [
        (lin, np.linspace(-2, 2, 21), np.linspace(0.5, 3.0, 21)),
        (GrowthSpec("linear_decreasing", m0=4.0), np.linspace(-2, 2, 21), np.linspace(0.5, 3.0, 21)),
        (sine, np.linspace(0.5, 6.0, 21), np.linspace(0.5, 3.0, 21)),
    ]
    for g, a, L in grids:
        table = hetero.monotonicity_scan(g, a, L, workers=workers, raise_on_violation=False)
        bad = sum(1 for c in table.cells if not c["sign_ok"])
        res.add(f"monotonicity signs, {g.variant} (21x21)", bad == 0, f"{bad} violations")


@_timed(8)
def criterion_8(res: CriterionResult, r: float = 0.5):
    """Density maximum moves from the upper to the lower half as advection grows."""
    for alpha, want in ((0.0, "top"), (2.0, "bottom")):
        params = ModelParams(alpha=alpha, L=1.0, r=r, growth=GrowthSpec("constant"),
                             kernel=KernelSpec("cumulative"), n_cells=128)
        ops = assemble(params)
        u = continue_branch(params, ops, r_max=r).states[-1]
        eta = lambda s, c=model.c0(params): np.full(ops.n, c)
        tr = simulate.run(params.with_(tau=0.0), ops, u, eta, 60.0, dt=0.01)
        dens = model.transform_to_original(tr.final_state, params)
        x_max = float(ops.x[int(np.argmax(dens))])
        region = "top" if x_max < 0.5 * params.L else "bottom"
        res.artifacts[f"alpha={alpha}"] = (ops.x.copy(), dens)
        res.add(f"alpha={alpha}: argmax in the {want} region", region == want, f"x_max = {x_max:.4f}")


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
            5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8}


def _run_one(k):
    return CRITERIA[k]()


def run_all(numbers=None, workers: int = 1):
    numbers = sorted(CRITERIA) if numbers is None else [int(k) for k in numbers]
    return hetero.parallel_map(_run_one, numbers, workers)


def format_table(results) -> str:
    lines = []
    for res in results:
        lines.append(res.line())
        for c in res.checks:
            tag = "info" if c.informational else ("pass" if c.passed else "FAIL")
            lines.append(f"    [{tag}] {c.label}: {c.detail}")
    return "\n".join(lines)
