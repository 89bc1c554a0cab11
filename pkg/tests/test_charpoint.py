import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advhopf import charpoint, model
from advhopf.charpoint import (adjoint_apply, char_system_residual, compute_Sn, crossing_speed,
                               delta_apply, delta_matrix, hopf_point, solve_r0)
from advhopf.discretize import assemble, inner, inner1, norm_Y
from advhopf.errors import SimplicityViolated

from conftest import make_params


class TestOperators:
    def test_constant_substitution(self):
        p = make_params(alpha=0.0, growth="constant", r=0.3, n_cells=16)
        ops = assemble(p)
        one = np.ones(ops.n)
        out = delta_apply(one, p.r, 0.0, 7.0, one, ops)
        np.testing.assert_allclose(out, -p.r, rtol=1e-14)

    def test_linear_in_field(self):
        ops = assemble(make_params(n_cells=16))
        np.testing.assert_array_equal(delta_apply(np.zeros(ops.n), 0.1, 1j, 3.0, np.ones(ops.n), ops), 0)

    def test_matrix_matches_apply(self, rng):
        p = make_params(kernel="cumulative", n_cells=20)
        ops = assemble(p)
        u = 0.5 + rng.uniform(size=ops.n)
        psi = rng.normal(size=ops.n) + 1j * rng.normal(size=ops.n)
        mu, tau = 0.3 + 0.7j, 2.5
        np.testing.assert_allclose(delta_matrix(0.2, mu, tau, u, ops) @ psi,
                                   delta_apply(psi, 0.2, mu, tau, u, ops), rtol=1e-11, atol=1e-9)

    @pytest.mark.parametrize("kernel", ["delta", "cumulative"])
    def test_duality_identity(self, kernel, rng):
        p = make_params(alpha=1.3, kernel=kernel, r=0.2, n_cells=32)
        ops = assemble(p)
        u = 0.4 + rng.uniform(size=ops.n)
        nu, tau = 0.17, 9.0
        worst = 0.0
        for _ in range(100):
            phi, psi = rng.normal(size=(2, ops.n)) + 1j * rng.normal(size=(2, ops.n))
            lhs = inner(phi, ops.e * delta_apply(psi, p.r, 1j * nu, tau, u, ops), ops)
            rhs = inner(adjoint_apply(phi, p.r, 1j * nu, tau, u, ops), psi, ops)
            scale = np.linalg.norm(phi) * np.linalg.norm(ops.e * delta_apply(psi, p.r, 1j * nu, tau, u, ops))
            worst = max(worst, abs(lhs - rhs) / scale)
        assert worst <= 1e-11


class TestSystem:
    def test_normalization_sphere(self, rng):
        p = make_params(n_cells=16)
        ops = assemble(p)
        c0 = model.c0(p)
        u = np.full(ops.n, c0)
        _, g2 = char_system_residual(np.zeros(ops.n), 1.0, 1.0, 1.0, 0.3, ops, u, c0)
        assert g2 == 0.0
        z = rng.normal(size=ops.n)
        r = 0.1
        z *= c0 * math.sqrt(ops.grid.L) / (r * norm_Y(z, ops))
        _, g2 = char_system_residual(z, 0.0, 1.0, 1.0, r, ops, u, c0)
        assert abs(g2) <= 1e-13

    @pytest.mark.parametrize("growth,alpha,kernel", [("linear", 1.0, "delta"),
                                                     ("sine_peak", 2.0, "cumulative"),
                                                     ("constant", 0.5, "cumulative")])
    @pytest.mark.parametrize("adjoint", [False, True])
    def test_limit_solves_system_at_zero(self, growth, alpha, kernel, adjoint):
        p = make_params(alpha=alpha, growth=growth, kernel=kernel, n_cells=48)
        ops = assemble(p)
        c0 = model.c0(p)
        z0, beta0, h0, theta0 = solve_r0(p, ops, adjoint=adjoint)
        assert (beta0, theta0) == (1.0, math.pi / 2)
        assert h0 == pytest.approx(model.h0(p), rel=1e-14)
        g1, g2 = char_system_residual(z0, beta0, h0, theta0, 0.0, ops, np.full(ops.n, c0), c0,
                                      adjoint=adjoint)
        assert np.max(np.abs(g1)) <= 1e-10
        assert g2 == 0.0

    def test_homogeneous_limit_is_trivial(self):
        p = make_params(alpha=0.0, growth="constant", n_cells=16)
        z0, _, h0, theta0 = solve_r0(p)
        np.testing.assert_allclose(z0, 0, atol=1e-14)
        assert h0 == 1.0 and theta0 == math.pi / 2

    @settings(max_examples=15, deadline=None)
    @given(alpha=st.floats(-2, 2), growth=st.sampled_from(["linear", "sine_peak", "constant"]),
           kernel=st.sampled_from(["delta", "cumulative"]))
    def test_limit_right_side_imaginary_mean_vanishes(self, alpha, growth, kernel):
        p = make_params(alpha=alpha, growth=growth, kernel=kernel, n_cells=32)
        ops = assemble(p)
        c0, h0 = model.c0(p), model.h0(p)
        k1 = ops.K(np.ones(ops.n))
        imag_rhs = -c0**2 * ops.e * k1 + h0 * c0 * ops.e
        assert abs(ops.integrate(imag_rhs)) <= 1e-12 * c0 * max(h0, c0) * np.max(ops.e * (1 + k1))

    def test_linear_limit_real_part_matches_symbolic(self):
        sp = pytest.importorskip("sympy")
        x = sp.symbols("x")
        c0 = sp.Rational(1, 2)
        v = sp.integrate(sp.integrate(-c0 * (x - c0), (x, 0, x)), (x, 0, x))
        v = sp.lambdify(x, v - sp.integrate(v, (x, 0, 1)), "numpy")
        p = make_params(alpha=0.0, n_cells=128)
        ops = assemble(p)
        z0 = solve_r0(p, ops)[0]
        assert np.max(np.abs(z0.real - v(ops.x))) <= 1e-5


class TestHopfData:
    def test_invariants(self, linear_hopf):
        ops, _, hopf = linear_hopf
        c0, L = hopf.c0, ops.grid.L
        assert norm_Y(hopf.psi, ops) ** 2 == pytest.approx(c0**2 * L, rel=1e-10)
        assert norm_Y(hopf.psi_adj, ops) ** 2 == pytest.approx(c0**2 * L, rel=1e-10)
        mu = 1j * hopf.nu
        for n in range(len(hopf.tau_ladder)):
            res = ops.e * delta_apply(hopf.psi, hopf.r, mu, hopf.tau(n), hopf.u_r, ops)
            assert np.linalg.norm(res) <= 1e-9
            res_adj = adjoint_apply(hopf.psi_adj, hopf.r, mu, hopf.tau(n), hopf.u_r, ops)
            assert np.linalg.norm(res_adj) <= 1e-9
        assert abs(hopf.h_adj - hopf.h) <= 1e-10
        assert abs(hopf.theta_adj - hopf.theta) <= 1e-10
        assert 0 <= hopf.theta < 2 * math.pi
        assert hopf.h > 0 and hopf.beta >= 0
        assert hopf.nu == pytest.approx(hopf.r * hopf.h, rel=1e-15)

    def test_phase_convention(self, linear_hopf):
        ops, _, hopf = linear_hopf
        for psi in (hopf.psi, hopf.psi_adj):
            mean = ops.integrate(psi)
            assert abs(mean.imag) <= 1e-12
            assert mean.real >= 0

    def test_ladder_spacing(self, linear_hopf):
        _, _, hopf = linear_hopf
        np.testing.assert_allclose(np.diff(hopf.tau_ladder), 2 * math.pi / hopf.nu, rtol=1e-13)
        for n, t in enumerate(hopf.tau_ladder):
            assert hopf.tau(n) == pytest.approx(t, rel=1e-15)

    def test_homogeneous_case_is_classical_threshold(self, homogeneous_hopf):
        _, _, hopf = homogeneous_hopf
        assert hopf.h == pytest.approx(1.0, abs=1e-10)
        assert hopf.theta == pytest.approx(math.pi / 2, abs=1e-10)
        assert hopf.r * hopf.tau0 == pytest.approx(math.pi / 2, abs=1e-9)

    def test_kernel_bound_for_bounded_kernel(self):
        p = make_params(alpha=1.0, kernel="cumulative", r=0.1, n_cells=48)
        ops, _, hopf = hopf_point(p)
        bound = math.exp(2 * p.alpha * p.L) * p.L * np.max(np.abs(hopf.u_r)) * p.kernel.sup_norm
        assert hopf.h <= bound

    def test_small_r_convergence_is_first_order(self):
        p = make_params(alpha=1.0, n_cells=64)
        h0 = model.h0(p)
        errs = []
        for r in (0.04, 0.02, 0.01):
            _, _, hd = hopf_point(p.with_(r=r))
            errs.append(np.array([abs(hd.beta - 1), abs(hd.theta - math.pi / 2), abs(hd.h - h0)]))
        for k in range(3):
            for a, b in ((errs[0][k], errs[1][k]), (errs[1][k], errs[2][k])):
                if k == 0:
                    # beta^2 = 1 - r^2 |z|^2 / (c0^2 L): second order
                    assert a / b == pytest.approx(4.0, rel=0.3)
                else:
                    assert a / b == pytest.approx(2.0, rel=0.3)

    def test_record_fields(self, linear_hopf):
        rec = linear_hopf[2].record()
        assert list(rec) == ["r", "h_r", "theta_r", "nu_r", "tau_0", "tau_1", "tau_2", "tau_3",
                             "re_S0", "im_S0"]


class TestSn:
    @pytest.mark.parametrize("r", [0.1, 0.02])
    def test_homogeneous_value(self, r):
        # u_r = 1, psi = 1 for every r, so the limit value is attained exactly
        p = make_params(alpha=0.0, growth="constant", r=r, n_cells=16)
        ops, _, hd = hopf_point(p)
        assert compute_Sn(hd, ops, 0) == pytest.approx(1 + 1j * math.pi / 2, abs=1e-12)
        assert compute_Sn(hd, ops, 1) == pytest.approx(1 + 1j * 5 * math.pi / 2, abs=1e-12)

    def test_limit_with_advection(self):
        p = make_params(alpha=1.0, growth="linear", n_cells=64)
        errs = []
        for r in (0.04, 0.02, 0.01):
            ops, _, hd = hopf_point(p.with_(r=r))
            c0 = hd.c0
            for n in range(2):
                limit = c0**2 * (1 + 1j * (math.pi / 2 + 2 * n * math.pi)) * ops.integrate(ops.e)
                if n == 0:
                    errs.append(abs(compute_Sn(hd, ops, 0) - limit) / abs(limit))
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.3)
        assert errs[2] < 1e-2

    def test_nonvanishing_along_branch(self):
        p = make_params(alpha=1.0, n_cells=32)
        for r in (0.02, 0.06, 0.1, 0.2):
            ops, _, hd = hopf_point(p.with_(r=r))
            assert np.all(np.abs(hd.S) > 1e-3)

    def test_crossing_speed_matches_homogeneous_formula(self, homogeneous_hopf):
        ops, _, hd = homogeneous_hopf
        mu = 1j * hd.nu
        expected = -mu**2 / (1 + mu * hd.tau0)
        assert crossing_speed(hd, ops, 0) == pytest.approx(expected, rel=1e-9)

    def test_simplicity_violation_is_raised(self, linear_hopf):
        ops, _, hd = linear_hopf
        zeroed = charpoint.HopfData(**{**hd.__dict__, "psi_adj": 0 * hd.psi_adj})
        with pytest.raises(SimplicityViolated):
            compute_Sn(zeroed, ops, 0)


def test_write_records(tmp_path, linear_hopf):
    path = tmp_path / "h.json"
    charpoint.write_records(path, [linear_hopf[2].record()])
    import json
    assert json.loads(path.read_text())[0]["r"] == 0.05
