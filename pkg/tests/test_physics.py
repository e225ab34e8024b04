"""Potentials, coefficient functions, energy, and dissipation."""

import numpy as np
import pytest

from vepsim.grid import ScalarField, VectorField, make_grid
from vepsim.physics import (
    ModelParams,
    chemical_potential,
    dissipation,
    energy_report,
    free_energy,
    free_energy_time_unit,
    param_functions,
    potential_f,
    potential_fprime,
    potential_fsecond,
)
from vepsim.state import ConformationField, EQUILIBRIUM_CONFORMATION, InitialCondition, State, init_state

import oracles

P = ModelParams()
GL = ModelParams(potential_kind="ginzburg-landau")


def homogeneous_state(g, phi=0.5, q=0.0, lam=EQUILIBRIUM_CONFORMATION):
    shape = (g.nx, g.ny)
    return State(
        t=0.0,
        phi=ScalarField(g, np.full(shape, phi)),
        q=ScalarField(g, np.full(shape, q)),
        v=VectorField(g, np.zeros(shape), np.zeros(shape)),
        c=ConformationField(g, np.full(shape, lam), np.zeros(shape), np.full(shape, lam)),
    )


def random_spd_conformation(g, rng, scale=0.3):
    # C = M M^T + 0.05 I with smooth M entries stays safely positive definite
    a = 1.0 + scale * oracles.band_limited_field(rng, g.nx, g.ny, keep=3)
    b = scale * oracles.band_limited_field(rng, g.nx, g.ny, keep=3)
    d = 1.0 + scale * oracles.band_limited_field(rng, g.nx, g.ny, keep=3)
    c11 = a * a + b * b + 0.05
    c12 = b * (a + d)
    c22 = d * d + b * b + 0.05
    return ConformationField(g, c11, c12, c22)


class TestPotential:
    # values pinned from a symbolic evaluation at 20 digits
    def test_flory_huggins_values(self):
        assert potential_f(P, 0.5) == pytest.approx(-0.056783544196308946, rel=1e-14)
        assert potential_f(P, 0.3) == pytest.approx(-0.076318847509438918, rel=1e-14)
        assert potential_fprime(P, 0.6) == pytest.approx(-0.10362580098274471, rel=1e-13)
        assert potential_fsecond(P, 0.5) == pytest.approx(-12.0 / 11.0, rel=1e-14)
        assert potential_fprime(P, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_ginzburg_landau_values(self):
        assert potential_f(GL, 0.3) == pytest.approx(0.011025, rel=1e-14)
        assert potential_fsecond(GL, 0.5) == pytest.approx(-0.25, rel=1e-14)
        assert potential_f(GL, 0.0) == pytest.approx(0.0, abs=1e-11)
        assert potential_f(GL, 1.0) == pytest.approx(0.0, abs=1e-11)

    @pytest.mark.parametrize("params", [P, GL], ids=["fh", "gl"])
    def test_derivatives_match_finite_differences(self, params):
        for x in (0.15, 0.3, 0.5, 0.62, 0.85):
            d1 = oracles.richardson_derivative(lambda u: float(potential_f(params, u)), x)
            assert potential_fprime(params, x) == pytest.approx(d1, rel=1e-8, abs=1e-10)
            d2 = oracles.richardson_derivative(lambda u: float(potential_fprime(params, u)), x)
            assert potential_fsecond(params, x) == pytest.approx(d2, rel=1e-8, abs=1e-8)

    def test_clamped_outside_unit_interval(self):
        for bad in (-0.5, 0.0, 1.0, 1.5):
            assert np.isfinite(potential_f(P, bad))
            assert np.isfinite(potential_fprime(P, bad))
        assert potential_f(P, 0.0) == potential_f(P, P.delta_phi)
        assert potential_f(P, 1.5) == potential_f(P, 1.0 - P.delta_phi)


class TestParamFunctions:
    def test_section_values(self):
        n2, h1, h2, a, ap, eta = param_functions(P, np.array([0.5]))
        assert n2[0] == pytest.approx(0.1875, rel=1e-14)
        assert h1[0] == pytest.approx(0.08, rel=1e-14)
        assert h2[0] == pytest.approx(0.4, rel=1e-14)
        assert a[0] == pytest.approx(0.5, rel=1e-14)
        assert ap[0] == pytest.approx(500.0 * np.pi, rel=1e-12)
        assert eta[0] == pytest.approx(2.25, rel=1e-14)
        _, _, _, _, _, eta0 = param_functions(P, np.array([0.0]))
        assert eta0[0] == pytest.approx(2.0, abs=1e-11)

    def test_coupling_switch_saturates(self):
        _, _, _, a, _, _ = param_functions(P, np.array([0.3, 0.7]))
        assert a[0] == pytest.approx(0.0, abs=1e-15)
        assert a[1] == pytest.approx(1.0, rel=1e-15)

    def test_coupling_monotone_in_unit_interval(self):
        phis = np.linspace(0.01, 0.99, 197)
        _, _, _, a, ap, _ = param_functions(P, phis)
        assert np.all(np.diff(a) >= -1e-15)
        assert np.all((a >= 0.0) & (a <= 1.0))
        assert np.all(ap >= 0.0)

    def test_coupling_slope_matches_finite_difference(self):
        def a_of(u):
            return float(param_functions(P, np.array([u]))[3][0])

        for x in (0.4995, 0.5, 0.5005):
            ref = oracles.richardson_derivative(a_of, x, h=1e-7)
            got = float(param_functions(P, np.array([x]))[4][0])
            assert got == pytest.approx(ref, rel=1e-6)

    def test_simple_fluid_kills_coupling(self):
        sf = ModelParams(simple_fluid=True)
        _, _, _, a, ap, _ = param_functions(sf, np.linspace(0.1, 0.9, 9))
        assert np.all(a == 0.0) and np.all(ap == 0.0)

    def test_singular_rates_finite_at_clamp(self):
        n2, h1, h2, _, _, _ = param_functions(P, np.array([0.0, 1.0]))
        assert np.all(np.isfinite(h1)) and np.all(np.isfinite(h2))
        assert np.all(n2 >= 0.0)

    def test_majorants(self):
        phis = np.linspace(0.0, 1.0, 4001)
        n2, _, _, a, _, eta = param_functions(P, phis)
        assert P.nbar2() == pytest.approx(0.25, rel=1e-14)
        assert n2.max() <= P.nbar2() + 1e-12
        assert eta.max() <= P.etabar() + 1e-12
        assert (a * a).max() <= P.abar2() + 1e-12
        assert ModelParams(simple_fluid=True).abar2() == 0.0

    def test_alpha_defaults(self):
        assert P.alpha_min() == pytest.approx(12.0 / 11.0, rel=1e-14)
        assert GL.alpha_min() == pytest.approx(0.25, rel=1e-14)
        assert P.resolved_alpha() == pytest.approx(12.0 / 11.0 + 1.0, rel=1e-14)
        assert ModelParams(alpha=3.5).resolved_alpha() == 3.5
        # subcritical chi has convex f, no compensation needed
        assert ModelParams(chi=1.5).alpha_min() == 0.0

    def test_validation(self):
        with pytest.raises(ValueError, match="potential_kind"):
            ModelParams(potential_kind="quartic")
        with pytest.raises(ValueError, match="b_kind"):
            ModelParams(b_kind="square")
        with pytest.raises(ValueError, match="delta_phi"):
            ModelParams(delta_phi=0.7)
        with pytest.raises(ValueError, match="phi_star"):
            ModelParams(phi_star=0.0)

    def test_time_unit(self):
        assert free_energy_time_unit(P) == pytest.approx(0.5, rel=1e-15)


class TestChemicalPotential:
    def test_matches_dense_dft_assembly(self):
        rng = np.random.default_rng(21)
        g = make_grid(16, 16, lx=6.0, ly=6.0)
        phi = 0.5 + 0.2 * oracles.band_limited_field(rng, 16, 16, keep=5)
        mu = chemical_potential(ScalarField(g, phi), P)
        ref = -P.c0 * oracles.dense_laplacian(phi, 6.0, 6.0) + potential_fprime(P, phi)
        np.testing.assert_allclose(mu.data, ref, atol=1e-12)

    def test_variational_consistency(self):
        # mu is the first variation of the mixing energy
        rng = np.random.default_rng(22)
        g = make_grid(16, 16, lx=8.0, ly=8.0)
        phi = 0.5 + 0.2 * oracles.band_limited_field(rng, 16, 16, keep=4)
        xi = oracles.band_limited_field(rng, 16, 16, keep=4)

        def e_mix(eps):
            p = phi + eps * xi
            gx, gy = g.ddx(p), g.ddy(p)
            return g.integrate(0.5 * P.c0 * (gx * gx + gy * gy) + potential_f(P, p))

        ref = oracles.richardson_derivative(e_mix, 0.0, h=1e-5)
        mu = chemical_potential(ScalarField(g, phi), P)
        assert g.integrate(mu.data * xi) == pytest.approx(ref, rel=1e-8)


class TestFreeEnergy:
    def test_homogeneous_values(self):
        g = make_grid(16, 16, lx=4.0, ly=4.0)
        area = 16.0
        s = homogeneous_state(g, phi=0.5, lam=1.0)  # C = I
        e = free_energy(s, P)
        assert e.mix == pytest.approx(-0.056783544196308946 * area, rel=1e-13)
        assert e.bulk == 0.0 and e.kin == 0.0
        assert e.elastic == pytest.approx(1.0 * area, rel=1e-13)
        assert e.total == pytest.approx(e.mix + e.bulk + e.kin + e.elastic, rel=1e-15)

    def test_equilibrium_conformation_energy(self):
        g = make_grid(8, 8, lx=2.0, ly=2.0)
        s = homogeneous_state(g)
        e = free_energy(s, P)
        assert e.elastic == pytest.approx(0.84657359027997265 * 4.0, rel=1e-13)

    def test_rejects_indefinite_conformation(self):
        g = make_grid(8, 8)
        s = homogeneous_state(g)
        s.c.c11[3, 4] = -2.0
        with pytest.raises(ValueError, match="min eigenvalue"):
            free_energy(s, P)

    def test_mix_part_matches_dense_quadrature(self):
        rng = np.random.default_rng(23)
        g = make_grid(12, 12, lx=5.0, ly=5.0)
        s = homogeneous_state(g)
        s.phi.data[:] = 0.5 + 0.15 * oracles.band_limited_field(rng, 12, 12, keep=4)
        gx = oracles.dense_ddx(s.phi.data, 5.0, 5.0)
        gy = oracles.dense_ddy(s.phi.data, 5.0, 5.0)
        ref = ((0.5 * P.c0 * (gx**2 + gy**2) + potential_f(P, s.phi.data)).sum()) * g.dx * g.dy
        assert free_energy(s, P).mix == pytest.approx(ref, rel=1e-12, abs=1e-12)


class TestDissipation:
    def test_zero_at_equilibrium(self):
        g = make_grid(16, 16, lx=4.0, ly=4.0)
        d = dissipation(homogeneous_state(g), P)
        for name in ("mix", "q_relax", "q_diff", "visc", "c_diff", "c_relax", "trc_diff"):
            assert abs(getattr(d, name)) < 1e-12

    def test_bulk_relaxation_isolated(self):
        g = make_grid(8, 8, lx=2.0, ly=2.0)
        s = homogeneous_state(g, q=0.3)
        d = dissipation(s, P)
        assert d.q_relax == pytest.approx(0.08 * 0.09 * 4.0, rel=1e-13)
        # constant A * q has no gradient; phi is uniform so no mixing flux
        assert abs(d.mix) < 1e-12
        assert d.visc == 0.0

    def test_shear_viscous_rate(self):
        g = make_grid(32, 32, lx=2 * np.pi, ly=2 * np.pi)
        s = homogeneous_state(g)
        _, yy = g.coords()
        u0, k = 0.2, 2.0
        s.v.x[:] = u0 * np.sin(k * yy)
        d = dissipation(s, P)
        # |D_S v|^2 = u0^2 k^2 cos^2 / 2, eta(1/2) = 9/4, integral of cos^2 = |Omega|/2
        area = (2 * np.pi) ** 2
        assert d.visc == pytest.approx(2.25 * 0.25 * u0**2 * k**2 * area, rel=1e-12)

    def test_conformation_relaxation_closed_form(self):
        g = make_grid(8, 8, lx=2.0, ly=2.0)
        s = homogeneous_state(g)
        s.c.c11[:] = 2.0
        s.c.c12[:] = 0.0
        s.c.c22[:] = 0.5
        d = dissipation(s, P)
        # tr = 2.5, det = 1, B = tr: (h2/2) * tr^2 * (tr^2 + 1/det - 4) integrated
        assert d.c_relax == pytest.approx(0.5 * 0.4 * 2.5 * 2.5 * 3.25 * 4.0, rel=1e-13)

    def test_relaxation_rate_is_elastic_energy_release(self):
        # d/dt E_el along the pure relaxation flow must equal -c_relax
        g = make_grid(8, 8, lx=2.0, ly=2.0)
        s = homogeneous_state(g)
        s.c.c11[:] = 1.7
        s.c.c12[:] = 0.3
        s.c.c22[:] = 0.6
        d = dissipation(s, P).c_relax

        def elastic(eps):
            tr = s.c.c11 + s.c.c22
            h2 = 1.0 / (10.0 * 0.25)
            b = P.b_of_trace(tr)
            sc = s.copy()
            sc.c.c11 += eps * (-h2 * b * (tr * s.c.c11 - 1.0))
            sc.c.c12 += eps * (-h2 * b * tr * s.c.c12)
            sc.c.c22 += eps * (-h2 * b * (tr * s.c.c22 - 1.0))
            return free_energy(sc, P).elastic

        rate = oracles.richardson_derivative(elastic, 0.0, h=1e-5)
        assert rate == pytest.approx(-d, rel=1e-8)

    def test_conformation_gradient_terms_match_eigh_oracle(self):
        rng = np.random.default_rng(31)
        g = make_grid(12, 12, lx=4.0, ly=4.0)
        s = homogeneous_state(g)
        s.c = random_spd_conformation(g, rng)
        d = dissipation(s, P)

        c11, c12, c22 = s.c.c11, s.c.c12, s.c.c22
        mats = np.stack([np.stack([c11, c12], -1), np.stack([c12, c22], -1)], -2)
        w, v = np.linalg.eigh(mats)
        inv_sqrt = np.einsum("...ij,...j,...kj->...ik", v, 1.0 / np.sqrt(w), v)
        acc = np.zeros_like(c11)
        for deriv in (lambda z: oracles.dense_ddx(z, 4.0, 4.0), lambda z: oracles.dense_ddy(z, 4.0, 4.0)):
            dmat = np.stack(
                [
                    np.stack([deriv(c11), deriv(c12)], -1),
                    np.stack([deriv(c12), deriv(c22)], -1),
                ],
                -2,
            )
            m = inv_sqrt @ dmat @ inv_sqrt
            acc += (m * m).sum(axis=(-1, -2))
        ref_c_diff = 0.5 * P.eps2 * g.integrate(acc)
        assert d.c_diff == pytest.approx(ref_c_diff, rel=1e-10)

        tr = c11 + c22
        ref_trc = 0.5 * P.eps2 * g.integrate(
            oracles.dense_ddx(tr, 4.0, 4.0) ** 2 + oracles.dense_ddy(tr, 4.0, 4.0) ** 2
        )
        assert d.trc_diff == pytest.approx(ref_trc, rel=1e-10)

    def test_all_terms_nonnegative_randomized(self):
        rng = np.random.default_rng(37)
        g = make_grid(12, 12, lx=6.0, ly=6.0)
        for _ in range(8):
            s = homogeneous_state(g)
            s.phi.data[:] = 0.5 + 0.25 * oracles.band_limited_field(rng, 12, 12, keep=3)
            s.q.data[:] = 0.4 * oracles.band_limited_field(rng, 12, 12, keep=3)
            s.v.x[:] = 0.3 * oracles.band_limited_field(rng, 12, 12, keep=3)
            s.v.y[:] = 0.3 * oracles.band_limited_field(rng, 12, 12, keep=3)
            s.c = random_spd_conformation(g, rng)
            d = dissipation(s, P)
            for name in ("mix", "q_relax", "q_diff", "visc", "c_diff", "c_relax", "trc_diff"):
                assert getattr(d, name) >= -1e-13, name
            assert d.total >= 0.0

    def test_eps1_enables_q_diffusion(self):
        g = make_grid(16, 16, lx=2 * np.pi, ly=2 * np.pi)
        xx, _ = g.coords()
        s = homogeneous_state(g)
        s.q.data[:] = 0.1 * np.sin(xx)
        assert dissipation(s, P).q_diff == 0.0
        p2 = ModelParams(eps1=1e-3)
        area = (2 * np.pi) ** 2
        assert dissipation(s, p2).q_diff == pytest.approx(1e-3 * 0.01 * 0.5 * area, rel=1e-12)


class TestEnergyReport:
    def test_report_assembles_parts(self):
        g = make_grid(16, 16, lx=4.0, ly=4.0)
        s = init_state(g, InitialCondition(seed=9))
        r = energy_report(s, P)
        assert r.t == 0.0
        assert r.e_total == pytest.approx(r.e_mix + r.e_bulk + r.e_kin + r.e_el, rel=1e-15)
        assert r.d_total == pytest.approx(
            r.d_mix + r.d_q_relax + r.d_q_diff + r.d_visc + r.d_c_diff + r.d_c_relax + r.d_trc_diff,
            rel=1e-15,
        )
        assert r.min_eig_c == pytest.approx(EQUILIBRIUM_CONFORMATION, rel=1e-15)
        assert r.mass == pytest.approx(0.5 * 16.0, rel=1e-13)
        assert len(r.row()) == len(r.FIELDS)
