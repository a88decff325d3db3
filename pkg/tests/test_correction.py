"""Correction solver: source decomposition, Fredholm multiplier, decay bound."""

import numpy as np
import pytest
from scipy import integrate

from yamabe_cluster.bubble import Dim, bubble_profile, bubble_profile_d1, kernel0_profile
from yamabe_cluster.correction import (
    CorrectionField,
    CorrectionGridSpec,
    build_rhs,
    check_decay,
    mode_residual_norms,
    rhs_quadratic_form,
    solve_correction,
    traceless_symmetric_basis,
    translation_defect,
    write_modes_csv,
)
from yamabe_cluster.geometry import (
    flat_geometry,
    product_spheres_geometry,
    round_sphere_geometry,
)

N = 7
BETA_N = (N - 2) / (4 * (N - 1))
ALPHA_N = (N * (N - 2)) ** ((N - 2) / 4)


@pytest.fixture(scope="module")
def sphere_field():
    return solve_correction(round_sphere_geometry(Dim(N)))


@pytest.fixture(scope="module")
def product_field():
    return solve_correction(product_spheres_geometry(4, 3))


def radial_l0_source(geo, r):
    trace_part, _ = rhs_quadratic_form(geo)
    return trace_part * r * bubble_profile_d1(N, r) + BETA_N * geo.scal * bubble_profile(N, r)


class TestBuildRhs:
    def test_flat_vanishes(self, rng):
        geo = flat_geometry(Dim(N))
        pts = rng.normal(size=(40, N))
        np.testing.assert_array_equal(build_rhs(geo, pts), 0.0)

    def test_value_at_origin(self):
        geo = round_sphere_geometry(Dim(N))
        assert build_rhs(geo, np.zeros(N)) == pytest.approx(
            BETA_N * geo.scal * ALPHA_N, rel=1e-14
        )

    def test_sphere_hand_expansion(self):
        # term-by-term on x = t e_1: the Riemann contraction gives
        # (N-1) t U'(t)/3, the Christoffel term (2/3)(N-1) t U'(t), the scalar
        # term beta_N N(N-1) U(t); independent hand evaluation of the three
        # summands
        geo = round_sphere_geometry(Dim(N))
        for t in (0.05, 0.2, 0.7):
            x = np.zeros(N)
            x[0] = t
            term_a = (N - 1) * t * bubble_profile_d1(N, t) / 3.0
            term_b = 2.0 * (N - 1) * t * bubble_profile_d1(N, t) / 3.0
            term_c = BETA_N * N * (N - 1) * bubble_profile(N, t)
            assert build_rhs(geo, x) == pytest.approx(term_a + term_b + term_c, rel=1e-12)

    def test_mode_reconstruction_is_exact(self, rng):
        # the degree-<=2 mode data reproduce the literal source pointwise:
        # there is no content in harmonic degrees >= 3
        geo = product_spheres_geometry(4, 3)
        trace_part, qtilde = rhs_quadratic_form(geo)
        pts = rng.normal(size=(50, N))
        r = np.linalg.norm(pts, axis=1)
        recon = (
            (trace_part * r * r + np.einsum("ab,pa,pb->p", qtilde, pts, pts))
            * bubble_profile_d1(N, r) / r
            + BETA_N * geo.scal * bubble_profile(N, r)
        )
        lit = build_rhs(geo, pts)
        np.testing.assert_allclose(recon, lit, rtol=1e-12)

    def test_no_harmonics_beyond_degree_two(self, rng):
        # restrict the source to random great circles at fixed radius and
        # Fourier-analyze: angular frequencies >= 3 are empty
        geo = product_spheres_geometry(4, 3)
        for _ in range(3):
            e = rng.normal(size=N)
            e /= np.linalg.norm(e)
            f = rng.normal(size=N)
            f -= (f @ e) * e
            f /= np.linalg.norm(f)
            phi = np.linspace(0, 2 * np.pi, 64, endpoint=False)
            for radius in (0.5, 2.0):
                circle = radius * (np.outer(np.cos(phi), e) + np.outer(np.sin(phi), f))
                coeffs = np.fft.rfft(build_rhs(geo, circle))
                total = np.abs(coeffs).sum()
                assert np.abs(coeffs[3:]).max() < 1e-10 * total

    def test_translation_defect_vanishes(self):
        assert translation_defect(product_spheres_geometry(4, 3)) == 0.0


class TestSolveFlat:
    def test_exactly_zero(self):
        fld = solve_correction(flat_geometry(Dim(N)))
        assert np.all(fld.v0 == 0.0)
        assert np.all(fld.w2 == 0.0)
        assert fld.nu == 0.0
        assert check_decay(fld) == (0.0, True)


class TestSolveSphere:
    def test_nu_against_quadrature_oracle(self, sphere_field):
        geo = round_sphere_geometry(Dim(N))
        num = integrate.quad(
            lambda r: radial_l0_source(geo, r) * kernel0_profile(N, r) * r ** (N - 1),
            0, np.inf, limit=200)[0]
        den = integrate.quad(
            lambda r: kernel0_profile(N, r) ** 2 * r ** (N - 1), 0, np.inf, limit=200)[0]
        assert sphere_field.nu == pytest.approx(-num / den, rel=1e-6)

    def test_nu_nonzero(self, sphere_field):
        assert sphere_field.nu < -1.0

    def test_fredholm_consistency(self, sphere_field):
        geo = round_sphere_geometry(Dim(N))
        nu = sphere_field.nu
        pair = integrate.quad(
            lambda r: (radial_l0_source(geo, r) + nu * kernel0_profile(N, r))
            * kernel0_profile(N, r) * r ** (N - 1),
            0, np.inf, limit=200)[0]
        scale = integrate.quad(
            lambda r: abs(radial_l0_source(geo, r) * kernel0_profile(N, r)) * r ** (N - 1),
            0, np.inf, limit=200)[0]
        assert abs(pair) / scale < 1e-8

    def test_orthogonality(self, sphere_field):
        res = sphere_field.orthogonality_residuals()
        assert res.shape == (N + 1,)
        assert np.all(res < 1e-8)

    def test_orthogonality_independent_quadrature(self, sphere_field):
        # trapezoid on the same samples: an independent rule confirms the
        # constraint at its own (lower) accuracy
        r = sphere_field.radial_grid
        pair = np.trapezoid(sphere_field.v0 * kernel0_profile(N, r) * r ** (N - 1), r)
        nv = np.sqrt(np.trapezoid(sphere_field.v0**2 * r ** (N - 1), r))
        np_ = np.sqrt(np.trapezoid(kernel0_profile(N, r) ** 2 * r ** (N - 1), r))
        assert abs(pair) / (nv * np_) < 1e-6

    def test_nu_grid_convergence(self, sphere_field):
        fine = solve_correction(round_sphere_geometry(Dim(N)), CorrectionGridSpec(n_nodes=8001))
        assert abs(fine.nu - sphere_field.nu) / abs(sphere_field.nu) < 1e-4

    def test_discrete_multiplier_converges_to_projection(self, sphere_field):
        fine = solve_correction(round_sphere_geometry(Dim(N)), CorrectionGridSpec(n_nodes=8001))
        gap_coarse = abs(sphere_field.nu_discrete - sphere_field.nu)
        gap_fine = abs(fine.nu_discrete - fine.nu)
        assert gap_fine < gap_coarse / 2.0

    def test_decay_envelope(self, sphere_field):
        c_bound, monotone = check_decay(sphere_field)
        assert np.isfinite(c_bound) and c_bound > 0
        assert monotone

    def test_residual_second_order(self, sphere_field):
        geo = round_sphere_geometry(Dim(N))
        fine = solve_correction(geo, CorrectionGridSpec(n_nodes=8001))
        r1 = mode_residual_norms(sphere_field, geo)[(0, 0)]
        r2 = mode_residual_norms(fine, geo)[(0, 0)]
        assert 2.5 < r1 / r2 < 6.0

    def test_sphere_source_is_isotropic(self, sphere_field):
        assert np.max(np.abs(sphere_field.qtilde)) == 0.0
        assert np.all(sphere_field.w2 == 0.0)


class TestSolveProduct:
    def test_anisotropic_mode_present(self, product_field):
        assert np.max(np.abs(product_field.qtilde)) > 0.1
        assert np.max(np.abs(product_field.w2)) > 0.0

    def test_orthogonality(self, product_field):
        assert np.all(product_field.orthogonality_residuals() < 1e-8)

    def test_decay(self, product_field):
        c_bound, monotone = check_decay(product_field)
        assert np.isfinite(c_bound)
        assert monotone

    def test_both_mode_residuals_second_order(self, product_field):
        geo = product_spheres_geometry(4, 3)
        fine = solve_correction(geo, CorrectionGridSpec(n_nodes=8001))
        coarse_res = mode_residual_norms(product_field, geo)
        fine_res = mode_residual_norms(fine, geo)
        for key in coarse_res:
            assert 2.5 < coarse_res[key] / fine_res[key] < 6.0

    def test_eval_angular_structure(self, product_field, rng):
        # V(x) = v0(r) + (w2(r)/r^2) Qt:xx reproduced through eval()
        pts = rng.normal(size=(20, N))
        v0f, wtf = product_field.profiles
        r = np.linalg.norm(pts, axis=1)
        expected = v0f(r) + wtf(r) * np.einsum(
            "ab,pa,pb->p", product_field.qtilde, pts, pts
        )
        np.testing.assert_allclose(product_field.eval(pts), expected, rtol=1e-12)

    def test_grid_spec_validation(self):
        with pytest.raises(ValueError):
            CorrectionGridSpec(r_max=50.0)
        with pytest.raises(ValueError):
            CorrectionGridSpec(n_nodes=500)
        with pytest.raises(ValueError):
            CorrectionGridSpec(max_degree=1)


class TestSyntheticDecay:
    def test_unit_envelope(self):
        # v0 = (1+r^2)^{-(N-4)/2} makes the weighted value envelope exactly 1
        grid_spec = CorrectionGridSpec()
        from yamabe_cluster.radial import make_grid

        grid = make_grid(grid_spec.r_max, grid_spec.n_nodes, grid_spec.grading)
        v0 = (1.0 + grid.r**2) ** (-(N - 4) / 2)
        fld = CorrectionField(
            dim=Dim(N), radial_grid=grid.r, v0=v0, w2=np.zeros_like(v0),
            qtilde=np.zeros((N, N)), trace_part=0.0, scal=0.0, nu=0.0,
            nu_discrete=0.0, grid_spec=grid_spec,
        )
        c_bound, monotone = check_decay(fld)
        assert c_bound == pytest.approx(1.0, rel=1e-10)
        assert monotone


class TestModeTableAndCsv:
    def test_traceless_basis_orthonormal(self):
        basis = traceless_symmetric_basis(5)
        assert len(basis) == 5 * 6 // 2 - 1
        for i, A in enumerate(basis):
            assert abs(np.trace(A)) < 1e-14
            for j, B in enumerate(basis):
                assert np.sum(A * B) == pytest.approx(1.0 if i == j else 0.0, abs=1e-14)

    def test_mode_table_keys(self, product_field):
        keys = set(product_field.mode_table)
        assert (0, 0) in keys
        assert any(ell == 2 for ell, _ in keys)

    def test_csv_dump(self, product_field, tmp_path):
        path = tmp_path / "modes.csv"
        write_modes_csv(product_field, str(path))
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# N=7 nu=")
        assert lines[1] == "r,ell,m,value"
        n_modes = len(product_field.mode_table)
        assert len(lines) == 2 + n_modes * product_field.radial_grid.size
