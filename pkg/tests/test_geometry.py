"""Curvature package, Weyl decomposition, and chart-model oracles."""

import json

import numpy as np
import pytest

from yamabe_cluster.bubble import Dim
from yamabe_cluster.charts import FlatChart, ProductSpheresChart, TruncatedChart, chart_from_spec
from yamabe_cluster.geometry import (
    GeometryData,
    check_riemann_symmetries,
    christoffel_deriv_from_riemann,
    flat_geometry,
    hessian_of_scalar_field,
    load_geometry_json,
    metric_expansion,
    product_spheres_geometry,
    ricci_from_riemann,
    round_sphere_geometry,
    save_geometry_json,
    weyl_from_riemann,
)


def sphere_riemann(N):
    """Unit round sphere in the storage convention: R[i,a,b,j] = d_ib d_aj - d_ij d_ab."""
    eye = np.eye(N)
    return np.einsum("ib,aj->iabj", eye, eye) - np.einsum("ij,ab->iabj", eye, eye)


def embedding_metric_fd(x, h=1e-6):
    """Brute-force pullback metric of S^N through the exponential map at a pole.

    E(x) = cos|x| e_{N+1} + sin|x| (x/|x|, 0), differentiated by central
    differences; independent of every closed form in the package.
    """
    x = np.asarray(x, dtype=float)
    N = x.size

    def emb(y):
        r = np.linalg.norm(y)
        out = np.zeros(N + 1)
        out[N] = np.cos(r)
        if r > 0:
            out[:N] = np.sin(r) * y / r
        return out

    J = np.empty((N + 1, N))
    for i in range(N):
        e = np.zeros(N)
        e[i] = h
        J[:, i] = (emb(x + e) - emb(x - e)) / (2 * h)
    return J.T @ J


class TestSymmetries:
    def test_sphere_tensor_passes(self):
        check_riemann_symmetries(sphere_riemann(7))

    def test_asymmetric_tensor_rejected(self):
        R = sphere_riemann(7)
        bad = R.copy()
        bad[0, 1, 2, 3] += 0.5
        with pytest.raises(ValueError):
            check_riemann_symmetries(bad)

    def test_weyl_rejects_bad_input(self):
        bad = np.zeros((7,) * 4)
        bad[0, 1, 2, 3] = 1.0
        with pytest.raises(ValueError):
            weyl_from_riemann(bad, Dim(7))

    def test_sphere_ricci(self):
        for N in (7, 9):
            ric = ricci_from_riemann(sphere_riemann(N))
            np.testing.assert_allclose(ric, (N - 1) * np.eye(N), atol=1e-14)


class TestWeylDecomposition:
    def test_round_sphere_is_conformally_flat(self):
        weyl, norm_sq = weyl_from_riemann(sphere_riemann(8), Dim(8))
        assert norm_sq == pytest.approx(0.0, abs=1e-22)
        assert np.max(np.abs(weyl)) < 1e-13

    def test_flat_space(self):
        weyl, norm_sq = weyl_from_riemann(np.zeros((7,) * 4), Dim(7))
        assert norm_sq == 0.0

    def test_product_has_nonzero_weyl(self):
        geo = product_spheres_geometry(4, 3)
        assert geo.weyl_norm_sq > 0.1

    def test_weyl_is_trace_free(self):
        geo = product_spheres_geometry(4, 3)
        w = geo.weyl_tensor
        scale = np.max(np.abs(w))
        for spec in ("iaib->ab", "iabi->ab", "iaaj->ij", "iibj->bj", "iabb->ia"):
            contraction = np.einsum(spec, w)
            assert np.max(np.abs(contraction)) < 1e-10 * scale

    def test_decomposition_reconstructs_riemann(self):
        for geo in (product_spheres_geometry(4, 3), round_sphere_geometry(Dim(7))):
            N = geo.dim.n
            eye = np.eye(N)
            ric = geo.ricci
            scal = float(np.trace(ric))
            E = ric - scal / N * eye

            def kn(h, k):
                return (
                    np.einsum("ib,aj->iabj", h, k)
                    - np.einsum("ij,ab->iabj", h, k)
                    + np.einsum("aj,ib->iabj", h, k)
                    - np.einsum("ab,ij->iabj", h, k)
                )

            rebuilt = (
                geo.weyl_tensor + kn(E, eye) / (N - 2) + scal / (2 * N * (N - 1)) * kn(eye, eye)
            )
            np.testing.assert_allclose(rebuilt, geo.riemann, rtol=0, atol=1e-12 * N)


class TestProductSpheres:
    def test_four_three(self):
        geo = product_spheres_geometry(4, 3)
        assert geo.dim.n == 7
        assert geo.scal == 18.0
        assert geo.weyl_norm_sq > 0

    def test_five_four(self):
        geo = product_spheres_geometry(5, 4)
        assert geo.dim.n == 9
        assert geo.scal == 32.0

    def test_dimension_gate(self):
        with pytest.raises(ValueError):
            product_spheres_geometry(1, 1)
        with pytest.raises(ValueError):
            product_spheres_geometry(3, 3)

    def test_caller_supplied_hessian(self):
        Q = np.eye(7)
        geo = product_spheres_geometry(4, 3, weyl_hessian=Q)
        np.testing.assert_array_equal(geo.weyl_hessian, Q)


class TestMetricExpansion:
    def test_origin(self):
        geo = product_spheres_geometry(4, 3)
        g_inv, gamma, sqrt_det = metric_expansion(geo, np.zeros(7))
        np.testing.assert_allclose(g_inv, np.eye(7))
        np.testing.assert_allclose(gamma, 0.0)
        assert sqrt_det == 1.0

    def test_flat_everywhere(self, rng):
        geo = flat_geometry(Dim(7))
        x = rng.normal(size=7)
        g_inv, gamma, sqrt_det = metric_expansion(geo, x)
        np.testing.assert_allclose(g_inv, np.eye(7))
        np.testing.assert_allclose(gamma, 0.0)
        assert sqrt_det == 1.0

    def test_literal_substitution_example(self):
        # with input tensor R[i,a,b,j] = d_ij d_ab - d_ib d_aj (a valid
        # symmetric tensor, the negative of the round sphere's) the formula
        # gives g_inv_22 = 1 - t^2/3 at x = t e_1
        N, t = 7, 0.3
        eye = np.eye(N)
        R = np.einsum("ij,ab->iabj", eye, eye) - np.einsum("ib,aj->iabj", eye, eye)
        geo = GeometryData(dim=Dim(N), riemann=R, scal=float(np.trace(ricci_from_riemann(R))),
                           christoffel_deriv=np.zeros((N,) * 4), weyl_hessian=np.zeros((N, N)))
        x = np.zeros(N)
        x[0] = t
        g_inv, _, _ = metric_expansion(geo, x)
        assert g_inv[1, 1] == pytest.approx(1 - t**2 / 3, rel=1e-14)

    def test_true_sphere_tangential_growth(self):
        # the round sphere chart has g^{22}(t e_1) = t^2/sin^2 t = 1 + t^2/3 + ...
        N, t = 7, 0.2
        geo = round_sphere_geometry(Dim(N))
        x = np.zeros(N)
        x[0] = t
        g_inv, _, _ = metric_expansion(geo, x)
        assert g_inv[1, 1] == pytest.approx(1 + t**2 / 3, rel=1e-3)

    def test_richardson_against_exact_sphere_chart(self):
        # truncation error vs the exact chart.  g_inv and sqrt_det are even in
        # x on the sphere, so their error is O(|x|^4) (ratio 16 >= the generic
        # cubic claim); the contracted Christoffel field is odd, its truncation
        # error is genuinely cubic, ratio 8.
        N = 7
        geo = round_sphere_geometry(Dim(N))

        def errs(t):
            x = np.zeros(N)
            x[0] = t
            g_inv, gamma, sqrt_det = metric_expansion(geo, x)
            tang_exact = t**2 / np.sin(t) ** 2
            sd_exact = (np.sin(t) / t) ** (N - 1)
            gam_exact = (N - 1) * (t - np.sin(t) * np.cos(t)) / np.sin(t) ** 2
            even = max(abs(g_inv[1, 1] - tang_exact), abs(sqrt_det - sd_exact))
            odd = abs(gamma[0] - gam_exact)
            return even, odd

        even1, odd1 = errs(0.2)
        even2, odd2 = errs(0.1)
        assert even1 / even2 == pytest.approx(16.0, rel=0.25)
        assert odd1 / odd2 == pytest.approx(8.0, rel=0.25)
        assert min(even1 / even2, odd1 / odd2) > 7.0  # at least O(|x|^3) overall

    def test_batched_evaluation(self, rng):
        geo = product_spheres_geometry(4, 3)
        pts = rng.normal(size=(5, 7)) * 0.1
        g_inv, gamma, sqrt_det = metric_expansion(geo, pts)
        for i in range(5):
            gi, ga, sd = metric_expansion(geo, pts[i])
            np.testing.assert_allclose(g_inv[i], gi)
            np.testing.assert_allclose(gamma[i], ga)
            assert sqrt_det[i] == pytest.approx(sd)


class TestChristoffel:
    def test_sphere_closed_form(self):
        N = 7
        dG = christoffel_deriv_from_riemann(sphere_riemann(N))
        eye = np.eye(N)
        expected = -(
            np.einsum("il,jk->lkij", eye, eye)
            + np.einsum("ik,jl->lkij", eye, eye)
            - 2 * np.einsum("ij,kl->lkij", eye, eye)
        ) / 3.0
        np.testing.assert_allclose(dG, expected, atol=1e-14)

    def test_contracted_is_two_thirds_ricci(self):
        for geo in (round_sphere_geometry(Dim(7)), product_spheres_geometry(5, 4)):
            np.testing.assert_allclose(geo.gamma_matrix(), 2.0 / 3.0 * geo.ricci, atol=1e-13)


class TestHessianOfScalarField:
    def test_quadratic_norm(self):
        H = hessian_of_scalar_field(lambda x: float(x @ x), np.zeros(5))
        np.testing.assert_allclose(H, 2 * np.eye(5), atol=1e-6)

    def test_constant(self):
        H = hessian_of_scalar_field(lambda x: 3.0, np.ones(4))
        np.testing.assert_allclose(H, 0.0, atol=1e-12)

    def test_anisotropic(self):
        H = hessian_of_scalar_field(lambda x: x[0] ** 2 + 3 * x[1] ** 2, np.zeros(6))
        expected = np.zeros((6, 6))
        expected[0, 0], expected[1, 1] = 2.0, 6.0
        np.testing.assert_allclose(H, expected, atol=1e-6)


class TestCharts:
    def test_flat_chart(self, rng):
        chart = FlatChart(Dim(7))
        g_inv, gamma, sd, scal = chart.fields(rng.normal(size=(3, 7)))
        np.testing.assert_allclose(g_inv, np.broadcast_to(np.eye(7), (3, 7, 7)))
        np.testing.assert_allclose(gamma, 0)
        np.testing.assert_allclose(sd, 1)
        np.testing.assert_allclose(scal, 0)

    def test_product_chart_origin(self):
        chart = ProductSpheresChart(4, 3)
        g_inv, gamma, sd, scal = chart.fields(np.zeros((1, 7)))
        np.testing.assert_allclose(g_inv[0], np.eye(7), atol=1e-12)
        np.testing.assert_allclose(gamma[0], 0, atol=1e-12)
        assert sd[0] == pytest.approx(1.0)
        assert scal[0] == 18.0

    def test_product_chart_against_embedding_oracle(self, rng):
        # exact chart vs a brute-force FD pullback through the exponential
        # map, block by block
        chart = ProductSpheresChart(4, 3)
        u = rng.normal(size=4) * 0.3
        v = rng.normal(size=3) * 0.3
        x = np.concatenate([u, v])[None, :]
        g_inv, _, sd, _ = chart.fields(x)
        g_exact = np.zeros((7, 7))
        g_exact[:4, :4] = embedding_metric_fd(u)
        g_exact[4:, 4:] = embedding_metric_fd(v)
        np.testing.assert_allclose(g_inv[0], np.linalg.inv(g_exact), rtol=1e-7, atol=1e-8)
        det = np.linalg.det(g_exact)
        assert sd[0] == pytest.approx(np.sqrt(det), rel=1e-7)

    def test_product_chart_matches_truncation_to_quadratic(self):
        geo = product_spheres_geometry(4, 3)
        exact = ProductSpheresChart(4, 3)
        trunc = TruncatedChart(geo)
        x = np.full((1, 7), 0.01)
        for a, b in zip(exact.fields(x), trunc.fields(x)):
            np.testing.assert_allclose(a, b, atol=5e-6)

    def test_product_chart_radial_laplacian_identity(self):
        # the chart fields reproduce the classical sphere Laplacian
        # u'' + (N-1) cot(r) u' for radial test functions on a single factor
        chart = ProductSpheresChart(7, 2)  # first block is S^7

        def u(r):
            return np.exp(-0.5 * r**2)

        r0, h = 0.7, 1e-5
        x = np.zeros((1, 9))
        x[0, 0] = r0
        g_inv, gamma, _, _ = chart.fields(x)
        # assemble Delta_g u = g^{ij} d2_ij u - gamma^k d_k u for u(|x_block|)
        up = (u(r0 + h) - u(r0 - h)) / (2 * h)
        upp = (u(r0 + h) - 2 * u(r0) + u(r0 - h)) / h**2
        d2 = np.zeros((9, 9))
        d2[0, 0] = upp
        for i in range(1, 7):
            d2[i, i] = up / r0
        lap = float(np.einsum("ij,ij->", g_inv[0], d2)) - gamma[0, 0] * up
        expected = upp + 6 * np.cos(r0) / np.sin(r0) * up
        assert lap == pytest.approx(expected, rel=1e-8)

    def test_synthetic_terms_are_next_order(self):
        # the synthetic extension adds cubic terms to g_inv and sqrt_det,
        # a quadratic term to gamma, and a linear slope to scal: each sits one
        # order beyond the truncated data it perturbs
        geo = product_spheres_geometry(4, 3)
        plain = TruncatedChart(geo)
        cubic = TruncatedChart(geo, cubic_scale=0.5, seed=3)
        x = 0.05 * np.ones((1, 7))

        def gaps(pts):
            fa, fb = plain.fields(pts), cubic.fields(pts)
            return [np.max(np.abs(a - b)) for a, b in zip(fa, fb)]

        g1, g2 = gaps(x), gaps(x / 2)
        for ratio, expected in zip(np.array(g1) / np.array(g2), (8.0, 4.0, 8.0, 2.0)):
            assert ratio == pytest.approx(expected, rel=0.1)

    def test_synthetic_cubic_deterministic(self):
        geo = product_spheres_geometry(4, 3)
        a = TruncatedChart(geo, cubic_scale=0.5, seed=11)
        b = TruncatedChart(geo, cubic_scale=0.5, seed=11)
        x = np.full((2, 7), 0.08)
        for fa, fb in zip(a.fields(x), b.fields(x)):
            np.testing.assert_array_equal(fa, fb)

    def test_validate_ball(self):
        ProductSpheresChart(4, 3).validate_ball(1.0)
        geo = product_spheres_geometry(4, 3)
        TruncatedChart(geo, cubic_scale=0.5, seed=0).validate_ball(1.0)

    def test_chart_from_spec(self):
        geo = product_spheres_geometry(4, 3)
        assert isinstance(chart_from_spec(None, geo), TruncatedChart)
        assert isinstance(chart_from_spec({"kind": "flat"}, geo), FlatChart)
        assert isinstance(
            chart_from_spec({"kind": "product_spheres", "n": 4, "m": 3}, geo),
            ProductSpheresChart,
        )
        with pytest.raises(ValueError):
            chart_from_spec({"kind": "nope"}, geo)


class TestGeometryJson:
    def test_round_trip(self, tmp_path):
        geo = product_spheres_geometry(4, 3, weyl_hessian=np.eye(7))
        path = tmp_path / "geo.json"
        save_geometry_json(geo, str(path), chart_model={"kind": "product_spheres", "n": 4, "m": 3})
        loaded, chart_spec = load_geometry_json(str(path))
        np.testing.assert_allclose(loaded.riemann, geo.riemann, atol=1e-15)
        np.testing.assert_allclose(loaded.christoffel_deriv, geo.christoffel_deriv, atol=1e-15)
        np.testing.assert_allclose(loaded.weyl_hessian, geo.weyl_hessian)
        assert loaded.scal == geo.scal
        assert loaded.weyl_norm_sq == pytest.approx(geo.weyl_norm_sq, rel=1e-12)
        assert chart_spec == {"kind": "product_spheres", "n": 4, "m": 3}

    def test_weyl_norm_override(self, tmp_path):
        geo = flat_geometry(Dim(7), weyl_norm_sq=1.0)
        path = tmp_path / "flat.json"
        save_geometry_json(geo, str(path))
        loaded, _ = load_geometry_json(str(path))
        assert loaded.weyl_norm_sq == 1.0
        assert np.max(np.abs(loaded.riemann)) == 0.0


class TestSymbolicOracle:
    def test_sphere_chart_symbolic(self):
        # symbolic pullback of the round metric through the exponential map on
        # a 2-plane slice x = (t, s, 0, ...): matches the closed forms used by
        # ProductSpheresChart
        sympy = pytest.importorskip("sympy")
        t, s = sympy.symbols("t s", positive=True)
        rho = sympy.sqrt(t**2 + s**2)
        # embedding components that are nonzero on the slice
        E = [sympy.sin(rho) * t / rho, sympy.sin(rho) * s / rho, sympy.cos(rho)]
        g11 = sum(sympy.diff(c, t) ** 2 for c in E)
        g12 = sum(sympy.diff(c, t) * sympy.diff(c, s) for c in E)
        closed_11 = t**2 / rho**2 + sympy.sin(rho) ** 2 / rho**2 * (1 - t**2 / rho**2)
        closed_12 = t * s / rho**2 - sympy.sin(rho) ** 2 / rho**2 * t * s / rho**2
        assert sympy.simplify(g11 - closed_11) == 0
        assert sympy.simplify(g12 - closed_12) == 0
