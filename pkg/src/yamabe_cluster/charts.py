"""Analytic chart models: the coefficient fields of the operator in the chart.

A chart model supplies, at batched points x in the normal-coordinate ball,
the four fields the chart form of the conformal Laplacian needs:

    -Delta_g u = -Delta u - (g^{ij} - delta^{ij}) d2_ij u + G^k d_k u,

namely g_inv = g^{ij}(x), gamma = G^k(x) = (g^{ij} Gamma^k_{ij})(x), the volume
factor sqrt_det = |g(x)|^{1/2}, and the scalar-curvature potential scal(x).

Three models are provided.

* ProductSpheresChart: the exact closed-form chart of S^n x S^m (unit factors)
  at any point; geodesics split, so each block carries the round-sphere chart
  g_tangential = sin^2(r)/r^2.  A symmetric space: the chart is even in x, so
  the quadratic truncation is accurate to O(|x|^4).

* TruncatedChart: the quadratic truncation generated by pointwise curvature
  data, optionally extended by synthetic third-order coefficients.  Generic
  compact manifolds have nonvanishing cubic chart terms, and those terms are
  what drives the N-dependent error-norm rates; the synthetic extension models
  them with seeded, symmetrized, curvature-scaled coefficients so the rates
  are measurable without a global manifold in hand.

* FlatChart: identity fields, zero curvature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bubble import Dim
from .geometry import GeometryData, metric_expansion

__all__ = ["ChartModel", "FlatChart", "TruncatedChart", "ProductSpheresChart", "chart_from_spec"]


class ChartModel:
    """Interface: fields(x) -> (g_inv, gamma, sqrt_det, scal) for x (B, N)."""

    dim: Dim

    def fields(self, x: np.ndarray):
        raise NotImplementedError

    def validate_ball(self, r0: float, n_probe: int = 64) -> None:
        """Check ellipticity and positive volume on the ball |x| <= r0."""
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(n_probe, self.dim.n))
        pts *= (r0 * rng.uniform(0, 1, size=(n_probe, 1)) ** (1.0 / self.dim.n)
                / np.linalg.norm(pts, axis=1, keepdims=True))
        g_inv, _, sqrt_det, _ = self.fields(pts)
        eigs = np.linalg.eigvalsh(g_inv)
        if eigs.min() < 0.05 or sqrt_det.min() < 0.05:
            raise ValueError(
                f"chart degenerates inside |x| <= {r0}: min metric eigenvalue "
                f"{eigs.min():.3f}, min volume factor {sqrt_det.min():.3f}"
            )


@dataclass
class FlatChart(ChartModel):
    dim: Dim

    def fields(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        B, N = x.shape
        g_inv = np.broadcast_to(np.eye(N), (B, N, N)).copy()
        return g_inv, np.zeros((B, N)), np.ones(B), np.zeros(B)


class TruncatedChart(ChartModel):
    """Quadratic chart truncation, optionally with synthetic cubic terms.

    With cubic_scale > 0 the model appends seeded third-order coefficients to
    g_inv and sqrt_det, second-order coefficients to gamma, and a linear slope
    to scal, each fully symmetrized and scaled by cubic_scale times the local
    curvature magnitude.  The result is an honest smooth elliptic model whose
    second-order data coincide with the supplied geometry.
    """

    def __init__(self, geo: GeometryData, cubic_scale: float = 0.0, seed: int = 0):
        self.dim = geo.dim
        self.geo = geo
        self.cubic_scale = float(cubic_scale)
        N = geo.dim.n
        if self.cubic_scale <= 0:
            self._g3 = self._gam2 = self._s1 = self._v3 = None
            return
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC3)))
        probe = rng.normal(size=(128, N))
        probe /= np.linalg.norm(probe, axis=1, keepdims=True)
        # reference magnitudes of the quadratic chart data on the unit sphere,
        # so the synthetic next-order terms stay curvature-sized and elliptic
        g_q, gam_q, sd_q = metric_expansion(geo, probe)
        g_ref = max(float(np.max(np.abs(g_q - np.eye(N)))), 0.05)
        gam_ref = max(float(np.max(np.abs(gam_q))), 0.05)
        sd_ref = max(float(np.max(np.abs(sd_q - 1.0))), 0.05)
        scal_ref = max(abs(geo.scal), 1.0)

        g3 = rng.normal(size=(N, N, N, N, N))
        g3 = _symmetrize_last3(0.5 * (g3 + np.einsum("ijabc->jiabc", g3)))
        cal = np.max(np.abs(np.einsum("ijabc,pa,pb,pc->pij", g3, probe, probe, probe)))
        self._g3 = self.cubic_scale * g_ref * g3 / cal

        gam2 = rng.normal(size=(N, N, N))
        gam2 = 0.5 * (gam2 + np.einsum("kab->kba", gam2))
        cal = np.max(np.abs(np.einsum("kab,pa,pb->pk", gam2, probe, probe)))
        self._gam2 = self.cubic_scale * gam_ref * gam2 / cal

        s1 = rng.normal(size=N)
        self._s1 = self.cubic_scale * scal_ref * s1 / np.max(np.abs(probe @ s1))

        v3 = _symmetrize_last3(rng.normal(size=(1, N, N, N)))[0]
        cal = np.max(np.abs(np.einsum("abc,pa,pb,pc->p", v3, probe, probe, probe)))
        self._v3 = self.cubic_scale * sd_ref * v3 / cal

    def fields(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        g_inv, gamma, sqrt_det = metric_expansion(self.geo, x)
        scal = np.full(x.shape[0], self.geo.scal)
        if self._g3 is not None:
            g_inv = g_inv + np.einsum("ijabc,...a,...b,...c->...ij", self._g3, x, x, x)
            gamma = gamma + np.einsum("kab,...a,...b->...k", self._gam2, x, x)
            sqrt_det = sqrt_det + np.einsum("abc,...a,...b,...c->...", self._v3, x, x, x)
            scal = scal + x @ self._s1
        return g_inv, gamma, sqrt_det, scal


def _symmetrize_last3(t: np.ndarray) -> np.ndarray:
    return (
        t
        + np.einsum("...abc->...acb", t)
        + np.einsum("...abc->...bac", t)
        + np.einsum("...abc->...bca", t)
        + np.einsum("...abc->...cab", t)
        + np.einsum("...abc->...cba", t)
    ) / 6.0


class ProductSpheresChart(ChartModel):
    """Exact normal-coordinate chart of the unit-sphere product S^n x S^m."""

    def __init__(self, n: int, m: int):
        if n + m < 7:
            raise ValueError(f"S^{n} x S^{m} has dimension {n + m} < 7")
        self.n, self.m = int(n), int(m)
        self.dim = Dim(n + m)
        self.scal_value = float(n * (n - 1) + m * (m - 1))
        self._blocks = [(0, n), (n, n + m)]
        self._block_dims = [n, m]

    # sin^2(r)/r^2 never vanishes inside the injectivity radius pi of the
    # factors; callers should keep r0 well below that.

    @staticmethod
    def _tangential_inverse(r: np.ndarray) -> np.ndarray:
        """r^2 / sin^2 r with the even series near 0."""
        small = r < 1e-4
        safe = np.where(small, 1.0, r)
        exact = safe**2 / np.sin(safe) ** 2
        series = 1.0 + r**2 / 3.0 + r**4 / 15.0
        return np.where(small, series, exact)

    @staticmethod
    def _gamma_radial(r: np.ndarray, nb: int) -> np.ndarray:
        """(n_b - 1)(r - sin r cos r)/sin^2 r, with series near 0."""
        small = r < 1e-4
        safe = np.where(small, 1.0, r)
        exact = (safe - 0.5 * np.sin(2.0 * safe)) / np.sin(safe) ** 2
        series = 2.0 * r / 3.0 + 4.0 * r**3 / 45.0
        return (nb - 1) * np.where(small, series, exact)

    def fields(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        B, N = x.shape
        g_inv = np.zeros((B, N, N))
        gamma = np.zeros((B, N))
        sqrt_det = np.ones(B)
        for (lo, hi), nb in zip(self._blocks, self._block_dims):
            u = x[:, lo:hi]
            r = np.linalg.norm(u, axis=1)
            rsafe = np.where(r < 1e-30, 1.0, r)
            uhat = u / rsafe[:, None]
            tang = self._tangential_inverse(r)
            proj = uhat[:, :, None] * uhat[:, None, :]
            eye = np.eye(nb)
            g_inv[:, lo:hi, lo:hi] = (
                proj + tang[:, None, None] * (eye - proj)
            )
            gamma[:, lo:hi] = self._gamma_radial(r, nb)[:, None] * uhat
            ratio = np.where(r < 1e-8, 1.0 - r**2 / 6.0, np.sin(rsafe) / rsafe)
            sqrt_det *= ratio ** (nb - 1)
        return g_inv, gamma, sqrt_det, np.full(B, self.scal_value)


def chart_from_spec(spec: dict | None, geo: GeometryData) -> ChartModel:
    """Build a chart model from the optional geometry-JSON 'chart_model' entry.

    None or {"kind": "truncated"} selects the quadratic truncation; the
    synthetic cubic extension and the exact product chart are selected by
    kind "synthetic_cubic" and "product_spheres".
    """
    if spec is None:
        return TruncatedChart(geo)
    kind = spec.get("kind", "truncated")
    if kind == "flat":
        return FlatChart(geo.dim)
    if kind == "truncated":
        return TruncatedChart(geo)
    if kind == "synthetic_cubic":
        return TruncatedChart(geo, cubic_scale=float(spec.get("scale", 0.5)),
                              seed=int(spec.get("seed", 0)))
    if kind == "product_spheres":
        return ProductSpheresChart(int(spec["n"]), int(spec["m"]))
    raise ValueError(f"unknown chart model kind {kind!r}")
