"""Pointwise curvature data at the concentration point and the chart expansion.

Everything downstream consumes tensors evaluated at a single point xi0, read in
geodesic normal coordinates: the inverse metric g^{ij} = delta - (1/3) R_{iabj}
x_a x_b + O(|x|^3), the contracted Christoffel linearization, and the volume
factor sqrt(det g) = 1 - (1/6) Ric_{ab} x_a x_b + O(|x|^3).

Storage convention.  riemann[i, a, b, j] is antisymmetric in (i, a) and (b, j),
symmetric under pair exchange, and satisfies the first Bianchi identity; the
Ricci contraction is Ric_{ab} = sum_i riemann[i, a, i, b].  The unit round
sphere is riemann[i, a, b, j] = d_ib d_aj - d_ij d_ab, which reproduces the
exact sphere chart (g^{ij} tangential eigenvalue 1 + |x|^2/3 + ...) through
quadratic order; the tests pin this against a symbolically derived oracle.

In normal coordinates the contracted Christoffel expansion is not free data:
sum_i Gamma^k_{ii}(x) = (2/3) Ric_{kl} x_l + O(|x|^2), and
christoffel_deriv_from_riemann derives the full linear coefficient from the
curvature tensor.  GeometryData still stores the coefficient explicitly so
synthetic inputs can decouple it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bubble import Dim

__all__ = [
    "GeometryData",
    "metric_expansion",
    "weyl_from_riemann",
    "product_spheres_geometry",
    "round_sphere_geometry",
    "flat_geometry",
    "hessian_of_scalar_field",
    "ricci_from_riemann",
    "christoffel_deriv_from_riemann",
    "check_riemann_symmetries",
    "load_geometry_json",
    "save_geometry_json",
]

_SYMMETRY_TOL = 1e-12


def ricci_from_riemann(riemann: np.ndarray) -> np.ndarray:
    """Ricci tensor Ric_{ab} = sum_i R[i, a, i, b]."""
    return np.einsum("iaib->ab", riemann)


def check_riemann_symmetries(riemann: np.ndarray, tol: float = _SYMMETRY_TOL) -> None:
    """Raise if the algebraic Riemann symmetries fail beyond tol (relative)."""
    scale = float(np.max(np.abs(riemann)))
    if scale == 0.0:
        return
    checks = {
        "antisymmetry in first pair": riemann + np.einsum("iabj->aibj", riemann),
        "antisymmetry in second pair": riemann + np.einsum("iabj->iajb", riemann),
        "pair exchange symmetry": riemann - np.einsum("iabj->bjia", riemann),
        "first Bianchi identity": (
            riemann
            + np.einsum("iabj->ibja", riemann)
            + np.einsum("iabj->ijab", riemann)
        ),
    }
    for name, defect in checks.items():
        rel = float(np.max(np.abs(defect))) / scale
        if rel > tol:
            raise ValueError(f"riemann tensor violates {name}: relative defect {rel:.3e}")


def _kulkarni_nomizu(h: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Kulkarni-Nomizu product in the riemann[i,a,b,j] storage layout."""
    return (
        np.einsum("ib,aj->iabj", h, k)
        - np.einsum("ij,ab->iabj", h, k)
        + np.einsum("aj,ib->iabj", h, k)
        - np.einsum("ab,ij->iabj", h, k)
    )


def weyl_from_riemann(riemann: np.ndarray, dim: Dim) -> tuple[np.ndarray, float]:
    """Fully trace-free Weyl part of riemann and its squared Frobenius norm.

    Uses the orthogonal decomposition riemann = weyl + (E o g)/(N-2)
    + scal (g o g)/(2N(N-1)) with E the trace-free Ricci part, all under the
    flat metric of the normal chart at xi0.
    """
    N = dim.n
    riemann = np.asarray(riemann, dtype=float)
    if riemann.shape != (N, N, N, N):
        raise ValueError(f"riemann must have shape {(N,) * 4}, got {riemann.shape}")
    check_riemann_symmetries(riemann)
    ric = ricci_from_riemann(riemann)
    scal = float(np.trace(ric))
    eye = np.eye(N)
    traceless = ric - (scal / N) * eye
    weyl = (
        riemann
        - _kulkarni_nomizu(traceless, eye) / (N - 2)
        - (scal / (2.0 * N * (N - 1))) * _kulkarni_nomizu(eye, eye)
    )
    return weyl, float(np.sum(weyl * weyl))


def christoffel_deriv_from_riemann(riemann: np.ndarray) -> np.ndarray:
    """Linear Christoffel coefficient d_l Gamma^k_{ij} of the normal chart.

    Obtained by differentiating g_{jm}(x) = delta_jm + (1/3) R[j,a,b,m] x_a x_b
    through Gamma^k_{ij} = (d_i g_{jk} + d_j g_{ik} - d_k g_{ij})/2; returns the
    array indexed [l, k, i, j].  On the unit sphere this reduces to
    -(d_il d_jk + d_ik d_jl - 2 d_ij d_kl)/3, the classical expansion.
    """
    r = np.asarray(riemann, dtype=float)
    return (
        np.einsum("jilk->lkij", r)
        + np.einsum("jlik->lkij", r)
        + np.einsum("ijlk->lkij", r)
        + np.einsum("iljk->lkij", r)
        - np.einsum("iklj->lkij", r)
        - np.einsum("ilkj->lkij", r)
    ) / 6.0


@dataclass(frozen=True)
class GeometryData:
    """Curvature package at the concentration point xi0.

    weyl_hessian is the quadratic form Q(xi0) = D^2 |Weyl|^2 at the minimum.
    It is input data, not derived: the Hessian of the squared Weyl norm needs
    third metric derivatives that a pointwise package cannot supply.  Homogeneous
    examples (round sphere, unwarped products) have Q = 0; synthetic inputs may
    install any positive-definite form.
    """

    dim: Dim
    riemann: np.ndarray
    scal: float
    christoffel_deriv: np.ndarray
    weyl_hessian: np.ndarray
    weyl_norm_sq: float = None  # type: ignore[assignment]  # derived when omitted
    weyl_tensor: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        N = self.dim.n
        riemann = np.array(self.riemann, dtype=float)
        christ = np.array(self.christoffel_deriv, dtype=float)
        hess = np.array(self.weyl_hessian, dtype=float)
        if riemann.shape != (N, N, N, N):
            raise ValueError(f"riemann must have shape {(N,) * 4}")
        if christ.shape != (N, N, N, N):
            raise ValueError("christoffel_deriv must be indexed [l, k, i, j]")
        if hess.shape != (N, N):
            raise ValueError("weyl_hessian must be N x N")
        if np.max(np.abs(hess - hess.T)) > _SYMMETRY_TOL * max(1.0, np.max(np.abs(hess))):
            raise ValueError("weyl_hessian must be symmetric")
        check_riemann_symmetries(riemann)
        weyl, wns = weyl_from_riemann(riemann, self.dim)
        if self.weyl_norm_sq is None:
            object.__setattr__(self, "weyl_norm_sq", wns)
        elif self.weyl_norm_sq < 0:
            raise ValueError("weyl_norm_sq must be nonnegative")
        else:
            object.__setattr__(self, "weyl_norm_sq", float(self.weyl_norm_sq))
        for name, arr in (("riemann", riemann), ("christoffel_deriv", christ),
                          ("weyl_hessian", hess), ("weyl_tensor", weyl)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "scal", float(self.scal))

    @property
    def ricci(self) -> np.ndarray:
        return ricci_from_riemann(self.riemann)

    def gamma_matrix(self) -> np.ndarray:
        """G[k, l] = sum_i d_l Gamma^k_{ii}, so that gamma_contract = G x."""
        return np.einsum("lkii->kl", self.christoffel_deriv)


def metric_expansion(geo: GeometryData, x: np.ndarray):
    """Truncated chart fields at x: (g_inv, gamma_contract, sqrt_det).

    g_inv is the quadratic truncation delta - (1/3) R_{iabj} x_a x_b; the
    caller owns the validity of the truncation (|x| small against the chart
    radius).  Accepts a single point (N,) or a batch (..., N).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    g_inv = np.eye(geo.dim.n) - np.einsum("iabj,...a,...b->...ij", geo.riemann, pts, pts) / 3.0
    gamma = np.einsum("kl,...l->...k", geo.gamma_matrix(), pts)
    ric = geo.ricci
    sqrt_det = 1.0 - np.einsum("ab,...a,...b->...", ric, pts, pts) / 6.0
    if single:
        return g_inv[0], gamma[0], float(sqrt_det[0])
    return g_inv, gamma, sqrt_det


def _space_form_block(N: int, indices: np.ndarray) -> np.ndarray:
    """Unit-curvature space-form riemann supported on an index block."""
    mask = np.zeros(N)
    mask[indices] = 1.0
    d = np.diag(mask)
    # riemann[i,a,b,j] = d_ib d_aj - d_ij d_ab restricted to the block
    return np.einsum("ib,aj->iabj", d, d) - np.einsum("ij,ab->iabj", d, d)


def product_spheres_geometry(n: int, m: int, weyl_hessian: np.ndarray | None = None) -> GeometryData:
    """Curvature package of the unit-sphere product S^n x S^m at any point.

    The product is homogeneous, so |Weyl|^2 is constant and its true Hessian
    vanishes; pass weyl_hessian explicitly to model a confining minimum (the
    generic warped perturbation is not reproduced here).
    """
    if n + m < 7:
        raise ValueError(f"S^{n} x S^{m} has dimension {n + m} < 7")
    if n < 2 or m < 2:
        raise ValueError("each factor needs dimension >= 2 to carry curvature")
    N = n + m
    dim = Dim(N)
    riemann = _space_form_block(N, np.arange(n)) + _space_form_block(N, np.arange(n, N))
    if weyl_hessian is None:
        weyl_hessian = np.zeros((N, N))
    return GeometryData(
        dim=dim,
        riemann=riemann,
        scal=float(n * (n - 1) + m * (m - 1)),
        christoffel_deriv=christoffel_deriv_from_riemann(riemann),
        weyl_hessian=weyl_hessian,
    )


def round_sphere_geometry(dim: Dim) -> GeometryData:
    """Unit round sphere S^N: conformally flat, Weyl = 0, scal = N(N-1)."""
    N = dim.n
    riemann = _space_form_block(N, np.arange(N))
    return GeometryData(
        dim=dim,
        riemann=riemann,
        scal=float(N * (N - 1)),
        christoffel_deriv=christoffel_deriv_from_riemann(riemann),
        weyl_hessian=np.zeros((N, N)),
    )


def flat_geometry(dim: Dim, weyl_norm_sq: float | None = None,
                  weyl_hessian: np.ndarray | None = None) -> GeometryData:
    """Flat chart data; weyl_norm_sq may be overridden for synthetic runs."""
    N = dim.n
    zeros4 = np.zeros((N, N, N, N))
    return GeometryData(
        dim=dim,
        riemann=zeros4,
        scal=0.0,
        christoffel_deriv=zeros4,
        weyl_hessian=np.zeros((N, N)) if weyl_hessian is None else weyl_hessian,
        weyl_norm_sq=weyl_norm_sq,
    )


def hessian_of_scalar_field(field: Callable[[np.ndarray], float], x0: np.ndarray) -> np.ndarray:
    """Symmetrized second-difference Hessian with step 1e-4 (1 + |x0|)."""
    x0 = np.asarray(x0, dtype=float)
    N = x0.size
    h = 1e-4 * (1.0 + float(np.linalg.norm(x0)))
    H = np.empty((N, N))
    f0 = field(x0)
    for i in range(N):
        ei = np.zeros(N)
        ei[i] = h
        H[i, i] = (field(x0 + ei) - 2.0 * f0 + field(x0 - ei)) / h**2
        for j in range(i + 1, N):
            ej = np.zeros(N)
            ej[j] = h
            H[i, j] = H[j, i] = (
                field(x0 + ei + ej) - field(x0 + ei - ej)
                - field(x0 - ei + ej) + field(x0 - ei - ej)
            ) / (4.0 * h**2)
    return 0.5 * (H + H.T)


def _sparse_entries(arr: np.ndarray) -> list:
    entries = []
    for idx in np.argwhere(arr != 0.0):
        entries.append([int(i) for i in idx] + [float(arr[tuple(idx)])])
    return entries


def _dense_from_entries(entries, shape) -> np.ndarray:
    arr = np.zeros(shape)
    for row in entries:
        *idx, value = row
        arr[tuple(int(i) for i in idx)] = float(value)
    return arr


def save_geometry_json(geo: GeometryData, path: str, chart_model: dict | None = None) -> None:
    """Write the geometry JSON schema used by the CLI."""
    doc = {
        "dim": geo.dim.n,
        "riemann": _sparse_entries(geo.riemann),
        "scal": geo.scal,
        "christoffel_deriv": _sparse_entries(geo.christoffel_deriv),
        "weyl_hessian": geo.weyl_hessian.tolist(),
        "weyl_norm_sq": geo.weyl_norm_sq,
    }
    if chart_model is not None:
        doc["chart_model"] = chart_model
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_geometry_json(path: str) -> tuple[GeometryData, dict | None]:
    """Read the geometry JSON schema; returns (geometry, chart_model or None)."""
    with open(path) as fh:
        doc = json.load(fh)
    N = int(doc["dim"])
    dim = Dim(N)
    geo = GeometryData(
        dim=dim,
        riemann=_dense_from_entries(doc.get("riemann", []), (N, N, N, N)),
        scal=float(doc.get("scal", 0.0)),
        christoffel_deriv=_dense_from_entries(doc.get("christoffel_deriv", []), (N, N, N, N)),
        weyl_hessian=np.asarray(doc.get("weyl_hessian", np.zeros((N, N))), dtype=float),
        weyl_norm_sq=doc.get("weyl_norm_sq"),
    )
    return geo, doc.get("chart_model")
