"""Closed-form constants of the reduced-energy expansion with quadrature oracles.

All constants are rational multiples of K_N^{-N}, where K_N is the best
constant of the embedding D^{1,2}(R^N) -> L^{2*}(R^N), except E_N which is a
bubble integral.  K_N is never hard-coded: it is derived once per dimension
from the extremal bubble, for which

    K_N^{-N} = int U^{2*} dx = (N(N-2) pi)^{N/2} Gamma(N/2) / Gamma(N),

and every closed form is cross-checked against an independent radial
quadrature.  A useful identity, verified in the tests: B_N = (1/2) int U^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np

from .bubble import Dim, bubble_profile, bubble_profile_d1
from .radial import make_grid

__all__ = [
    "ConstantsTable",
    "closed_form_constants",
    "sobolev_quotient",
    "integral_U_p",
    "compute_d0",
    "sphere_area",
]


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere S^{N-1} in R^N."""
    return 2.0 * pi ** (N / 2) / gamma(N / 2)


@dataclass(frozen=True)
class ConstantsTable:
    """Per-dimension constants of the energy expansion.

    d0_factory maps the squared Weyl norm at the concentration point to the
    optimal base scale d0.
    """

    dim: Dim
    K_N: float
    A_N: float
    B_N: float
    D_N: float
    E_N: float

    def __post_init__(self) -> None:
        for name in ("K_N", "A_N", "B_N", "D_N", "E_N"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive for N >= 7")

    def d0_factory(self, weyl_norm_sq: float) -> float:
        return compute_d0(self, weyl_norm_sq)


def _K_minus_N_closed(N: int) -> float:
    return (N * (N - 2) * pi) ** (N / 2) * gamma(N / 2) / gamma(N)


def closed_form_constants(dim: Dim) -> ConstantsTable:
    """Evaluate K_N, A_N, B_N, D_N, E_N from closed forms.

    The (N-4)(N-6) denominators are the reason the table only exists for
    N >= 7, which Dim already enforces.
    """
    N = dim.n
    KmN = _K_minus_N_closed(N)
    A = KmN / (24.0 * N * (N - 4) * (N - 6))
    B = 2.0 * (N - 1) * KmN / (N * (N - 2) * (N - 4))
    D = KmN / N
    E = integral_U_p(dim) * (N * (N - 2)) ** ((N - 2) / 4)
    return ConstantsTable(dim=dim, K_N=KmN ** (-1.0 / N), A_N=A, B_N=B, D_N=D, E_N=E)


def sobolev_quotient(dim: Dim, r_max: float = 1e4, n_nodes: int = 2**13 + 1) -> float:
    """Numeric K_N = ||U||_{2*} / ||grad U||_2 by radial quadrature.

    Refuses grids whose truncated tail would contribute more than 1e-8 in
    relative terms; the integrands decay like r^{-(N+1)} and r^{-(N-1)}... so
    the cut at r_max is estimated from the explicit power tails.
    """
    N = dim.n
    alpha = (N * (N - 2)) ** ((N - 2) / 4)
    two_star = 2 * N / (N - 2)
    # |U|^{2*} r^{N-1} ~ alpha^{2*} r^{-N-1}; |U'|^2 r^{N-1} ~ ((N-2)alpha)^2 r^{1-N}
    tail_num = alpha**two_star * r_max ** (-N) / N
    tail_den = ((N - 2) * alpha) ** 2 * r_max ** (2 - N) / (N - 2)
    area = sphere_area(N)
    grid = make_grid(r_max, n_nodes, grading=12.0)
    rN1 = grid.r ** (N - 1)
    num = area * float(np.sum(bubble_profile(N, grid.r) ** two_star * rN1 * grid.weights))
    den = area * float(np.sum(bubble_profile_d1(N, grid.r) ** 2 * rN1 * grid.weights))
    if tail_num * area / num > 1e-8 or tail_den * area / den > 1e-8:
        raise ValueError(f"radial grid too short: tail beyond r_max={r_max} not negligible")
    return num ** (1.0 / two_star) / den**0.5


def integral_U_p(dim: Dim, quadrature: bool = False, r_max: float = 1e5,
                 n_nodes: int = 2**13 + 1) -> float:
    """int_{R^N} U^p dx.

    Default path is the divergence-theorem closed form (N-2) alpha_N omega_{N-1}
    obtained from int U^p = int(-Delta U) and the r^{2-N} far field of U; the
    quadrature path integrates the profile directly.  The two agree to 1e-8
    relative (asserted in the tests, not here).
    """
    N = dim.n
    alpha = (N * (N - 2)) ** ((N - 2) / 4)
    if not quadrature:
        return (N - 2) * alpha * sphere_area(N)
    p = (N + 2) / (N - 2)
    grid = make_grid(r_max, n_nodes, grading=12.0)
    vals = bubble_profile(N, grid.r) ** p * grid.r ** (N - 1)
    return sphere_area(N) * float(np.sum(vals * grid.weights))


def compute_d0(table: ConstantsTable, weyl_norm_sq: float) -> float:
    """Base concentration scale d0 = (B_N / (2 A_N |Weyl|^2))^{1/2}.

    d0 maximizes phi(d) = -A_N |Weyl|^2 d^4 + B_N d^2, so it requires a
    conformally non-flat point: weyl_norm_sq must be strictly positive.
    """
    if not weyl_norm_sq > 0:
        raise ValueError(
            "weyl_norm_sq must be positive: the construction needs |Weyl(xi0)| != 0"
        )
    return float(np.sqrt(table.B_N / (2.0 * table.A_N * weyl_norm_sq)))
