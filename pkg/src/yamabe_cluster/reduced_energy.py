"""The finite-dimensional reduced energy of a k-peak cluster and its expansion.

For peaks at rescaled positions tau_i with scale fluctuations d_i, the reduced
energy is

    J(d, tau) = -1/2 A_N d0^4 sum_i Q(tau_i, tau_i)
                - E_N d0^{N-2} sum_{i != j} |tau_i - tau_j|^{2-N}
                - c_B B_N sum_i d_i^2,

a quadratic confinement against a Riesz repulsion.  Two bookkeeping knobs are
carried explicitly because the second-order expansion of the single-peak energy
fixes them unambiguously:

* fluctuation coefficient: the Taylor coefficient of the scale term is -2 B_N
  (half the second derivative of phi(d) = -A_N W^2 d^4 + B_N d^2 at d0 is
  -2 B_N); the transcribed display uses -B_N.  Default is the derived -2 B_N,
  with ``fluctuation_coefficient="single"`` restoring the transcribed value.
  The stationary point d = 0 and every critical configuration are unaffected.

* interaction count: the displayed reduced energy sums over ordered pairs
  (i != j), while assembling the cluster energy from pairwise integrals
  produces one interaction term per unordered pair.  Default follows the
  display ("ordered"); energy-measurement comparisons use "unordered".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import ConstantsTable
from .geometry import GeometryData

__all__ = [
    "ClusterConfig",
    "EnergyBreakdown",
    "eval_J_reduced",
    "grad_J_reduced",
    "eval_expansion",
    "fluctuation_factor",
    "MIN_SEPARATION",
]

MIN_SEPARATION = 1e-9


@dataclass(frozen=True)
class ClusterConfig:
    """Reduction variables: k peak positions tau_i, fluctuations d_i, scale d0.

    The peak scales are mu_i = eps^{1/2} (d0 + d_i eps^{(N-6)/(2N)}).
    """

    k: int
    d: np.ndarray
    tau: np.ndarray
    d0: float

    def __post_init__(self) -> None:
        tau = np.atleast_2d(np.asarray(self.tau, dtype=float))
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if tau.shape[0] != self.k or d.shape[0] != self.k:
            raise ValueError(f"expected {self.k} peaks, got tau {tau.shape}, d {d.shape}")
        if not self.d0 > 0:
            raise ValueError("d0 must be positive")
        if self.k > 1:
            diff = tau[:, None, :] - tau[None, :, :]
            dist = np.linalg.norm(diff, axis=-1)
            np.fill_diagonal(dist, np.inf)
            if dist.min() <= MIN_SEPARATION:
                raise ValueError(
                    f"peak collision: min pairwise distance {dist.min():.3e} "
                    f"<= {MIN_SEPARATION}"
                )
        tau.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "d0", float(self.d0))

    @property
    def ndim(self) -> int:
        return self.tau.shape[1]

    def mu(self, eps: float) -> np.ndarray:
        """Peak scales at parameter eps."""
        N = self.ndim
        beta = (N - 6) / (2.0 * N)
        return np.sqrt(eps) * (self.d0 + self.d * eps**beta)

    def with_tau(self, tau: np.ndarray) -> "ClusterConfig":
        return ClusterConfig(k=self.k, d=self.d.copy(), tau=tau, d0=self.d0)


@dataclass(frozen=True)
class EnergyBreakdown:
    confinement: float
    interaction: float
    fluctuation: float
    total: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "total", self.confinement + self.interaction + self.fluctuation
        )


def fluctuation_factor(convention: str) -> float:
    if convention == "double":
        return 2.0
    if convention == "single":
        return 1.0
    raise ValueError(f"unknown fluctuation convention {convention!r}")


def _pairwise_riesz(tau: np.ndarray, N: int) -> float:
    """sum over ordered pairs i != j of |tau_i - tau_j|^{2-N}."""
    if tau.shape[0] < 2:
        return 0.0
    diff = tau[:, None, :] - tau[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    iu = np.triu_indices(tau.shape[0], k=1)
    return 2.0 * float(np.sum(dist[iu] ** (2 - N)))


def eval_J_reduced(
    cfg: ClusterConfig,
    geo: GeometryData,
    table: ConstantsTable,
    fluctuation_coefficient: str = "double",
    interaction_count: str = "ordered",
) -> EnergyBreakdown:
    """Evaluate the reduced energy, exposed term by term."""
    N = geo.dim.n
    Q = geo.weyl_hessian
    conf = -0.5 * table.A_N * cfg.d0**4 * float(np.einsum("ab,ia,ib->", Q, cfg.tau, cfg.tau))
    riesz = _pairwise_riesz(cfg.tau, N)
    if interaction_count == "unordered":
        riesz *= 0.5
    elif interaction_count != "ordered":
        raise ValueError(f"unknown interaction count {interaction_count!r}")
    inter = -table.E_N * cfg.d0 ** (N - 2) * riesz
    fluc = -fluctuation_factor(fluctuation_coefficient) * table.B_N * float(np.sum(cfg.d**2))
    return EnergyBreakdown(confinement=conf, interaction=inter, fluctuation=fluc)


def grad_J_reduced(
    cfg: ClusterConfig,
    geo: GeometryData,
    table: ConstantsTable,
    fluctuation_coefficient: str = "double",
    interaction_count: str = "ordered",
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient: (d J/d d_i, d J/d tau_i)."""
    N = geo.dim.n
    Q = geo.weyl_hessian
    d_grad = -2.0 * fluctuation_factor(fluctuation_coefficient) * table.B_N * cfg.d
    tau_grad = -table.A_N * cfg.d0**4 * cfg.tau @ Q.T
    if cfg.k > 1:
        diff = cfg.tau[:, None, :] - cfg.tau[None, :, :]  # tau_i - tau_j
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        weight = dist ** (-N)
        coeff = (N - 2) * table.E_N * cfg.d0 ** (N - 2)
        if interaction_count == "ordered":
            coeff *= 2.0
        tau_grad = tau_grad + coeff * np.einsum("ij,ijn->in", weight, diff)
    return d_grad, tau_grad


def eval_expansion(
    eps: float,
    cfg: ClusterConfig,
    geo: GeometryData,
    table: ConstantsTable,
    fluctuation_coefficient: str = "double",
    interaction_count: str = "ordered",
) -> dict:
    """Three-term expansion k D_N + c(xi0) eps^2 + eps^{3(N-2)/N} J(cfg).

    Returns each term separately together with the total.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    N = geo.dim.n
    w2 = geo.weyl_norm_sq
    c_xi0 = cfg.k * (-table.A_N * w2 * cfg.d0**4 + table.B_N * cfg.d0**2)
    breakdown = eval_J_reduced(cfg, geo, table, fluctuation_coefficient, interaction_count)
    leading = cfg.k * table.D_N
    second = c_xi0 * eps**2
    third = eps ** (3.0 * (N - 2) / N) * breakdown.total
    return {
        "leading": leading,
        "c_xi0": c_xi0,
        "second_order": second,
        "reduced_energy": breakdown,
        "third_order": third,
        "total": leading + second + third,
    }
