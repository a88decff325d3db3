"""Closed-form evaluation of the standard bubble and its linearized kernel.

The bubble U(x) = alpha_N (1+|x|^2)^{-(N-2)/2} is the extremal of the critical
equation -Delta U = U^{(N+2)/(N-2)} on R^N.  Everything here is evaluated from
closed forms; radial grids appear only in the residual *checks* that live in
the test suite.  All functions broadcast over trailing point batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dim",
    "Exponents",
    "BubbleParams",
    "eval_bubble",
    "eval_kernel",
    "nonlinearity",
    "bubble_profile",
    "bubble_profile_d1",
    "bubble_profile_d2",
    "bubble_gradient",
    "bubble_hessian",
    "kernel0_profile",
]


@dataclass(frozen=True)
class Dim:
    """Ambient dimension N.  The construction needs N >= 7."""

    n: int

    def __post_init__(self) -> None:
        if int(self.n) != self.n:
            raise ValueError(f"dimension must be an integer, got {self.n!r}")
        if self.n <= 6:
            raise ValueError(
                f"dimension N={self.n} rejected: the cluster construction requires N >= 7"
            )
        object.__setattr__(self, "n", int(self.n))


@dataclass(frozen=True)
class Exponents:
    """Critical exponents and normalizations attached to dimension N."""

    dim: Dim
    p: float = field(init=False)
    two_star: float = field(init=False)
    alpha_N: float = field(init=False)
    beta_N: float = field(init=False)

    def __post_init__(self) -> None:
        N = self.dim.n
        object.__setattr__(self, "p", (N + 2) / (N - 2))
        object.__setattr__(self, "two_star", 2 * N / (N - 2))
        object.__setattr__(self, "alpha_N", (N * (N - 2)) ** ((N - 2) / 4))
        object.__setattr__(self, "beta_N", (N - 2) / (4 * (N - 1)))


@dataclass(frozen=True)
class BubbleParams:
    """Concentration scale mu > 0 and center y of a rescaled bubble."""

    mu: float
    center: np.ndarray

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise ValueError(f"concentration scale mu must be positive, got {self.mu}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


def bubble_profile(N: int, r):
    """Radial profile U(r) = alpha_N (1+r^2)^{-(N-2)/2}."""
    alpha = (N * (N - 2)) ** ((N - 2) / 4)
    r = np.asarray(r, dtype=float)
    return alpha * (1.0 + r * r) ** (-(N - 2) / 2)


def bubble_profile_d1(N: int, r):
    """U'(r) = -(N-2) alpha_N r (1+r^2)^{-N/2}."""
    alpha = (N * (N - 2)) ** ((N - 2) / 4)
    r = np.asarray(r, dtype=float)
    return -(N - 2) * alpha * r * (1.0 + r * r) ** (-N / 2)


def bubble_profile_d2(N: int, r):
    """U''(r) = -(N-2) alpha_N [(1+r^2)^{-N/2} - N r^2 (1+r^2)^{-N/2-1}]."""
    alpha = (N * (N - 2)) ** ((N - 2) / 4)
    r = np.asarray(r, dtype=float)
    s = 1.0 + r * r
    return -(N - 2) * alpha * (s ** (-N / 2) - N * r * r * s ** (-N / 2 - 1))


def eval_bubble(params: BubbleParams, x, dim: Dim | None = None):
    """Rescaled bubble mu^{-(N-2)/2} U((x - y)/mu) at points x of shape (..., N)."""
    x = np.asarray(x, dtype=float)
    N = dim.n if dim is not None else x.shape[-1]
    y = (x - params.center) / params.mu
    r = np.linalg.norm(y, axis=-1)
    return params.mu ** (-(N - 2) / 2) * bubble_profile(N, r)


def bubble_gradient(N: int, x):
    """grad U at x, shape (..., N); equals x U'(r)/r with the r=0 limit 0."""
    x = np.asarray(x, dtype=float)
    alpha = (N * (N - 2)) ** ((N - 2) / 4)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    return -(N - 2) * alpha * x * (1.0 + r2) ** (-N / 2)


def bubble_hessian(N: int, x):
    """Hessian of U at x, shape (..., N, N)."""
    x = np.asarray(x, dtype=float)
    alpha = (N * (N - 2)) ** ((N - 2) / 4)
    r2 = np.sum(x * x, axis=-1)[..., None, None]
    eye = np.eye(N)
    outer = x[..., :, None] * x[..., None, :]
    s = 1.0 + r2
    return -(N - 2) * alpha * (eye * s ** (-N / 2) - N * outer * s ** (-N / 2 - 1))


def kernel0_profile(N: int, r):
    """psi^0 as a radial profile, in the cancellation-free product form.

    The defining formula x.grad U + (N-2)/2 U collapses algebraically to
    alpha_N (N-2)/2 (1-r^2)(1+r^2)^{-N/2}; the identity is asserted against the
    defining formula in the test suite before anything relies on it.
    """
    alpha = (N * (N - 2)) ** ((N - 2) / 4)
    r = np.asarray(r, dtype=float)
    r2 = r * r
    return alpha * (N - 2) / 2 * (1.0 - r2) * (1.0 + r2) ** (-N / 2)


def eval_kernel(j: int, x, dim: Dim):
    """Kernel function psi^j of the linearized operator -Delta - p U^{p-1}.

    j = 0 is the dilation mode x.grad U + (N-2)/2 U; j in 1..N is the
    translation mode d_j U.  Points x have shape (..., N).
    """
    N = dim.n
    if not 0 <= j <= N:
        raise IndexError(f"kernel index j={j} out of range 0..{N}")
    x = np.asarray(x, dtype=float)
    if j == 0:
        r = np.linalg.norm(x, axis=-1)
        return kernel0_profile(N, r)
    return bubble_gradient(N, x)[..., j - 1]


def nonlinearity(u, N: int = 7):
    """Critical nonlinearity f(u) = (u^+)^p with derivative and antiderivative.

    Returns (f, f', F) where F(u) = (u^+)^{p+1}/(p+1).
    """
    p = (N + 2) / (N - 2)
    u = np.asarray(u, dtype=float)
    up = np.maximum(u, 0.0)
    f = up**p
    fp = p * up ** (p - 1)
    F = up ** (p + 1) / (p + 1)
    return f, fp, F
