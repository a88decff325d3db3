"""Multi-bubble cluster machinery for the linearly perturbed Yamabe equation.

The package evaluates the standard-bubble family and its linearized kernel in
closed form, solves the curvature-induced correction problem, tabulates the
reduced-energy constants against quadrature oracles, locates critical cluster
configurations of the reduced energy, and measures the asymptotic interaction
and error-norm scalings by seeded Monte-Carlo integration.
"""

__version__ = "0.1.0"

from .bubble import BubbleParams, Dim, Exponents, eval_bubble, eval_kernel, nonlinearity
from .constants import ConstantsTable, closed_form_constants, compute_d0
from .geometry import GeometryData, product_spheres_geometry, weyl_from_riemann
from .reduced_energy import ClusterConfig, EnergyBreakdown, eval_J_reduced, grad_J_reduced

__all__ = [
    "BubbleParams",
    "ClusterConfig",
    "ConstantsTable",
    "Dim",
    "EnergyBreakdown",
    "Exponents",
    "GeometryData",
    "closed_form_constants",
    "compute_d0",
    "eval_J_reduced",
    "eval_bubble",
    "eval_kernel",
    "grad_J_reduced",
    "nonlinearity",
    "product_spheres_geometry",
    "weyl_from_riemann",
    "__version__",
]
