"""Numerical laboratory for the Dirichlet problem of complex Hessian equations."""
from .core import (elementary_symmetric, hermitian_eigenvalues, hessian_operator_value, in_gamma_m,
                   mixed_hessian_value, normalization, wirtinger_hessian)
from .domain import DefiningFunction, GridFunction, LatticeDomain, make_domain
from .solver import RadialProfile, SolveConfig, dirichlet_solve, perron_envelope, radial_solve

__all__ = [
    "DefiningFunction", "GridFunction", "LatticeDomain", "RadialProfile", "SolveConfig",
    "dirichlet_solve", "elementary_symmetric", "hermitian_eigenvalues", "hessian_operator_value",
    "in_gamma_m", "make_domain", "mixed_hessian_value", "normalization", "perron_envelope",
    "radial_solve", "wirtinger_hessian",
]
