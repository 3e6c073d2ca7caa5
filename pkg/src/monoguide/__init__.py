"""Rapid impulsive trajectory optimization on monomial coordinates.

Precomputed fundamental-solution maps turn nonlinear rendezvous guidance
into linear algebra plus one well-understood manifold constraint: build a
map once by jet transport, then solve two-stage or sequentially-convexified
guidance problems against it with an embedded conic solver.
"""
from .monomials import (
    MonomialBasis,
    build_basis,
    count_monomials,
    expand,
    project,
    jacobian,
    permutation_count,
    on_manifold,
)
from .jets import Jet, seed_variable, constant_jet, mul, evaluate, extract_linear_map

__version__ = "0.1.0"
