"""Unit normalization shared by the guidance and SCP layers.

Cartesian problems are posed internally in meters, but solvers behave best
on dimensionless data: positions scale by the semimajor axis and velocities
by a*n. A monomial state scales entry-wise by the product of its linear
scales, and the map columns/rows transform accordingly. Spherical maps are
built normalized, so their scales are all one; either way a normalized
velocity jump turns into m/s through the single factor a*n.
"""
from __future__ import annotations

import numpy as np

from .dynamics import OrbitParams
from .fundmap import CARTESIAN, SPHERICAL, FundSolMap
from .monomials import MonomialBasis

__all__ = [
    "linear_scale",
    "monomial_scale",
    "normalized_psi",
    "normalized_cost_rows",
    "validity_weights",
]


def linear_scale(coord_system: str, orbit: OrbitParams) -> np.ndarray:
    """Per-component divisors rendering a linear state dimensionless."""
    if coord_system == CARTESIAN:
        return np.array([orbit.a_m] * 3 + [orbit.v_scale] * 3)
    return np.ones(6)


def monomial_scale(basis: MonomialBasis, s1: np.ndarray) -> np.ndarray:
    """Entry-wise divisors for a monomial state: products of linear scales."""
    return np.prod(s1[np.newaxis, :] ** basis.exponents, axis=1)


def normalized_psi(map_: FundSolMap, orbit: OrbitParams, basis: MonomialBasis) -> np.ndarray:
    """Map matrices transformed to dimensionless states on both sides."""
    s1 = linear_scale(map_.coord_system, orbit)
    sc = monomial_scale(basis, s1)
    return map_.psi / s1[np.newaxis, :, np.newaxis] * sc[np.newaxis, np.newaxis, :]


def normalized_cost_rows(map_: FundSolMap, orbit: OrbitParams, basis: MonomialBasis) -> np.ndarray:
    """Rows mapping a (dimensionless) monomial jump to delta-V over a*n.

    Cartesian maps use their own velocity rows; spherical maps require the
    velocity-transform rows built alongside the map.
    """
    if map_.coord_system == CARTESIAN:
        return normalized_psi(map_, orbit, basis)[:, 3:, :]
    if map_.gamma_v is None:
        raise ValueError("spherical map has no velocity-transform rows; rebuild with them")
    return map_.gamma_v


def validity_weights(coord_system: str, orbit: OrbitParams) -> np.ndarray:
    """Commensurate state-norm weights: meters and meters/mean-motion for
    Cartesian states, the plain norm for normalized spherical states."""
    if coord_system == CARTESIAN:
        return np.array([1.0] * 3 + [1.0 / orbit.n] * 3)
    return np.ones(6)


def scp_scale(coord_system: str, orbit: OrbitParams) -> tuple[np.ndarray, float]:
    """Working units of the sequential solver: (state divisors, delta-V to m/s).

    Cartesian problems run in km and km/s, which is the scale the published
    trust radii, slack weights, and convergence thresholds assume; spherical
    problems are already dimensionless with delta-V carried by a*n.
    """
    if coord_system == CARTESIAN:
        return np.full(6, 1e3), 1e3
    return np.ones(6), orbit.v_scale


def scaled_psi(map_: FundSolMap, basis: MonomialBasis, s1: np.ndarray) -> np.ndarray:
    """Map matrices rescaled to states divided elementwise by s1."""
    sc = monomial_scale(basis, s1)
    return map_.psi / s1[np.newaxis, :, np.newaxis] * sc[np.newaxis, np.newaxis, :]


def scaled_cost_rows(map_: FundSolMap, basis: MonomialBasis, s1: np.ndarray) -> np.ndarray:
    """Velocity-jump rows in the scaled units (spherical maps carry their
    own normalized transform rows, which expect unscaled monomial states)."""
    if map_.coord_system == CARTESIAN:
        return scaled_psi(map_, basis, s1)[:, 3:, :]
    if map_.gamma_v is None:
        raise ValueError("spherical map has no velocity-transform rows; rebuild with them")
    return map_.gamma_v
