"""Relative-motion dynamics and coordinate transforms about a circular orbit.

All right-hand sides are written once against the dispatching scalar helpers
from :mod:`monoguide.jets`, so the same code propagates plain floats,
batched numpy arrays (state components of shape (B,)), and jets. The jet
instantiation is what produces the fundamental-solution maps; the float
instantiation is the truth model.

Unit conventions: Cartesian states are LVLH meters and meters/second (x
radial, y along-track, z cross-track). Spherical relative states are fully
normalized (lengths by the semimajor axis, time by the mean motion) and
travel with a four-component normalized target state (rho, theta, rho',
theta').
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .jets import cos, recip, sin, sqrt, tan

__all__ = [
    "OrbitParams",
    "cw_rhs",
    "cw_stm",
    "nl_cartesian_rhs",
    "nl_spherical_rhs",
    "target_initial_state",
    "sph_to_cart_norm",
    "cart_to_sph_norm",
    "sph_to_cart",
    "cart_to_sph",
    "range_squared",
]

MU_EARTH_KM3_S2 = 398600.4418


@dataclass(frozen=True)
class OrbitParams:
    """Target orbit: gravitational parameter (km^3/s^2), semimajor axis (km),
    eccentricity. Mean motion and period follow from the two-body relation."""

    mu: float = MU_EARTH_KM3_S2
    a: float = 6378.0
    e: float = 0.0
    n: float = field(init=False)
    T: float = field(init=False)

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError(f"semimajor axis must be positive, got {self.a}")
        if not 0.0 <= self.e < 1.0:
            raise ValueError(f"eccentricity must be in [0, 1), got {self.e}")
        object.__setattr__(self, "n", float(np.sqrt(self.mu / self.a**3)))
        object.__setattr__(self, "T", 2.0 * np.pi / self.n)

    @property
    def a_m(self) -> float:
        return self.a * 1e3

    @property
    def mu_m(self) -> float:
        return self.mu * 1e9

    @property
    def v_scale(self) -> float:
        """Dimensionalizing velocity scale a*n in m/s."""
        return self.a_m * self.n


def cw_rhs(state, n):
    """Clohessy-Wiltshire equations (circular target, LVLH frame)."""
    x, y, z, vx, vy, vz = state
    return np.array([
        vx, vy, vz,
        2.0 * n * vy + 3.0 * n**2 * x,
        -2.0 * n * vx,
        -(n**2) * z,
    ])


def cw_stm(t, n):
    """Closed-form CW state transition matrix over an interval t."""
    c = np.cos(n * t)
    s = np.sin(n * t)
    return np.array([
        [4.0 - 3.0 * c, 0.0, 0.0, s / n, 2.0 * (1.0 - c) / n, 0.0],
        [6.0 * (s - n * t), 1.0, 0.0, 2.0 * (c - 1.0) / n, (4.0 * s - 3.0 * n * t) / n, 0.0],
        [0.0, 0.0, c, 0.0, 0.0, s / n],
        [3.0 * n * s, 0.0, 0.0, c, 2.0 * s, 0.0],
        [6.0 * n * (c - 1.0), 0.0, 0.0, -2.0 * s, 4.0 * c - 3.0, 0.0],
        [0.0, 0.0, -n * s, 0.0, 0.0, c],
    ])


def nl_cartesian_rhs(state, orbit: OrbitParams):
    """Nonlinear Keplerian relative motion about a circular orbit, SI units.

    The reference (zero deviation) is an exact solution. Scalars may be
    floats, arrays, or jets.
    """
    x, y, z, vx, vy, vz = state
    mu = orbit.mu_m
    R = orbit.a_m
    n = orbit.n
    rx = R + x
    r2 = rx * rx + y * y + z * z
    ir3 = recip(r2 * sqrt(r2))
    ax = 2.0 * n * vy + n**2 * x + mu / R**2 - mu * rx * ir3
    ay = -2.0 * n * vx + n**2 * y - mu * y * ir3
    az = -mu * z * ir3
    return [vx, vy, vz, ax, ay, az]


def nl_spherical_rhs(rel, tgt):
    """Normalized spherical relative dynamics plus the planar target orbit.

    rel = (dr, dth, dph, drp, dthp, dphp): radial offset over a, in-plane and
    out-of-plane angular offsets, and their derivatives in normalized time.
    tgt = (rho, theta, rhop, thetap). Gravitational parameter is unity under
    the normalization.
    """
    dr, dth, dph, drp, dthp, dphp = rel
    rho, theta, rhop, thetap = tgt
    rc = rho + dr
    irc = recip(rc)
    thc = thetap + dthp
    cph = cos(dph)
    drpp = (
        recip(rho * rho) - irc * irc - rho * thetap**2
        + rc * (dphp * dphp + thc * thc * cph * cph)
    )
    dthpp = (
        2.0 * rhop * thetap / rho
        - 2.0 * (rhop + drp) * irc * thc
        + 2.0 * thc * dphp * tan(dph)
    )
    dphpp = -2.0 * (rhop + drp) * irc * dphp - thc * thc * cph * sin(dph)
    rhopp = -1.0 / rho**2 + rho * thetap**2
    thetapp = -2.0 * rhop * thetap / rho
    return [drp, dthp, dphp, drpp, dthpp, dphpp], [rhop, thetap, rhopp, thetapp]


def target_initial_state(e: float) -> np.ndarray:
    """Normalized target state at perigee: (rho, theta, rho', theta')."""
    rho0 = 1.0 - e
    return np.array([rho0, 0.0, 0.0, np.sqrt(1.0 - e**2) / rho0**2])


def sph_to_cart_norm(eta, rho, rhop):
    """Normalized spherical relative state to normalized LVLH Cartesian."""
    dr, dth, dph, drp, dthp, dphp = eta
    rc = rho + dr
    cth, sth = cos(dth), sin(dth)
    cph, sph = cos(dph), sin(dph)
    x = rc * cth * cph - rho
    y = rc * sth * cph
    z = rc * sph
    rcd = rhop + drp
    xd = rcd * cph * cth - rc * (dphp * sph * cth + dthp * cph * sth) - rhop
    yd = rcd * cph * sth - rc * (dphp * sph * sth - dthp * cph * cth)
    zd = rcd * sph + rc * dphp * cph
    return [x, y, z, xd, yd, zd]


def cart_to_sph_norm(cart, rho, rhop):
    """Exact inverse of :func:`sph_to_cart_norm` (float/array inputs)."""
    x, y, z, xd, yd, zd = cart
    w1 = rho + x
    rc = np.sqrt(w1 * w1 + y * y + z * z)
    dph = np.arcsin(z / rc)
    dth = np.arctan2(y, w1)
    dr = rc - rho
    cth, sth = np.cos(dth), np.sin(dth)
    cph, sph = np.cos(dph), np.sin(dph)
    wx = xd + rhop
    rcd = cth * cph * wx + sth * cph * yd + sph * zd
    dthp = (-sth * wx + cth * yd) / (rc * cph)
    dphp = (-cth * sph * wx - sth * sph * yd + cph * zd) / rc
    return [dr, dth, dph, rcd - rhop, dthp, dphp]


def sph_to_cart(eta, rho, rhop, orbit: OrbitParams):
    """Dimensional wrapper: normalized spherical state to LVLH m and m/s."""
    out = sph_to_cart_norm(eta, rho, rhop)
    a, v = orbit.a_m, orbit.v_scale
    return [out[0] * a, out[1] * a, out[2] * a, out[3] * v, out[4] * v, out[5] * v]


def cart_to_sph(cart, rho, rhop, orbit: OrbitParams):
    """Dimensional wrapper: LVLH m and m/s to normalized spherical state."""
    a, v = orbit.a_m, orbit.v_scale
    scaled = [cart[0] / a, cart[1] / a, cart[2] / a, cart[3] / v, cart[4] / v, cart[5] / v]
    return cart_to_sph_norm(scaled, rho, rhop)


def range_squared(dr, dth, dph, rho):
    """Normalized squared inter-spacecraft range from spherical offsets."""
    return dr * dr + 2.0 * rho * dr + 2.0 * rho * rho - 2.0 * rho * (rho + dr) * cos(dph) * cos(dth)
