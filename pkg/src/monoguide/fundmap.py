"""Build, persist, and load fundamental-solution maps by jet transport.

A map packages, per time node, the matrix that sends the monomial state of
the osculating initial conditions to the state deviation at that node. The
linear block reduces to the state transition matrix; higher columns carry the
flattened higher-order sensitivities. Spherical maps can also carry the
velocity-transform rows (normalized Cartesian delta-V per monomial) and the
squared-range row used for path constraints.

Integrator policy lives here: adaptive Runge-Kutta 5(4) at 1e-12/1e-12 for
both truth propagation and jet transport, stepping node to node.
"""
from __future__ import annotations

import math
import struct
import time as _time
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .dynamics import (
    OrbitParams,
    nl_cartesian_rhs,
    nl_spherical_rhs,
    range_squared,
    sph_to_cart_norm,
    target_initial_state,
)
from .jets import Jet, extract_linear_map, seed_variable
from .monomials import MonomialBasis, build_basis

__all__ = [
    "FundSolMap",
    "TransportResult",
    "MapFormatError",
    "jet_transport",
    "build_map",
    "build_gamma_v",
    "build_gamma_h",
    "build_map_stt",
    "save_map",
    "load_map",
    "propagate_truth",
    "variational_stm",
]

CARTESIAN = "cartesian"
SPHERICAL = "spherical_normalized"
_COORD_TAGS = {CARTESIAN: 0, SPHERICAL: 1}
_TAG_COORDS = {v: k for k, v in _COORD_TAGS.items()}

DEFAULT_TOL = 1e-12
_MAGIC = b"MGMAP1"


class MapFormatError(Exception):
    """Raised on malformed, truncated, or corrupt map files."""


@dataclass
class FundSolMap:
    """Per-node fundamental-solution matrices plus optional derived maps."""

    n_vars: int
    order: int
    coord_system: str
    eccentricity: float
    times: np.ndarray          # (M,) strictly increasing; seconds or normalized time
    psi: np.ndarray            # (M, N, K)
    gamma_v: np.ndarray | None = None   # (M, 3, K), normalized velocity map
    gamma_h: np.ndarray | None = None   # (M, K), normalized squared-range map
    target_states: np.ndarray | None = None  # (M, 4) for spherical maps
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.psi.shape[2]

    @property
    def n_nodes(self) -> int:
        return len(self.times)

    def psi_r(self, i: int) -> np.ndarray:
        return self.psi[i, : self.n_vars // 2, :]

    def psi_v(self, i: int) -> np.ndarray:
        return self.psi[i, self.n_vars // 2 :, :]

    def linear_block(self, i: int) -> np.ndarray:
        return self.psi[i, :, : self.n_vars]

    def node_index(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t))
        for cand in (k - 1, k, k + 1):
            if 0 <= cand < len(self.times) and abs(self.times[cand] - t) <= 1e-9 * max(1.0, abs(t)):
                return cand
        raise KeyError(f"time {t} is not a map node")

    def node_indices(self, times) -> np.ndarray:
        return np.array([self.node_index(t) for t in np.asarray(times)], dtype=np.int64)

    def subset(self, indices) -> "FundSolMap":
        """Map restricted to a subset of its nodes (indices must include 0)."""
        idx = np.asarray(indices, dtype=np.int64)
        return FundSolMap(
            self.n_vars, self.order, self.coord_system, self.eccentricity,
            self.times[idx].copy(), self.psi[idx].copy(),
            None if self.gamma_v is None else self.gamma_v[idx].copy(),
            None if self.gamma_h is None else self.gamma_h[idx].copy(),
            None if self.target_states is None else self.target_states[idx].copy(),
            dict(self.meta),
        )

    def zero_columns(self, threshold: float = 1e-10, node_indices=None) -> np.ndarray:
        """Column indices whose entries stay below threshold across all nodes."""
        psi = self.psi if node_indices is None else self.psi[np.asarray(node_indices)]
        peak = np.abs(psi).max(axis=(0, 1))
        return np.flatnonzero(peak < threshold)

    def basis(self) -> MonomialBasis:
        return build_basis(self.n_vars, self.order)


@dataclass
class TransportResult:
    """Raw jet-transport output: per-node state jets plus target trajectory."""

    coord_system: str
    basis: MonomialBasis
    times: np.ndarray
    node_jets: list          # per node: list of N jets
    target_states: np.ndarray | None
    rtol: float
    wall_time: float


def _flatten_jets(jets, extra=None) -> np.ndarray:
    blocks = []
    for jet in jets:
        blocks.append([jet.const])
        blocks.append(jet.coeffs)
    if extra is not None:
        blocks.append(extra)
    return np.concatenate(blocks)


def _unflatten_jets(y: np.ndarray, basis: MonomialBasis, n_state: int):
    K = basis.size
    jets = []
    for k in range(n_state):
        base = k * (K + 1)
        jets.append(Jet(basis, y[base], np.asarray(y[base + 1 : base + 1 + K])))
    return jets, y[n_state * (K + 1) :]


def jet_transport(
    coord_system: str,
    orbit: OrbitParams,
    times,
    order: int,
    rtol: float = DEFAULT_TOL,
    atol: float = DEFAULT_TOL,
) -> TransportResult:
    """Propagate identity-seeded state jets through the nonlinear dynamics.

    Integrates node to node, recording the full jet of each deviation state
    at every requested time. Spherical transport carries the normalized
    target orbit states alongside.
    """
    times = np.asarray(times, dtype=np.float64)
    if len(times) < 1 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be non-empty and strictly increasing")
    if coord_system not in _COORD_TAGS:
        raise ValueError(f"unknown coordinate system {coord_system!r}")

    basis = build_basis(6, order)
    jets = [seed_variable(basis, k, 0.0) for k in range(6)]
    spherical = coord_system == SPHERICAL
    extra = target_initial_state(orbit.e) if spherical else None

    if spherical:
        def rhs(t, y):
            state, tgt = _unflatten_jets(y, basis, 6)
            drel, dtgt = nl_spherical_rhs(state, tgt)
            return _flatten_jets(drel, np.asarray(dtgt))
    else:
        def rhs(t, y):
            state, _ = _unflatten_jets(y, basis, 6)
            return _flatten_jets(nl_cartesian_rhs(state, orbit))

    started = _time.perf_counter()
    y = _flatten_jets(jets, extra)
    node_jets = []
    targets = [] if spherical else None
    for i, t in enumerate(times):
        if i > 0:
            sol = solve_ivp(rhs, (times[i - 1], t), y, method="RK45", rtol=rtol, atol=atol)
            if not sol.success:
                raise RuntimeError(f"jet transport failed on [{times[i-1]}, {t}]: {sol.message}")
            y = sol.y[:, -1]
        state, tail = _unflatten_jets(y, basis, 6)
        node_jets.append([jet.copy() for jet in state])
        if spherical:
            targets.append(np.asarray(tail).copy())
    wall = _time.perf_counter() - started
    target_states = np.vstack(targets) if spherical else None
    return TransportResult(coord_system, basis, times, node_jets, target_states, rtol, wall)


def _psi_from_transport(transport: TransportResult, orbit: OrbitParams) -> np.ndarray:
    M = len(transport.times)
    K = transport.basis.size
    psi = np.empty((M, 6, K))
    # reference preservation is judged in normalized units (SI consts are
    # scaled by a and a*n before the 1e-9 check)
    if transport.coord_system == CARTESIAN:
        scale = np.array([orbit.a_m] * 3 + [orbit.v_scale] * 3)
    else:
        scale = np.ones(6)
    for i, jets in enumerate(transport.node_jets):
        matrix, consts = extract_linear_map(jets)
        drift = np.abs(consts / scale).max()
        if drift > 1e-9:
            raise RuntimeError(
                f"reference drifted during transport: |const| = {drift:.3e} at node {i}"
            )
        psi[i] = matrix
    return psi


def build_gamma_v(transport: TransportResult) -> np.ndarray:
    """Per-node normalized velocity-transform rows.

    Composes the node jets through the spherical-to-Cartesian velocity
    transform, so a monomial-state jump maps linearly to the normalized
    Cartesian delta-V (multiply by a*n for m/s).
    """
    if transport.coord_system != SPHERICAL or transport.target_states is None:
        raise ValueError("velocity transform requires a spherical transport with target states")
    M = len(transport.times)
    K = transport.basis.size
    gamma = np.empty((M, 3, K))
    for i, jets in enumerate(transport.node_jets):
        rho, rhop = transport.target_states[i, 0], transport.target_states[i, 2]
        cart = sph_to_cart_norm(jets, rho, rhop)
        matrix, consts = extract_linear_map(cart[3:])
        if np.abs(consts).max() > 1e-9:
            raise RuntimeError(f"velocity transform drifted at node {i}")
        gamma[i] = matrix
    return gamma


def build_gamma_h(transport: TransportResult) -> np.ndarray:
    """Per-node normalized squared-range rows (range constraint map)."""
    if transport.coord_system != SPHERICAL or transport.target_states is None:
        raise ValueError("range map requires a spherical transport with target states")
    M = len(transport.times)
    gamma = np.empty((M, transport.basis.size))
    for i, jets in enumerate(transport.node_jets):
        rho = transport.target_states[i, 0]
        h = range_squared(jets[0], jets[1], jets[2], rho)
        if abs(h.const) > 1e-9:
            raise RuntimeError(f"range map drifted at node {i}")
        gamma[i] = h.coeffs
    return gamma


def build_map(
    coord_system: str,
    orbit: OrbitParams,
    times,
    order: int,
    rtol: float = DEFAULT_TOL,
    atol: float = DEFAULT_TOL,
    with_gamma_v: bool = False,
    with_gamma_h: bool = False,
) -> FundSolMap:
    """Jet-transport map construction over the given node times."""
    transport = jet_transport(coord_system, orbit, times, order, rtol, atol)
    psi = _psi_from_transport(transport, orbit)
    gamma_v = build_gamma_v(transport) if with_gamma_v else None
    gamma_h = build_gamma_h(transport) if with_gamma_h else None
    return FundSolMap(
        6, order, coord_system, orbit.e, transport.times, psi,
        gamma_v, gamma_h, transport.target_states,
        {"rtol": rtol, "atol": atol, "wall_time": transport.wall_time},
    )


# ---------------------------------------------------------------------------
# State-transition-tensor construction (cross-check oracle)
# ---------------------------------------------------------------------------

def _rhs_derivative_tensors(rhs_at, basis: MonomialBasis, order: int):
    """Jacobian/Hessian/third-derivative tensors of an RHS at the reference.

    Reads them off an identity-seeded jet evaluation: a Taylor coefficient of
    monomial beta equals the mixed partial divided by the product of exponent
    factorials.
    """
    jets = [seed_variable(basis, k, 0.0) for k in range(6)]
    out = rhs_at(jets)
    coeffs = np.vstack([o.coeffs for o in out])
    J = coeffs[:, :6].copy()
    H = np.zeros((6, 6, 6))
    T = np.zeros((6, 6, 6, 6)) if order >= 3 else None
    for col in range(6, basis.size):
        beta = basis.exponents[col].astype(int)
        degree = beta.sum()
        if degree > order:
            break
        fact = 1.0
        for b in beta:
            fact *= math.factorial(int(b))
        value = coeffs[:, col] * fact
        idx = [k for k in range(6) for _ in range(beta[k])]
        if degree == 2:
            a, b = idx
            H[:, a, b] = value
            H[:, b, a] = value
        elif degree == 3 and T is not None:
            from itertools import permutations

            for p in set(permutations(idx)):
                T[(slice(None),) + p] = value
    return J, H, T


def build_map_stt(
    coord_system: str,
    orbit: OrbitParams,
    times,
    order: int,
    rtol: float = DEFAULT_TOL,
    atol: float = DEFAULT_TOL,
) -> FundSolMap:
    """Map built from numerically integrated state transition tensors.

    Independent construction route used to cross-check the jet transport:
    integrates the tensor dynamics (with local derivative tensors of the RHS
    extracted order-by-order), then flattens each tensor entry onto its
    monomial column, dividing by the exponent-factorial product that counts
    the repeated-index redundancy.
    """
    if not 1 <= order <= 3:
        raise ValueError(f"tensor route supports orders 1..3, got {order}")
    times = np.asarray(times, dtype=np.float64)
    if len(times) < 1 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be non-empty and strictly increasing")
    basis = build_basis(6, order)
    deriv_basis = build_basis(6, max(order, 2))
    spherical = coord_system == SPHERICAL

    sizes = [36, 216, 1296][:order]
    bounds = np.cumsum([0] + sizes)

    if spherical:
        def tensors_at(tgt):
            return _rhs_derivative_tensors(
                lambda jets: nl_spherical_rhs(jets, tgt)[0], deriv_basis, order
            )
    else:
        const_tensors = _rhs_derivative_tensors(
            lambda jets: nl_cartesian_rhs(jets, orbit), deriv_basis, order
        )

    def rhs(t, y):
        if spherical:
            tgt = y[bounds[-1] : bounds[-1] + 4]
            J, H, T = tensors_at(tgt)
        else:
            J, H, T = const_tensors
        phi1 = y[bounds[0] : bounds[1]].reshape(6, 6)
        d = [ (J @ phi1).ravel() ]
        if order >= 2:
            phi2 = y[bounds[1] : bounds[2]].reshape(6, 6, 6)
            dphi2 = np.einsum("ik,kab->iab", J, phi2) + np.einsum(
                "ikl,ka,lb->iab", H, phi1, phi1
            )
            d.append(dphi2.ravel())
        if order >= 3:
            phi3 = y[bounds[2] : bounds[3]].reshape(6, 6, 6, 6)
            dphi3 = (
                np.einsum("ik,kabc->iabc", J, phi3)
                + np.einsum("ikl,ka,lbc->iabc", H, phi1, phi2)
                + np.einsum("ikl,kab,lc->iabc", H, phi2, phi1)
                + np.einsum("ikl,kac,lb->iabc", H, np.transpose(phi2, (0, 2, 1)), phi1)
            )
            dphi3 += np.einsum("iklm,ka,lb,mc->iabc", T, phi1, phi1, phi1)
            d.append(dphi3.ravel())
        if spherical:
            _, dtgt = nl_spherical_rhs(np.zeros(6), tgt)
            d.append(np.asarray(dtgt))
        return np.concatenate(d)

    y = np.zeros(bounds[-1] + (4 if spherical else 0))
    y[:36] = np.eye(6).ravel()
    if spherical:
        y[bounds[-1] :] = target_initial_state(orbit.e)

    M = len(times)
    psi = np.empty((M, 6, basis.size))
    targets = np.empty((M, 4)) if spherical else None

    def record(i, y):
        phi1 = y[bounds[0] : bounds[1]].reshape(6, 6)
        phi2 = y[bounds[1] : bounds[2]].reshape(6, 6, 6) if order >= 2 else None
        phi3 = y[bounds[2] : bounds[3]].reshape(6, 6, 6, 6) if order >= 3 else None
        for col in range(basis.size):
            beta = basis.exponents[col].astype(int)
            idx = tuple(k for k in range(6) for _ in range(beta[k]))
            fact = 1.0
            for b in beta:
                fact *= math.factorial(int(b))
            if len(idx) == 1:
                psi[i, :, col] = phi1[:, idx[0]]
            elif len(idx) == 2:
                psi[i, :, col] = phi2[:, idx[0], idx[1]] / fact
            else:
                psi[i, :, col] = phi3[:, idx[0], idx[1], idx[2]] / fact
        if spherical:
            targets[i] = y[bounds[-1] :]

    record(0, y)
    for i in range(1, M):
        sol = solve_ivp(rhs, (times[i - 1], times[i]), y, method="RK45", rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"tensor integration failed: {sol.message}")
        y = sol.y[:, -1]
        record(i, y)

    return FundSolMap(
        6, order, coord_system, orbit.e, times, psi, None, None, targets,
        {"rtol": rtol, "atol": atol, "route": "stt"},
    )


# ---------------------------------------------------------------------------
# Truth propagation (shared by validity sampling, guidance, and tests)
# ---------------------------------------------------------------------------

def propagate_truth(
    coord_system: str,
    orbit: OrbitParams,
    state0: np.ndarray,
    times,
    rtol: float = DEFAULT_TOL,
    atol: float = DEFAULT_TOL,
):
    """Integrate the nonlinear dynamics from times[0] through all times.

    state0 may be a single state (6,) or a batch (6, B). Cartesian states are
    LVLH m and m/s; spherical states are normalized relative coordinates, and
    the normalized target orbit is carried internally (returned second).
    """
    times = np.asarray(times, dtype=np.float64)
    state0 = np.asarray(state0, dtype=np.float64)
    single = state0.ndim == 1
    batch = state0.reshape(6, -1)
    B = batch.shape[1]
    spherical = coord_system == SPHERICAL

    if spherical:
        y0 = np.concatenate([batch.ravel(), target_initial_state(orbit.e)])

        def rhs(t, y):
            rel = y[: 6 * B].reshape(6, B)
            tgt = y[6 * B :]
            drel, dtgt = nl_spherical_rhs(rel, tgt)
            return np.concatenate([np.asarray(drel).ravel(), np.asarray(dtgt)])
    else:
        y0 = batch.ravel()

        def rhs(t, y):
            return np.asarray(nl_cartesian_rhs(y.reshape(6, B), orbit)).ravel()

    out = np.empty((len(times), 6, B))
    tgt_out = np.empty((len(times), 4)) if spherical else None
    y = y0
    for i, t in enumerate(times):
        if i > 0 and t > times[i - 1]:
            sol = solve_ivp(rhs, (times[i - 1], t), y, method="RK45", rtol=rtol, atol=atol)
            if not sol.success:
                raise RuntimeError(f"truth propagation failed: {sol.message}")
            y = sol.y[:, -1]
        out[i] = y[: 6 * B].reshape(6, B)
        if spherical:
            tgt_out[i] = y[6 * B :]
    states = out[:, :, 0] if single else out
    return (states, tgt_out) if spherical else states


def variational_stm(coord_system: str, orbit: OrbitParams, times, rtol=DEFAULT_TOL, atol=DEFAULT_TOL):
    """STM sequence from the variational equations with finite-difference
    Jacobians of the truth dynamics (independent of the jet machinery)."""
    times = np.asarray(times, dtype=np.float64)
    spherical = coord_system == SPHERICAL
    # steps sized to the coordinate scales to keep the differences well above
    # round-off in the SI accelerations
    steps = np.full(6, 1e-6) if spherical else np.array([1.0] * 3 + [1e-3] * 3)

    def jac(tgt):
        A = np.empty((6, 6))
        for k in range(6):
            dp = np.zeros(6); dp[k] = steps[k]
            if spherical:
                fp = np.asarray(nl_spherical_rhs(dp, tgt)[0])
                fm = np.asarray(nl_spherical_rhs(-dp, tgt)[0])
            else:
                fp = np.asarray(nl_cartesian_rhs(dp, orbit))
                fm = np.asarray(nl_cartesian_rhs(-dp, orbit))
            A[:, k] = (fp - fm) / (2 * steps[k])
        return A

    def rhs(t, y):
        phi = y[:36].reshape(6, 6)
        if spherical:
            tgt = y[36:]
            dphi = jac(tgt) @ phi
            _, dtgt = nl_spherical_rhs(np.zeros(6), tgt)
            return np.concatenate([dphi.ravel(), np.asarray(dtgt)])
        return (jac(None) @ phi).ravel()

    y = np.concatenate([np.eye(6).ravel(), target_initial_state(orbit.e)]) if spherical else np.eye(6).ravel()
    stms = np.empty((len(times), 6, 6))
    for i, t in enumerate(times):
        if i > 0:
            sol = solve_ivp(rhs, (times[i - 1], t), y, method="RK45", rtol=rtol, atol=atol)
            if not sol.success:
                raise RuntimeError(f"variational integration failed: {sol.message}")
            y = sol.y[:, -1]
        stms[i] = y[:36].reshape(6, 6)
    return stms


# ---------------------------------------------------------------------------
# Persistence: little-endian binary with trailing CRC32
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<IIBdIBdd")  # N, order, coord tag, ecc, nodes, flags, rtol, wall


def save_map(map_: FundSolMap, path) -> None:
    flags = 0
    if map_.gamma_v is not None:
        flags |= 1
    if map_.gamma_h is not None:
        flags |= 2
    if map_.target_states is not None:
        flags |= 4
    payload = [
        _MAGIC,
        _HEADER.pack(
            map_.n_vars, map_.order, _COORD_TAGS[map_.coord_system],
            map_.eccentricity, map_.n_nodes, flags,
            float(map_.meta.get("rtol", DEFAULT_TOL)),
            float(map_.meta.get("wall_time", 0.0)),
        ),
        np.ascontiguousarray(map_.times, dtype="<f8").tobytes(),
        np.ascontiguousarray(map_.psi, dtype="<f8").tobytes(),
    ]
    if map_.target_states is not None:
        payload.append(np.ascontiguousarray(map_.target_states, dtype="<f8").tobytes())
    if map_.gamma_v is not None:
        payload.append(np.ascontiguousarray(map_.gamma_v, dtype="<f8").tobytes())
    if map_.gamma_h is not None:
        payload.append(np.ascontiguousarray(map_.gamma_h, dtype="<f8").tobytes())
    blob = b"".join(payload)
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(struct.pack("<I", zlib.crc32(blob)))


def load_map(path) -> FundSolMap:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + _HEADER.size + 4:
        raise MapFormatError("truncated map file")
    magic = blob[: len(_MAGIC)]
    if magic != _MAGIC:
        if magic[:5] == _MAGIC[:5]:
            raise MapFormatError(f"unsupported map format version {magic!r}")
        raise MapFormatError(f"not a map file (bad magic {magic!r})")
    body, crc_bytes = blob[:-4], blob[-4:]
    if zlib.crc32(body) != struct.unpack("<I", crc_bytes)[0]:
        raise MapFormatError("checksum mismatch (corrupt map file)")
    offset = len(_MAGIC)
    n_vars, order, tag, ecc, n_nodes, flags, rtol, wall = _HEADER.unpack_from(body, offset)
    offset += _HEADER.size
    if tag not in _TAG_COORDS:
        raise MapFormatError(f"unknown coordinate tag {tag}")
    K = sum(math.comb(n_vars + q - 1, q) for q in range(1, order + 1))

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(body):
            raise MapFormatError("truncated map file")
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset = end
        return arr.astype(np.float64)

    times = take((n_nodes,))
    psi = take((n_nodes, n_vars, K))
    target = take((n_nodes, 4)) if flags & 4 else None
    gamma_v = take((n_nodes, 3, K)) if flags & 1 else None
    gamma_h = take((n_nodes, K)) if flags & 2 else None
    if offset != len(body):
        raise MapFormatError("trailing bytes in map file")
    return FundSolMap(
        n_vars, order, _TAG_COORDS[tag], ecc, times, psi, gamma_v, gamma_h, target,
        {"rtol": rtol, "wall_time": wall},
    )
