"""Static domain of validity of a truncated map: sampling and bisection.

The truncation error of an order-j map grows with the distance of the
osculating initial conditions from the reference. Sampling that error over
directions on a sphere of radius R and bisecting on R locates the critical
radius where the worst sampled error at the final node meets a tolerance;
plans whose node states stay inside that radius are certified at that error
level. Mixed Cartesian units are made commensurate by measuring velocity in
meters per mean motion.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import OrbitParams
from .fundmap import FundSolMap, propagate_truth
from .guidance import GuidancePlan
from .monomials import build_basis, expand
from .scaling import validity_weights

__all__ = [
    "ValidityCertificate",
    "CertifyResult",
    "truncation_error",
    "truncation_errors",
    "estimate_r_crit",
    "certify_plan",
    "save_certificate",
    "load_certificate",
]

DEFAULT_SAMPLES = 512


@dataclass
class ValidityCertificate:
    epsilon: float             # error tolerance, commensurate state units
    r_crit: float              # critical radius of the validity ball
    sample_count: int
    seed: int
    coord_system: str
    order: int
    t_f: float
    bracket: tuple = (0.0, 0.0)
    density_change: float = 0.0   # relative max-error shift when doubling D
    trace: list = field(default_factory=list)  # (radius, max sampled error)

    def to_json(self) -> str:
        payload = {
            "epsilon": self.epsilon,
            "r_crit": self.r_crit,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "coord_system": self.coord_system,
            "order": self.order,
            "t_f": self.t_f,
            "bracket": list(self.bracket),
            "density_change": self.density_change,
            "trace": [[float(r), float(e)] for r, e in self.trace],
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("MONOGUIDE_THREADS", "1")))
    except ValueError:
        return 1


def truncation_error(
    c1: np.ndarray,
    t: float,
    map_: FundSolMap,
    orbit: OrbitParams,
) -> float:
    """Weighted norm of (map prediction - truth) at a map node."""
    return float(truncation_errors(np.asarray(c1)[:, np.newaxis], t, map_, orbit)[0])


def truncation_errors(
    c1_batch: np.ndarray,
    t: float,
    map_: FundSolMap,
    orbit: OrbitParams,
) -> np.ndarray:
    """Batched truncation errors for a (6, D) block of initial conditions."""
    i = map_.node_index(t)
    basis = build_basis(map_.n_vars, map_.order)
    weights = validity_weights(map_.coord_system, orbit)
    D = c1_batch.shape[1]
    zero = np.linalg.norm(c1_batch, axis=0) == 0.0  # e(0, t) := 0 by definition
    psi = map_.psi[i]
    pred = np.column_stack([psi @ expand(c1_batch[:, b], basis) for b in range(D)])
    times = np.array([map_.times[0], t]) if t > map_.times[0] else np.array([t])
    threads = _thread_count()
    if threads > 1 and D >= 2 * threads:
        chunks = np.array_split(np.arange(D), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda idx: _truth_final(map_, orbit, c1_batch[:, idx], times), chunks
            ))
        truth = np.concatenate(parts, axis=1)
    else:
        truth = _truth_final(map_, orbit, c1_batch, times)
    errs = np.linalg.norm(weights[:, np.newaxis] * (pred - truth), axis=0)
    errs[zero] = 0.0
    return errs


def _truth_final(map_, orbit, batch, times):
    out = propagate_truth(map_.coord_system, orbit, batch, times)
    states = out[0] if isinstance(out, tuple) else out
    final = states[-1]
    return final if final.ndim == 2 else final[:, np.newaxis]


def _sphere_directions(coord_system, orbit, D, seed):
    """Directions uniform on the weighted-norm unit sphere."""
    rng = np.random.default_rng(seed)
    weights = validity_weights(coord_system, orbit)
    u = rng.standard_normal((6, D))
    u /= np.linalg.norm(u, axis=0)
    return u / weights[:, np.newaxis]


def estimate_r_crit(
    epsilon: float,
    map_: FundSolMap,
    orbit: OrbitParams,
    sample_count: int = DEFAULT_SAMPLES,
    seed: int = 0,
    r_start: float | None = None,
    max_doublings: int = 60,
) -> ValidityCertificate:
    """Bisection for the radius whose worst sampled error equals epsilon.

    The same direction set is reused at every radius, so the sampled maximum
    error is monotone in the radius and the certificate is reproducible from
    the seed. A doubled direction set quantifies sampling density.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if sample_count < 100:
        raise ValueError("at least 100 sample directions are required")
    t_f = float(map_.times[-1])
    dirs = _sphere_directions(map_.coord_system, orbit, sample_count, seed)

    trace = []

    def max_error(R, directions=dirs):
        errs = truncation_errors(R * directions, t_f, map_, orbit)
        worst = float(errs.max())
        trace.append((float(R), worst))
        return worst

    R = r_start if r_start is not None else (1.0 if map_.coord_system != "cartesian" else 100.0)
    err = max_error(R)
    if err >= epsilon:
        lo = 0.0
        hi = R
        while err >= epsilon and R > 1e-12:
            hi = R
            R = R / 2.0
            err = max_error(R)
        lo = R
        if R <= 1e-12:
            raise RuntimeError("epsilon unreachable: error exceeds tolerance at all radii")
    else:
        doublings = 0
        while err < epsilon:
            doublings += 1
            if doublings > max_doublings:
                raise RuntimeError("epsilon unreachable within bracket bounds")
            lo = R
            R = 2.0 * R
            err = max_error(R)
        hi = R
    while (hi - lo) > 1e-3 * hi:
        mid = 0.5 * (lo + hi)
        if max_error(mid) < epsilon:
            lo = mid
        else:
            hi = mid
    r_crit = 0.5 * (lo + hi)

    # density diagnostic: doubling the sample count (keeping the original
    # directions) should barely move the max-error estimate at r_crit
    base = float(truncation_errors(r_crit * dirs, t_f, map_, orbit).max())
    extra = _sphere_directions(map_.coord_system, orbit, sample_count, seed + 1)
    errs2 = truncation_errors(r_crit * extra, t_f, map_, orbit)
    density_change = abs(max(float(errs2.max()), base) - base) / max(base, 1e-300)

    return ValidityCertificate(
        epsilon=epsilon,
        r_crit=float(r_crit),
        sample_count=sample_count,
        seed=seed,
        coord_system=map_.coord_system,
        order=map_.order,
        t_f=t_f,
        bracket=(float(lo), float(hi)),
        density_change=density_change,
        trace=trace,
    )


@dataclass
class CertifyResult:
    passed: bool
    worst_margin: float        # r_crit minus the largest node-state norm
    worst_node: int
    node_norms: np.ndarray


def certify_plan(plan: GuidancePlan, certificate: ValidityCertificate,
                 orbit: OrbitParams) -> CertifyResult:
    """Check every plan node state against the certified validity radius."""
    if plan.coord_system != certificate.coord_system:
        raise ValueError(
            f"plan coordinates {plan.coord_system!r} do not match "
            f"certificate {certificate.coord_system!r}"
        )
    weights = validity_weights(plan.coord_system, orbit)
    states = np.vstack([plan.epoch_state, plan.node_states])
    norms = np.linalg.norm(weights[np.newaxis, :] * states, axis=1)
    worst = int(np.argmax(norms))
    margin = certificate.r_crit - float(norms[worst])
    return CertifyResult(margin > 0.0, margin, worst - 1, norms)


def save_certificate(cert: ValidityCertificate, path) -> None:
    with open(path, "w") as fh:
        fh.write(cert.to_json())


def load_certificate(path) -> ValidityCertificate:
    with open(path) as fh:
        data = json.load(fh)
    trace = [tuple(pair) for pair in data.pop("trace", [])]
    bracket = tuple(data.pop("bracket", (0.0, 0.0)))
    return ValidityCertificate(trace=trace, bracket=bracket, **data)
