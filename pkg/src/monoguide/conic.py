"""Embedded convex solver for quadratic and sum-of-norm cone programs.

Solves problems of the form

    min  x' P x + q' x
    s.t. A x = b
         C x >= d            (elementwise)
         lb <= x <= ub       (elementwise, optional)
         ||F_c x + g_c|| <= h_c' x + k_c   for each second-order cone

with P symmetric positive semidefinite (possibly zero). Internally this is a
primal-dual interior-point method with Nesterov-Todd scaling on the cones,
a Mehrotra predictor-corrector step, Ruiz equilibration of the problem data,
and dense factorization of the reduced KKT system with iterative refinement.

Note the objective convention: x'Px + q'x (not 1/2 x'Px).
"""
from __future__ import annotations

import time as _time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

__all__ = [
    "SocConstraint",
    "ConicProblem",
    "SolverSettings",
    "SolveReport",
    "solve",
    "build_sum_of_norms",
    "dump_problem",
]


@dataclass
class SocConstraint:
    """||F x + g|| <= h' x + k."""

    F: np.ndarray
    g: np.ndarray
    h: np.ndarray
    k: float = 0.0


@dataclass
class ConicProblem:
    n_vars: int
    P: np.ndarray | None = None
    q: np.ndarray | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    socs: list = field(default_factory=list)
    ineq: tuple | None = None      # (C, d): C x >= d
    box: tuple | None = None       # (lb, ub) with +-inf allowed
    name: str = ""

    def validate(self) -> None:
        n = self.n_vars
        if self.P is not None:
            P = self.P
            if P.shape != (n, n):
                raise ValueError(f"P shape {P.shape} != ({n},{n})")
            if not np.allclose(P, P.T, atol=1e-10 * max(1.0, np.abs(P).max())):
                raise ValueError("P is not symmetric")
            try:
                sla.cholesky(P + 1e-10 * max(1.0, np.abs(P).max()) * np.eye(n), lower=True)
            except sla.LinAlgError as exc:
                raise ValueError("P is not positive semidefinite") from exc
        if self.A is not None and self.A.shape[1] != n:
            raise ValueError("A column count mismatch")
        for soc in self.socs:
            if soc.F.shape[1] != n or soc.h.shape != (n,):
                raise ValueError("SOC dimension mismatch")
        if self.ineq is not None and self.ineq[0].shape[1] != n:
            raise ValueError("inequality dimension mismatch")


@dataclass
class SolverSettings:
    max_iter: int = 100
    feastol: float = 1e-9
    abstol: float = 1e-9
    reltol: float = 1e-9
    refine_steps: int = 2
    ruiz_iters: int = 10
    step_fraction: float = 0.99
    verbose: bool = False


@dataclass
class SolveReport:
    status: str
    x: np.ndarray | None
    objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    kkt: dict
    iterations: int
    wall_time: float


# ---------------------------------------------------------------------------
# Cone algebra over concatenated slack vectors: orthant block then SOC blocks
# ---------------------------------------------------------------------------

class _Cone:
    def __init__(self, n_orthant: int, soc_dims: list[int]):
        self.l = n_orthant
        self.soc_dims = list(soc_dims)
        self.dim = n_orthant + sum(soc_dims)
        self.nu = n_orthant + len(soc_dims)
        offs, pos = [], n_orthant
        for d in soc_dims:
            offs.append(pos)
            pos += d
        self.offsets = offs

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[: self.l] = 1.0
        for off in self.offsets:
            e[off] = 1.0
        return e

    def min_eig(self, u: np.ndarray) -> float:
        m = np.inf
        if self.l:
            m = min(m, u[: self.l].min())
        for off, d in zip(self.offsets, self.soc_dims):
            m = min(m, u[off] - np.linalg.norm(u[off + 1 : off + d]))
        return m

    def product(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.dim)
        out[: self.l] = u[: self.l] * v[: self.l]
        for off, d in zip(self.offsets, self.soc_dims):
            us, vs = u[off : off + d], v[off : off + d]
            out[off] = us @ vs
            out[off + 1 : off + d] = us[0] * vs[1:] + vs[0] * us[1:]
        return out

    def solve_product(self, lam: np.ndarray, v: np.ndarray) -> np.ndarray:
        """u with lam o u = v."""
        out = np.empty(self.dim)
        out[: self.l] = v[: self.l] / lam[: self.l]
        for off, d in zip(self.offsets, self.soc_dims):
            l0, lb = lam[off], lam[off + 1 : off + d]
            v0, vb = v[off], v[off + 1 : off + d]
            det = l0 * l0 - lb @ lb
            u0 = (l0 * v0 - lb @ vb) / det
            out[off] = u0
            out[off + 1 : off + d] = (vb - u0 * lb) / l0
        return out

    def max_step(self, u: np.ndarray, du: np.ndarray) -> float:
        """sup of alpha with u + alpha*du in the cone (u strictly inside)."""
        alpha = np.inf
        if self.l:
            neg = du[: self.l] < 0
            if np.any(neg):
                alpha = min(alpha, np.min(-u[: self.l][neg] / du[: self.l][neg]))
        for off, d in zip(self.offsets, self.soc_dims):
            u0, ub = u[off], u[off + 1 : off + d]
            d0, db = du[off], du[off + 1 : off + d]
            A = d0 * d0 - db @ db
            B = 2.0 * (u0 * d0 - ub @ db)
            C = u0 * u0 - ub @ ub
            roots = np.roots([A, B, C]) if abs(A) > 1e-300 else (
                np.array([-C / B]) if abs(B) > 1e-300 else np.array([])
            )
            best = np.inf
            for r in roots:
                if abs(np.imag(r)) > 1e-12 * max(1.0, abs(np.real(r))):
                    continue
                t = float(np.real(r))
                if t > 0 and u0 + t * d0 >= -1e-14 * max(1.0, abs(u0)):
                    best = min(best, t)
            alpha = min(alpha, best)
        return alpha


class _Scaling:
    """Nesterov-Todd scaling point for the product cone."""

    def __init__(self, cone: _Cone, s: np.ndarray, z: np.ndarray):
        self.cone = cone
        self.w_orth = np.sqrt(s[: cone.l] / z[: cone.l]) if cone.l else np.empty(0)
        self.soc = []
        for off, d in zip(cone.offsets, cone.soc_dims):
            ss, zz = s[off : off + d], z[off : off + d]
            res_s = ss[0] ** 2 - ss[1:] @ ss[1:]
            res_z = zz[0] ** 2 - zz[1:] @ zz[1:]
            if res_s <= 0.0 or res_z <= 0.0 or not np.isfinite(res_s + res_z):
                raise ValueError("scaling point left the cone interior")
            a = np.sqrt(res_s)
            b = np.sqrt(res_z)
            sbar, zbar = ss / a, zz / b
            gamma = np.sqrt((1.0 + sbar @ zbar) / 2.0)
            wbar = np.empty(d)
            wbar[0] = (sbar[0] + zbar[0]) / (2 * gamma)
            wbar[1:] = (sbar[1:] - zbar[1:]) / (2 * gamma)
            self.soc.append((np.sqrt(a / b), wbar))

    def _apply_soc(self, eta, wbar, u, inverse):
        # W   = eta   * [[w0, w1'], [w1, I + w1 w1'/(1+w0)]]
        # W^-1 = 1/eta * [[w0, -w1'], [-w1, I + w1 w1'/(1+w0)]]
        w0, w1 = wbar[0], wbar[1:]
        sign = -1.0 if inverse else 1.0
        scale = 1.0 / eta if inverse else eta
        u0, u1 = u[0], u[1:]
        dot = w1 @ u1
        out = np.empty_like(u)
        out[0] = scale * (w0 * u0 + sign * dot)
        if u.ndim == 1:
            out[1:] = scale * (sign * u0 * w1 + u1 + w1 * (dot / (1.0 + w0)))
        else:
            out[1:] = scale * (sign * np.outer(w1, u0) + u1 + np.outer(w1, dot / (1.0 + w0)))
        return out

    def apply(self, u: np.ndarray, inverse: bool = False) -> np.ndarray:
        """W u (or W^-1 u); u may be a vector or a matrix of stacked columns."""
        out = u.copy()
        cone = self.cone
        if cone.l:
            w = self.w_orth if not inverse else 1.0 / self.w_orth
            out[: cone.l] = (u[: cone.l].T * w).T
        for (eta, wbar), off, d in zip(self.soc, cone.offsets, cone.soc_dims):
            out[off : off + d] = self._apply_soc(eta, wbar, u[off : off + d], inverse)
        return out

    def lam(self, z: np.ndarray) -> np.ndarray:
        return self.apply(z)

    def fill_neg_square(self, block: np.ndarray) -> None:
        """Write -W^2 into the provided (m, m) array (assumed zeroed)."""
        cone = self.cone
        if cone.l:
            idx = np.arange(cone.l)
            block[idx, idx] = -self.w_orth**2
        for (eta, wbar), off, d in zip(self.soc, cone.offsets, cone.soc_dims):
            # W^2 = eta^2 (2 wbar wbar' - J), so -W^2 = -2 eta^2 wbar wbar' + eta^2 J
            sub = -(eta**2) * 2.0 * np.outer(wbar, wbar)
            diag = np.arange(1, d)
            sub[diag, diag] -= eta**2
            sub[0, 0] += eta**2
            block[off : off + d, off : off + d] = sub


# ---------------------------------------------------------------------------
# Canonical form assembly
# ---------------------------------------------------------------------------

def _canonicalize(problem: ConicProblem):
    """Return (Phat, qhat, A, b, G, h, cone) in 1/2 x'Px + q'x convention."""
    n = problem.n_vars
    Phat = 2.0 * problem.P if problem.P is not None else np.zeros((n, n))
    qhat = problem.q.astype(float).copy() if problem.q is not None else np.zeros(n)
    A = problem.A.astype(float).copy() if problem.A is not None else np.zeros((0, n))
    b = problem.b.astype(float).copy() if problem.b is not None else np.zeros(0)

    g_rows, h_rows = [], []
    if problem.ineq is not None:
        C, d = problem.ineq
        g_rows.append(-np.asarray(C, dtype=float))
        h_rows.append(-np.asarray(d, dtype=float))
    if problem.box is not None:
        lb, ub = (np.asarray(v, dtype=float) for v in problem.box)
        fin = np.isfinite(ub)
        if np.any(fin):
            E = np.eye(n)[fin]
            g_rows.append(E)
            h_rows.append(ub[fin])
        fin = np.isfinite(lb)
        if np.any(fin):
            E = -np.eye(n)[fin]
            g_rows.append(E)
            h_rows.append(-lb[fin])
    n_orth = sum(r.shape[0] for r in g_rows)

    soc_dims = []
    for soc in problem.socs:
        g_rows.append(np.vstack([-soc.h[np.newaxis, :], -soc.F]))
        h_rows.append(np.concatenate([[soc.k], soc.g]))
        soc_dims.append(soc.F.shape[0] + 1)

    G = np.vstack(g_rows) if g_rows else np.zeros((0, n))
    h = np.concatenate(h_rows) if h_rows else np.zeros(0)
    return Phat, qhat, A, b, G, h, _Cone(n_orth, soc_dims)


def _drop_redundant_equalities(A: np.ndarray, b: np.ndarray):
    """Rank-revealing elimination of dependent equality rows."""
    if A.shape[0] == 0:
        return A, b
    _q, R, piv = sla.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if len(diag) == 0 or diag[0] == 0.0:
        keep = np.array([], dtype=int)
    else:
        rank = int(np.sum(diag > 1e-12 * diag[0]))
        keep = np.sort(piv[:rank])
    if len(keep) < A.shape[0]:
        dropped = np.setdiff1d(np.arange(A.shape[0]), keep)
        x_ls, *_ = np.linalg.lstsq(A[keep].T @ A[keep] + 1e-13 * np.eye(A.shape[1]),
                                   A[keep].T @ b[keep], rcond=None) if False else (None,)
        warnings.warn(
            f"dropping {len(dropped)} linearly dependent equality rows", RuntimeWarning
        )
        return A[keep], b[keep]
    return A, b


class _Ruiz:
    """Cone-respecting equilibration of the stacked problem data."""

    def __init__(self, Phat, qhat, A, b, G, h, cone: _Cone, iters: int):
        n = Phat.shape[1]
        self.D = np.ones(n)
        self.Ea = np.ones(A.shape[0])
        self.Eg = np.ones(G.shape[0])
        blocks = [np.arange(cone.l)] + [
            np.arange(off, off + d) for off, d in zip(cone.offsets, cone.soc_dims)
        ]
        for _ in range(iters):
            stack = []
            if Phat.size:
                stack.append(np.abs(self.D * (Phat * self.D[:, None])).max(axis=0))
            if A.shape[0]:
                stack.append(np.abs(self.Ea[:, None] * A * self.D).max(axis=0))
            if G.shape[0]:
                stack.append(np.abs(self.Eg[:, None] * G * self.D).max(axis=0))
            if not stack:
                break
            cnorm = np.sqrt(np.maximum(np.max(stack, axis=0), 1e-12))
            self.D /= cnorm
            if A.shape[0]:
                rnorm = np.abs(self.Ea[:, None] * A * self.D).max(axis=1)
                self.Ea /= np.sqrt(np.maximum(rnorm, 1e-12))
            if G.shape[0]:
                scaled = np.abs(self.Eg[:, None] * G * self.D)
                if cone.l:
                    rnorm = scaled[: cone.l].max(axis=1)
                    self.Eg[: cone.l] /= np.sqrt(np.maximum(rnorm, 1e-12))
                for off, d in zip(cone.offsets, cone.soc_dims):
                    blk = scaled[off : off + d].max()
                    self.Eg[off : off + d] /= np.sqrt(max(blk, 1e-12))
        Ps = self.D[:, None] * Phat * self.D
        qs = self.D * qhat
        self.gamma = 1.0 / max(1.0, np.abs(Ps).max() if Ps.size else 0.0, np.abs(qs).max() if qs.size else 0.0)
        self.Ps = self.gamma * Ps
        self.qs = self.gamma * qs
        self.As = self.Ea[:, None] * A * self.D
        self.bs = self.Ea * b
        self.Gs = self.Eg[:, None] * G * self.D
        self.hs = self.Eg * h

    def recover(self, x, y, z, s):
        x0 = self.D * x
        y0 = self.Ea * y / self.gamma
        z0 = self.Eg * z / self.gamma
        s0 = s / self.Eg
        return x0, y0, z0, s0


# ---------------------------------------------------------------------------
# Main solver
# ---------------------------------------------------------------------------

class _AugmentedKKT:
    """Dense symmetric-indefinite KKT system

        [ P   A'   G' ] [dx]   [rx]
        [ A   0    0  ] [dy] = [ry]
        [ G   0  -W^2 ] [dz]   [rz]

    refactored each iteration for the current scaling, with static
    regularization folded into the factorization and removed again by
    iterative refinement against the unregularized matrix.
    """

    def __init__(self, Phat, A, G):
        self.n, self.p, self.m = Phat.shape[0], A.shape[0], G.shape[0]
        dim = self.n + self.p + self.m
        T = np.zeros((dim, dim))
        T[: self.n, : self.n] = Phat
        if self.p:
            T[: self.n, self.n : self.n + self.p] = A.T
            T[self.n : self.n + self.p, : self.n] = A
        if self.m:
            T[: self.n, self.n + self.p :] = G.T
            T[self.n + self.p :, : self.n] = G
        self.template = T
        self.K = None
        self.lu = None
        self.reg = 1e-11 * max(1.0, np.abs(T).max())

    def factor(self, scaling: "_Scaling | None") -> None:
        K = self.template.copy()
        zblock = K[self.n + self.p :, self.n + self.p :]
        if scaling is None:
            idx = np.arange(self.m)
            zblock[idx, idx] = -1.0
        else:
            scaling.fill_neg_square(zblock)
        self.K = K.copy()
        idx = np.arange(self.n + self.p + self.m)
        K[idx, idx] += np.where(idx < self.n, self.reg, -self.reg)
        self.lu = sla.lu_factor(K, check_finite=False)

    def solve(self, rx, ry, rz, refine: int = 2):
        rhs = np.concatenate([rx, ry, rz])
        sol = sla.lu_solve(self.lu, rhs, check_finite=False)
        for _ in range(refine):
            resid = rhs - self.K @ sol
            sol = sol + sla.lu_solve(self.lu, resid, check_finite=False)
        return sol[: self.n], sol[self.n : self.n + self.p], sol[self.n + self.p :]


def solve(problem: ConicProblem, settings: SolverSettings | None = None) -> SolveReport:
    """Primal-dual interior-point solve with Mehrotra predictor-corrector."""
    settings = settings or SolverSettings()
    started = _time.perf_counter()
    problem.validate()

    Phat0, qhat0, A0, b0, G0, h0, cone = _canonicalize(problem)
    A0, b0 = _drop_redundant_equalities(A0, b0)
    ruiz = _Ruiz(Phat0, qhat0, A0, b0, G0, h0, cone, settings.ruiz_iters)
    Phat, qhat, A, b, G, h = ruiz.Ps, ruiz.qs, ruiz.As, ruiz.bs, ruiz.Gs, ruiz.hs
    n, p, m = Phat.shape[0], A.shape[0], G.shape[0]

    def finish(status, x, y, z, s, iters, pres_best=None, relgap_last=None):
        if (
            status in ("numerical-failure", "max_iter")
            and pres_best is not None and pres_best > 1e-6
            and relgap_last is not None and relgap_last < 1e-7
        ):
            # complementarity collapsed without the iterates ever becoming
            # primally feasible: treat as an infeasibility certificate
            status = "infeasible-detected"
        if x is None:
            return SolveReport(status, None, np.nan, np.inf, np.inf, np.inf, {},
                               iters, _time.perf_counter() - started)
        x0, y0, z0, s0 = ruiz.recover(x, y, z, s)
        obj = float(x0 @ (problem.P @ x0) + (problem.q @ x0 if problem.q is not None else 0.0)) \
            if problem.P is not None else float(problem.q @ x0 if problem.q is not None else 0.0)
        rx0 = Phat0 @ x0 + qhat0 + (A0.T @ y0 if p else 0.0) + (G0.T @ z0 if m else 0.0)
        ry0 = (A0 @ x0 - b0) if p else np.zeros(0)
        rz0 = (G0 @ x0 + s0 - h0) if m else np.zeros(0)
        gap0 = float(s0 @ z0) if m else 0.0
        scale_obj = max(1.0, abs(obj))
        kkt = {
            "stationarity": float(np.linalg.norm(rx0, np.inf)) / max(1.0, np.linalg.norm(qhat0, np.inf)),
            "primal_eq": float(np.linalg.norm(ry0, np.inf)) / max(1.0, np.linalg.norm(b0, np.inf)) if p else 0.0,
            "primal_cone": float(np.linalg.norm(rz0, np.inf)) / max(1.0, np.linalg.norm(h0, np.inf)) if m else 0.0,
            "complementarity": gap0 / scale_obj,
        }
        pres = max(kkt["primal_eq"], kkt["primal_cone"])
        return SolveReport(status, x0, obj, pres, kkt["stationarity"], gap0, kkt,
                           iters, _time.perf_counter() - started)

    kkt = _AugmentedKKT(Phat, A, G)

    # equality-only problems reduce to one regularized KKT solve
    if m == 0:
        kkt.factor(None)
        x, y, _ = kkt.solve(-qhat, b, np.zeros(0), settings.refine_steps + 1)
        return finish("optimal", x, y, np.zeros(0), np.zeros(0), 0)

    resx0 = max(1.0, np.linalg.norm(qhat))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))

    # -- initial point -------------------------------------------------------
    kkt.factor(None)
    x, y, z0 = kkt.solve(-qhat, b, h, settings.refine_steps)
    r = -z0  # = h - G x at the solution of the least-squares system
    s = r.copy()
    me = cone.min_eig(s)
    if me <= 0:
        s += (1.0 - me) * cone.identity()
    z = -r
    me = cone.min_eig(z)
    if me <= 0:
        z += (1.0 - me) * cone.identity()

    best = None
    best_pres = None
    last_relgap = None
    gap0 = None
    stalls = 0
    for iteration in range(1, settings.max_iter + 1):
        rx = Phat @ x + qhat + (A.T @ y if p else 0.0) + G.T @ z
        ry = (A @ x - b) if p else np.zeros(0)
        rz = G @ x + s - h
        gap = float(s @ z)
        mu = gap / cone.nu
        pobj = 0.5 * x @ (Phat @ x) + qhat @ x
        pres = max(np.linalg.norm(ry) / resy0, np.linalg.norm(rz) / resz0)
        dres = np.linalg.norm(rx) / resx0
        relgap = gap / max(1.0, abs(pobj))
        if settings.verbose:
            print(f"  it {iteration:3d}  pres {pres:8.1e}  dres {dres:8.1e}  gap {gap:8.1e}")
        if best is None or pres + dres + relgap < best[0]:
            best = (pres + dres + relgap, x.copy(), y.copy(), z.copy(), s.copy(), iteration)
        best_pres = min(best_pres, pres) if best_pres is not None else pres
        last_relgap = relgap
        if pres <= settings.feastol and dres <= settings.feastol and (
            gap <= settings.abstol or relgap <= settings.reltol
        ):
            return finish("optimal", x, y, z, s, iteration)
        if not np.isfinite(pres + dres + gap):
            return finish("numerical-failure", best[1], best[2], best[3], best[4], iteration, best_pres, last_relgap)
        # divergence certificate: complementarity products or multipliers
        # exploding while primal infeasibility refuses to shrink
        if gap0 is None:
            gap0 = gap
        diverged = gap > 1e7 * max(1.0, gap0) or (
            np.linalg.norm(z) + (np.linalg.norm(y) if p else 0.0)
        ) > 1e12
        if iteration > 5 and pres > 1e-6 and diverged:
            return finish("infeasible-detected", best[1], best[2], best[3], best[4], iteration)

        try:
            W = _Scaling(cone, s, z)
            lam = W.lam(z)
            kkt.factor(W)
        except (sla.LinAlgError, ValueError):
            return finish("numerical-failure", best[1], best[2], best[3], best[4], iteration, best_pres, last_relgap)

        def direction(sigma, corr):
            d_s = cone.product(lam, lam)
            if corr is not None:
                d_s = d_s + corr
            if sigma > 0:
                d_s = d_s - sigma * mu * cone.identity()
            damp = 1.0 - sigma
            u = damp * rz - W.apply(cone.solve_product(lam, d_s))
            dx, dy, dz = kkt.solve(-damp * rx, -damp * ry, -u, settings.refine_steps)
            ds = -damp * rz - G @ dx
            return dx, dy, dz, ds

        dx_a, dy_a, dz_a, ds_a = direction(0.0, None)
        ws_a = W.apply(ds_a, inverse=True)
        wz_a = W.apply(dz_a)
        alpha_a = min(1.0, cone.max_step(lam, ws_a), cone.max_step(lam, wz_a))
        gap_a = float((s + alpha_a * ds_a) @ (z + alpha_a * dz_a))
        sigma = min(1.0, max(0.0, (gap_a / gap)) ** 3)

        corr = cone.product(ws_a, wz_a)
        dx, dy, dz, ds = direction(sigma, corr)
        ws = W.apply(ds, inverse=True)
        wz = W.apply(dz)
        alpha = min(1.0, settings.step_fraction * min(cone.max_step(lam, ws), cone.max_step(lam, wz)))
        if alpha < 1e-13:
            stalls += 1
            if stalls >= 3:
                return finish("numerical-failure", best[1], best[2], best[3], best[4], iteration, best_pres, last_relgap)
        else:
            stalls = 0
        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        z = z + alpha * dz

    return finish("max_iter", best[1], best[2], best[3], best[4], settings.max_iter, best_pres, last_relgap)


# ---------------------------------------------------------------------------
# Sum-of-norm objective assembly
# ---------------------------------------------------------------------------

def build_sum_of_norms(
    groups,
    n_vars: int,
    P: np.ndarray | None = None,
    q: np.ndarray | None = None,
    equalities: tuple | None = None,
    inequalities: tuple | None = None,
    trust_indices=None,
    trust_radius: float | None = None,
    trust_norm: str = "2",
) -> ConicProblem:
    """Epigraph formulation of  min  sum_i ||F_i x + g_i||  (+ x'Px + q'x).

    Appends one epigraph variable and one second-order cone per group. The
    optional trust region bounds the selected coordinates of x, either with a
    single 2-norm cone or an elementwise box.
    """
    groups = list(groups)
    if not groups:
        raise ValueError("at least one norm group is required")
    n_aux = len(groups)
    n_total = n_vars + n_aux

    P_full = None
    if P is not None:
        P_full = np.zeros((n_total, n_total))
        P_full[:n_vars, :n_vars] = P
    q_full = np.zeros(n_total)
    if q is not None:
        q_full[:n_vars] = q
    q_full[n_vars:] = 1.0

    A_full = b_full = None
    if equalities is not None:
        A, b = equalities
        A_full = np.hstack([A, np.zeros((A.shape[0], n_aux))])
        b_full = np.asarray(b, dtype=float)

    socs = []
    for i, (F, g) in enumerate(groups):
        Fw = np.hstack([F, np.zeros((F.shape[0], n_aux))])
        hw = np.zeros(n_total)
        hw[n_vars + i] = 1.0
        socs.append(SocConstraint(Fw, np.asarray(g, dtype=float), hw, 0.0))

    ineq_full = None
    if inequalities is not None:
        C, d = inequalities
        ineq_full = (np.hstack([C, np.zeros((C.shape[0], n_aux))]), np.asarray(d, dtype=float))

    box = None
    if trust_radius is not None:
        idx = np.asarray(trust_indices if trust_indices is not None else np.arange(n_vars))
        if trust_norm == "2":
            F = np.zeros((len(idx), n_total))
            F[np.arange(len(idx)), idx] = 1.0
            socs.append(SocConstraint(F, np.zeros(len(idx)), np.zeros(n_total), float(trust_radius)))
        elif trust_norm == "inf":
            lb = np.full(n_total, -np.inf)
            ub = np.full(n_total, np.inf)
            lb[idx] = -float(trust_radius)
            ub[idx] = float(trust_radius)
            box = (lb, ub)
        else:
            raise ValueError(f"unknown trust-region norm {trust_norm!r}")

    return ConicProblem(
        n_vars=n_total, P=P_full, q=q_full, A=A_full, b=b_full,
        socs=socs, ineq=ineq_full, box=box, name="sum-of-norms",
    )


def dump_problem(problem: ConicProblem, path) -> None:
    """Plain-text dump of the problem data for offline cross-checking."""
    with open(path, "w") as fh:
        fh.write(f"# conic problem {problem.name!r}: n_vars={problem.n_vars}\n")
        np.set_printoptions(threshold=np.inf, linewidth=200)
        if problem.P is not None:
            fh.write(f"[P]\n{problem.P}\n")
        if problem.q is not None:
            fh.write(f"[q]\n{problem.q}\n")
        if problem.A is not None:
            fh.write(f"[A]\n{problem.A}\n[b]\n{problem.b}\n")
        if problem.ineq is not None:
            fh.write(f"[C >= d]\n{problem.ineq[0]}\n{problem.ineq[1]}\n")
        if problem.box is not None:
            fh.write(f"[box]\n{problem.box[0]}\n{problem.box[1]}\n")
        for i, soc in enumerate(problem.socs):
            fh.write(f"[soc {i}] ||F x + g|| <= h'x + k\n{soc.F}\n{soc.g}\n{soc.h}\n{soc.k}\n")
        np.set_printoptions()
