"""Sequential convex programming on the monomial manifold.

Each iteration linearizes the manifold at the current node states through
the analytic monomial Jacobians, solves a convex sub-problem in the tangent
variables (with position-defect and end-state slacks plus a trust region),
then projects back onto the manifold by re-expanding the updated linear
states. The only nonlinear work between solves is re-expansion and Jacobian
refresh; the dynamics never appear.

Everything here runs in dimensionless internal units; delta-V reporting
multiplies by a*n at the end.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProblem, SolverSettings, build_sum_of_norms, solve
from .dynamics import OrbitParams
from .fundmap import FundSolMap
from .guidance import BURN_TOL_MS, GuidancePlan, consolidate_plan
from .monomials import build_basis, expand, jacobian
from .scaling import scaled_cost_rows, scaled_psi, scp_scale

__all__ = [
    "ScpSettings",
    "ScpIteration",
    "ScpResult",
    "assemble_subproblem",
    "add_range_constraints",
    "scp_solve",
    "cost_report",
]


@dataclass
class ScpSettings:
    trust_radius: float
    slack_weight: float
    convergence_tol: float
    cost_exponent: int = 1
    max_iter: int = 30
    burn_mode: str = "fixed"            # "fixed" (burn times only) or "free" (whole grid)
    trust_norm: str = "2"
    ineq_slack_weight: float | None = None   # defaults to slack_weight
    solver: SolverSettings | None = None

    def __post_init__(self):
        if self.trust_radius <= 0 or self.slack_weight <= 0:
            raise ValueError("trust radius and slack weight must be positive")
        if self.cost_exponent not in (1, 2):
            raise ValueError("cost exponent must be 1 or 2")
        if self.burn_mode not in ("fixed", "free"):
            raise ValueError(f"unknown burn mode {self.burn_mode!r}")


@dataclass
class ScpIteration:
    iteration: int
    J: float                 # full normalized objective at the projected iterate
    J_dv: float              # delta-V part only, m/s
    xnorm: float             # norm of the non-slack step
    smax: float              # max |slack| in the sub-problem solution
    dJ_predict: float
    dJ_actual: float


@dataclass
class ScpResult:
    plan: GuidancePlan
    converged: bool
    iterations: int
    trace: list
    meta: dict = field(default_factory=dict)


class _Workspace:
    """Per-solve constants: scaled map rows on the control grid.

    Cartesian problems work in km and km/s with the velocity rows of the
    end-state constraint rescaled by 1/n so every slack carries positional
    units; spherical problems are natively dimensionless.
    """

    def __init__(self, map_: FundSolMap, orbit: OrbitParams, grid_times, x_goal):
        self.map = map_
        self.orbit = orbit
        self.basis = build_basis(6, map_.order)
        self.grid_times = np.asarray(grid_times, dtype=np.float64)
        self.grid_idx = map_.node_indices(self.grid_times)
        self.K = len(self.grid_idx)
        self.s1, self.dv_scale = scp_scale(map_.coord_system, orbit)
        psi_bar = scaled_psi(map_, self.basis, self.s1)
        vrows = scaled_cost_rows(map_, self.basis, self.s1)
        self.psi = psi_bar[self.grid_idx]          # (K, 6, Kj)
        self.psi_r = self.psi[:, :3, :]
        self.V = vrows[self.grid_idx]              # (K, 3, Kj)
        self.x_goal = np.asarray(x_goal, dtype=np.float64) / self.s1
        self.gamma_h = map_.gamma_h[self.grid_idx] if map_.gamma_h is not None else None
        # commensurate end-state rows: velocity components to positional units
        self.end_row_scale = np.ones(6)
        if map_.coord_system == "cartesian":
            self.end_row_scale[3:] = 1.0 / orbit.n


@dataclass
class _Layout:
    K: int
    n_ineq: int

    @property
    def n_dc(self):
        return 6 * self.K

    @property
    def n_slack(self):
        return 3 * self.K + 6

    @property
    def n_base(self):
        return self.n_dc + self.n_slack + self.n_ineq

    def dc(self, i):
        return slice(6 * i, 6 * i + 6)

    def slack(self, i):
        return slice(self.n_dc + 3 * i, self.n_dc + 3 * i + 3)

    @property
    def s_end(self):
        return slice(self.n_dc + 3 * self.K, self.n_dc + 3 * self.K + 6)

    def s_ineq(self, i):
        return self.n_dc + self.n_slack + i


def assemble_subproblem(
    ws: _Workspace,
    c1: np.ndarray,
    settings: ScpSettings,
    cj0: np.ndarray,
    rho_min_sq: np.ndarray | None = None,
    w_scale: float = 1.0,
) -> tuple[ConicProblem, _Layout]:
    """Convex sub-problem about the current iterate.

    Decision vector: tangent steps of every node's linear state, one 3-vector
    position slack per node, a 6-vector end-state slack, and (with range
    constraints) one scalar inequality slack per node; sum-of-norm costs add
    epigraph variables after these.
    """
    K = ws.K
    lay = _Layout(K, 0 if rho_min_sq is None else K)
    cj = [expand(c1[i], ws.basis) for i in range(K)]
    C = [jacobian(c1[i], ws.basis) for i in range(K)]
    VC = [ws.V[i] @ C[i] for i in range(K)]          # (3, 6)
    n = lay.n_base

    # burn-cost affine maps F_i X + g_i = predicted delta-v at node i
    groups = []
    for i in range(K):
        F = np.zeros((3, n))
        F[:, lay.dc(i)] = VC[i]
        if i == 0:
            g = ws.V[0] @ (cj[0] - cj0)
        else:
            F[:, lay.dc(i - 1)] = -(ws.V[i] @ C[i - 1])
            g = ws.V[i] @ (cj[i] - cj[i - 1])
        groups.append((F, np.asarray(g)))

    # equalities: end state, then position continuity with slacks
    A = np.zeros((6 + 3 * K, n))
    b = np.zeros(6 + 3 * K)
    ers = ws.end_row_scale[:, np.newaxis]
    A[:6, lay.dc(K - 1)] = ers * (ws.psi[K - 1] @ C[K - 1])
    A[:6, lay.s_end] = np.eye(6)
    b[:6] = ws.end_row_scale * (ws.x_goal - ws.psi[K - 1] @ cj[K - 1])
    for i in range(K):
        r = slice(6 + 3 * i, 9 + 3 * i)
        A[r, lay.dc(i)] = ws.psi_r[i] @ C[i]
        A[r, lay.slack(i)] = np.eye(3)
        if i == 0:
            b[r] = -(ws.psi_r[0] @ (cj[0] - cj0))
        else:
            A[r, lay.dc(i - 1)] = -(ws.psi_r[i] @ C[i - 1])
            b[r] = -(ws.psi_r[i] @ (cj[i] - cj[i - 1]))

    # quadratic slack penalties (always), plus inequality-slack penalties
    w = settings.slack_weight * w_scale
    w_ineq = (settings.ineq_slack_weight if settings.ineq_slack_weight is not None
              else settings.slack_weight) * w_scale
    P_slack = np.zeros((n, n))
    sl = slice(lay.n_dc, lay.n_dc + lay.n_slack)
    P_slack[sl, sl] = w * np.eye(lay.n_slack)
    if lay.n_ineq:
        si = slice(lay.n_dc + lay.n_slack, n)
        P_slack[si, si] = w_ineq * np.eye(K)

    ineq = None
    if rho_min_sq is not None:
        C_rows = np.zeros((K, n))
        d_rows = np.empty(K)
        for i in range(K):
            C_rows[i, lay.dc(i)] = ws.gamma_h[i] @ C[i]
            C_rows[i, lay.s_ineq(i)] = 1.0
            d_rows[i] = rho_min_sq[i] - ws.gamma_h[i] @ cj[i]
        ineq = (C_rows, d_rows)

    trust_idx = np.arange(lay.n_dc)
    if settings.cost_exponent == 1:
        problem = build_sum_of_norms(
            groups, n, P=P_slack, equalities=(A, b), inequalities=ineq,
            trust_indices=trust_idx, trust_radius=settings.trust_radius,
            trust_norm=settings.trust_norm,
        )
    else:
        P = P_slack.copy()
        q = np.zeros(n)
        for F, g in groups:
            P += F.T @ F
            q += 2.0 * F.T @ g
        from .conic import SocConstraint

        socs = []
        box = None
        if settings.trust_norm == "2":
            Ft = np.zeros((lay.n_dc, n))
            Ft[np.arange(lay.n_dc), trust_idx] = 1.0
            socs.append(SocConstraint(Ft, np.zeros(lay.n_dc), np.zeros(n), settings.trust_radius))
        else:
            lb = np.full(n, -np.inf)
            ub = np.full(n, np.inf)
            lb[trust_idx] = -settings.trust_radius
            ub[trust_idx] = settings.trust_radius
            box = (lb, ub)
        problem = ConicProblem(n_vars=n, P=P, q=q, A=A, b=b, socs=socs, ineq=ineq, box=box,
                               name="scp-subproblem")
    return problem, lay


def add_range_constraints(ws: _Workspace, rho_min_sq_of_t) -> np.ndarray:
    """Per-node minimum squared-range bounds from a piecewise profile.

    ``rho_min_sq_of_t`` maps a node time to the normalized squared minimum
    range; requires the map to carry the squared-range rows.
    """
    if ws.gamma_h is None:
        raise ValueError("range constraints require a map built with the range rows")
    return np.array([rho_min_sq_of_t(t) for t in ws.grid_times])


def _true_slacks(ws, cjs, cj0, rho_min_sq):
    """Constraint defects of a projected iterate (the exact slack values)."""
    K = ws.K
    defects = []
    prev = cj0
    for i in range(K):
        defects.append(ws.psi_r[i] @ (cjs[i] - prev))
        prev = cjs[i]
    defects.append(ws.end_row_scale * (ws.x_goal - ws.psi[K - 1] @ cjs[K - 1]))
    if rho_min_sq is not None:
        ineq = np.array([
            max(0.0, rho_min_sq[i] - float(ws.gamma_h[i] @ cjs[i])) for i in range(K)
        ])
        defects.append(ineq)
    return np.concatenate(defects)


def _true_cost(ws, c1, cj0, settings, rho_min_sq, w_scale=1.0):
    """Objective of the full problem evaluated at a projected iterate."""
    K = ws.K
    cjs = [expand(c1[i], ws.basis) for i in range(K)]
    dv_norms = []
    prev = cj0
    for i in range(K):
        dv_norms.append(np.linalg.norm(ws.V[i] @ (cjs[i] - prev)))
        prev = cjs[i]
    dv_norms = np.asarray(dv_norms)
    J_dv = float((dv_norms ** settings.cost_exponent).sum())
    slacks = _true_slacks(ws, cjs, cj0, rho_min_sq)
    n_eq = 3 * K + 6
    w = settings.slack_weight * w_scale
    w_ineq = (settings.ineq_slack_weight if settings.ineq_slack_weight is not None
              else settings.slack_weight) * w_scale
    J = J_dv + w * float(np.sum(slacks[:n_eq] ** 2)) + w_ineq * float(np.sum(slacks[n_eq:] ** 2))
    dv_total_ms = float(ws.dv_scale * dv_norms.sum())
    return J, dv_total_ms, float(np.abs(slacks).max())


def scp_solve(
    map_: FundSolMap,
    orbit: OrbitParams,
    initial_plan: GuidancePlan,
    x_goal: np.ndarray,
    settings: ScpSettings,
    rho_min_sq_of_t=None,
    burn_tol: float = BURN_TOL_MS,
) -> ScpResult:
    """Iterate convex sub-problems until the tangent step norm converges.

    In fixed mode the grid is the initial plan's burn times; in free mode it
    is the plan's whole candidate grid, seeded arc-wise from the plan.
    """
    if settings.burn_mode == "fixed":
        grid_times = initial_plan.burn_times
        seed = initial_plan.node_states[initial_plan.burn_indices]
    else:
        grid_times = initial_plan.grid_times
        seed = initial_plan.node_states
    ws = _Workspace(map_, orbit, grid_times, x_goal)
    rho_min_sq = None
    if rho_min_sq_of_t is not None:
        rho_min_sq = add_range_constraints(ws, rho_min_sq_of_t)

    c1 = (seed / ws.s1[np.newaxis, :]).copy()
    cj0 = expand(np.asarray(initial_plan.epoch_state) / ws.s1, ws.basis)

    trace: list[ScpIteration] = []
    w_scale = 1.0
    J_prev, _, _ = _true_cost(ws, c1, cj0, settings, rho_min_sq, w_scale)
    converged = False
    smax_true = np.inf
    rounds = 0
    for it in range(1, settings.max_iter + 1):
        problem, lay = assemble_subproblem(ws, c1, settings, cj0, rho_min_sq, w_scale)
        report = solve(problem, settings.solver)
        if report.status != "optimal":
            break
        dc = report.x[: lay.n_dc].reshape(ws.K, 6)
        xnorm = float(np.linalg.norm(dc))
        smax = float(np.abs(report.x[lay.n_dc : lay.n_base]).max())

        # predicted total cost of the accepted step vs the prior iterate's
        # total; the quadratic parsing excludes the prior delta-v constant,
        # so add it back before differencing
        if settings.cost_exponent == 2:
            prev_dv = 0.0
            prev_cj = cj0
            for i in range(ws.K):
                cji = expand(c1[i], ws.basis)
                prev_dv += float(np.sum((ws.V[i] @ (cji - prev_cj)) ** 2))
                prev_cj = cji
            dJ_pred = float(report.objective) + prev_dv - J_prev
        else:
            dJ_pred = float(report.objective) - J_prev

        c1 = c1 + dc  # tangent step, then projection back onto the manifold
        J, J_dv_ms, smax_true = _true_cost(ws, c1, cj0, settings, rho_min_sq, w_scale)
        trace.append(ScpIteration(it, J, J_dv_ms, xnorm, smax, dJ_pred, J - J_prev))
        J_prev = J
        if xnorm < settings.convergence_tol:
            if smax_true <= 1e-6 or w_scale >= 1e12:
                converged = smax_true <= 1e-6
                break
            # converged onto a penalty equilibrium with physical defects left:
            # stiffen the slack weights and keep iterating
            w_scale *= 100.0
            rounds += 1
            J_prev, _, _ = _true_cost(ws, c1, cj0, settings, rho_min_sq, w_scale)

    states = c1 * ws.s1[np.newaxis, :]
    burn_idx, dvs, total, states_pc, _merged = consolidate_plan(
        map_, orbit, ws.grid_times, states, initial_plan.epoch_state, burn_tol,
        merge_adjacent=settings.burn_mode == "free",
    )
    plan = GuidancePlan(
        coord_system=map_.coord_system,
        order=map_.order,
        epoch_time=initial_plan.epoch_time,
        epoch_state=np.asarray(initial_plan.epoch_state, dtype=np.float64).copy(),
        grid_times=ws.grid_times.copy(),
        node_states=states_pc,
        burn_indices=burn_idx,
        delta_vs=dvs,
        total_dv=total,
        meta={"stage": "scp", "iterations": len(trace), "converged": converged,
              "smax": smax_true, "map_order": map_.order,
              "cost_exponent": settings.cost_exponent,
              "stiffening_rounds": rounds},
    )
    result = ScpResult(plan, converged, len(trace), trace,
                       {"settings": settings, "final_smax": smax_true,
                        "stiffening_rounds": rounds})

    # free-burn optima can split one burn across adjacent nodes; after the
    # merge, a short fixed-time pass restores dynamical consistency of the
    # plan at the selected burn times
    if settings.burn_mode == "free" and len(burn_idx) >= 2:
        from dataclasses import replace

        polish_settings = replace(settings, burn_mode="fixed",
                                  max_iter=max(10, settings.max_iter // 3))
        polish = scp_solve(map_, orbit, plan, x_goal, polish_settings,
                           rho_min_sq_of_t=rho_min_sq_of_t, burn_tol=burn_tol)
        merged = ScpResult(
            polish.plan, converged and polish.converged,
            result.iterations + polish.iterations,
            result.trace + polish.trace,
            {**result.meta, "polish_iterations": polish.iterations,
             "final_smax": polish.meta["final_smax"]},
        )
        # burn indices of the polished plan refer to its own (burn-time) grid;
        # report them against the free grid the caller supplied
        keep = np.array([
            int(np.argmin(np.abs(ws.grid_times - t))) for t in polish.plan.burn_times
        ], dtype=np.int64)
        merged.plan.grid_times = ws.grid_times.copy()
        merged.plan.node_states = _states_on_grid(
            ws.grid_times, polish.plan, initial_plan.epoch_state)
        merged.plan.burn_indices = keep
        return merged
    return result


def _states_on_grid(grid_times, plan, epoch_state) -> np.ndarray:
    """Arc-wise node states of a plan resampled onto a denser grid."""
    states = np.empty((len(grid_times), 6))
    current = np.asarray(epoch_state, dtype=np.float64)
    pos = 0
    burn_times = plan.burn_times
    burn_states = plan.node_states[plan.burn_indices]
    for k, t in enumerate(grid_times):
        while pos < len(burn_times) and t >= burn_times[pos] - 1e-12 * max(1.0, abs(t)):
            current = burn_states[pos]
            pos += 1
        states[k] = current
    return states


def cost_report(trace) -> list[dict]:
    """Per-iteration convergence records, ready for CSV emission."""
    return [
        {
            "iter": rec.iteration,
            "J": rec.J,
            "J_dv_ms": rec.J_dv,
            "xnorm": rec.xnorm,
            "smax": rec.smax,
            "dJ_predict": rec.dJ_predict,
            "dJ_actual": rec.dJ_actual,
        }
        for rec in trace
    ]
