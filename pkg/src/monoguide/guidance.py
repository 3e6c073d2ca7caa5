"""Two-stage impulsive guidance against a fundamental-solution map.

Stage 1 solves the linearized problem over the osculating initial conditions
of every candidate burn node, which is convex as posed; the optimizer
reveals the burn times as the nodes with non-null state jumps. Stage 2 is a
Newton correction against the full-order map that keeps the burn times and
the controllable burn positions while adjusting the delta-V vectors until
the plan is consistent with the order-j dynamics representation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .conic import ConicProblem, SolverSettings, build_sum_of_norms, solve
from .dynamics import OrbitParams, cart_to_sph, nl_cartesian_rhs, nl_spherical_rhs, sph_to_cart
from .fundmap import CARTESIAN, SPHERICAL, FundSolMap, propagate_truth
from .monomials import build_basis, expand, jacobian
from .scaling import linear_scale, normalized_cost_rows, normalized_psi

__all__ = [
    "GuidancePlan",
    "OpenLoopResult",
    "stage1_linear",
    "invert_goal",
    "stage2_newton",
    "openloop_execute",
    "BURN_TOL_MS",
]

BURN_TOL_MS = 1e-5  # smallest delta-V magnitude (m/s) treated as a real burn


@dataclass
class GuidancePlan:
    """Burn schedule plus the per-node osculating states that generate it.

    Node states are linear monomial states in the map's native coordinates
    (meters for Cartesian maps, normalized spherical otherwise); delta-V
    vectors are always dimensional m/s.
    """

    coord_system: str
    order: int
    epoch_time: float
    epoch_state: np.ndarray        # native linear state at the epoch
    grid_times: np.ndarray         # candidate/burn node times (map time units)
    node_states: np.ndarray        # (M, 6) post-burn osculating states per node
    burn_indices: np.ndarray       # indices into grid_times
    delta_vs: np.ndarray           # (n_burns, 3) in m/s
    total_dv: float
    meta: dict = field(default_factory=dict)

    @property
    def burn_times(self) -> np.ndarray:
        return self.grid_times[self.burn_indices]

    @property
    def burn_delta_vs(self) -> np.ndarray:
        return self.delta_vs


def _extract_burns(dv_all: np.ndarray, burn_tol: float):
    mags = np.linalg.norm(dv_all, axis=1)
    idx = np.flatnonzero(mags > burn_tol)
    return idx, dv_all[idx], float(mags[idx].sum())


def consolidate_plan(
    map_: FundSolMap,
    orbit: OrbitParams,
    grid_times: np.ndarray,
    states: np.ndarray,
    epoch_state: np.ndarray,
    burn_tol: float,
    order: int | None = None,
    merge_adjacent: bool = True,
):
    """Crisp burn schedule from a per-node solution.

    Optimal sum-of-norm solutions can sit on a degenerate face and smear one
    physical burn over a few adjacent nodes. With ``merge_adjacent`` (dense
    grids only), runs of adjacent above-threshold jumps are merged into the
    strongest node of the run, with the merged delta-V taken across the whole
    run; node states are rebuilt piecewise-constant over the resulting coast
    arcs. ``order`` selects the model the delta-Vs are evaluated in (1 for
    linear-stage plans).
    """
    order = order or map_.order
    basis = build_basis(6, order)
    grid_idx = map_.node_indices(grid_times)

    def delta_v(i, pre, post):
        return burn_delta_v(map_, orbit, i, expand(pre, basis), expand(post, basis))

    mags = np.empty(len(grid_idx))
    prev = epoch_state
    for k, i in enumerate(grid_idx):
        mags[k] = np.linalg.norm(delta_v(i, prev, states[k]))
        prev = states[k]
    active = np.flatnonzero(mags > burn_tol)
    runs = []
    for i in active:
        if merge_adjacent and runs and i == runs[-1][-1] + 1:
            runs[-1].append(int(i))
        else:
            runs.append([int(i)])

    burn_indices, dvs = [], []
    new_states = np.empty_like(states)
    prev_state = epoch_state
    cursor = 0
    for run in runs:
        rep = run[int(np.argmax(mags[run]))]
        post = states[run[-1]]
        dvs.append(delta_v(grid_idx[rep], prev_state, post))
        burn_indices.append(rep)
        new_states[cursor:rep] = prev_state
        cursor = rep
        prev_state = post
    new_states[cursor:] = prev_state
    burn_indices = np.asarray(burn_indices, dtype=np.int64)
    dvs = np.asarray(dvs).reshape(-1, 3)
    total = float(np.linalg.norm(dvs, axis=1).sum()) if len(dvs) else 0.0
    merged = any(len(run) > 1 for run in runs)
    return burn_indices, dvs, total, new_states, merged


def burn_delta_v(map_: FundSolMap, orbit: OrbitParams, node: int,
                 cj_prev: np.ndarray, cj_cur: np.ndarray) -> np.ndarray:
    """Executable delta-V (m/s) of a monomial-state jump at a map node.

    Cartesian velocity rows give the exact velocity change directly; for
    spherical states the map predicts the pre- and post-burn states and the
    exact velocity transform provides the dimensional difference (the linear
    transform rows serve only the convex cost).
    """
    Kp = len(cj_cur)
    if map_.coord_system == SPHERICAL:
        psi = map_.psi[node][:, :Kp]
        eta_minus = psi @ cj_prev
        eta_plus = psi @ cj_cur
        rho, rhop = map_.target_states[node, 0], map_.target_states[node, 2]
        vm = np.asarray(sph_to_cart(eta_minus, rho, rhop, orbit)[3:])
        vp = np.asarray(sph_to_cart(eta_plus, rho, rhop, orbit)[3:])
        return vp - vm
    return map_.psi[node][3:, :Kp] @ (cj_cur - cj_prev)


def stage1_linear(
    map_: FundSolMap,
    orbit: OrbitParams,
    x0: np.ndarray,
    x_goal: np.ndarray,
    control_times,
    cost_exponent: int = 1,
    burn_tol: float = BURN_TOL_MS,
    solver_settings: SolverSettings | None = None,
    _resolve_merged: bool = True,
) -> GuidancePlan:
    """Linearized convex guidance over the candidate burn grid.

    Decision variables are the osculating linear states after each candidate
    burn; jumps are constrained to leave position unchanged through the
    linear map block, and the final state is pinned to the linear goal
    inverse. Burns fall out as the nodes with jumps above threshold.
    """
    basis = build_basis(6, map_.order)
    control_times = np.asarray(control_times, dtype=np.float64)
    grid_idx = map_.node_indices(control_times)
    K = len(grid_idx)
    s1 = linear_scale(map_.coord_system, orbit)
    psi_bar = normalized_psi(map_, orbit, basis)
    vbar = normalized_cost_rows(map_, orbit, basis)

    x0b = np.asarray(x0) / s1
    # goal (given at the final control time) pinned through that node's
    # linear block
    c_goal = sla.solve(psi_bar[grid_idx[-1]][:, :6], np.asarray(x_goal) / s1)

    n = 6 * K
    groups = []
    A_rows, b_rows = [], []
    for k, i in enumerate(grid_idx):
        V = vbar[i][:, :6]
        R = psi_bar[i][:3, :6]
        F = np.zeros((3, n))
        g = np.zeros(3)
        F[:, 6 * k : 6 * k + 6] = V
        Ar = np.zeros((3, n))
        Ar[:, 6 * k : 6 * k + 6] = R
        if k == 0:
            g = -V @ x0b
            br = R @ x0b
        else:
            F[:, 6 * (k - 1) : 6 * k] = -V
            Ar[:, 6 * (k - 1) : 6 * k] = -R
            br = np.zeros(3)
        groups.append((F, g))
        A_rows.append(Ar)
        b_rows.append(br)
    Af = np.zeros((6, n))
    Af[:, 6 * (K - 1) :] = np.eye(6)
    A_rows.append(Af)
    b_rows.append(c_goal)
    A = np.vstack(A_rows)
    b = np.concatenate(b_rows)

    if cost_exponent == 1:
        problem = build_sum_of_norms(groups, n, equalities=(A, b))
    elif cost_exponent == 2:
        P = np.zeros((n, n))
        for F, g in groups:
            P += F.T @ F
        q = np.zeros(n)
        for F, g in groups:
            q += 2.0 * F.T @ g
        problem = ConicProblem(n_vars=n, P=P, q=q, A=A, b=b)
    else:
        raise ValueError(f"cost exponent must be 1 or 2, got {cost_exponent}")

    report = solve(problem, solver_settings)
    if report.status != "optimal":
        raise RuntimeError(f"stage-1 solve failed: {report.status}")
    cbar = report.x[:n].reshape(K, 6)
    states = cbar * s1[np.newaxis, :]

    # kernel defect of the raw optimum (before burn consolidation)
    kernel_defect = 0.0
    prev = x0b
    for k, i in enumerate(grid_idx):
        defect = np.linalg.norm(psi_bar[i][:3, :6] @ (cbar[k] - prev))
        kernel_defect = max(kernel_defect, float(defect))
        prev = cbar[k]

    x0_native = np.asarray(x0, dtype=np.float64).copy()
    burn_idx, dvs, total, states_pc, merged = consolidate_plan(
        map_, orbit, control_times, states, x0_native, burn_tol, order=1,
        merge_adjacent=_resolve_merged,
    )

    if merged and _resolve_merged:
        # a burn was smeared over adjacent nodes: re-optimize the magnitudes
        # with the schedule restricted to the merged times (plus the goal node)
        keep = sorted(set(burn_idx.tolist()) | {len(control_times) - 1})
        sub = stage1_linear(
            map_, orbit, x0, x_goal, control_times[keep], cost_exponent,
            burn_tol, solver_settings, _resolve_merged=False,
        )
        burn_idx = np.asarray([keep[b] for b in sub.burn_indices], dtype=np.int64)
        dvs = sub.delta_vs
        total = sub.total_dv
        kernel_defect = max(kernel_defect, sub.meta["kernel_defect"])
        states_pc = np.empty((len(control_times), 6))
        prev = x0_native
        pos = 0
        for k in range(len(control_times)):
            if pos < len(burn_idx) and k == burn_idx[pos]:
                prev = sub.node_states[sub.burn_indices[pos]]
                pos += 1
            states_pc[k] = prev

    return GuidancePlan(
        coord_system=map_.coord_system,
        order=1,
        epoch_time=float(map_.times[0]),
        epoch_state=x0_native,
        grid_times=control_times,
        node_states=states_pc,
        burn_indices=burn_idx,
        delta_vs=dvs,
        total_dv=total,
        meta={"solver": report.status, "iterations": report.iterations,
              "cost_exponent": cost_exponent, "map_order": map_.order,
              "kernel_defect": kernel_defect},
    )


def invert_goal(
    x_goal: np.ndarray,
    map_: FundSolMap,
    order: int | None = None,
    node: int | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    alpha: float = 1.0,
):
    """Osculating initial condition whose order-j image is the goal state.

    Starts from the inverse of the linear block and applies Newton steps
    through the map-Jacobian product until the forward image reproduces the
    goal. Returns the linear state and its expansion.
    """
    order = order or map_.order
    basis = build_basis(6, order)
    Kp = basis.size
    i = map_.n_nodes - 1 if node is None else node
    psi = map_.psi[i][:, :Kp]
    x_goal = np.asarray(x_goal, dtype=np.float64)
    scale = max(1.0, float(np.linalg.norm(x_goal)))

    c1 = sla.solve(psi[:, :6], x_goal)
    prev_norm = np.inf
    growth = 0
    for _ in range(max_iter):
        residual = x_goal - psi @ expand(c1, basis)
        rnorm = float(np.linalg.norm(residual))
        if rnorm < tol * scale:
            return c1, expand(c1, basis)
        if rnorm > prev_norm:
            growth += 1
            if growth >= 3:
                raise RuntimeError(f"goal inversion diverging (residual {rnorm:.3e})")
        else:
            growth = 0
        prev_norm = rnorm
        M = psi @ jacobian(c1, basis)
        c1 = c1 + alpha * sla.solve(M, residual)
    raise RuntimeError(f"goal inversion did not converge (residual {prev_norm:.3e})")


def _back_propagate(coord_system, orbit, state, t_from, t_to, target=None):
    """Natural-dynamics inverse flow: state at t_from mapped back to t_to."""
    if coord_system == SPHERICAL:
        y0 = np.concatenate([state, target])

        def rhs(t, y):
            drel, dtgt = nl_spherical_rhs(y[:6], y[6:])
            return np.concatenate([np.asarray(drel), np.asarray(dtgt)])
    else:
        y0 = np.asarray(state, dtype=np.float64)

        def rhs(t, y):
            return np.asarray(nl_cartesian_rhs(y, orbit))

    sol = solve_ivp(rhs, (t_from, t_to), y0, method="RK45", rtol=1e-12, atol=1e-12)
    if not sol.success:
        raise RuntimeError(f"back propagation failed: {sol.message}")
    out = sol.y[:, -1]
    return (out[:6], out[6:]) if coord_system == SPHERICAL else out


def stage2_newton(
    plan: GuidancePlan,
    map_: FundSolMap,
    orbit: OrbitParams,
    x_goal: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 25,
    burn_tol: float = BURN_TOL_MS,
) -> GuidancePlan:
    """Newton correction of a linear plan against the order-j map.

    Keeps burn times and the controllable burn positions from the incoming
    plan, driving to zero the position-continuity defects, the position
    match at every burn after the first, and the final velocity condition.
    """
    if len(plan.burn_indices) < 2:
        raise ValueError("stage 2 requires a plan with at least two burns")
    basis = build_basis(6, map_.order)
    burn_times = plan.burn_times
    k = len(burn_times)
    node_idx = map_.node_indices(burn_times)
    psi_r = [map_.psi[i][:3, :] for i in node_idx]
    psi_v = [map_.psi[i][3:, :] for i in node_idx]
    cj0 = expand(plan.epoch_state, basis)

    # stage-1 burn positions through the linear map block (the first burn
    # position is uncontrollable and has no match row)
    s1_states = plan.node_states[plan.burn_indices]
    r_goal = [map_.psi[i][:3, :6] @ s1_states[m] for m, i in enumerate(node_idx)]
    t_f = map_.times[-1]
    if abs(burn_times[-1] - t_f) <= 1e-9 * max(1.0, abs(t_f)):
        x_end = np.asarray(x_goal, dtype=np.float64)
    else:
        if map_.coord_system == SPHERICAL:
            x_end, _ = _back_propagate(SPHERICAL, orbit, x_goal, t_f, burn_times[-1],
                                       target=map_.target_states[-1])
        else:
            x_end = _back_propagate(CARTESIAN, orbit, x_goal, t_f, burn_times[-1])
    r_goal[-1] = x_end[:3]
    v_goal = x_end[3:]

    X = s1_states.reshape(-1).copy()

    def residual_and_states(X):
        c1s = X.reshape(k, 6)
        cjs = [expand(c, basis) for c in c1s]
        F = np.empty(6 * k)
        row = 0
        for m in range(1, k):
            F[row : row + 3] = psi_r[m] @ cjs[m] - r_goal[m]
            row += 3
        F[row : row + 3] = psi_r[0] @ (cjs[0] - cj0)
        row += 3
        for m in range(1, k):
            F[row : row + 3] = psi_r[m] @ (cjs[m] - cjs[m - 1])
            row += 3
        F[row : row + 3] = psi_v[-1] @ cjs[-1] - v_goal
        return F, c1s, cjs

    def jacobian_matrix(c1s):
        G = np.zeros((6 * k, 6 * k))
        J = [jacobian(c1s[m], basis) for m in range(k)]
        row = 0
        for m in range(1, k):
            G[row : row + 3, 6 * m : 6 * m + 6] = psi_r[m] @ J[m]
            row += 3
        G[row : row + 3, 0:6] = psi_r[0] @ J[0]
        row += 3
        for m in range(1, k):
            G[row : row + 3, 6 * m : 6 * m + 6] = psi_r[m] @ J[m]
            G[row : row + 3, 6 * (m - 1) : 6 * m] = -(psi_r[m] @ J[m - 1])
            row += 3
        G[row : row + 3, 6 * (k - 1) :] = psi_v[-1] @ J[-1]
        return G

    F, c1s, cjs = residual_and_states(X)
    scale = max(1.0, float(np.linalg.norm(F)))
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if np.linalg.norm(F) < tol * scale:
            iterations -= 1
            break
        G = jacobian_matrix(c1s)
        try:
            step = sla.solve(G, -F)
        except sla.LinAlgError as exc:
            raise RuntimeError("singular correction Jacobian") from exc
        for gamma in (1.0, 0.5, 0.25, 0.125):
            Xn = X + gamma * step
            Fn, c1sn, cjsn = residual_and_states(Xn)
            if np.linalg.norm(Fn) < np.linalg.norm(F):
                break
        else:
            raise RuntimeError("stage-2 line search exhausted")
        X, F, c1s, cjs = Xn, Fn, c1sn, cjsn
    else:
        raise RuntimeError(f"stage 2 did not converge: |F| = {np.linalg.norm(F):.3e}")

    # delta-Vs from the corrected monomial jumps
    dv_all = np.empty((k, 3))
    prev = cj0
    for m, i in enumerate(node_idx):
        dv_all[m] = burn_delta_v(map_, orbit, i, prev, cjs[m])
        prev = cjs[m]
    burn_local, dvs, total = _extract_burns(dv_all, burn_tol)

    return GuidancePlan(
        coord_system=map_.coord_system,
        order=map_.order,
        epoch_time=plan.epoch_time,
        epoch_state=plan.epoch_state.copy(),
        grid_times=plan.grid_times,
        node_states=_scatter_states(plan, c1s),
        burn_indices=plan.burn_indices[burn_local],
        delta_vs=dvs,
        total_dv=total,
        meta={"iterations": iterations, "residual": float(np.linalg.norm(F)),
              "map_order": map_.order, "stage": "two-stage"},
    )


def _scatter_states(plan: GuidancePlan, burn_states) -> np.ndarray:
    """Hold the corrected states constant along each coast arc of the grid."""
    states = np.empty_like(plan.node_states)
    current = plan.epoch_state
    pos = 0
    for kk in range(len(plan.grid_times)):
        if pos < len(plan.burn_indices) and kk == plan.burn_indices[pos]:
            current = burn_states[pos]
            pos += 1
        states[kk] = current
    return states


@dataclass
class OpenLoopResult:
    times: np.ndarray
    cart_states: np.ndarray     # (M, 6) LVLH meters and m/s
    final_state: np.ndarray
    goal: np.ndarray
    err_pos: float              # meters
    err_vel: float              # m/s
    err_components: np.ndarray  # (6,) absolute errors, native Cartesian units


def openloop_execute(
    plan: GuidancePlan,
    orbit: OrbitParams,
    x0_cart: np.ndarray,
    x_goal_cart: np.ndarray,
    t_f: float,
    samples_per_segment: int = 12,
) -> OpenLoopResult:
    """Fly the plan open-loop through the nonlinear truth dynamics.

    Integrates segment by segment, adding each impulse at its burn time, and
    reports the terminal miss against the goal in LVLH meters. Times here are
    seconds for Cartesian plans and normalized time for spherical plans; the
    initial/goal states are always Cartesian SI.
    """
    spherical = plan.coord_system == SPHERICAL
    burn_times = plan.burn_times
    dvs = plan.delta_vs
    t0 = plan.epoch_time

    knots = [t0]
    for t in burn_times:
        if t > knots[-1]:
            knots.append(float(t))
    if t_f > knots[-1]:
        knots.append(float(t_f))

    if spherical:
        state = np.array(cart_to_sph(np.asarray(x0_cart, dtype=np.float64), 1.0 - orbit.e, 0.0, orbit))
        target = np.array([1.0 - orbit.e, 0.0, 0.0,
                           np.sqrt(1 - orbit.e**2) / (1 - orbit.e) ** 2])
    else:
        state = np.asarray(x0_cart, dtype=np.float64).copy()

    times_out, cart_out = [], []

    def record(ts, ys, tgt=None):
        for col in range(ys.shape[1]):
            times_out.append(ts[col])
            if spherical:
                cart_out.append(sph_to_cart(ys[:6, col], ys[6, col], ys[8, col], orbit))
            else:
                cart_out.append(ys[:, col])

    burn_lookup = {float(t): dvs[i] for i, t in enumerate(burn_times)}

    for seg in range(len(knots) - 1):
        a, bnd = knots[seg], knots[seg + 1]
        if float(a) in burn_lookup:
            dv = burn_lookup[float(a)]
            if spherical:
                cart = np.asarray(sph_to_cart(state, target[0], target[2], orbit))
                cart[3:] += dv
                state = np.array(cart_to_sph(cart, target[0], target[2], orbit))
            else:
                state = state.copy()
                state[3:] += dv
        t_eval = np.linspace(a, bnd, samples_per_segment)
        if spherical:
            y0 = np.concatenate([state, target])

            def rhs(t, y):
                drel, dtgt = nl_spherical_rhs(y[:6], y[6:])
                return np.concatenate([np.asarray(drel), np.asarray(dtgt)])
        else:
            y0 = state

            def rhs(t, y):
                return np.asarray(nl_cartesian_rhs(y, orbit))

        sol = solve_ivp(rhs, (a, bnd), y0, method="RK45", rtol=1e-12, atol=1e-12, t_eval=t_eval)
        if not sol.success:
            raise RuntimeError(f"open-loop integration failed: {sol.message}")
        record(sol.t, sol.y)
        if spherical:
            state, target = sol.y[:6, -1], sol.y[6:, -1]
        else:
            state = sol.y[:, -1]

    # final burn exactly at t_f, if any
    if float(knots[-1]) in burn_lookup:
        dv = burn_lookup[float(knots[-1])]
        if spherical:
            cart = np.asarray(sph_to_cart(state, target[0], target[2], orbit))
            cart[3:] += dv
            state = np.array(cart_to_sph(cart, target[0], target[2], orbit))
        else:
            state = state.copy()
            state[3:] += dv
        if spherical:
            cart_out[-1] = sph_to_cart(state, target[0], target[2], orbit)
        else:
            cart_out[-1] = state

    cart_states = np.asarray(cart_out)
    final = cart_states[-1]
    goal = np.asarray(x_goal_cart, dtype=np.float64)
    err = final - goal
    return OpenLoopResult(
        times=np.asarray(times_out),
        cart_states=cart_states,
        final_state=final,
        goal=goal,
        err_pos=float(np.linalg.norm(err[:3])),
        err_vel=float(np.linalg.norm(err[3:])),
        err_components=np.abs(err),
    )
