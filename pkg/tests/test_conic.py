import numpy as np
import pytest

from monoguide.conic import (
    ConicProblem,
    SocConstraint,
    SolverSettings,
    build_sum_of_norms,
    dump_problem,
    solve,
)


def stm(t):
    return np.array([[1.0, t], [0.0, 1.0]])


def double_integrator_problem(x0, xg, tb):
    """Fuel-optimal 3-impulse transfer as a sum-of-norms cone program."""
    n = 2 * len(tb)
    groups, A_rows, b_rows = [], [], []
    for i, t in enumerate(tb):
        Phi = stm(t)
        F = np.zeros((1, n))
        g = np.zeros(1)
        F[0, 2 * i : 2 * i + 2] = Phi[1]
        if i == 0:
            g[0] = -Phi[1] @ x0
        else:
            F[0, 2 * (i - 1) : 2 * (i - 1) + 2] = -Phi[1]
        groups.append((F, g))
        row = np.zeros(n)
        row[2 * i : 2 * i + 2] = Phi[0]
        if i == 0:
            A_rows.append(row)
            b_rows.append(Phi[0] @ x0)
        else:
            row[2 * (i - 1) : 2 * (i - 1) + 2] = -Phi[0]
            A_rows.append(row)
            b_rows.append(0.0)
    cg = np.linalg.solve(stm(tb[-1]), xg)
    for k in range(2):
        row = np.zeros(n)
        row[n - 2 + k] = 1.0
        A_rows.append(row)
        b_rows.append(cg[k])
    return build_sum_of_norms(groups, n, equalities=(np.array(A_rows), np.array(b_rows)))


def double_integrator_brute(x0, xg, tb, n_grid=10000):
    """Grid search over the one-parameter family of 3-impulse transfers."""
    base = stm(tb[-1]) @ x0
    cols = np.column_stack([stm(tb[-1] - t) @ np.array([0.0, 1.0]) for t in tb])
    rhs = xg - base
    M = cols[:, 1:]

    def cost(dv1):
        tail = np.linalg.solve(M, rhs - cols[:, 0] * dv1)
        return abs(dv1) + np.abs(tail).sum()

    lin = np.linalg.lstsq(cols, rhs, rcond=None)[0]
    C = 5 * np.abs(lin).sum() + 1.0
    grid = np.linspace(-C, C, n_grid)
    costs = np.array([cost(v) for v in grid])
    k = int(np.argmin(costs))
    fine = np.linspace(grid[max(0, k - 2)], grid[min(n_grid - 1, k + 2)], n_grid)
    return min(cost(v) for v in fine)


def test_symmetric_qp_corner():
    rep = solve(ConicProblem(n_vars=4, P=np.eye(4), A=np.ones((1, 4)), b=np.array([1.0])))
    assert rep.status == "optimal"
    np.testing.assert_allclose(rep.x, 0.25 * np.ones(4), atol=1e-9)
    assert rep.objective == pytest.approx(0.25, abs=1e-9)


def test_min_epigraph_norm():
    prob = ConicProblem(
        n_vars=1, q=np.array([1.0]),
        socs=[SocConstraint(F=np.zeros((2, 1)), g=np.array([3.0, 4.0]), h=np.array([1.0]))],
    )
    rep = solve(prob)
    assert rep.status == "optimal"
    assert rep.x[0] == pytest.approx(5.0, abs=1e-8)


def test_random_equality_qps_match_kkt_oracle():
    rng = np.random.default_rng(42)
    for _ in range(40):
        n = int(rng.integers(2, 51))
        p = int(rng.integers(1, max(2, n // 2)))
        M = rng.normal(size=(n, n))
        P = M @ M.T + (0.1 + rng.random()) * np.eye(n)
        q = rng.normal(size=n) * 10 ** rng.uniform(-2, 2)
        A = rng.normal(size=(p, n))
        b = rng.normal(size=p)
        rep = solve(ConicProblem(n_vars=n, P=P, q=q, A=A, b=b))
        K = np.block([[2 * P, A.T], [A, np.zeros((p, p))]])
        xref = np.linalg.solve(K, np.concatenate([-q, b]))[:n]
        assert rep.status == "optimal"
        assert np.abs(rep.x - xref).max() / max(1.0, np.abs(xref).max()) < 1e-7


def test_double_integrator_toys_match_grid_search():
    rng = np.random.default_rng(7)
    for _ in range(10):
        x0 = rng.normal(size=2)
        xg = rng.normal(size=2)
        tb = np.sort(rng.uniform(0.3, 5.0, size=3))
        prob = double_integrator_problem(x0, xg, tb)
        rep = solve(prob)
        assert rep.status == "optimal"
        Jref = double_integrator_brute(x0, xg, tb)
        assert abs(rep.objective - Jref) / max(1.0, Jref) < 1e-4


def test_kkt_residuals_reported_below_tolerance():
    rng = np.random.default_rng(3)
    n = 12
    M = rng.normal(size=(n, n))
    P = M @ M.T + np.eye(n)
    q = rng.normal(size=n)
    A = rng.normal(size=(2, n))
    b = rng.normal(size=2)
    prob = ConicProblem(
        n_vars=n, P=P, q=q, A=A, b=b,
        socs=[SocConstraint(F=np.eye(n), g=np.zeros(n), h=np.zeros(n), k=5.0)],
    )
    rep = solve(prob)
    assert rep.status == "optimal"
    for key, val in rep.kkt.items():
        assert val < 1e-7, (key, val)


def test_objective_scaling_leaves_argmin():
    rng = np.random.default_rng(11)
    n = 10
    M = rng.normal(size=(n, n))
    P = M @ M.T + np.eye(n)
    q = rng.normal(size=n)
    A = rng.normal(size=(3, n))
    b = rng.normal(size=3)
    socs = [SocConstraint(F=np.eye(n), g=np.zeros(n), h=np.zeros(n), k=2.0)]
    r1 = solve(ConicProblem(n_vars=n, P=P, q=q, A=A, b=b, socs=socs))
    r2 = solve(ConicProblem(n_vars=n, P=250.0 * P, q=250.0 * q, A=A, b=b, socs=socs))
    assert r1.status == r2.status == "optimal"
    assert np.abs(r1.x - r2.x).max() < 1e-8 * max(1.0, np.abs(r1.x).max())


def test_infeasible_ball_detected():
    rng = np.random.default_rng(0)
    n = 8
    M = rng.normal(size=(n, n))
    P = M @ M.T + np.eye(n)
    A = rng.normal(size=(3, n))
    b = rng.normal(size=3)
    # the minimum-norm feasible point has norm ~0.61 > 0.3
    prob = ConicProblem(
        n_vars=n, P=P, q=rng.normal(size=n), A=A, b=b,
        socs=[SocConstraint(F=np.eye(n), g=np.zeros(n), h=np.zeros(n), k=0.3)],
    )
    rep = solve(prob)
    assert rep.status in ("infeasible-detected", "max_iter")
    assert rep.status == "infeasible-detected"


def test_redundant_equalities_dropped_with_warning():
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    b = np.array([1.0, 2.0])
    with pytest.warns(RuntimeWarning, match="dependent"):
        rep = solve(ConicProblem(n_vars=2, P=np.eye(2), A=A, b=b))
    assert rep.status == "optimal"
    np.testing.assert_allclose(rep.x, [0.5, 0.5], atol=1e-9)


def test_validation_rejects_bad_problems():
    with pytest.raises(ValueError, match="symmetric"):
        ConicProblem(n_vars=2, P=np.array([[1.0, 2.0], [0.0, 1.0]])).validate()
    with pytest.raises(ValueError, match="semidefinite"):
        ConicProblem(n_vars=2, P=np.array([[1.0, 0.0], [0.0, -1.0]])).validate()
    with pytest.raises(ValueError, match="column"):
        ConicProblem(n_vars=2, A=np.ones((1, 3)), b=np.ones(1)).validate()


def test_box_trust_region():
    groups = [(np.eye(2), np.array([1.0, -2.0]))]
    prob = build_sum_of_norms(groups, 2, trust_indices=[0, 1], trust_radius=0.5, trust_norm="inf")
    rep = solve(prob)
    assert rep.status == "optimal"
    np.testing.assert_allclose(rep.x[:2], [-0.5, 0.5], atol=1e-8)


def test_soc_trust_region_binds():
    groups = [(np.eye(2), np.array([3.0, 4.0]))]
    prob = build_sum_of_norms(groups, 2, trust_indices=[0, 1], trust_radius=1.0, trust_norm="2")
    rep = solve(prob)
    assert rep.status == "optimal"
    assert np.linalg.norm(rep.x[:2]) == pytest.approx(1.0, abs=1e-7)
    np.testing.assert_allclose(rep.x[:2], [-0.6, -0.8], atol=1e-6)


def test_single_group_reduces_to_min_norm():
    F = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    g = np.array([1.0, -1.0, 0.5])
    prob = build_sum_of_norms([(F, g)], 2)
    rep = solve(prob)
    xref = np.linalg.lstsq(F, -g, rcond=None)[0]
    assert rep.status == "optimal"
    np.testing.assert_allclose(rep.x[:2], xref, atol=1e-6)


def test_quadratic_objective_passthrough_matches_direct_qp():
    # the P=2 path uses P, q directly with no epigraph variables
    rng = np.random.default_rng(9)
    n = 6
    M = rng.normal(size=(n, n))
    P = M @ M.T + np.eye(n)
    q = rng.normal(size=n)
    A = rng.normal(size=(2, n))
    b = rng.normal(size=2)
    rep = solve(ConicProblem(n_vars=n, P=P, q=q, A=A, b=b))
    K = np.block([[2 * P, A.T], [A, np.zeros((2, 2))]])
    xref = np.linalg.solve(K, np.concatenate([-q, b]))[:n]
    np.testing.assert_allclose(rep.x, xref, atol=1e-8 * max(1.0, np.abs(xref).max()))


def test_dump_problem(tmp_path):
    prob = double_integrator_problem(np.array([1.0, 0.0]), np.array([0.0, 0.0]), [1.0, 2.0, 3.0])
    path = tmp_path / "problem.txt"
    dump_problem(prob, path)
    text = path.read_text()
    assert "[q]" in text and "[soc 0]" in text and "[A]" in text


def test_iteration_cap_reports_max_iter():
    prob = ConicProblem(
        n_vars=1, q=np.array([1.0]),
        socs=[SocConstraint(F=np.zeros((2, 1)), g=np.array([3.0, 4.0]), h=np.array([1.0]))],
    )
    rep = solve(prob, SolverSettings(max_iter=2))
    assert rep.status == "max_iter"
    assert rep.iterations == 2
