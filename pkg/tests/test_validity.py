import numpy as np
import pytest

from monoguide.dynamics import OrbitParams
from monoguide.fundmap import CARTESIAN, build_map
from monoguide.guidance import GuidancePlan
from monoguide.validity import (
    certify_plan,
    estimate_r_crit,
    load_certificate,
    save_certificate,
    truncation_error,
)

ORBIT = OrbitParams()


@pytest.fixture(scope="module")
def cart_map_j2():
    times = np.linspace(0.0, 0.8 * ORBIT.T, 25)
    return build_map(CARTESIAN, ORBIT, times, 2)


def test_zero_state_has_zero_error_by_definition(cart_map_j2):
    assert truncation_error(np.zeros(6), cart_map_j2.times[-1], cart_map_j2, ORBIT) == 0.0


def test_error_vanishes_at_epoch(cart_map_j2):
    c1 = np.array([2000.0, -5000.0, 1000.0, 0.5, -1.0, 0.2])
    assert truncation_error(c1, cart_map_j2.times[0], cart_map_j2, ORBIT) < 1e-9


def test_error_decreases_with_map_order():
    times = np.linspace(0.0, 0.5 * ORBIT.T, 9)
    c1 = np.array([1500.0, -6000.0, 800.0, 0.3, 1.2, -0.4])
    errs = []
    for order in (1, 2, 3):
        m = build_map(CARTESIAN, ORBIT, times, order)
        errs.append(truncation_error(c1, times[-1], m, ORBIT))
    assert errs[0] > errs[1] > errs[2]


def test_r_crit_monotone_in_epsilon(cart_map_j2):
    c1 = estimate_r_crit(50.0, cart_map_j2, ORBIT, sample_count=100, seed=5)
    c2 = estimate_r_crit(200.0, cart_map_j2, ORBIT, sample_count=100, seed=5)
    assert c2.r_crit >= c1.r_crit
    for cert in (c1, c2):
        # the sampled max error is non-decreasing along increasing radii
        trace = sorted(cert.trace)
        errs = [e for _, e in trace]
        assert all(errs[i] <= errs[i + 1] + 1e-12 for i in range(len(errs) - 1))


def test_r_crit_reproducible(cart_map_j2):
    a = estimate_r_crit(100.0, cart_map_j2, ORBIT, sample_count=100, seed=9)
    b = estimate_r_crit(100.0, cart_map_j2, ORBIT, sample_count=100, seed=9)
    assert a.r_crit == b.r_crit
    assert a.trace == b.trace


def test_linear_synthetic_system_hits_bracket_cap():
    # an order-1 map of the linear model has no truncation error, so the
    # doubling search must exhaust its bracket
    times = np.linspace(0.0, 0.3 * ORBIT.T, 5)
    m1 = build_map(CARTESIAN, ORBIT, times, 1)
    with pytest.raises(RuntimeError, match="unreachable"):
        estimate_r_crit(1e30, m1, ORBIT, sample_count=100, seed=1, max_doublings=8)


def test_sample_count_floor(cart_map_j2):
    with pytest.raises(ValueError, match="100"):
        estimate_r_crit(100.0, cart_map_j2, ORBIT, sample_count=50)


def _plan_with_states(states, coord="cartesian"):
    n = len(states)
    return GuidancePlan(
        coord_system=coord, order=2, epoch_time=0.0,
        epoch_state=states[0], grid_times=np.arange(n, dtype=float),
        node_states=np.asarray(states), burn_indices=np.array([0]),
        delta_vs=np.zeros((1, 3)), total_dv=0.0,
    )


def test_certify_plan_margins(cart_map_j2):
    cert = estimate_r_crit(100.0, cart_map_j2, ORBIT, sample_count=100, seed=7)
    zeros = _plan_with_states(np.zeros((3, 6)))
    res = certify_plan(zeros, cert, ORBIT)
    assert res.passed and res.worst_margin == pytest.approx(cert.r_crit)

    bad_states = np.zeros((3, 6))
    bad_states[1, 0] = 2.0 * cert.r_crit
    res = certify_plan(_plan_with_states(bad_states), cert, ORBIT)
    assert not res.passed
    assert res.worst_node == 1
    assert res.worst_margin == pytest.approx(-cert.r_crit)


def test_certify_rejects_coordinate_mismatch(cart_map_j2):
    cert = estimate_r_crit(100.0, cart_map_j2, ORBIT, sample_count=100, seed=7)
    plan = _plan_with_states(np.zeros((2, 6)), coord="spherical_normalized")
    with pytest.raises(ValueError, match="coordinates"):
        certify_plan(plan, cert, ORBIT)


def test_certificate_json_round_trip(tmp_path, cart_map_j2):
    cert = estimate_r_crit(100.0, cart_map_j2, ORBIT, sample_count=100, seed=11)
    path = tmp_path / "cert.json"
    save_certificate(cert, path)
    loaded = load_certificate(path)
    assert loaded.r_crit == cert.r_crit
    assert loaded.epsilon == cert.epsilon
    assert loaded.seed == cert.seed
    assert loaded.trace == [tuple(map(float, p)) for p in cert.trace]
