import numpy as np
import pytest

from monoguide.jets import (
    Jet,
    constant_jet,
    cos,
    evaluate,
    extract_linear_map,
    mul,
    powi,
    recip,
    seed_variable,
    sin,
    sqrt,
    tan,
)
from monoguide.monomials import build_basis


@pytest.fixture(scope="module")
def basis32():
    return build_basis(3, 2)


@pytest.fixture(scope="module")
def basis34():
    return build_basis(3, 4)


def random_jet(basis, rng, const_range=(0.5, 2.0)):
    jet = constant_jet(basis, rng.uniform(*const_range))
    jet.coeffs[:] = rng.normal(size=basis.size)
    return jet


def test_seed_variable(basis32):
    jet = seed_variable(basis32, 0, 5.0)
    assert jet.const == 5.0
    expected = np.zeros(basis32.size)
    expected[0] = 1.0
    np.testing.assert_array_equal(jet.coeffs, expected)
    assert evaluate(jet, np.array([0.1, 0.0, 0.0])) == pytest.approx(5.1)


def test_seed_variable_out_of_range(basis32):
    with pytest.raises(IndexError):
        seed_variable(basis32, 3)


def test_seeding_all_variables_shifts_center(basis32):
    delta = np.array([0.2, -0.4, 0.1])
    for k in range(3):
        jet = seed_variable(basis32, k, 1.5)
        assert evaluate(jet, delta) == pytest.approx(1.5 + delta[k])


def test_product_difference_of_squares(basis32):
    x1 = seed_variable(basis32, 0)
    prod = (1.0 + x1) * (1.0 - x1)
    assert prod.const == 1.0
    expected = np.zeros(basis32.size)
    expected[basis32.index_of[(2, 0, 0)]] = -1.0
    np.testing.assert_array_equal(prod.coeffs, expected)


def test_product_of_two_variables(basis32):
    x1 = seed_variable(basis32, 0)
    x2 = seed_variable(basis32, 1)
    prod = mul(x1, x2)
    assert prod.const == 0.0
    expected = np.zeros(basis32.size)
    expected[basis32.index_of[(1, 1, 0)]] = 1.0
    np.testing.assert_array_equal(prod.coeffs, expected)


def test_mul_rejects_basis_mismatch(basis32, basis34):
    with pytest.raises(ValueError):
        mul(seed_variable(basis32, 0), seed_variable(basis34, 0))


def test_product_against_pointwise_evaluation(basis34):
    rng = np.random.default_rng(21)
    order = basis34.order
    for _ in range(10):
        a = random_jet(basis34, rng)
        b = random_jet(basis34, rng)
        delta = 1e-2 * rng.normal(size=3)
        delta *= 1e-2 / np.linalg.norm(delta)
        lhs = evaluate(mul(a, b), delta)
        rhs = evaluate(a, delta) * evaluate(b, delta)
        scale = max(abs(rhs), 1.0)
        assert abs(lhs - rhs) < 10 * np.linalg.norm(delta) ** (order + 1) * scale


def test_product_commutative_associative_distributive(basis32):
    rng = np.random.default_rng(5)
    for _ in range(10):
        a, b, c = (random_jet(basis32, rng) for _ in range(3))
        ab = mul(a, b)
        np.testing.assert_allclose(ab.coeffs, mul(b, a).coeffs, rtol=0, atol=0)
        lhs = mul(ab, c)
        rhs = mul(a, mul(b, c))
        np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, atol=1e-12)
        assert lhs.const == pytest.approx(rhs.const, rel=1e-14)
        dist = mul(a, b + c)
        np.testing.assert_allclose(dist.coeffs, (mul(a, b) + mul(a, c)).coeffs, atol=1e-12)


def test_recip_geometric_series(basis32):
    x1 = seed_variable(basis32, 0)
    inv = recip(1.0 + x1)
    expected = np.zeros(basis32.size)
    expected[0] = -1.0
    expected[basis32.index_of[(2, 0, 0)]] = 1.0
    assert inv.const == 1.0
    np.testing.assert_allclose(inv.coeffs, expected, atol=1e-15)


def test_sqrt_binomial_series(basis32):
    x1 = seed_variable(basis32, 0)
    root = sqrt(1.0 + x1)
    assert root.const == 1.0
    assert root.coeffs[0] == pytest.approx(0.5)
    assert root.coeffs[basis32.index_of[(2, 0, 0)]] == pytest.approx(-0.125)


def test_sin_cubic():
    basis = build_basis(1, 3)
    x = seed_variable(basis, 0)
    s = sin(x)
    np.testing.assert_allclose(s.coeffs, [1.0, 0.0, -1 / 6], atol=1e-15)
    assert s.const == 0.0


def test_singularities(basis32):
    x1 = seed_variable(basis32, 0)
    with pytest.raises(ZeroDivisionError):
        recip(x1)
    with pytest.raises(ValueError):
        sqrt(x1 - 1.0)
    with pytest.raises(ValueError):
        tan(x1 + np.pi / 2)


def test_recip_times_self_is_one(basis34):
    rng = np.random.default_rng(9)
    for _ in range(5):
        a = random_jet(basis34, rng)
        prod = mul(a, recip(a))
        scale = max(np.abs(a.coeffs).max(), 1.0)
        assert prod.const == pytest.approx(1.0, rel=1e-13)
        assert np.abs(prod.coeffs).max() < 1e-12 * scale


def test_sin_cos_identity(basis34):
    rng = np.random.default_rng(13)
    for _ in range(5):
        a = random_jet(basis34, rng, const_range=(-1.2, 1.2))
        ident = mul(sin(a), sin(a)) + mul(cos(a), cos(a))
        assert ident.const == pytest.approx(1.0, rel=1e-14)
        assert np.abs(ident.coeffs).max() < 1e-13 * max(1.0, np.abs(a.coeffs).max() ** 2)


def test_tan_equals_sin_over_cos(basis34):
    rng = np.random.default_rng(17)
    a = random_jet(basis34, rng, const_range=(-0.8, 0.8))
    t = tan(a)
    ref = sin(a) * recip(cos(a))
    np.testing.assert_allclose(t.coeffs, ref.coeffs, atol=1e-13)


def test_powi(basis32):
    x1 = seed_variable(basis32, 0)
    cubed = powi(1.0 + x1, 3)
    assert cubed.const == 1.0
    assert cubed.coeffs[0] == pytest.approx(3.0)
    assert cubed.coeffs[basis32.index_of[(2, 0, 0)]] == pytest.approx(3.0)
    inv2 = powi(2.0 + x1, -2)
    ref = recip(mul(2.0 + x1, 2.0 + x1))
    np.testing.assert_allclose(inv2.coeffs, ref.coeffs, atol=1e-15)
    assert powi(x1, 0).const == 1.0


def test_scalar_dispatch():
    assert recip(4.0) == 0.25
    assert sqrt(9.0) == 3.0
    assert sin(0.0) == 0.0
    assert cos(0.0) == 1.0
    assert tan(0.0) == 0.0
    assert powi(2.0, 3) == 8.0
    np.testing.assert_allclose(sqrt(np.array([1.0, 4.0])), [1.0, 2.0])


def test_evaluate_at_zero_returns_const(basis32):
    rng = np.random.default_rng(1)
    jet = random_jet(basis32, rng)
    assert evaluate(jet, np.zeros(3)) == jet.const


def test_evaluate_indicator_rows(basis32):
    delta = np.array([0.3, -0.2, 0.5])
    for k in range(basis32.size):
        jet = constant_jet(basis32, 0.0)
        jet.coeffs[k] = 1.0
        beta = basis32.exponents[k].astype(int)
        assert evaluate(jet, delta) == pytest.approx(np.prod(delta**beta))


def test_gradient_matches_directional_finite_differences(basis34):
    rng = np.random.default_rng(19)
    jet = random_jet(basis34, rng)
    for _ in range(5):
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        eps = 1e-6
        fd = (evaluate(jet, eps * u) - evaluate(jet, -eps * u)) / (2 * eps)
        grad = jet.coeffs[:3] @ u
        assert abs(fd - grad) / max(1.0, abs(grad)) < 1e-7


def test_extract_linear_map_identity_seeding(basis32):
    jets = [seed_variable(basis32, k) for k in range(3)]
    matrix, consts = extract_linear_map(jets)
    np.testing.assert_array_equal(matrix[:, :3], np.eye(3))
    np.testing.assert_array_equal(matrix[:, 3:], np.zeros((3, basis32.size - 3)))
    np.testing.assert_array_equal(consts, np.zeros(3))


def test_extract_linear_map_after_linear_composition(basis32):
    rng = np.random.default_rng(23)
    L = rng.normal(size=(3, 3))
    seeds = [seed_variable(basis32, k) for k in range(3)]
    composed = [L[i, 0] * seeds[0] + L[i, 1] * seeds[1] + L[i, 2] * seeds[2] for i in range(3)]
    matrix, consts = extract_linear_map(composed)
    np.testing.assert_allclose(matrix[:, :3], L, atol=1e-15)
    np.testing.assert_array_equal(matrix[:, 3:], np.zeros((3, basis32.size - 3)))
    np.testing.assert_array_equal(consts, np.zeros(3))


def test_extract_linear_map_rejects_mixed_bases(basis32, basis34):
    with pytest.raises(ValueError):
        extract_linear_map([seed_variable(basis32, 0), seed_variable(basis34, 0)])
