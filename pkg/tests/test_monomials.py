import math

import numpy as np
import pytest

from monoguide.monomials import (
    build_basis,
    count_monomials,
    expand,
    jacobian,
    on_manifold,
    permutation_count,
    project,
)

# Reference third-order exponent array for N=3 (degree blocks 1, 2, 3).
ARR_C3 = np.array([
    [1, 0, 0], [0, 1, 0], [0, 0, 1],
    [2, 0, 0], [1, 1, 0], [1, 0, 1], [0, 2, 0], [0, 1, 1], [0, 0, 2],
    [3, 0, 0], [2, 1, 0], [2, 0, 1], [1, 2, 0], [1, 1, 1], [1, 0, 2],
    [0, 3, 0], [0, 2, 1], [0, 1, 2], [0, 0, 3],
])


def test_build_basis_3_3_matches_reference_rows():
    basis = build_basis(3, 3)
    assert basis.size == 19
    np.testing.assert_array_equal(basis.exponents, ARR_C3)


def test_build_basis_2_1_is_identity():
    basis = build_basis(2, 1)
    np.testing.assert_array_equal(basis.exponents, np.eye(2, dtype=np.uint8))


def test_build_basis_6_4_has_209_rows():
    basis = build_basis(6, 4)
    assert basis.size == 209
    assert count_monomials(6, 4) == 209


@pytest.mark.parametrize(
    "n_vars, order, expected",
    [(3, 2, 9), (6, 2, 27), (1, 5, 5), (3, 3, 19)],
)
def test_count_monomials(n_vars, order, expected):
    assert count_monomials(n_vars, order) == expected


def test_quadratic_block_of_6_vars_has_21_rows():
    basis = build_basis(6, 2)
    assert basis.size - basis.n_vars == 21


@pytest.mark.parametrize("bad", [(0, 2), (3, 0), (0, 0)])
def test_rejects_nonpositive_sizes(bad):
    with pytest.raises(ValueError):
        build_basis(*bad)
    with pytest.raises(ValueError):
        count_monomials(*bad)


def test_basis_invariants():
    for n_vars, order in [(2, 3), (3, 3), (6, 4), (4, 1)]:
        basis = build_basis(n_vars, order)
        # linear block is the identity
        np.testing.assert_array_equal(
            basis.exponents[:n_vars], np.eye(n_vars, dtype=np.uint8)
        )
        # degrees ascend in grouped blocks of the predicted sizes
        degrees = basis.exponents.sum(axis=1)
        assert np.all(np.diff(degrees) >= 0)
        for q in range(1, order + 1):
            block = degrees[degrees == q]
            assert len(block) == math.comb(n_vars + q - 1, q)
        # no duplicate rows; index_of is a bijection onto 0..K-1
        assert len(basis.index_of) == basis.size
        assert sorted(basis.index_of.values()) == list(range(basis.size))


def test_dimension_identity():
    # count + 1 == C(N + j, N) for all N <= 8, j <= 5
    for n_vars in range(1, 9):
        for order in range(1, 6):
            assert count_monomials(n_vars, order) + 1 == math.comb(n_vars + order, n_vars)


def test_pairwise_closure_under_exponent_sums():
    basis = build_basis(3, 3)
    for i in range(basis.size):
        for j in range(basis.size):
            total = basis.exponents[i].astype(int) + basis.exponents[j].astype(int)
            if total.sum() <= basis.order:
                assert tuple(total) in basis.index_of


def test_expand_reference_values():
    basis = build_basis(3, 2)
    values = expand(np.array([1.0, 2.0, 3.0]), basis)
    np.testing.assert_array_equal(values, [1, 2, 3, 1, 2, 3, 4, 6, 9])


def test_expand_zero_and_roundtrip():
    basis = build_basis(4, 3)
    np.testing.assert_array_equal(expand(np.zeros(4), basis), np.zeros(basis.size))
    rng = np.random.default_rng(7)
    for _ in range(20):
        c1 = rng.normal(size=4)
        values = expand(c1, basis)
        np.testing.assert_array_equal(project(values, basis), c1)
        assert on_manifold(values, basis)


def test_project_is_pure_truncation():
    basis = build_basis(3, 2)
    off_manifold = np.arange(basis.size, dtype=float)
    np.testing.assert_array_equal(project(off_manifold, basis), [0.0, 1.0, 2.0])


def test_expand_rejects_length_mismatch():
    basis = build_basis(3, 2)
    with pytest.raises(ValueError):
        expand(np.zeros(4), basis)


def test_jacobian_at_origin_is_identity_over_zeros():
    basis = build_basis(3, 3)
    J = jacobian(np.zeros(3), basis)
    np.testing.assert_array_equal(J[:3], np.eye(3))
    np.testing.assert_array_equal(J[3:], np.zeros((basis.size - 3, 3)))


def test_jacobian_known_row():
    basis = build_basis(3, 2)
    J = jacobian(np.array([1.0, 2.0, 3.0]), basis)
    row = basis.index_of[(1, 1, 0)]
    np.testing.assert_array_equal(J[row], [2.0, 1.0, 0.0])


def test_jacobian_matches_finite_differences():
    basis = build_basis(4, 3)
    rng = np.random.default_rng(11)
    for _ in range(5):
        c1 = rng.normal(size=4)
        J = jacobian(c1, basis)
        step = 1e-6 * (1.0 + np.abs(c1))
        for l in range(4):
            dp = c1.copy(); dp[l] += step[l]
            dm = c1.copy(); dm[l] -= step[l]
            fd = (expand(dp, basis) - expand(dm, basis)) / (2 * step[l])
            scale = np.maximum(np.abs(J[:, l]), 1.0)
            assert np.max(np.abs(fd - J[:, l]) / scale) < 1e-7


def test_jacobian_entries_are_lower_order_monomials():
    # every entry must be beta_l times a monomial of the same basis (or 1)
    basis = build_basis(3, 3)
    rng = np.random.default_rng(3)
    c1 = rng.normal(size=3)
    J = jacobian(c1, basis)
    values = expand(c1, basis)
    for k in range(basis.size):
        for l in range(3):
            beta = basis.exponents[k].astype(int)
            if beta[l] == 0:
                assert J[k, l] == 0.0
                continue
            reduced = beta.copy(); reduced[l] -= 1
            mono = 1.0 if reduced.sum() == 0 else values[basis.index_of[tuple(reduced)]]
            assert J[k, l] == beta[l] * mono


@pytest.mark.parametrize(
    "indices, expected",
    [((1, 2, 1), 3), ((1, 1, 1), 1), ((1, 2, 3), 6), ((4,), 1)],
)
def test_permutation_count(indices, expected):
    assert permutation_count(indices) == expected


def test_permutation_count_rejects_empty():
    with pytest.raises(ValueError):
        permutation_count(())
