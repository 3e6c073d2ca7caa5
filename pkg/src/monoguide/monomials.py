"""Ordered multivariate monomial sequences: construction, evaluation, Jacobian.

A "monomial state" of order ``j`` over ``N`` variables collects every unique
monomial of total degree 1..j of a base vector, in a fixed graded order. The
sequence is represented by the exponent array of :class:`MonomialBasis`; a
state is then just a length-``K`` coefficient vector over that basis. The
first ``N`` entries are always the base variables themselves, so truncation
to the linear part is a plain slice.
"""
from __future__ import annotations

import math
from functools import cached_property

import numpy as np

__all__ = [
    "MonomialBasis",
    "build_basis",
    "count_monomials",
    "expand",
    "project",
    "jacobian",
    "permutation_count",
    "on_manifold",
]


def count_monomials(n_vars: int, order: int) -> int:
    """Number of unique monomials of degree 1..order in n_vars variables.

    Equals sum over q = 1..order of C(n_vars + q - 1, q). Note the identity
    count + 1 == C(n_vars + order, n_vars) (the constant completes the count
    of all monomials of degree <= order).
    """
    if n_vars < 1 or order < 1:
        raise ValueError(f"n_vars and order must be >= 1, got ({n_vars}, {order})")
    return sum(math.comb(n_vars + q - 1, q) for q in range(1, order + 1))


class MonomialBasis:
    """Exponent-array representation of all monomials of degree 1..order.

    Row k of ``exponents`` holds the exponent tuple of monomial k. Rows are
    grouped by total degree in ascending order; within a degree group the
    order is the one produced by :func:`build_basis` (multiply the previous
    block by x1..xN, appending non-repeats). The first ``n_vars`` rows are
    the identity block.

    Immutable after construction; safe to share across threads.
    """

    def __init__(self, n_vars: int, order: int, exponents: np.ndarray):
        self.n_vars = n_vars
        self.order = order
        self.exponents = exponents
        self.exponents.setflags(write=False)
        self.size = exponents.shape[0]
        self.index_of = {tuple(int(e) for e in row): k for k, row in enumerate(exponents)}
        degrees = exponents.sum(axis=1).astype(np.int64)
        # grade_offsets[d-1] = first row of the degree-d block; sentinel K at the end
        self.grade_offsets = np.searchsorted(degrees, np.arange(1, order + 2))
        self.degrees = degrees
        self._mul_table = None

    def __repr__(self) -> str:
        return f"MonomialBasis(n_vars={self.n_vars}, order={self.order}, size={self.size})"

    def truncation_size(self, order: int) -> int:
        """Row count of the leading sub-basis of the given lower order."""
        if not 1 <= order <= self.order:
            raise ValueError(f"order must be in 1..{self.order}, got {order}")
        return int(self.grade_offsets[order - 1])

    @cached_property
    def _jacobian_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-entry (coefficient, reduced-monomial index) tables.

        d(monomial k)/d(x_l) = exponents[k, l] * monomial(exponents[k] - e_l).
        The reduced tuple is the constant (augmented index 0) or another basis
        row (augmented index 1 + row), since the basis is closed under
        exponent decrement.
        """
        K, N = self.exponents.shape
        coeff = self.exponents.astype(np.float64)
        index = np.zeros((K, N), dtype=np.int64)
        for k in range(K):
            row = self.exponents[k]
            for l in range(N):
                if row[l] == 0:
                    continue
                reduced = row.copy()
                reduced[l] -= 1
                if reduced.sum() == 0:
                    index[k, l] = 0
                else:
                    index[k, l] = 1 + self.index_of[tuple(int(e) for e in reduced)]
        return coeff, index


def build_basis(n_vars: int, order: int) -> MonomialBasis:
    """Construct the ordered exponent array for all monomials of degree 1..order.

    Starts from the identity block and, order by order, multiplies the prior
    degree block by each variable in turn, appending candidates that have not
    been seen yet. This generation order is the canonical layout all
    downstream matrices inherit.
    """
    count = count_monomials(n_vars, order)  # validates inputs
    rows: list[tuple[int, ...]] = [
        tuple(int(i == l) for i in range(n_vars)) for l in range(n_vars)
    ]
    base_block = list(rows)
    for _ in range(2, order + 1):
        new_block: list[tuple[int, ...]] = []
        seen: set[tuple[int, ...]] = set()
        for var in range(n_vars):
            for row in base_block:
                cand = tuple(row[i] + (1 if i == var else 0) for i in range(n_vars))
                if cand not in seen:
                    seen.add(cand)
                    new_block.append(cand)
        rows.extend(new_block)
        base_block = new_block
    exponents = np.array(rows, dtype=np.uint8)
    assert exponents.shape == (count, n_vars)
    return MonomialBasis(n_vars, order, exponents)


def expand(c1: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    """Evaluate every basis monomial at c1 (the order-j lift of a base vector).

    The result lies on the monomial manifold by construction: entry k equals
    the product of the linear entries raised to the row-k exponents.
    """
    c1 = np.asarray(c1, dtype=np.float64)
    if c1.shape != (basis.n_vars,):
        raise ValueError(f"expected length-{basis.n_vars} vector, got shape {c1.shape}")
    return np.prod(c1[np.newaxis, :] ** basis.exponents, axis=1)


def project(values: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    """Extract the linear part: the first n_vars entries (pure truncation)."""
    values = np.asarray(values, dtype=np.float64)
    return values[: basis.n_vars].copy()


def on_manifold(values: np.ndarray, basis: MonomialBasis) -> bool:
    """True iff the state is the exact monomial expansion of its linear part."""
    values = np.asarray(values, dtype=np.float64)
    return bool(np.array_equal(values, expand(values[: basis.n_vars], basis)))


def jacobian(c1: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    """Derivative of the monomial state with respect to its linear part.

    Entry (k, l) is exponents[k, l] times the row-k monomial with that
    exponent decremented, evaluated at c1. The top N x N block is the
    identity, and every entry is itself a monomial of degree <= order - 1,
    which makes the Jacobian a linear function of the expanded state.
    """
    coeff, index = basis._jacobian_tables
    augmented = np.concatenate(([1.0], expand(c1, basis)))
    return coeff * augmented[index]


def permutation_count(index_list) -> int:
    """Number of unique permutations of a variable-index list.

    The multinomial coefficient k!/(b1!...bN!) where b are the multiplicities
    of the distinct indices; e.g. (1, 2, 1) has 3 unique permutations.
    """
    indices = list(index_list)
    if not indices:
        raise ValueError("index list must be non-empty")
    result = math.factorial(len(indices))
    for idx in set(indices):
        result //= math.factorial(indices.count(idx))
    return result
