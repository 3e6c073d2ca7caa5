"""Truncated multivariate Taylor arithmetic over a monomial basis.

A :class:`Jet` stores a constant term plus one coefficient per basis
monomial. Arithmetic is exact truncation: every result coefficient of degree
<= order equals the mathematically exact coefficient of the product or
function composition. Elementary functions are built by Horner composition
of the outer function's univariate Taylor series at the constant term with
the nilpotent remainder, which costs ``order`` jet multiplications.

The module-level ``sqrt``/``sin``/``cos``/``tan``/``recip``/``powi`` helpers
dispatch on their argument, so dynamics code written against them runs
unchanged on plain floats, numpy arrays, and jets.
"""
from __future__ import annotations

import math

import numpy as np

from .monomials import MonomialBasis, expand

__all__ = [
    "Jet",
    "MulTable",
    "seed_variable",
    "constant_jet",
    "mul",
    "recip",
    "sqrt",
    "sin",
    "cos",
    "tan",
    "powi",
    "evaluate",
    "extract_linear_map",
]


class MulTable:
    """Gather/scatter index arrays for the truncated product over a basis.

    For every ordered pair of non-constant monomials whose degrees sum to at
    most the basis order, stores (left index, right index, target index);
    pairs exceeding the order are dropped, which is exactly the truncation.
    Built once per basis on first multiplication and cached there.
    """

    def __init__(self, basis: MonomialBasis):
        left, right, target = [], [], []
        exps = basis.exponents.astype(np.int64)
        degs = basis.degrees
        K = basis.size
        for i in range(K):
            for j in range(K):
                if degs[i] + degs[j] > basis.order:
                    continue
                k = basis.index_of[tuple(int(e) for e in exps[i] + exps[j])]
                left.append(i)
                right.append(j)
                target.append(k)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.target = np.asarray(target, dtype=np.int64)
        self.size = basis.size


def _mul_table(basis: MonomialBasis) -> MulTable:
    if basis._mul_table is None:
        basis._mul_table = MulTable(basis)
    return basis._mul_table


class Jet:
    """Truncated multivariate Taylor polynomial: const + per-monomial coeffs."""

    __slots__ = ("basis", "const", "coeffs")

    def __init__(self, basis: MonomialBasis, const: float, coeffs: np.ndarray):
        self.basis = basis
        self.const = float(const)
        self.coeffs = coeffs

    def copy(self) -> "Jet":
        return Jet(self.basis, self.const, self.coeffs.copy())

    def _check(self, other: "Jet") -> None:
        if other.basis is not self.basis:
            raise ValueError("jets defined over different bases")

    # -- ring operations ---------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet(self.basis, self.const + other.const, self.coeffs + other.coeffs)
        return Jet(self.basis, self.const + float(other), self.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.basis, -self.const, -self.coeffs)

    def __sub__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet(self.basis, self.const - other.const, self.coeffs - other.coeffs)
        return Jet(self.basis, self.const - float(other), self.coeffs)

    def __rsub__(self, other):
        return Jet(self.basis, float(other) - self.const, -self.coeffs)

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            table = _mul_table(self.basis)
            coeffs = self.const * other.coeffs + other.const * self.coeffs
            cross = self.coeffs[table.left] * other.coeffs[table.right]
            coeffs += np.bincount(table.target, weights=cross, minlength=table.size)
            return Jet(self.basis, self.const * other.const, coeffs)
        other = float(other)
        return Jet(self.basis, self.const * other, self.coeffs * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * recip(other)
        return self * (1.0 / float(other))

    def __rtruediv__(self, other):
        return recip(self) * float(other)

    def __pow__(self, n: int):
        return powi(self, n)

    def __repr__(self) -> str:
        nnz = int(np.count_nonzero(self.coeffs))
        return f"Jet(const={self.const:.6g}, nnz={nnz}/{self.basis.size})"


def seed_variable(basis: MonomialBasis, var_index: int, center: float = 0.0) -> Jet:
    """The jet of variable ``var_index`` about ``center``: center + x_i."""
    if not 0 <= var_index < basis.n_vars:
        raise IndexError(f"var_index {var_index} out of range for {basis.n_vars} variables")
    coeffs = np.zeros(basis.size)
    coeffs[var_index] = 1.0
    return Jet(basis, center, coeffs)


def constant_jet(basis: MonomialBasis, value: float) -> Jet:
    return Jet(basis, value, np.zeros(basis.size))


def mul(a: Jet, b: Jet) -> Jet:
    """Truncated product (commutative; exact for all degrees <= order)."""
    return a * b


def _compose(a: Jet, series: np.ndarray) -> Jet:
    """Horner evaluation of a univariate Taylor series at a's nilpotent part."""
    nil = Jet(a.basis, 0.0, a.coeffs)
    out = constant_jet(a.basis, float(series[-1]))
    for c in series[-2::-1]:
        out = out * nil + float(c)
    return out


def recip(a):
    """1/a; requires a nonzero constant term for jets."""
    if not isinstance(a, Jet):
        return 1.0 / a
    c = a.const
    if c == 0.0:
        raise ZeroDivisionError("jet reciprocal requires a nonzero constant term")
    j = a.basis.order
    series = np.empty(j + 1)
    series[0] = 1.0 / c
    for m in range(1, j + 1):
        series[m] = -series[m - 1] / c
    return _compose(a, series)


def sqrt(a):
    """Square root; requires a positive constant term for jets."""
    if not isinstance(a, Jet):
        return np.sqrt(a)
    c = a.const
    if c <= 0.0:
        raise ValueError(f"jet sqrt requires a positive constant term, got {c}")
    j = a.basis.order
    series = np.empty(j + 1)
    series[0] = math.sqrt(c)
    for m in range(1, j + 1):
        series[m] = series[m - 1] * (1.5 - m) / (m * c)
    return _compose(a, series)


def sin(a):
    if not isinstance(a, Jet):
        return np.sin(a)
    j = a.basis.order
    series = np.array([math.sin(a.const + m * math.pi / 2) / math.factorial(m) for m in range(j + 1)])
    return _compose(a, series)


def cos(a):
    if not isinstance(a, Jet):
        return np.cos(a)
    j = a.basis.order
    series = np.array([math.cos(a.const + m * math.pi / 2) / math.factorial(m) for m in range(j + 1)])
    return _compose(a, series)


def tan(a):
    """Tangent, via sin/cos; the constant term must stay away from poles."""
    if not isinstance(a, Jet):
        return np.tan(a)
    if abs(math.cos(a.const)) < 1e-12:
        raise ValueError(f"jet tan at a pole: cos({a.const}) ~ 0")
    return sin(a) * recip(cos(a))


def powi(a, n: int):
    """Integer power by repeated squaring; negative exponents via recip."""
    if not isinstance(a, Jet):
        return a ** n
    if n < 0:
        return recip(powi(a, -n))
    out = constant_jet(a.basis, 1.0)
    base = a
    while n:
        if n & 1:
            out = out * base
        n >>= 1
        if n:
            base = base * base
    return out


def evaluate(a: Jet, delta: np.ndarray) -> float:
    """Numeric value of the jet at a displacement from its expansion point."""
    return a.const + float(a.coeffs @ expand(np.asarray(delta, dtype=np.float64), a.basis))


def extract_linear_map(state_jets) -> tuple[np.ndarray, np.ndarray]:
    """Stack jet coefficients into a matrix mapping monomial states to values.

    Row i holds the coefficients of jet i; the returned vector holds the
    constant terms (the reference values, ~0 for deviation dynamics).
    """
    jets = list(state_jets)
    basis = jets[0].basis
    for jet in jets[1:]:
        if jet.basis is not basis:
            raise ValueError("jets defined over different bases")
    matrix = np.vstack([jet.coeffs for jet in jets])
    consts = np.array([jet.const for jet in jets])
    return matrix, consts
