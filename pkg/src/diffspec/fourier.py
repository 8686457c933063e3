"""Fourier matrix of an inflation rule and its cocycle.

B_ij(k) = sum_{t in T_ij} e^{2 pi i <k|t>}; with this sign convention B(0)
equals the substitution matrix and the displayed matrices of the worked
examples are reproduced literally.  The cocycle is
B^(N)(k) = B(k) B(Q^T k) ... B((Q^T)^{N-1} k).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence

import numpy as np

from .inflation import InflationRule
from .trigpoly import (
    Expansion,
    FrequencyBasis,
    GenTrigPoly,
    TermCapExceeded,
    TERM_CAP,
)

__all__ = [
    "FourierMatrix",
    "fourier_matrix",
    "cocycle_evaluate",
    "cocycle_symbolic",
    "det_polynomial",
    "apply_similarity",
    "binary_block_decomposition",
    "BinaryBlockData",
]


@dataclass(frozen=True)
class FourierMatrix:
    """L x L matrix of GenTrigPoly plus the expansion driving the cocycle."""

    entries: tuple  # tuple[tuple[GenTrigPoly, ...], ...]
    expansion: Expansion
    basis: FrequencyBasis
    dimension: int

    @property
    def size(self) -> int:
        return len(self.entries)

    def __getitem__(self, idx):
        i, j = idx
        return self.entries[i][j]

    def at_zero(self) -> np.ndarray:
        """B(0), which equals the substitution matrix entrywise."""
        L = self.size
        out = np.zeros((L, L))
        for i in range(L):
            for j in range(L):
                out[i, j] = self.entries[i][j].coefficient_sum().real
        return np.rint(out).astype(np.int64)

    def evaluate(self, k) -> np.ndarray:
        k = np.atleast_1d(np.asarray(k, dtype=float))
        L = self.size
        out = np.empty((L, L), dtype=complex)
        for i in range(L):
            for j in range(L):
                out[i, j] = self.entries[i][j].evaluate(k)
        return out

    def evaluate_many(self, ks: np.ndarray) -> np.ndarray:
        """(n, L, L) evaluation at an (n, d) array of points."""
        ks = np.asarray(ks, dtype=float)
        if ks.ndim == 1:
            ks = ks[:, None]
        L = self.size
        out = np.empty((ks.shape[0], L, L), dtype=complex)
        for i in range(L):
            for j in range(L):
                out[:, i, j] = self.entries[i][j].evaluate_many(ks)
        return out

    def lifted(self) -> "LiftedFourierMatrix":
        lifted_entries = tuple(
            tuple(p.torus_lift() for p in row) for row in self.entries
        )
        return LiftedFourierMatrix(
            entries=lifted_entries,
            lift_step=self.expansion.lift_action(self.basis),
            basis=self.basis,
            dimension=self.dimension,
        )


@dataclass(frozen=True)
class LiftedFourierMatrix:
    """Fourier matrix on the lifted torus T^{d*m}; the cocycle shift acts by
    the integer matrix ``lift_step`` (mod 1)."""

    entries: tuple  # TorusPolynomial matrix
    lift_step: np.ndarray
    basis: FrequencyBasis
    dimension: int

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def n_variables(self) -> int:
        return self.lift_step.shape[0]

    def evaluate_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[None, :]
        L = self.size
        out = np.empty((xs.shape[0], L, L), dtype=complex)
        for i in range(L):
            for j in range(L):
                out[:, i, j] = self.entries[i][j].evaluate_many(xs)
        return out

    def lift_points(self, ks: np.ndarray) -> np.ndarray:
        """Lift spatial points (n, d) to torus points (n, d*m)."""
        ks = np.asarray(ks, dtype=float)
        if ks.ndim == 1:
            ks = ks[:, None]
        gens = np.array(self.basis.generators)
        return (ks[:, :, None] * gens[None, None, :]).reshape(ks.shape[0], -1)


def fourier_matrix(rule: InflationRule) -> FourierMatrix:
    """B_ij(k) = sum over the displacement set T_ij of e^{2 pi i <k|t>}."""
    L = rule.n_tiles
    rows = []
    for i in range(L):
        row = []
        for j in range(L):
            terms = {}
            for t in rule.displacements[i][j]:
                terms[t] = terms.get(t, 0) + 1
            row.append(GenTrigPoly(rule.dimension, rule.basis, terms))
        rows.append(tuple(row))
    return FourierMatrix(
        entries=tuple(rows),
        expansion=rule.expansion,
        basis=rule.basis,
        dimension=rule.dimension,
    )


def cocycle_evaluate(B: FourierMatrix, k, N: int) -> np.ndarray:
    """Numeric product B(k) B(Q^T k) ... B((Q^T)^{N-1} k)."""
    if N < 1:
        raise ValueError("cocycle order must be >= 1")
    k = np.atleast_1d(np.asarray(k, dtype=float))
    QT = B.expansion.as_array().T
    out = B.evaluate(k)
    for _ in range(N - 1):
        k = QT @ k
        out = out @ B.evaluate(k)
    return out


def _matmul_poly(A: Sequence, Bm: Sequence) -> tuple:
    L = len(A)
    rows = []
    for i in range(L):
        row = []
        for j in range(L):
            acc = None
            for l in range(L):
                prod = A[i][l] * Bm[l][j]
                acc = prod if acc is None else acc + prod
            row.append(acc)
        rows.append(tuple(row))
    return tuple(rows)


def cocycle_symbolic(B: FourierMatrix, N: int) -> FourierMatrix:
    """Exact symbolic cocycle; equals the Fourier matrix of the N-fold rule."""
    if N < 1:
        raise ValueError("cocycle order must be >= 1")
    total_terms = sum(len(p) for row in B.entries for p in row)
    if total_terms ** N > 50 * TERM_CAP:
        raise TermCapExceeded("estimated symbolic cocycle size exceeds the cap")
    entries = B.entries
    shifted = B.entries
    for _ in range(N - 1):
        shifted = tuple(
            tuple(p.rescale_argument(B.expansion) for p in row) for row in shifted
        )
        entries = _matmul_poly(entries, shifted)
    return FourierMatrix(
        entries=entries, expansion=B.expansion, basis=B.basis, dimension=B.dimension
    )


def _det_recursive(rows: List[List[GenTrigPoly]]) -> GenTrigPoly:
    n = len(rows)
    if n == 1:
        return rows[0][0]
    # expand along the column with most structural zeros
    zero_counts = [
        sum(1 for i in range(n) if len(rows[i][j]) == 0) for j in range(n)
    ]
    col = int(np.argmax(zero_counts))
    acc = None
    for i in range(n):
        entry = rows[i][col]
        if len(entry) == 0:
            continue
        minor = [
            [rows[r][c] for c in range(n) if c != col] for r in range(n) if r != i
        ]
        term = entry * _det_recursive(minor)
        if (i + col) % 2:
            term = -term
        acc = term if acc is None else acc + term
    if acc is None:
        first = rows[0][0]
        return GenTrigPoly.zero(first.dimension, first.basis)
    return acc


def det_polynomial(B: FourierMatrix) -> GenTrigPoly:
    """Exact symbolic determinant by cofactor expansion."""
    if B.size > 8:
        raise ValueError("symbolic determinant supported for L <= 8")
    rows = [list(row) for row in B.entries]
    return _det_recursive(rows)


def apply_similarity(B: FourierMatrix, U: np.ndarray, tol: float = 1e-9) -> FourierMatrix:
    """Entrywise U B(k) U^{-1}, done exactly on the term coefficients.

    U must have exactly representable entries (rationals as floats are
    fine); the result is cross-checked numerically at random k.
    """
    U = np.asarray(U, dtype=complex)
    L = B.size
    if U.shape != (L, L):
        raise ValueError("similarity matrix has wrong shape")
    Uinv = np.linalg.inv(U)
    d = B.dimension
    basis = B.basis
    # conjugate term-by-term: coefficients combine linearly per exponent
    rows = [[dict() for _ in range(L)] for _ in range(L)]
    for a in range(L):
        for b in range(L):
            poly = B.entries[a][b]
            for key, c in poly.terms.items():
                for i in range(L):
                    ua = U[i, a]
                    if ua == 0:
                        continue
                    for j in range(L):
                        w = ua * c * Uinv[b, j]
                        if w == 0:
                            continue
                        cell = rows[i][j]
                        cell[key] = cell.get(key, 0) + w
    entries = tuple(
        tuple(GenTrigPoly(d, basis, rows[i][j]) for j in range(L)) for i in range(L)
    )
    out = FourierMatrix(entries=entries, expansion=B.expansion, basis=basis, dimension=d)
    rng = np.random.default_rng(12345)
    for _ in range(4):
        k = rng.random(d)
        direct = U @ B.evaluate(k) @ Uinv
        fitted = out.evaluate(k)
        if np.max(np.abs(direct - fitted)) > tol:
            raise ArithmeticError("conjugated entries are not trigonometric polynomials")
    return out


@dataclass(frozen=True)
class BinaryBlockData:
    """Column-type polynomials of a binary constant-size block rule.

    p collects all positions, q and r the bijective columns (white over
    black and black over white), s0 and s1 the coincident ones; the exact
    identity q + r + s0 + s1 = p holds, and ||q - r||_2^2 = det Q - n_c by
    Parseval, with n_c the number of coincident columns.
    """

    p: GenTrigPoly
    q: GenTrigPoly
    r: GenTrigPoly
    s0: GenTrigPoly
    s1: GenTrigPoly
    n_coincident: int

    def parseval_gap(self) -> float:
        diff = self.q - self.r
        return float(sum(abs(c) ** 2 for c in diff.terms.values()))


def binary_block_decomposition(rule: InflationRule) -> BinaryBlockData:
    """Split the two image blocks of a binary block rule by column type."""
    if rule.n_tiles != 2:
        raise ValueError("binary decomposition needs exactly two tiles")
    factors = rule.expansion.factors
    if factors is None or any(isinstance(f, str) or Fraction(f).denominator != 1 for f in factors):
        raise ValueError("binary decomposition needs an integer diagonal expansion")
    sizes = [int(Fraction(f)) for f in factors]
    T = rule.displacements
    sets = [[set(T[i][j]) for j in range(2)] for i in range(2)]
    expected = 1
    for s in sizes:
        expected *= s
    for j in range(2):
        if len(sets[0][j]) + len(sets[1][j]) != expected:
            raise ValueError("rule is not a constant-size block substitution")

    def poly(positions) -> GenTrigPoly:
        return GenTrigPoly(rule.dimension, rule.basis, {t: 1 for t in positions})

    full = GenTrigPoly.constant(1, rule.dimension, rule.basis)
    for coord, n in enumerate(sizes):
        axis = GenTrigPoly.zero(rule.dimension, rule.basis)
        for e in range(n):
            expo = [0] * rule.dimension
            expo[coord] = e
            axis = axis + GenTrigPoly.monomial(expo, 1, rule.dimension, rule.basis)
        full = full * axis

    q = poly(sets[0][0] & sets[1][1])  # white stays white / black stays black
    r = poly(sets[1][0] & sets[0][1])  # both images swap the colour
    s0 = poly(sets[0][0] & sets[0][1])  # both images white
    s1 = poly(sets[1][0] & sets[1][1])  # both images black
    n_c = len(s0) + len(s1)
    if q + r + s0 + s1 != full:
        raise ArithmeticError("column classification does not add up to all positions")
    return BinaryBlockData(p=full, q=q, r=r, s0=s0, s1=s1, n_coincident=n_c)
