"""Exact arithmetic for generalized trigonometric polynomials.

A GenTrigPoly is a finite sum  sum_t c_t * e^{2 pi i <t|k>}  whose exponents
t live in a finitely generated frequency module: each spatial coordinate of t
is a rational combination of the module generators (generator 0 is always the
rational unit 1).  Keeping exponent coefficients as exact rationals makes term
collisions deterministic, which matters for symbolic determinants, for the
renormalisation identities and for torus lifting.

An ad-hoc float mode (basis=None) is available for rules without a declared
module; there exponents are plain float tuples merged at 1e-9.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "FrequencyBasis",
    "ExponentVector",
    "Expansion",
    "GenTrigPoly",
    "TorusPolynomial",
    "TermCapExceeded",
]

#: Hard cap on symbolic term counts; beyond this callers must evaluate
#: cocycles numerically.
TERM_CAP = 10**6

#: Merge tolerance for exponents in the float fallback mode.
FLOAT_MERGE_DECIMALS = 9

#: Coefficients smaller than this are dropped after arithmetic, but only in
#: float mode; exact mode drops exact zeros only.
FLOAT_COEFF_DROP = 1e-14

Rational = Union[int, Fraction]
Coeffs = tuple  # tuple[Fraction, ...] -- coefficient vector over the basis


class TermCapExceeded(RuntimeError):
    """Raised when a symbolic product would exceed the term cap."""


def _as_fraction_matrix(rows: Iterable[Iterable[Rational]]) -> tuple:
    return tuple(tuple(Fraction(x) for x in row) for row in rows)


def _mat_vec(matrix: tuple, vec: Coeffs) -> Coeffs:
    return tuple(
        sum(matrix[r][s] * vec[s] for s in range(len(vec))) for r in range(len(matrix))
    )


def _mat_inverse(matrix: tuple) -> tuple:
    """Exact inverse of a small rational matrix via Gauss-Jordan."""
    n = len(matrix)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise ValueError("singular multiplier matrix")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = Fraction(1) / aug[col][col]
        aug[col] = [x * inv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return tuple(tuple(row[n:]) for row in aug)


@dataclass(frozen=True)
class FrequencyBasis:
    """Finitely generated frequency module, generator 0 being the unit 1.

    ``multipliers`` maps a scaling-factor name alpha to an integer (or
    rational) matrix A so that alpha * (c . g) = (A c) . g for coefficient
    vectors c over the generators g.  ``minpolys`` optionally records the
    minimal polynomial of a generator (low-to-high integer coefficients).
    """

    generators: tuple
    multipliers: Mapping[str, tuple] = field(default_factory=dict)
    minpolys: Mapping[int, tuple] = field(default_factory=dict)
    #: declaration that the generators are rationally independent (torus
    #: lifts integrate over the full product torus only in that case)
    rationally_independent: bool = True

    def __post_init__(self):
        gens = tuple(float(g) for g in self.generators)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(
            self,
            "multipliers",
            {name: _as_fraction_matrix(m) for name, m in self.multipliers.items()},
        )
        object.__setattr__(self, "minpolys", dict(self.minpolys))
        if not gens or gens[0] != 1.0:
            raise ValueError("generator 0 must be the rational unit 1.0")
        if any(not math.isfinite(g) or g == 0.0 for g in gens):
            raise ValueError("generators must be finite and nonzero")
        for name, mat in self.multipliers.items():
            if len(mat) != len(gens) or any(len(r) != len(gens) for r in mat):
                raise ValueError(f"multiplier {name!r} has wrong shape")

    @property
    def size(self) -> int:
        return len(self.generators)

    def zero_coeffs(self) -> Coeffs:
        return (Fraction(0),) * self.size

    def unit_coeffs(self, value: Rational = 1) -> Coeffs:
        return (Fraction(value),) + (Fraction(0),) * (self.size - 1)

    def coeffs(self, values: Sequence[Rational]) -> Coeffs:
        if len(values) != self.size:
            raise ValueError("coefficient vector has wrong length")
        return tuple(Fraction(v) for v in values)

    def real_value(self, coeffs: Coeffs) -> float:
        return float(sum(float(c) * g for c, g in zip(coeffs, self.generators)))

    def factor_value(self, factor: Union[Rational, str]) -> float:
        """Numeric value of a diagonal scaling factor."""
        if isinstance(factor, str):
            mat = self.multipliers[factor]
            # alpha = alpha * 1 = (A e_0) . g
            return self.real_value(_mat_vec(mat, self.unit_coeffs()))
        return float(factor)

    def scale_coeffs(self, factor: Union[Rational, str], coeffs: Coeffs) -> Coeffs:
        """Apply a scaling factor exactly to a coefficient vector."""
        if isinstance(factor, str):
            if factor not in self.multipliers:
                raise KeyError(f"basis not closed under scaling factor {factor!r}")
            return _mat_vec(self.multipliers[factor], coeffs)
        f = Fraction(factor)
        return tuple(f * c for c in coeffs)

    def scale_coeffs_inverse(self, factor: Union[Rational, str], coeffs: Coeffs) -> Coeffs:
        if isinstance(factor, str):
            if factor not in self.multipliers:
                raise KeyError(f"basis not closed under scaling factor {factor!r}")
            return _mat_vec(_mat_inverse(self.multipliers[factor]), coeffs)
        f = Fraction(factor)
        return tuple(c / f for c in coeffs)

    def multiplier_int_matrix(self, factor: Union[Rational, str]) -> np.ndarray:
        """Multiplier as an integer numpy matrix (raises if non-integer)."""
        if isinstance(factor, str):
            mat = self.multipliers[factor]
        else:
            f = Fraction(factor)
            mat = tuple(
                tuple(f if r == s else Fraction(0) for s in range(self.size))
                for r in range(self.size)
            )
        out = np.empty((self.size, self.size), dtype=np.int64)
        for r, row in enumerate(mat):
            for s, x in enumerate(row):
                if x.denominator != 1:
                    raise ValueError("multiplier matrix is not integral")
                out[r, s] = int(x)
        return out

    def check_multiplier(self, name: str, rng=None, tol: float = 1e-12) -> float:
        """Numeric consistency check |alpha*(c.g) - (A c).g| for random c."""
        rng = rng or np.random.default_rng(7)
        alpha = self.factor_value(name)
        worst = 0.0
        for _ in range(16):
            c = tuple(Fraction(int(x)) for x in rng.integers(-9, 10, self.size))
            lhs = alpha * self.real_value(c)
            rhs = self.real_value(self.scale_coeffs(name, c))
            worst = max(worst, abs(lhs - rhs))
        if worst >= tol:
            raise ValueError(f"multiplier {name!r} violates the module action: {worst:g}")
        return worst


#: The trivial one-generator basis (plain integer frequencies).
RATIONAL_BASIS = FrequencyBasis(generators=(1.0,))


@dataclass(frozen=True)
class ExponentVector:
    """Per-coordinate rational coefficient vectors over a FrequencyBasis."""

    coords: tuple  # tuple[Coeffs, ...], one coefficient vector per dimension

    @staticmethod
    def from_rationals(basis: FrequencyBasis, values: Sequence[Rational]) -> "ExponentVector":
        """Exponent with the given rational value in each coordinate."""
        return ExponentVector(
            tuple(
                (Fraction(v),) + (Fraction(0),) * (basis.size - 1) for v in values
            )
        )

    @staticmethod
    def from_coeffs(vectors: Sequence[Sequence[Rational]]) -> "ExponentVector":
        return ExponentVector(tuple(tuple(Fraction(x) for x in v) for v in vectors))

    @property
    def dimension(self) -> int:
        return len(self.coords)

    def real_value(self, basis: FrequencyBasis) -> tuple:
        return tuple(basis.real_value(c) for c in self.coords)

    def add(self, other: "ExponentVector") -> "ExponentVector":
        return ExponentVector(
            tuple(
                tuple(a + b for a, b in zip(ca, cb))
                for ca, cb in zip(self.coords, other.coords)
            )
        )

    def neg(self) -> "ExponentVector":
        return ExponentVector(tuple(tuple(-a for a in c) for c in self.coords))

    def sub(self, other: "ExponentVector") -> "ExponentVector":
        return self.add(other.neg())

    def is_zero(self) -> bool:
        return all(all(a == 0 for a in c) for c in self.coords)

    def is_integral(self) -> bool:
        return all(all(a.denominator == 1 for a in c) for c in self.coords)

    def flatten(self) -> tuple:
        return tuple(a for c in self.coords for a in c)


@dataclass(frozen=True)
class Expansion:
    """Expansive linear map Q with an optional exact diagonal action.

    ``factors`` gives, per coordinate, a rational number or the name of a
    registered basis multiplier; when present, all exact exponent transforms
    go through it.  ``matrix`` is the numeric d x d map used by evaluation.
    """

    matrix: tuple
    factors: tuple = None

    def __post_init__(self):
        mat = tuple(tuple(float(x) for x in row) for row in self.matrix)
        object.__setattr__(self, "matrix", mat)
        if self.factors is not None:
            object.__setattr__(
                self,
                "factors",
                tuple(f if isinstance(f, str) else Fraction(f) for f in self.factors),
            )

    @staticmethod
    def diagonal(factors: Sequence, basis: FrequencyBasis) -> "Expansion":
        vals = [basis.factor_value(f) for f in factors]
        mat = tuple(
            tuple(vals[i] if i == j else 0.0 for j in range(len(vals)))
            for i in range(len(vals))
        )
        return Expansion(matrix=mat, factors=tuple(factors))

    @property
    def dimension(self) -> int:
        return len(self.matrix)

    def as_array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=float)

    def det(self) -> float:
        return float(np.linalg.det(self.as_array()))

    def apply_exponent(self, basis: FrequencyBasis, t: ExponentVector) -> ExponentVector:
        """Exact image Q t of an exponent/position vector."""
        if self.factors is None:
            raise KeyError("basis not closed under Q: no exact diagonal factors")
        return ExponentVector(
            tuple(
                basis.scale_coeffs(f, c) for f, c in zip(self.factors, t.coords)
            )
        )

    def apply_exponent_inverse(self, basis: FrequencyBasis, t: ExponentVector) -> ExponentVector:
        if self.factors is None:
            raise KeyError("basis not closed under Q: no exact diagonal factors")
        return ExponentVector(
            tuple(
                basis.scale_coeffs_inverse(f, c)
                for f, c in zip(self.factors, t.coords)
            )
        )

    def coefficient_action(self, basis: FrequencyBasis) -> np.ndarray:
        """Block-diagonal integer action of Q on flattened coefficient vectors."""
        if self.factors is None:
            raise KeyError("basis not closed under Q: no exact diagonal factors")
        m = basis.size
        d = self.dimension
        out = np.zeros((d * m, d * m), dtype=np.int64)
        for j, f in enumerate(self.factors):
            out[j * m : (j + 1) * m, j * m : (j + 1) * m] = basis.multiplier_int_matrix(f)
        return out

    def lift_action(self, basis: FrequencyBasis) -> np.ndarray:
        """Integer action induced on the lifted torus variables x_{j,r} = g_r k_j.

        Under k -> Q^T k (diagonal) each block transforms by the transpose of
        the coefficient multiplier.
        """
        blocks = self.coefficient_action(basis)
        m = basis.size
        d = self.dimension
        out = np.zeros_like(blocks)
        for j in range(d):
            sl = slice(j * m, (j + 1) * m)
            out[sl, sl] = blocks[sl, sl].T
        return out


def _round_key(values: Sequence[float]) -> tuple:
    return tuple(round(float(v), FLOAT_MERGE_DECIMALS) + 0.0 for v in values)


class GenTrigPoly:
    """Finite exponential sum with exponents in a frequency module.

    Immutable after construction; all arithmetic returns new objects.  Terms
    map ExponentVector -> complex coefficient in exact mode, or a rounded
    float tuple -> coefficient in the ad-hoc float mode.
    """

    __slots__ = ("dimension", "basis", "terms")

    def __init__(self, dimension: int, basis: FrequencyBasis, terms: Mapping):
        self.dimension = dimension
        self.basis = basis
        clean = {}
        for key, coeff in terms.items():
            c = complex(coeff)
            if c == 0:
                continue
            if basis is None:
                key = _round_key(key)
                if abs(c) < FLOAT_COEFF_DROP:
                    continue
            clean[key] = clean.get(key, 0) + c
        self.terms = {k: v for k, v in clean.items() if v != 0}

    # -- constructors -------------------------------------------------

    @staticmethod
    def constant(value: complex, dimension: int = 1, basis: FrequencyBasis = RATIONAL_BASIS) -> "GenTrigPoly":
        if basis is None:
            key = (0.0,) * dimension
        else:
            key = ExponentVector.from_rationals(basis, [0] * dimension)
        return GenTrigPoly(dimension, basis, {key: value})

    @staticmethod
    def zero(dimension: int = 1, basis: FrequencyBasis = RATIONAL_BASIS) -> "GenTrigPoly":
        return GenTrigPoly(dimension, basis, {})

    @staticmethod
    def monomial(
        exponents: Sequence[Rational],
        coeff: complex = 1,
        dimension: int = None,
        basis: FrequencyBasis = RATIONAL_BASIS,
    ) -> "GenTrigPoly":
        """c * prod_j z_j^{e_j} with rational exponents over generator 1."""
        d = len(exponents) if dimension is None else dimension
        key = ExponentVector.from_rationals(basis, list(exponents))
        return GenTrigPoly(d, basis, {key: coeff})

    @staticmethod
    def from_atom(basis: FrequencyBasis, position: ExponentVector, coeff: complex = 1) -> "GenTrigPoly":
        return GenTrigPoly(position.dimension, basis, {position: coeff})

    # -- basic protocol ------------------------------------------------

    def __len__(self) -> int:
        return len(self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GenTrigPoly):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.basis == other.basis
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.dimension, frozenset(self.terms.items())))

    def __repr__(self):
        mode = "exact" if self.basis is not None else "float"
        return f"GenTrigPoly(d={self.dimension}, terms={len(self.terms)}, {mode})"

    def _check_compatible(self, other: "GenTrigPoly"):
        if self.dimension != other.dimension:
            raise ValueError("dimension mismatch")
        if self.basis != other.basis:
            raise ValueError("polynomials use different frequency bases")

    # -- ring operations ----------------------------------------------

    def __add__(self, other) -> "GenTrigPoly":
        if not isinstance(other, GenTrigPoly):
            return self + GenTrigPoly.constant(other, self.dimension, self.basis)
        self._check_compatible(other)
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out.get(key, 0) + c
        return GenTrigPoly(self.dimension, self.basis, out)

    __radd__ = __add__

    def __neg__(self) -> "GenTrigPoly":
        return GenTrigPoly(self.dimension, self.basis, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other) -> "GenTrigPoly":
        return self + (-other if isinstance(other, GenTrigPoly) else -complex(other))

    def __rsub__(self, other) -> "GenTrigPoly":
        return (-self) + other

    def __mul__(self, other) -> "GenTrigPoly":
        if not isinstance(other, GenTrigPoly):
            return GenTrigPoly(
                self.dimension, self.basis, {k: c * complex(other) for k, c in self.terms.items()}
            )
        self._check_compatible(other)
        if len(self.terms) * len(other.terms) > TERM_CAP:
            raise TermCapExceeded(
                f"product would touch {len(self.terms) * len(other.terms)} term pairs"
            )
        out = {}
        exact = self.basis is not None
        for ka, ca in self.terms.items():
            for kb, cb in other.terms.items():
                key = ka.add(kb) if exact else tuple(a + b for a, b in zip(ka, kb))
                c = ca * cb
                if key in out:
                    out[key] += c
                else:
                    out[key] = c
        if len(out) > TERM_CAP:
            raise TermCapExceeded(f"product has {len(out)} terms")
        return GenTrigPoly(self.dimension, self.basis, out)

    __rmul__ = __mul__

    # -- analytic operations --------------------------------------------

    def real_exponents(self) -> np.ndarray:
        """(T, d) array of real exponent vectors, in iteration order."""
        if self.basis is not None:
            rows = [k.real_value(self.basis) for k in self.terms]
        else:
            rows = list(self.terms)
        return np.array(rows, dtype=float).reshape(len(self.terms), self.dimension)

    def coefficients(self) -> np.ndarray:
        return np.array(list(self.terms.values()), dtype=complex)

    def evaluate(self, k) -> complex:
        k = np.atleast_1d(np.asarray(k, dtype=float))
        if k.shape != (self.dimension,):
            raise ValueError(f"evaluation point has dimension {k.shape}, expected {self.dimension}")
        if not self.terms:
            return 0j
        total = 0j
        if self.basis is not None:
            for key, c in self.terms.items():
                phase = sum(
                    self.basis.real_value(cv) * kk for cv, kk in zip(key.coords, k)
                )
                total += c * cmath.exp(2j * math.pi * phase)
        else:
            for key, c in self.terms.items():
                total += c * cmath.exp(2j * math.pi * float(np.dot(key, k)))
        return total

    def evaluate_many(self, ks: np.ndarray) -> np.ndarray:
        """Vectorized evaluation at an (n, d) array of points."""
        ks = np.asarray(ks, dtype=float)
        if ks.ndim == 1:
            ks = ks[:, None]
        if ks.shape[1] != self.dimension:
            raise ValueError("dimension mismatch")
        if not self.terms:
            return np.zeros(ks.shape[0], dtype=complex)
        expo = self.real_exponents()  # (T, d)
        coeff = self.coefficients()
        return np.exp(2j * np.pi * (ks @ expo.T)) @ coeff

    def coefficient_sum(self) -> complex:
        return sum(self.terms.values(), 0j)

    def l1_norm(self) -> float:
        return float(sum(abs(c) for c in self.terms.values()))

    def sup_bound(self) -> float:
        return self.l1_norm()

    def rescale_argument(self, expansion: Expansion) -> "GenTrigPoly":
        """q with q(k) = p(Q^T k); exponents map exactly as t -> Q t."""
        if self.basis is None:
            mat = expansion.as_array()
            return GenTrigPoly(
                self.dimension,
                None,
                {tuple(mat @ np.asarray(key)): c for key, c in self.terms.items()},
            )
        out = {}
        for key, c in self.terms.items():
            nk = expansion.apply_exponent(self.basis, key)
            out[nk] = out.get(nk, 0) + c
        return GenTrigPoly(self.dimension, self.basis, out)

    def conjugate_reflect(self) -> "GenTrigPoly":
        """Coefficients conjugated, exponents negated: equals conj(p(k)) on real k."""
        if self.basis is None:
            return GenTrigPoly(
                self.dimension,
                None,
                {tuple(-x for x in key): c.conjugate() for key, c in self.terms.items()},
            )
        return GenTrigPoly(
            self.dimension,
            self.basis,
            {key.neg(): c.conjugate() for key, c in self.terms.items()},
        )

    def modulus_squared(self) -> "GenTrigPoly":
        """|p|^2 as a trigonometric polynomial (real-valued on real k)."""
        return self * self.conjugate_reflect()

    # -- univariate helpers ---------------------------------------------

    def laurent_coefficients(self):
        """Dense coefficient array for one-dimensional integer-exponent polys.

        Returns (offset, coeffs) with p(k) = sum_j coeffs[j] z^{j+offset},
        z = e^{2 pi i k}.  Requires d=1 and integer exponents over the unit
        generator only.
        """
        if self.dimension != 1:
            raise ValueError("laurent form needs a univariate polynomial")
        if not self.terms:
            return 0, np.zeros(1, dtype=complex)
        degs = []
        for key in self.terms:
            if self.basis is not None:
                cv = key.coords[0]
                if any(c != 0 for c in cv[1:]) or cv[0].denominator != 1:
                    raise ValueError("exponents are not integers over the unit generator")
                degs.append(int(cv[0]))
            else:
                x = key[0]
                if abs(x - round(x)) > 1e-9:
                    raise ValueError("exponents are not integers")
                degs.append(int(round(x)))
        lo, hi = min(degs), max(degs)
        coeffs = np.zeros(hi - lo + 1, dtype=complex)
        for deg, c in zip(degs, self.terms.values()):
            coeffs[deg - lo] += c
        return lo, coeffs

    # -- torus lift -------------------------------------------------------

    def torus_lift(self) -> "TorusPolynomial":
        """Periodic polynomial in d*m variables x_{j,r} = g_r * k_j.

        Substituting the x's recovers p; requires integral exponent
        coefficients so the lift is 1-periodic in every variable.
        """
        if self.basis is None:
            raise ValueError("torus lift needs an exact frequency basis")
        m = self.basis.size
        d = self.dimension
        out = {}
        for key, c in self.terms.items():
            if not key.is_integral():
                raise ValueError("torus lift needs integral exponent coefficients")
            flat = tuple(int(x) for x in key.flatten())
            out[flat] = out.get(flat, 0) + c
        return TorusPolynomial(d, self.basis, out)


class TorusPolynomial:
    """1-periodic polynomial on T^{d*m} obtained by lifting a GenTrigPoly.

    Variable (j, r) carries the value g_r * k_j; its index in the flat
    layout is j*m + r.
    """

    __slots__ = ("space_dimension", "basis", "terms")

    def __init__(self, space_dimension: int, basis: FrequencyBasis, terms: Mapping):
        self.space_dimension = space_dimension
        self.basis = basis
        self.terms = {k: complex(v) for k, v in terms.items() if complex(v) != 0}

    @property
    def n_variables(self) -> int:
        return self.space_dimension * self.basis.size

    def __len__(self):
        return len(self.terms)

    def exponent_matrix(self) -> np.ndarray:
        return np.array(list(self.terms), dtype=np.int64).reshape(
            len(self.terms), self.n_variables
        )

    def coefficients(self) -> np.ndarray:
        return np.array(list(self.terms.values()), dtype=complex)

    def evaluate_many(self, xs: np.ndarray) -> np.ndarray:
        """Evaluate at an (n, d*m) array of torus points."""
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[None, :]
        expo = self.exponent_matrix()
        coeff = self.coefficients()
        if len(self.terms) == 0:
            return np.zeros(xs.shape[0], dtype=complex)
        return np.exp(2j * np.pi * (xs @ expo.T)) @ coeff

    def evaluate(self, x) -> complex:
        return complex(self.evaluate_many(np.asarray(x, dtype=float))[0])

    def lift_point(self, k) -> np.ndarray:
        """Lift a spatial point k to the torus: x_{j,r} = g_r * k_j."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        gens = np.array(self.basis.generators)
        return np.concatenate([kk * gens for kk in k])
