"""Finite weighted Dirac combs: convolution, reflection, pushforward, FT.

Atom positions reuse the exact ExponentVector machinery when a frequency
basis is supplied, so convolution collisions are decided exactly; a float
mode with 1e-9 merging covers ad-hoc combs.  Weights may be exact
``fractions.Fraction`` values (kept exact through convolution and scaling)
or complex numbers.
"""

from __future__ import annotations

import json
from fractions import Fraction
from numbers import Rational as _RationalABC
from typing import Mapping, Union

import numpy as np

from .trigpoly import (
    FLOAT_COEFF_DROP,
    Expansion,
    ExponentVector,
    FrequencyBasis,
    GenTrigPoly,
    _round_key,
)

__all__ = ["DiracComb"]


def _conj(w):
    if isinstance(w, (Fraction, int)):
        return w
    return complex(w).conjugate()


def _is_zero(w) -> bool:
    return w == 0


class DiracComb:
    """Finite complex measure sum_x w_x delta_x on R^d."""

    __slots__ = ("dimension", "basis", "atoms")

    def __init__(self, dimension: int, basis: FrequencyBasis, atoms: Mapping):
        self.dimension = dimension
        self.basis = basis
        clean = {}
        for key, w in atoms.items():
            if self.basis is None:
                key = _round_key(key)
                if abs(complex(w)) < FLOAT_COEFF_DROP:
                    continue
            if _is_zero(w):
                continue
            if key in clean:
                clean[key] = clean[key] + w
            else:
                clean[key] = w
        self.atoms = {k: w for k, w in clean.items() if not _is_zero(w)}

    # -- constructors --------------------------------------------------

    @staticmethod
    def from_points(points, weights=None, dimension: int = None, basis: FrequencyBasis = None):
        """Comb from raw positions.

        With a basis, each point must be an ExponentVector or a sequence of
        rationals (interpreted over the unit generator); without one, points
        are float tuples.
        """
        pts = list(points)
        if weights is None:
            weights = [1] * len(pts)
        atoms = {}
        if basis is not None:
            for p, w in zip(pts, weights):
                if not isinstance(p, ExponentVector):
                    p = ExponentVector.from_rationals(basis, list(np.atleast_1d(p)))
                atoms[p] = atoms.get(p, 0) + w
            d = dimension or next(iter(atoms)).dimension
        else:
            for p, w in zip(pts, weights):
                key = tuple(float(x) for x in np.atleast_1d(p))
                atoms[key] = atoms.get(key, 0) + w
            d = dimension or len(next(iter(atoms)))
        return DiracComb(d, basis, atoms)

    @staticmethod
    def dirac(position, basis: FrequencyBasis = None, weight=1) -> "DiracComb":
        return DiracComb.from_points([position], [weight], basis=basis)

    # -- protocol --------------------------------------------------------

    def __len__(self):
        return len(self.atoms)

    def __eq__(self, other):
        if not isinstance(other, DiracComb):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.basis == other.basis
            and self.atoms == other.atoms
        )

    def __repr__(self):
        return f"DiracComb(d={self.dimension}, atoms={len(self.atoms)})"

    def _check(self, other: "DiracComb"):
        if self.dimension != other.dimension:
            raise ValueError("dimension mismatch")
        if self.basis != other.basis:
            raise ValueError("combs use different frequency bases")

    def total_variation(self) -> float:
        return float(sum(abs(complex(w)) for w in self.atoms.values()))

    def total_mass(self):
        return sum(self.atoms.values())

    def weight_at(self, position):
        if self.basis is None:
            position = _round_key(np.atleast_1d(position))
        return self.atoms.get(position, 0)

    # -- algebra -----------------------------------------------------------

    def __add__(self, other: "DiracComb") -> "DiracComb":
        self._check(other)
        out = dict(self.atoms)
        for k, w in other.atoms.items():
            out[k] = out.get(k, 0) + w
        return DiracComb(self.dimension, self.basis, out)

    def __mul__(self, scalar) -> "DiracComb":
        return DiracComb(
            self.dimension, self.basis, {k: w * scalar for k, w in self.atoms.items()}
        )

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "DiracComb":
        if isinstance(scalar, int):
            scalar = Fraction(scalar)
        return DiracComb(
            self.dimension, self.basis, {k: w / scalar for k, w in self.atoms.items()}
        )

    def convolve(self, other: "DiracComb") -> "DiracComb":
        """mu * nu: atoms at position sums, weights multiplied and accumulated."""
        self._check(other)
        out = {}
        exact = self.basis is not None
        for ka, wa in self.atoms.items():
            for kb, wb in other.atoms.items():
                key = ka.add(kb) if exact else tuple(a + b for a, b in zip(ka, kb))
                w = wa * wb
                if key in out:
                    out[key] = out[key] + w
                else:
                    out[key] = w
        return DiracComb(self.dimension, self.basis, out)

    def flip(self) -> "DiracComb":
        """Flipped-over measure: atom at x, weight w -> atom at -x, weight conj(w)."""
        if self.basis is None:
            return DiracComb(
                self.dimension,
                None,
                {tuple(-x for x in k): _conj(w) for k, w in self.atoms.items()},
            )
        return DiracComb(
            self.dimension, self.basis, {k.neg(): _conj(w) for k, w in self.atoms.items()}
        )

    def pushforward(self, f: Union[Expansion, float, np.ndarray]) -> "DiracComb":
        """f.mu for invertible linear f: atom at x moves to f(x)."""
        if isinstance(f, Expansion):
            if abs(f.det()) < 1e-300:
                raise ValueError("pushforward needs an invertible map")
            if self.basis is not None and f.factors is not None:
                return DiracComb(
                    self.dimension,
                    self.basis,
                    {
                        f.apply_exponent(self.basis, k): w
                        for k, w in self.atoms.items()
                    },
                )
            mat = f.as_array()
        else:
            mat = np.atleast_2d(np.asarray(f, dtype=float))
            if mat.shape == (1, 1) and self.dimension > 1:
                mat = mat[0, 0] * np.eye(self.dimension)
            if abs(np.linalg.det(mat)) < 1e-300:
                raise ValueError("pushforward needs an invertible map")
            if self.basis is not None:
                # exact path for integer scalar dilations
                scale = mat[0, 0]
                if (
                    np.allclose(mat, scale * np.eye(self.dimension))
                    and float(scale).is_integer()
                ):
                    s = Fraction(int(scale))
                    return DiracComb(
                        self.dimension,
                        self.basis,
                        {
                            ExponentVector(
                                tuple(tuple(s * c for c in cv) for cv in k.coords)
                            ): w
                            for k, w in self.atoms.items()
                        },
                    )
                raise ValueError("exact comb needs an Expansion with registered factors")
        out = {}
        for k, w in self.atoms.items():
            key = tuple((mat @ np.asarray(k, dtype=float)).tolist())
            out[key] = out.get(key, 0) + w
        return DiracComb(self.dimension, None, out)

    # -- Fourier side ---------------------------------------------------

    def fourier_polynomial(self) -> GenTrigPoly:
        """Fourier transform k -> sum_x w_x e^{-2 pi i <k|x>} as a GenTrigPoly.

        The Fourier-matrix convention applies conjugate_reflect on top.
        """
        if self.basis is None:
            terms = {
                tuple(-x for x in k): complex(w) for k, w in self.atoms.items()
            }
        else:
            terms = {k.neg(): complex(w) for k, w in self.atoms.items()}
        return GenTrigPoly(self.dimension, self.basis, terms)

    # -- serialization -----------------------------------------------------

    def positions(self) -> np.ndarray:
        """(n, d) float positions in iteration order."""
        if self.basis is None:
            rows = list(self.atoms)
        else:
            rows = [k.real_value(self.basis) for k in self.atoms]
        return np.array(rows, dtype=float).reshape(len(self.atoms), self.dimension)

    def to_json(self) -> str:
        pos = self.positions()
        payload = {
            "dimension": self.dimension,
            "atoms": [
                {"point": [float(x) for x in p], "weight": [complex(w).real, complex(w).imag]}
                for p, w in zip(pos, self.atoms.values())
            ],
        }
        return json.dumps(payload)

    @staticmethod
    def from_json(text: str) -> "DiracComb":
        data = json.loads(text)
        atoms = {
            tuple(a["point"]): complex(a["weight"][0], a["weight"][1])
            for a in data["atoms"]
        }
        return DiracComb(int(data["dimension"]), None, atoms)
