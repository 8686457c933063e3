"""Built-in, validated inflation rules with auxiliary metadata.

Every entry passes the stone-inflation validator (or comes from an exact 1D
realization) and primitivity; the four-letter constant-length entry also
carries the Hadamard-type similarity and the reduced two-by-two cocycle
block it exposes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np

from .fourier import FourierMatrix, fourier_matrix
from .inflation import (
    InflationRule,
    Prototile,
    SubstitutionRule1D,
    realize_1d,
    validate_stone_inflation,
)
from .trigpoly import (
    Expansion,
    ExponentVector,
    FrequencyBasis,
    GenTrigPoly,
    RATIONAL_BASIS,
)

__all__ = ["CatalogueEntry", "builtin", "builtin_names", "block_substitution"]


@dataclass
class CatalogueEntry:
    name: str
    rule: InflationRule
    similarity: Optional[np.ndarray] = None
    reduced: Optional[FourierMatrix] = None
    notes: str = ""
    metadata: dict = field(default_factory=dict)


def builtin_names() -> List[str]:
    return ["fibonacci", "abcd", "block-fig1", "staggered(M,N,[shifts])", "frank-robinson"]


def _fibonacci() -> CatalogueEntry:
    tau = (1 + np.sqrt(5)) / 2
    basis = FrequencyBasis(
        generators=(1.0, tau),
        multipliers={"tau": [[0, 1], [1, 1]]},
        minpolys={1: (-1, -1, 1)},
    )
    rule1d = SubstitutionRule1D.from_words(["ab", "a"], alphabet="ab")
    rule = realize_1d(
        rule1d,
        basis=basis,
        lengths=[(Fraction(0), Fraction(1)), (Fraction(1), Fraction(0))],
        expansion_factor="tau",
        name="fibonacci",
        labels=["a", "b"],
    )
    return CatalogueEntry(name="fibonacci", rule=rule, notes="golden-mean interval rule")


def _abcd() -> CatalogueEntry:
    rule1d = SubstitutionRule1D.from_words(["ab", "ca", "bd", "dc"], alphabet="abcd")
    rule = realize_1d(rule1d, basis=RATIONAL_BASIS, name="abcd", labels=list("abcd"))
    U = 0.5 * np.array(
        [[1, 1, 1, 1], [1, -1, -1, 1], [1, -1, 1, -1], [1, 1, -1, -1]], dtype=float
    )
    z = GenTrigPoly.monomial([1])
    one = GenTrigPoly.constant(1, 1)
    zero = GenTrigPoly.zero(1)
    reduced = FourierMatrix(
        entries=((-z, one), (one, z)),
        expansion=rule.expansion,
        basis=RATIONAL_BASIS,
        dimension=1,
    )
    return CatalogueEntry(
        name="abcd",
        rule=rule,
        similarity=U,
        reduced=reduced,
        notes="constant-length 4-letter rule whose matrix has a sqrt(2) eigenvalue",
    )


def block_substitution(
    grids: Sequence[np.ndarray], name: str = "", basis: FrequencyBasis = RATIONAL_BASIS
) -> InflationRule:
    """Block rule from per-type image grids.

    ``grids[j][mx, my, ...]`` is the tile type placed at integer position
    (mx, my, ...) inside the inflated type-j block; all grids must share
    one shape, which fixes Q = diag(shape).
    """
    grids = [np.asarray(g, dtype=np.int64) for g in grids]
    shape = grids[0].shape
    if any(g.shape != shape for g in grids):
        raise ValueError("all image blocks must have the same shape")
    L = len(grids)
    d = len(shape)
    expansion = Expansion.diagonal([int(n) for n in shape], basis)
    unit = tuple(basis.unit_coeffs() for _ in range(d))
    tiles = tuple(Prototile(label=f"t{j}", edges=unit) for j in range(L))
    T = [[[] for _ in range(L)] for _ in range(L)]
    for j, g in enumerate(grids):
        for pos in np.ndindex(*shape):
            i = int(g[pos])
            if i < 0 or i >= L:
                raise ValueError(f"grid {j} places unknown tile {i} at {pos}")
            T[i][j].append(ExponentVector.from_rationals(basis, list(pos)))
    return InflationRule(
        dimension=d,
        basis=basis,
        expansion=expansion,
        prototiles=tiles,
        displacements=tuple(tuple(tuple(c) for c in row) for row in T),
        name=name,
    )


def _block_fig1() -> CatalogueEntry:
    # 3 x 2 binary block rule; grid index = (mx, my), values 0 = white, 1 = black
    white = np.array([[0, 1], [0, 0], [0, 0]])
    black = np.array([[0, 0], [0, 0], [1, 1]])
    rule = block_substitution([white, black], name="block-fig1")
    report = validate_stone_inflation(rule)
    assert report.ok, report
    return CatalogueEntry(
        name="block-fig1",
        rule=rule,
        notes="binary 3x2 block rule with expansion diag(3,2)",
    )


def _staggered(M: int, N: int, shifts: Sequence) -> CatalogueEntry:
    if M < 2 or N < 2:
        raise ValueError("staggered needs M, N >= 2")
    shifts = list(shifts)
    if len(shifts) != M - 1:
        raise ValueError(f"staggered({M},{N},...) needs {M - 1} column shifts")
    # column 0 is unshifted; rational shifts fold onto the unit generator,
    # floats are declared as independent irrational generators
    gens = [1.0]
    gen_index = {}
    cooked = []
    for a in shifts:
        if isinstance(a, (int, Fraction)) or (isinstance(a, float) and a == int(a)):
            cooked.append(Fraction(a))
        else:
            key = float(a)
            if key not in gen_index:
                gen_index[key] = len(gens)
                gens.append(key)
            cooked.append(gen_index[key])
    basis = FrequencyBasis(generators=tuple(gens))
    m = basis.size
    expansion = Expansion.diagonal([M, N], basis)
    unit = tuple(basis.unit_coeffs() for _ in range(2))
    tile = Prototile(label="square", edges=unit)

    def pos(mx: int, ny, shift) -> ExponentVector:
        c1 = [Fraction(0)] * m
        c1[0] = Fraction(mx)
        c2 = [Fraction(0)] * m
        c2[0] = Fraction(ny)
        if isinstance(shift, Fraction):
            c2[0] += shift
        elif shift:
            c2[shift] += 1
        return ExponentVector.from_coeffs([c1, c2])

    cells = []
    for mx in range(M):
        shift = Fraction(0) if mx == 0 else cooked[mx - 1]
        for ny in range(N):
            cells.append(pos(mx, ny, shift))
    rule = InflationRule(
        dimension=2,
        basis=basis,
        expansion=expansion,
        prototiles=(tile,),
        displacements=(((tuple(cells),),)),
        name=f"staggered({M},{N},{[float(Fraction(a)) if isinstance(a, (int, Fraction)) else float(a) for a in shifts]})",
    )
    return CatalogueEntry(
        name=rule.name,
        rule=rule,
        notes="single-square block rule with vertically staggered columns",
        metadata={"M": M, "N": N, "shifts": [float(a) for a in shifts]},
    )


def _frank_robinson() -> CatalogueEntry:
    lam = (1 + np.sqrt(13)) / 2
    basis = FrequencyBasis(
        generators=(1.0, lam),
        multipliers={"lam": [[0, 3], [1, 1]]},
        minpolys={1: (-3, -1, 1)},
    )
    expansion = Expansion.diagonal(("lam", "lam"), basis)
    one = (Fraction(1), Fraction(0))
    lamc = (Fraction(0), Fraction(1))
    tiles = (
        Prototile(label="large", edges=(lamc, lamc)),
        Prototile(label="wide", edges=(lamc, one)),
        Prototile(label="tall", edges=(one, lamc)),
        Prototile(label="small", edges=(one, one)),
    )

    def p(x1, y1=0, x2=0, y2=0) -> ExponentVector:
        # position (x1 + y1*lam, x2 + y2*lam)
        return ExponentVector.from_coeffs([[x1, y1], [x2, y2]])

    empty = ()
    T = [
        # positions of 'large' inside each inflated tile
        ((p(2, 0, 2, 0),), (p(0),), (p(0),), (p(0),)),
        # 'wide' (lam x 1)
        (
            (p(2, 0, 0, 0), p(2, 0, 1, 0), p(0, 0, 2, 1)),
            empty,
            (p(0, 0, 0, 1), p(0, 0, 1, 1), p(0, 0, 2, 1)),
            empty,
        ),
        # 'tall' (1 x lam)
        (
            (p(0, 0, 2, 0), p(1, 0, 2, 0), p(2, 1, 0, 0)),
            (p(0, 1), p(1, 1), p(2, 1)),
            empty,
            empty,
        ),
        # 'small' (1 x 1)
        (
            (
                p(0),
                p(1),
                p(0, 0, 1, 0),
                p(1, 0, 1, 0),
                p(2, 1, 0, 1),
                p(0, 1, 2, 1),
                p(1, 1, 2, 1),
                p(2, 1, 1, 1),
                p(2, 1, 2, 1),
            ),
            empty,
            empty,
            empty,
        ),
    ]
    rule = InflationRule(
        dimension=2,
        basis=basis,
        expansion=expansion,
        prototiles=tiles,
        displacements=tuple(tuple(row) for row in T),
        name="frank-robinson",
    )
    report = validate_stone_inflation(rule)
    assert report.ok, report
    return CatalogueEntry(
        name="frank-robinson",
        rule=rule,
        notes=(
            "square/rectangle inflation with multiplier (1+sqrt(13))/2; the "
            "rectangle orientation assignment follows the row order of the "
            "Fourier matrix and passes the exact-subdivision validator"
        ),
        metadata={"lambda": lam},
    )


_STAGGERED_RE = re.compile(r"^staggered\(\s*(\d+)\s*,\s*(\d+)\s*,\s*\[(.*)\]\s*\)$")


def builtin(name: str) -> CatalogueEntry:
    """Fully populated catalogue entry by name.

    Names: fibonacci, abcd, block-fig1, frank-robinson, and
    staggered(M,N,[a1,...]) with arbitrary real column shifts.
    """
    key = name.strip()
    if key == "fibonacci":
        return _fibonacci()
    if key == "abcd":
        return _abcd()
    if key == "block-fig1":
        return _block_fig1()
    if key == "frank-robinson":
        return _frank_robinson()
    m = _STAGGERED_RE.match(key)
    if m:
        M, N = int(m.group(1)), int(m.group(2))
        body = m.group(3).strip()
        shifts = []
        if body:
            for tok in body.split(","):
                tok = tok.strip()
                if "/" in tok:
                    shifts.append(Fraction(tok))
                else:
                    val = float(tok)
                    shifts.append(int(val) if val == int(val) else val)
        return _staggered(M, N, shifts)
    raise KeyError(f"unknown builtin rule {name!r}; available: {builtin_names()}")
