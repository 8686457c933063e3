"""Substitution/inflation rules: matrices, PF data, patches, validation.

An InflationRule holds L prototiles (axis-aligned boxes with edge lengths
expressed over the frequency basis), an expansive map Q, and the set-valued
displacement matrix T whose entry T[i][j] lists the control-point positions
of tile i inside the inflated tile Q(t_j).  Control points are lower-left
corners; 1D rules use left endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .trigpoly import Expansion, ExponentVector, FrequencyBasis, RATIONAL_BASIS

__all__ = [
    "SubstitutionRule1D",
    "Prototile",
    "InflationRule",
    "PFData",
    "Patch",
    "StoneValidationReport",
    "substitution_matrix_1d",
    "pf_data",
    "realize_1d",
    "compose_1d",
    "validate_stone_inflation",
    "inflate_patch",
]


@dataclass(frozen=True)
class SubstitutionRule1D:
    """Symbolic substitution on letters 0..L-1; images are index tuples."""

    images: tuple

    def __post_init__(self):
        imgs = tuple(tuple(int(a) for a in w) for w in self.images)
        object.__setattr__(self, "images", imgs)
        L = len(imgs)
        if any(len(w) == 0 for w in imgs):
            raise ValueError("substitution images must be nonempty")
        if any(a < 0 or a >= L for w in imgs for a in w):
            raise ValueError("image letters out of range")

    @property
    def alphabet_size(self) -> int:
        return len(self.images)

    @staticmethod
    def from_words(words: Sequence[str], alphabet: str = None) -> "SubstitutionRule1D":
        if alphabet is None:
            alphabet = "".join(sorted(set("".join(words))))
        index = {ch: i for i, ch in enumerate(alphabet)}
        return SubstitutionRule1D(tuple(tuple(index[ch] for ch in w) for w in words))


def substitution_matrix_1d(rule: SubstitutionRule1D) -> np.ndarray:
    """M[i][j] = number of occurrences of letter i in the image of letter j."""
    L = rule.alphabet_size
    M = np.zeros((L, L), dtype=np.int64)
    for j, word in enumerate(rule.images):
        for a in word:
            M[a, j] += 1
    return M


def compose_1d(outer: SubstitutionRule1D, inner: SubstitutionRule1D) -> SubstitutionRule1D:
    """outer then inner applied letterwise: (inner o outer)(a) = inner(outer(a))."""
    return SubstitutionRule1D(
        tuple(
            tuple(b for a in word for b in inner.images[a]) for word in outer.images
        )
    )


@dataclass(frozen=True)
class Prototile:
    """Axis-aligned box prototile; edges are coefficient vectors over the basis."""

    label: str
    edges: tuple  # tuple[Coeffs, ...], one per dimension

    def volume(self, basis: FrequencyBasis) -> float:
        v = 1.0
        for e in self.edges:
            v *= basis.real_value(e)
        return v

    def edge_values(self, basis: FrequencyBasis) -> np.ndarray:
        return np.array([basis.real_value(e) for e in self.edges], dtype=float)


@dataclass(frozen=True)
class InflationRule:
    """Geometric inflation rule with exact displacement data."""

    dimension: int
    basis: FrequencyBasis
    expansion: Expansion
    prototiles: tuple
    displacements: tuple  # L x L nested tuples of ExponentVector
    name: str = ""
    symbolic: Optional[SubstitutionRule1D] = None
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def n_tiles(self) -> int:
        return len(self.prototiles)

    def substitution_matrix(self) -> np.ndarray:
        L = self.n_tiles
        M = np.zeros((L, L), dtype=np.int64)
        for i in range(L):
            for j in range(L):
                M[i, j] = len(self.displacements[i][j])
        return M

    def max_displacement(self) -> float:
        """Largest Chebyshev norm of any displacement entry."""
        worst = 0.0
        for row in self.displacements:
            for cell in row:
                for t in cell:
                    worst = max(
                        worst, max(abs(v) for v in t.real_value(self.basis))
                    )
        return worst

    def tile_volumes(self) -> np.ndarray:
        return np.array([p.volume(self.basis) for p in self.prototiles], dtype=float)


@dataclass(frozen=True)
class PFData:
    """Perron-Frobenius data of a primitive nonnegative matrix."""

    pf_eigenvalue: float
    frequencies: np.ndarray  # right eigenvector, normalized to sum 1
    lengths: np.ndarray  # left eigenvector, normalized to min entry 1
    spectrum: np.ndarray  # all eigenvalues, by decreasing modulus
    residual: float


def _primitivity_exponent(M: np.ndarray) -> Optional[int]:
    """Smallest p <= (L-1)^2 + 1 with M^p > 0, or None if not primitive."""
    L = M.shape[0]
    bound = L * L - 2 * L + 2 if L > 1 else 1
    B = (M > 0).astype(np.int64)
    P = B.copy()
    for p in range(1, bound + 1):
        if np.all(P > 0):
            return p
        P = np.minimum(P @ B, 1)
    return 1 if L == 1 and np.all(B > 0) else (None if not np.all(P > 0) else bound + 1)


def pf_data(M: np.ndarray, residual_tol: float = 1e-10) -> PFData:
    """Dominant eigendata of a primitive matrix, with residual check."""
    M = np.asarray(M, dtype=float)
    if _primitivity_exponent(M) is None:
        B = (M > 0).astype(np.int64)
        L = M.shape[0]
        P = np.linalg.matrix_power(np.minimum(B + np.eye(L, dtype=np.int64), 1), L) @ B
        zeros = np.argwhere(np.linalg.matrix_power(B, max(L * L - 2 * L + 2, 1)) == 0)
        pair = tuple(int(x) for x in zeros[0]) if len(zeros) else (0, 0)
        raise ValueError(
            f"matrix is not primitive: no power reaches entry {pair} "
            f"within exponent {L * L - 2 * L + 2}"
        )
    vals, vecs = np.linalg.eig(M)
    order = np.argsort(-np.abs(vals))
    vals, vecs = vals[order], vecs[:, order]
    lam = vals[0].real
    right = np.abs(vecs[:, 0].real)
    right = right / right.sum()
    lvals, lvecs = np.linalg.eig(M.T)
    lorder = np.argsort(-np.abs(lvals))
    left = np.abs(lvecs[:, lorder[0]].real)
    left = left / left.min()
    residual = max(
        float(np.linalg.norm(M @ right - lam * right)),
        float(np.linalg.norm(M.T @ left - lam * left)),
    )
    if residual >= residual_tol * max(1.0, lam):
        raise ArithmeticError(f"eigen residual {residual:g} above tolerance")
    return PFData(
        pf_eigenvalue=float(lam),
        frequencies=right,
        lengths=left,
        spectrum=vals,
        residual=residual,
    )


def realize_1d(
    rule: SubstitutionRule1D,
    basis: FrequencyBasis = RATIONAL_BASIS,
    lengths: Sequence = None,
    expansion_factor=None,
    name: str = "",
    labels: Sequence[str] = None,
) -> InflationRule:
    """Geometric realization on intervals of natural length.

    ``lengths`` gives exact coefficient vectors over the basis for each
    letter (defaults to the unit generator for all letters, the
    constant-length case).  Tiles are placed left to right; T[i][j] collects
    left-endpoint offsets of the i-intervals inside the inflated j-interval.
    """
    M = substitution_matrix_1d(rule)
    pf = pf_data(M)
    L = rule.alphabet_size
    if lengths is None:
        lengths = [basis.unit_coeffs() for _ in range(L)]
        if not np.allclose(pf.lengths, 1.0, atol=1e-9):
            raise ValueError("natural lengths are not constant; pass exact lengths")
    lengths = [basis.coeffs(v) if not isinstance(v, tuple) else v for v in lengths]
    numeric = np.array([basis.real_value(v) for v in lengths])
    scaled = pf.lengths * (numeric.min() / pf.lengths.min())
    if not np.allclose(numeric, scaled * (numeric[0] / scaled[0]), rtol=1e-9):
        raise ValueError("given lengths do not match the left PF eigenvector ratios")
    if expansion_factor is None:
        lam = pf.pf_eigenvalue
        if abs(lam - round(lam)) > 1e-9:
            raise ValueError(
                "non-integer inflation multiplier: pass expansion_factor "
                "(a registered basis multiplier name or rational)"
            )
        expansion_factor = int(round(lam))
    expansion = Expansion.diagonal((expansion_factor,), basis)

    T: List[List[List[ExponentVector]]] = [[[] for _ in range(L)] for _ in range(L)]
    for j, word in enumerate(rule.images):
        offset = (Fraction(0),) * basis.size
        for a in word:
            T[a][j].append(ExponentVector((offset,)))
            offset = tuple(x + y for x, y in zip(offset, lengths[a]))
        # the accumulated length must equal Q applied to the j-length
        target = basis.scale_coeffs(expansion_factor, lengths[j])
        if tuple(offset) != tuple(target):
            raise ValueError(
                f"image of letter {j} has length {offset}, expected {tuple(target)}"
            )
    tiles = tuple(
        Prototile(
            label=(labels[i] if labels else chr(ord("a") + i)),
            edges=(lengths[i],),
        )
        for i in range(L)
    )
    return InflationRule(
        dimension=1,
        basis=basis,
        expansion=expansion,
        prototiles=tiles,
        displacements=tuple(
            tuple(tuple(cell) for cell in row) for row in T
        ),
        name=name,
        symbolic=rule,
    )


@dataclass
class StoneValidationReport:
    ok: bool
    volume_errors: list
    overlaps: list
    containment_errors: list
    primitive: bool
    pf_eigenvalue: float

    def __bool__(self):
        return self.ok


def validate_stone_inflation(rule: InflationRule, tol: float = 1e-9) -> StoneValidationReport:
    """Check the exact-subdivision property of a stone inflation.

    Per column j: the inflated tile volume must equal the summed volumes of
    the placed tiles, placed tiles must lie inside Q(t_j), and their
    interiors must be pairwise disjoint.  Box shapes only; failures are
    reported, not raised.
    """
    basis = rule.basis
    vols = rule.tile_volumes()
    detq = abs(rule.expansion.det())
    Q = rule.expansion.as_array()
    volume_errors = []
    overlaps = []
    containment = []
    for j, tile in enumerate(rule.prototiles):
        placed = []
        total = 0.0
        for i in range(rule.n_tiles):
            for t in rule.displacements[i][j]:
                lo = np.array(t.real_value(basis))
                hi = lo + rule.prototiles[i].edge_values(basis)
                placed.append((i, lo, hi))
                total += vols[i]
        target = detq * vols[j]
        if abs(total - target) > tol * max(1.0, target):
            volume_errors.append((j, total, target))
        sup_hi = Q @ tile.edge_values(basis)
        for idx, (i, lo, hi) in enumerate(placed):
            if np.any(lo < -tol) or np.any(hi > sup_hi + tol):
                containment.append((j, i, tuple(lo)))
            for i2, lo2, hi2 in placed[idx + 1 :]:
                if np.all(np.minimum(hi, hi2) - np.maximum(lo, lo2) > tol):
                    overlaps.append((j, (i, tuple(lo)), (i2, tuple(lo2))))
    M = rule.substitution_matrix()
    primitive = _primitivity_exponent(M) is not None
    lam = pf_data(M).pf_eigenvalue if primitive else float("nan")
    ok = primitive and not volume_errors and not overlaps and not containment
    return StoneValidationReport(
        ok=ok,
        volume_errors=volume_errors,
        overlaps=overlaps,
        containment_errors=containment,
        primitive=primitive,
        pf_eigenvalue=lam,
    )


@dataclass
class Patch:
    """Finite patch of placed tiles with exact integer module coordinates.

    ``coords[n]`` flattens the per-coordinate coefficient vectors of tile
    n's control point (layout: coordinate j occupies columns j*m..(j+1)*m).
    """

    rule: InflationRule
    types: np.ndarray
    coords: np.ndarray
    level: int
    seed_type: int

    def __len__(self):
        return len(self.types)

    def positions(self) -> np.ndarray:
        """(n, d) float control-point positions."""
        m = self.rule.basis.size
        d = self.rule.dimension
        gens = np.array(self.rule.basis.generators)
        out = np.empty((len(self.types), d), dtype=float)
        for j in range(d):
            out[:, j] = self.coords[:, j * m : (j + 1) * m] @ gens
        return out

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        """Exact box of the level-n supertile: [0, Q^n . edges(seed)]."""
        d = self.rule.dimension
        Q = self.rule.expansion.as_array()
        edges = self.rule.prototiles[self.seed_type].edge_values(self.rule.basis)
        hi = np.linalg.matrix_power(Q, self.level) @ edges
        return np.zeros(d), hi

    def type_counts(self) -> np.ndarray:
        return np.bincount(self.types, minlength=self.rule.n_tiles)


def inflate_patch(rule: InflationRule, seed_type: int = 0, level: int = 1) -> Patch:
    """Level-n supertile patch; tile counts per type equal columns of M^n."""
    basis = rule.basis
    m = basis.size
    d = rule.dimension
    KQ = rule.expansion.coefficient_action(basis)
    # displacement entries as flattened integer rows, grouped by source type
    disp: List[List[Tuple[int, np.ndarray]]] = [[] for _ in range(rule.n_tiles)]
    for i in range(rule.n_tiles):
        for j in range(rule.n_tiles):
            for t in rule.displacements[i][j]:
                if not t.is_integral():
                    raise ValueError("patch generation needs integral displacement coordinates")
                disp[j].append((i, np.array([int(x) for x in t.flatten()], dtype=np.int64)))
    M = rule.substitution_matrix()
    expected = int(np.linalg.matrix_power(M, level)[:, seed_type].sum())
    if expected > 5 * 10**7:
        raise MemoryError(f"patch would contain {expected} tiles")
    types = np.array([seed_type], dtype=np.int64)
    coords = np.zeros((1, d * m), dtype=np.int64)
    for _ in range(level):
        new_types = []
        new_coords = []
        scaled = coords @ KQ.T
        for j in range(rule.n_tiles):
            sel = scaled[types == j]
            if len(sel) == 0:
                continue
            for i, r in disp[j]:
                new_types.append(np.full(len(sel), i, dtype=np.int64))
                new_coords.append(sel + r)
        types = np.concatenate(new_types)
        coords = np.concatenate(new_coords)
    return Patch(rule=rule, types=types, coords=coords, level=level, seed_type=seed_type)
