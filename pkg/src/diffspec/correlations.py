"""Empirical pair correlations and the exact renormalisation identity.

Pair correlations are counted on a level-n supertile patch with both
endpoints of a pair restricted to a window eroded by the counting range
(van Hove guard); raw counts are then exactly symmetric under
(i, j, z) -> (j, i, -z).  Displacements are binned by their exact integer
module coordinates, never by floats, so "equal displacement" is well
defined even for rules of infinite local complexity.  Each count is
normalized by the number of patch points whose translate by z stays in the
window, which removes the first-order boundary bias.

The renormalisation identity evaluated here:

    nu_ij(z) = (1/|det Q|) * sum_{m,n} sum_{r in T_im} sum_{s in T_jn}
               nu_mn(Q^{-1}(z + r - s))

Its right-hand side is best read off the level-(n-1) patch of the same
rule (the parents), which realizes the parent-child pair correspondence
exactly up to boundary terms; rules whose substitution matrix has a large
second eigenvalue (type-count fluctuations of order N^alpha) need this to
beat the fluctuation floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .inflation import InflationRule, Patch, inflate_patch
from .sampling import DEFAULT_SEED, spawn_rng
from .trigpoly import ExponentVector

__all__ = [
    "PairCorrelation",
    "empirical_pair_correlation",
    "renormalisation_residual",
    "renormalisation_check",
    "ResidualReport",
]


@dataclass
class PairCorrelation:
    """Raw symmetric pair counts over exact displacements."""

    rule: InflationRule
    counts: Dict  # (i, j, coeff-tuple) -> int
    window_coords: np.ndarray  # integer coords of patch points in the window
    window_lo: np.ndarray
    window_hi: np.ndarray
    max_range: float
    patch_level: int
    _denoms: Dict = field(default_factory=dict, repr=False)

    @property
    def window_count(self) -> int:
        return len(self.window_coords)

    def _coeff_to_spatial(self, key: Tuple) -> np.ndarray:
        basis = self.rule.basis
        m = basis.size
        d = self.rule.dimension
        gens = np.array(basis.generators)
        vec = np.array([float(x) for x in key], dtype=float)
        return np.array([vec[j * m : (j + 1) * m] @ gens for j in range(d)])

    def _spatial_window_points(self) -> np.ndarray:
        if not hasattr(self, "_spatial_cache"):
            basis = self.rule.basis
            m = basis.size
            d = self.rule.dimension
            gens = np.array(basis.generators)
            pts = np.empty((len(self.window_coords), d))
            for j in range(d):
                pts[:, j] = self.window_coords[:, j * m : (j + 1) * m] @ gens
            self._spatial_cache = pts
        return self._spatial_cache

    def denominator(self, key: Tuple) -> int:
        """Number of window points x with x + z still inside the window."""
        if key in self._denoms:
            return self._denoms[key]
        z = self._coeff_to_spatial(key)
        pts = self._spatial_window_points()
        shifted = pts + z[None, :]
        ok = np.all(
            (shifted >= self.window_lo[None, :] - 1e-9)
            & (shifted <= self.window_hi[None, :] + 1e-9),
            axis=1,
        )
        denom = int(np.count_nonzero(ok))
        self._denoms[key] = denom
        return denom

    def value(self, i: int, j: int, displacement) -> float:
        """nu_ij(z); zero off the counted support."""
        key = _as_key(displacement)
        c = self.counts.get((i, j, key), 0)
        if c == 0:
            return 0.0
        denom = self.denominator(key)
        return c / denom if denom else 0.0

    def support(self) -> Iterable[Tuple]:
        return self.counts.keys()

    def type_frequencies(self) -> np.ndarray:
        """nu_ii(0) per type; these sum to one exactly."""
        L = self.rule.n_tiles
        zero = (0,) * self.window_coords.shape[1]
        return np.array(
            [self.counts.get((i, i, zero), 0) / self.window_count for i in range(L)]
        )

    def to_rows(self) -> List[tuple]:
        """(i, j, coeff-key, spatial-z, value) rows sorted for stable export."""
        rows = []
        for (i, j, key) in sorted(self.counts):
            z = self._coeff_to_spatial(key)
            rows.append((i, j, key, tuple(float(v) for v in z), self.value(i, j, key)))
        return rows


def _as_key(displacement) -> Tuple:
    if isinstance(displacement, tuple):
        return displacement
    if isinstance(displacement, ExponentVector):
        return tuple(int(x) for x in displacement.flatten())
    return tuple(int(x) for x in np.asarray(displacement).ravel())


def _window_mask(positions: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.all(
        (positions >= lo[None, :] - 1e-9) & (positions <= hi[None, :] + 1e-9), axis=1
    )


def empirical_pair_correlation(
    patch: Patch, max_range: float, grid_threshold: int = 40000
) -> PairCorrelation:
    """Count type pairs by exact displacement within the eroded window.

    ``max_range`` is a Chebyshev radius and must not exceed half the patch
    inradius.  Large integer-coordinate patches are counted on a dense
    occupancy grid with array shifts (after projecting out affinely
    dependent coordinate columns); smaller patches go through bucketed
    neighbour search.
    """
    rule = patch.rule
    lo_box, hi_box = patch.bounding_box()
    inradius = float(np.min(hi_box - lo_box)) / 2.0
    if max_range > inradius / 2.0 + 1e-9:
        raise ValueError(
            f"range {max_range} exceeds half the patch inradius {inradius / 2:.3f}"
        )
    lo = lo_box + max_range
    hi = hi_box - max_range
    positions = patch.positions()
    in_window = _window_mask(positions, lo, hi)
    window_coords = patch.coords[in_window]

    grid = None
    if len(patch) > grid_threshold:
        grid = _grid_reduction(patch)
    if grid is None:
        counts, denoms = _count_by_buckets(patch, positions, in_window, max_range)
    else:
        counts, denoms = _count_on_grid(patch, in_window, max_range, grid)
    corr = PairCorrelation(
        rule=rule,
        counts=counts,
        window_coords=window_coords,
        window_lo=lo,
        window_hi=hi,
        max_range=max_range,
        patch_level=patch.level,
    )
    corr._denoms.update(denoms)
    return corr


# -- bucketed neighbour search ------------------------------------------------


def _count_by_buckets(
    patch: Patch, positions: np.ndarray, in_window: np.ndarray, max_range: float
) -> tuple:
    rule = patch.rule
    cell = max(max_range, 1e-9)
    keys = np.floor(positions / cell).astype(np.int64)
    buckets: Dict[Tuple, list] = {}
    for idx in np.nonzero(in_window)[0]:
        buckets.setdefault(tuple(keys[idx]), []).append(int(idx))
    bucket_arrays = {k: np.array(v, dtype=np.int64) for k, v in buckets.items()}
    d = rule.dimension
    offsets = [np.array(o) - 1 for o in np.ndindex(*(3,) * d)]
    counts: Dict = {}
    coords = patch.coords
    types = patch.types
    win_idx = np.nonzero(in_window)[0]
    for a in win_idx:
        base = keys[a]
        cands = [
            bucket_arrays[t]
            for off in offsets
            if (t := tuple(base + off)) in bucket_arrays
        ]
        if not cands:
            continue
        cand = np.concatenate(cands)
        ok = np.max(np.abs(positions[cand] - positions[a][None, :]), axis=1) <= max_range + 1e-9
        sel = cand[ok]
        dt = coords[sel] - coords[a][None, :]
        ta = int(types[a])
        tb = types[sel]
        for row, t2 in zip(dt, tb):
            key = (ta, int(t2), tuple(int(x) for x in row))
            counts[key] = counts.get(key, 0) + 1
    return counts, {}


# -- dense-grid counting -------------------------------------------------------


@dataclass
class _GridReduction:
    pivots: np.ndarray  # indices of independent coordinate columns
    dep_num: np.ndarray  # integer dependency numerators, shape (n_cols, n_piv)
    dep_den: np.ndarray  # per-column denominators
    origin: np.ndarray  # coords of the reference point


def _grid_reduction(patch: Patch) -> Optional[_GridReduction]:
    """Select independent integer coordinate columns and express the rest.

    Returns None when the reduced grid would still be too large; counting
    then falls back to bucket search.
    """
    coords = patch.coords
    origin = coords[0].copy()
    D = coords - origin[None, :]
    n_cols = D.shape[1]
    sample = D[np.unique(np.linspace(0, len(D) - 1, min(len(D), 512)).astype(int))]
    pivots: List[int] = []
    deps: Dict[int, Dict[int, Fraction]] = {}
    basis_rows: List[List[Fraction]] = []  # echelon over the pivot columns
    for col in range(n_cols):
        vec = [Fraction(int(x)) for x in sample[:, col]]
        # reduce against current pivots
        coeffs = {}
        work = vec[:]
        for p_idx, p in enumerate(pivots):
            pv = basis_rows[p_idx]
            # find pivot position of pv
            pos = next((t for t, v in enumerate(pv) if v != 0), None)
            if pos is None or work[pos] == 0:
                continue
            f = work[pos] / pv[pos]
            work = [w - f * v for w, v in zip(work, pv)]
            coeffs[p] = f
        if any(w != 0 for w in work):
            pivots.append(col)
            basis_rows.append(vec)
        else:
            deps[col] = coeffs
    # verify dependencies exactly on the full data
    dep_num = np.zeros((n_cols, len(pivots)), dtype=np.int64)
    dep_den = np.ones(n_cols, dtype=np.int64)
    for col in range(n_cols):
        if col in deps:
            den = 1
            for f in deps[col].values():
                den = den * f.denominator // math.gcd(den, f.denominator)
            dep_den[col] = den
            for p, f in deps[col].items():
                dep_num[col, pivots.index(p)] = int(f * den)
            lhs = D[:, col].astype(np.int64) * den
            rhs = D[:, pivots] @ dep_num[col]
            if not np.array_equal(lhs, rhs):
                return None  # sampled dependency fails globally
        else:
            dep_num[col, pivots.index(col)] = 1
    piv = np.array(pivots, dtype=np.int64)
    spans = D[:, piv].max(axis=0) - D[:, piv].min(axis=0) + 1
    cells = int(np.prod(spans.astype(np.float64)))
    if cells > 60_000_000:
        return None
    return _GridReduction(pivots=piv, dep_num=dep_num, dep_den=dep_den, origin=origin)


def _displacement_candidates(
    rule: InflationRule, grid: _GridReduction, spans: np.ndarray, max_range: float
) -> tuple:
    """Pivot-displacement vectors whose spatial Chebyshev norm fits the range.

    Interval propagation on the linear map pivot-coords -> spatial coords
    keeps the enumeration box tight before the exact filter.
    """
    basis = rule.basis
    m = basis.size
    d = rule.dimension
    gens = np.array(basis.generators)
    n_piv = len(grid.pivots)
    # spatial_j = sum_c A[j, c] * delta_c over pivot displacements
    A = np.zeros((d, n_piv))
    for c in range(grid.dep_num.shape[0]):
        j = c // m
        g = gens[c % m]
        A[j] += g * grid.dep_num[c] / grid.dep_den[c]
    lohi = np.stack([-(spans - 1).astype(float), (spans - 1).astype(float)], axis=1)
    for _ in range(4):
        for j in range(d):
            for c in range(n_piv):
                if A[j, c] == 0:
                    continue
                rest_lo, rest_hi = 0.0, 0.0
                for c2 in range(n_piv):
                    if c2 == c:
                        continue
                    a, b = A[j, c2] * lohi[c2]
                    rest_lo += min(a, b)
                    rest_hi += max(a, b)
                bound_lo = (-max_range - rest_hi) / A[j, c]
                bound_hi = (max_range - rest_lo) / A[j, c]
                if bound_lo > bound_hi:
                    bound_lo, bound_hi = bound_hi, bound_lo
                lohi[c, 0] = max(lohi[c, 0], math.floor(bound_lo))
                lohi[c, 1] = min(lohi[c, 1], math.ceil(bound_hi))
    ranges = [np.arange(int(lo), int(hi) + 1) for lo, hi in lohi]
    total = 1
    for r in ranges:
        total *= len(r)
        if total > 20_000_000:
            raise MemoryError("displacement enumeration box too large")
    mesh = np.meshgrid(*ranges, indexing="ij")
    disp = np.stack([g.ravel() for g in mesh], axis=1)
    spatial = disp @ A.T
    keep = np.max(np.abs(spatial), axis=1) <= max_range + 1e-9
    return disp[keep], spatial[keep]


def _count_on_grid(
    patch: Patch, in_window: np.ndarray, max_range: float, grid: _GridReduction
) -> tuple:
    rule = patch.rule
    coords = patch.coords
    piv_coords = coords[:, grid.pivots] - grid.origin[None, grid.pivots]
    lo_c = piv_coords.min(axis=0)
    piv_coords = piv_coords - lo_c[None, :]
    spans = piv_coords.max(axis=0) + 1
    shape = tuple(int(s) for s in spans)
    grid_type = np.full(shape, -1, dtype=np.int8)
    grid_win = np.zeros(shape, dtype=bool)
    idx = tuple(piv_coords[:, c] for c in range(piv_coords.shape[1]))
    grid_type[idx] = patch.types
    grid_win[idx] = in_window
    if not np.all(grid_type >= 0):
        # grid has holes; window membership of a shifted cell is then not
        # equivalent to occupancy, fall back to exact search
        positions = patch.positions()
        return _count_by_buckets(patch, positions, in_window, max_range)

    disp, _spatial = _displacement_candidates(rule, grid, spans, max_range)
    L = rule.n_tiles
    counts: Dict = {}
    denoms: Dict = {}
    for vec in disp:
        sl = _slice_pair(shape, vec)
        if sl is None:
            continue
        s_from, s_to = sl
        w = grid_win[s_from] & grid_win[s_to]
        n_both = int(np.count_nonzero(w))
        if n_both == 0:
            continue
        # full displacement key from the pivot displacement
        num = grid.dep_num @ vec
        if np.any(num % grid.dep_den != 0):
            continue
        key_tail = tuple(int(x) for x in num // grid.dep_den)
        denoms[key_tail] = n_both
        pair_code = (
            grid_type[s_from][w].astype(np.int16) * L + grid_type[s_to][w].astype(np.int16)
        )
        binc = np.bincount(pair_code, minlength=L * L)
        for code in np.nonzero(binc)[0]:
            counts[(int(code // L), int(code % L), key_tail)] = int(binc[code])
    return counts, denoms


def _slice_pair(shape, vec):
    """Index slices so that grid[s_from] and grid[s_to] pair cells x, x+vec."""
    s_from, s_to = [], []
    for n, v in zip(shape, vec):
        v = int(v)
        if abs(v) >= n:
            return None
        if v >= 0:
            s_from.append(slice(0, n - v))
            s_to.append(slice(v, n))
        else:
            s_from.append(slice(-v, n))
            s_to.append(slice(0, n + v))
    return tuple(s_from), tuple(s_to)


# -- renormalisation identity ------------------------------------------------


@dataclass
class ResidualReport:
    max_residual: float
    argmax_displacement: Optional[Tuple]
    n_checked: int
    lhs_range: float
    rhs_source: str

    def __float__(self):
        return self.max_residual


def _integer_inverse_action(rule: InflationRule) -> tuple:
    """(adjugate, det) of the integer coefficient action of Q, so that
    Q^{-1} v = adj @ v / det on flattened coefficient vectors."""
    K = rule.expansion.coefficient_action(rule.basis)
    det = int(round(np.linalg.det(K)))
    if det == 0:
        raise ValueError("expansion action is singular")
    adj = np.rint(np.linalg.inv(K) * det).astype(np.int64)
    if not np.array_equal(K @ adj, det * np.eye(len(K), dtype=np.int64)):
        raise ArithmeticError("adjugate reconstruction failed")
    return adj, det


def _difference_tables(rule: InflationRule) -> Dict:
    """Per (i, j): integer array of (m, n, r - s) rows over all r in T_im,
    s in T_jn; requires integral displacement coordinates."""
    L = rule.n_tiles
    width = rule.dimension * rule.basis.size
    flat = [
        [
            np.array(
                [[int(x) for x in t.flatten()] for t in rule.displacements[i][j]],
                dtype=np.int64,
            ).reshape(-1, width)
            for j in range(L)
        ]
        for i in range(L)
    ]
    tables = {}
    for i in range(L):
        for j in range(L):
            rows = []
            labels = []
            for mm in range(L):
                for nn in range(L):
                    R = flat[i][mm]
                    S = flat[j][nn]
                    if len(R) == 0 or len(S) == 0:
                        continue
                    diff = (R[:, None, :] - S[None, :, :]).reshape(-1, width)
                    rows.append(diff)
                    labels.extend([(mm, nn)] * len(diff))
            if rows:
                tables[(i, j)] = (np.concatenate(rows), labels)
            else:
                tables[(i, j)] = (np.zeros((0, width), dtype=np.int64), [])
    return tables


def renormalisation_residual(
    rule: InflationRule,
    correlation: PairCorrelation,
    parent_correlation: Optional[PairCorrelation] = None,
    lhs_range: Optional[float] = None,
    min_value: float = 1e-4,
    n_random: int = 100,
    seed: int = DEFAULT_SEED,
) -> ResidualReport:
    """Max |LHS - RHS| of the pair-correlation renormalisation identity.

    The RHS is evaluated on ``parent_correlation`` (the level-(n-1) patch
    of the same rule) when given, which realizes the parent-child pair
    correspondence exactly and leaves only boundary effects; without it,
    both sides read the same correlation.

    LHS displacements are all counted ones with value >= ``min_value``
    plus ``n_random`` random realized ones, restricted to the range for
    which the right-hand side arguments stay within the RHS support range.
    """
    det_q = abs(rule.expansion.det())
    rhs_corr = parent_correlation if parent_correlation is not None else correlation
    max_disp = rule.max_displacement()
    eigs = np.abs(np.linalg.eigvals(rule.expansion.as_array()))
    lam_min = float(eigs.min())
    r_rhs = rhs_corr.max_range
    if lhs_range is None:
        lhs_range = min(r_rhs * lam_min - 2 * max_disp, correlation.max_range)
        if lhs_range <= 0:
            raise ValueError("correlation range too small for any RHS evaluation")
    elif (lhs_range + 2 * max_disp) / lam_min > r_rhs + 1e-9:
        raise ValueError(
            f"need RHS correlation range >= {(lhs_range + 2 * max_disp) / lam_min:.3f} "
            f"to renormalise range {lhs_range}"
        )

    adj, det = _integer_inverse_action(rule)
    tables = _difference_tables(rule)

    eligible = []
    for (i, j, key) in correlation.counts:
        z = correlation._coeff_to_spatial(key)
        if np.max(np.abs(z)) > lhs_range + 1e-9:
            continue
        eligible.append((i, j, key))
    strong = [k for k in eligible if correlation.value(*k[:2], k[2]) >= min_value]
    rest = [k for k in eligible if correlation.value(*k[:2], k[2]) < min_value]
    rng = spawn_rng(seed, 17)
    extra = [rest[t] for t in rng.permutation(len(rest))[: min(n_random, len(rest))]]
    checked = strong + extra

    worst = 0.0
    worst_key = None
    adjT = adj.T
    absdet = abs(det)
    for i, j, key in checked:
        lhs = correlation.value(i, j, key)
        diffs, labels = tables[(i, j)]
        if len(diffs) == 0:
            rhs = 0.0
        else:
            V = diffs + np.asarray(key, dtype=np.int64)[None, :]
            W = V @ adjT
            ok = np.all(W % det == 0, axis=1) if det > 0 else np.all((-W) % absdet == 0, axis=1)
            rhs = 0.0
            for row_idx in np.nonzero(ok)[0]:
                akey = tuple(int(x) for x in W[row_idx] // det)
                mm, nn = labels[row_idx]
                rhs += rhs_corr.value(mm, nn, akey)
        rhs /= det_q
        res = abs(lhs - rhs)
        if res > worst:
            worst = res
            worst_key = (i, j, key)
    return ResidualReport(
        max_residual=worst,
        argmax_displacement=worst_key,
        n_checked=len(checked),
        lhs_range=float(lhs_range),
        rhs_source="parent" if parent_correlation is not None else "same-level",
    )


def renormalisation_check(
    rule: InflationRule,
    level: int,
    lhs_range: float,
    seed_type: int = 0,
    rhs: str = "auto",
    min_value: float = 1e-4,
    n_random: int = 100,
    seed: int = DEFAULT_SEED,
) -> ResidualReport:
    """Generate the needed patches and verify the identity at one level.

    ``rhs`` selects where the right-hand side is read from: "parent"
    (level n-1 patch), "same" (one correlation covering both ranges), or
    "auto", which uses the parent whenever its eroded window stays
    nonempty and falls back to same-level otherwise.
    """
    max_disp = rule.max_displacement()
    eigs = np.abs(np.linalg.eigvals(rule.expansion.as_array()))
    lam_min = float(eigs.min())
    rhs_range = (lhs_range + 2 * max_disp) / lam_min + 1e-9
    if rhs == "auto":
        parent = inflate_patch(rule, seed_type, level - 1)
        lo, hi = parent.bounding_box()
        rhs = "parent" if rhs_range <= float(np.min(hi - lo)) / 4.0 else "same"
    if rhs == "parent":
        patch = inflate_patch(rule, seed_type, level)
        parent = inflate_patch(rule, seed_type, level - 1)
        corr = empirical_pair_correlation(patch, lhs_range)
        pcorr = empirical_pair_correlation(parent, rhs_range)
        return renormalisation_residual(
            rule, corr, parent_correlation=pcorr, lhs_range=lhs_range,
            min_value=min_value, n_random=n_random, seed=seed,
        )
    patch = inflate_patch(rule, seed_type, level)
    corr = empirical_pair_correlation(patch, max(lhs_range, rhs_range))
    return renormalisation_residual(
        rule, corr, lhs_range=lhs_range,
        min_value=min_value, n_random=n_random, seed=seed,
    )
