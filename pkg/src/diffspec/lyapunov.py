"""Lyapunov exponents of the Fourier cocycle and the m_N bound ladder.

Two ladder conventions coexist, mirroring the two ways the bound is set up:

* ``frobenius``: entries are m_N = mahler(p_N) / (2N) with
  p_N = ||B^(N)||_F^2 a 1D trigonometric polynomial; these bound the
  exponent chi directly (the constant-length reduced-cocycle route).
* ``frobenius-squared``: entries are (1/N) * mean(log ||B^(N)||_F^2) over
  the lifted torus; these bound 2*chi (the general/quasiperiodic route).

A Verdict compares the best chi-bound with the threshold (1/2) log|det Q|;
absence of an absolutely continuous diffraction part follows when the bound
sits strictly below the threshold and det B(k) does not vanish identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional

import numpy as np

from .fourier import FourierMatrix, det_polynomial
from .inflation import InflationRule, pf_data
from .mahler import MahlerResult, mahler_univariate_auto
from .sampling import (
    DEFAULT_SEED,
    LOG_CLIP,
    RationalOrbit,
    lattice_points,
    spawn_rng,
)

__all__ = [
    "LyapunovEstimate",
    "BoundLadder",
    "Verdict",
    "birkhoff_exponent",
    "upper_bound_ladder",
    "frobenius_square_polynomial_1d",
    "singularity_verdict",
    "hermitian_rank_one_split",
]

RENORM_EVERY = 32


@dataclass
class LyapunovEstimate:
    value: float
    std_error: float
    sample_count: int
    iterations_per_sample: int
    seed: int
    per_sample: np.ndarray = field(default=None, repr=False)


@dataclass
class BoundLadder:
    """(N, value, error) rows under an explicit norm convention."""

    entries: List[tuple]
    convention: str  # "frobenius" -> bounds chi; "frobenius-squared" -> bounds 2*chi

    def chi_bounds(self) -> List[tuple]:
        s = 1.0 if self.convention == "frobenius" else 0.5
        return [(n, v * s, e * s) for n, v, e in self.entries]

    def best_chi_bound(self) -> tuple:
        return min(self.chi_bounds(), key=lambda row: row[1])

    def subadditivity_violation(self) -> float:
        """Worst violation of (M+N) m_{M+N} <= M m_M + N m_N beyond error bars."""
        vals = {n: (v, e) for n, v, e in self.entries}
        worst = 0.0
        for m in vals:
            for n in vals:
                if m + n in vals:
                    lhs, le = vals[m + n]
                    a, ae = vals[m]
                    b, be = vals[n]
                    gap = (m + n) * lhs - (m * a + n * b)
                    slack = (m + n) * le + m * ae + n * be
                    worst = max(worst, gap - slack)
        return worst


@dataclass
class Verdict:
    threshold: float
    bound: float
    bound_error: float
    convention: str
    conclusion: str  # singular-diffraction | inconclusive | inapplicable
    margin: float
    detail: str = ""


def _lifted_cocycle_logs(B: FourierMatrix, N: int):
    """Returns (n_vars, step_matrix, func) with func mapping (n, n_vars)
    torus points to log ||B^(N)(x)||_F^2 values, clipped at the floor."""
    lifted = B.lifted()
    K = lifted.lift_step
    tiny = math.exp(LOG_CLIP)

    def func(points: np.ndarray) -> np.ndarray:
        x = np.asarray(points, dtype=float)
        prod = lifted.evaluate_many(x)
        for _ in range(N - 1):
            x = np.mod(x @ K.T, 1.0)
            prod = prod @ lifted.evaluate_many(x)
        sq = np.sum(np.abs(prod) ** 2, axis=(1, 2))
        return np.log(np.maximum(sq, tiny))

    return lifted.n_variables, K, func


def birkhoff_exponent(
    B: FourierMatrix,
    k0=None,
    n_iterations: int = 2000,
    n_samples: int = 64,
    seed: int = DEFAULT_SEED,
) -> LyapunovEstimate:
    """(1/n) log ||B^(n)(k)||_F along exact torus orbits.

    With ``k0`` given, a single orbit is run from its lift (exact when the
    lift coordinates are rational, e.g. k0 = 0 or a unit-generator basis);
    otherwise ``n_samples`` starting points are drawn uniformly on the
    lifted torus with a counter-based stream per sample.  Running products
    are renormalized every few steps with the log factors accumulated.
    """
    lifted = B.lifted()
    K = lifted.lift_step
    nv = lifted.n_variables
    L = B.size
    if k0 is not None:
        k0 = np.atleast_1d(np.asarray(k0, dtype=float))
        fracs = [Fraction(float(g * kk)) for kk in k0 for g in B.basis.generators]
        den = math.lcm(*[f.denominator for f in fracs])
        orbits = [_orbit_from_numerators([int(f * den) % den for f in fracs], den, K)]
    else:
        orbits = [RationalOrbit(K, spawn_rng(seed, i)) for i in range(n_samples)]
    n_orb = len(orbits)
    logs = np.zeros(n_orb)
    prod = np.broadcast_to(np.eye(L, dtype=complex), (n_orb, L, L)).copy()
    for step in range(n_iterations):
        pts = np.array([o.point() for o in orbits])
        prod = prod @ lifted.evaluate_many(pts)
        for o in orbits:
            o.step()
        if (step + 1) % RENORM_EVERY == 0:
            norms = np.sqrt(np.sum(np.abs(prod) ** 2, axis=(1, 2)))
            if np.any(~np.isfinite(norms)) or np.any(norms == 0.0):
                raise ArithmeticError("cocycle product over/underflowed despite renormalization")
            logs += np.log(norms)
            prod /= norms[:, None, None]
    norms = np.sqrt(np.sum(np.abs(prod) ** 2, axis=(1, 2)))
    logs += np.log(norms)
    per_sample = logs / n_iterations
    value = float(per_sample.mean())
    err = (
        float(per_sample.std(ddof=1) / math.sqrt(n_orb)) if n_orb > 1 else 0.0
    )
    return LyapunovEstimate(
        value=value,
        std_error=err,
        sample_count=n_orb,
        iterations_per_sample=n_iterations,
        seed=seed,
        per_sample=per_sample,
    )


def _orbit_from_numerators(nums, den, K) -> RationalOrbit:
    orbit = RationalOrbit.__new__(RationalOrbit)
    orbit.K = [[int(x) for x in row] for row in np.asarray(K, dtype=np.int64)]
    orbit.dim = len(orbit.K)
    orbit.den = int(den)
    orbit.nums = [int(n) % int(den) for n in nums]
    return orbit


# -- symbolic 1D ladder ---------------------------------------------------


def _dense_entries_1d(B: FourierMatrix):
    """Entries as (offset, coeff array) Laurent pairs; requires d=1 and
    integer exponents over the unit generator."""
    out = []
    for row in B.entries:
        dense_row = []
        for p in row:
            lo, coeffs = p.laurent_coefficients()
            dense_row.append((lo, coeffs))
        out.append(dense_row)
    return out


def _upsample(pair, stride: int):
    lo, c = pair
    if stride == 1 or len(c) == 1:
        return (lo * stride, c)
    out = np.zeros((len(c) - 1) * stride + 1, dtype=complex)
    out[::stride] = c
    return (lo * stride, out)


def _dense_matmul(A, Bm):
    L = len(A)
    out = []
    for i in range(L):
        row = []
        for j in range(L):
            acc = None
            for l in range(L):
                lo = A[i][l][0] + Bm[l][j][0]
                c = np.convolve(A[i][l][1], Bm[l][j][1])
                if acc is None:
                    acc = (lo, c)
                else:
                    alo, ac = acc
                    nlo = min(alo, lo)
                    nhi = max(alo + len(ac), lo + len(c))
                    buf = np.zeros(nhi - nlo, dtype=complex)
                    buf[alo - nlo : alo - nlo + len(ac)] = ac
                    buf[lo - nlo : lo - nlo + len(c)] += c
                    acc = (nlo, buf)
            row.append(acc)
        out.append(row)
    return out


def frobenius_square_polynomial_1d(B: FourierMatrix, N: int) -> np.ndarray:
    """Coefficients of p_N = ||B^(N)||_F^2 for 1D integer-expansion rules.

    Returns the dense Laurent coefficient array (the symmetric centre is
    irrelevant for the Mahler measure).  Uses dense convolution arithmetic,
    which stays fast up to N ~ 14.
    """
    factors = B.expansion.factors
    if factors is None or len(factors) != 1:
        raise ValueError("symbolic ladder needs a 1D diagonal expansion")
    f = factors[0]
    if isinstance(f, str) or Fraction(f).denominator != 1:
        raise ValueError("symbolic ladder needs an integer expansion factor")
    q = int(Fraction(f))
    base = _dense_entries_1d(B)
    prod = base
    stride = 1
    for _ in range(N - 1):
        stride *= q
        shifted = [[_upsample(cell, stride) for cell in row] for row in base]
        prod = _dense_matmul(prod, shifted)
    width = max(len(cell[1]) for row in prod for cell in row)
    p = np.zeros(2 * width - 1, dtype=float)
    centre = width - 1
    for row in prod:
        for _, c in row:
            auto = np.convolve(c, np.conj(c[::-1]))
            h = len(c) - 1
            p[centre - h : centre + h + 1] += auto.real
    return p


def upper_bound_ladder(
    B: FourierMatrix,
    n_max: int,
    method: str = "auto",
    n_points: int = 2**16,
    n_shifts: int = 8,
    seed: int = DEFAULT_SEED,
    mahler_degree_cap: int = None,
) -> BoundLadder:
    """Ladder of mean-based upper bounds for N = 1..n_max.

    The symbolic route (1D rules with an integer expansion factor) computes
    m_N = mahler(p_N)/(2N), bounding chi; the quadrature route computes
    (1/N) mean(log ||B^(N)||_F^2) over the lifted torus, bounding 2*chi.
    """
    symbolic_ok = False
    if method in ("auto", "symbolic"):
        try:
            _dense_entries_1d(B)
            f = B.expansion.factors
            symbolic_ok = (
                f is not None
                and len(f) == 1
                and not isinstance(f[0], str)
                and Fraction(f[0]).denominator == 1
            )
        except ValueError:
            symbolic_ok = False
        if method == "symbolic" and not symbolic_ok:
            raise ValueError("rule does not admit the symbolic 1D ladder")
    if symbolic_ok and method in ("auto", "symbolic"):
        entries = []
        for N in range(1, n_max + 1):
            p = frobenius_square_polynomial_1d(B, N)
            if mahler_degree_cap is None:
                res = mahler_univariate_auto(p)
            else:
                res = mahler_univariate_auto(p, degree_cap=mahler_degree_cap)
            entries.append((N, res.value / (2 * N), res.error_estimate / (2 * N) + 5e-5))
        return BoundLadder(entries=entries, convention="frobenius")

    entries = []
    rng = spawn_rng(seed, 211)
    for N in range(1, n_max + 1):
        nv, _, func = _lifted_cocycle_logs(B, N)
        means = []
        for _ in range(n_shifts):
            shift = rng.random(nv)
            means.append(float(np.mean(func(lattice_points(n_points, nv, shift)))))
        value = float(np.mean(means)) / N
        err = (
            float(np.std(means, ddof=1) / math.sqrt(n_shifts)) / N
            if n_shifts > 1
            else 0.0
        )
        entries.append((N, value, err))
    return BoundLadder(entries=entries, convention="frobenius-squared")


def upper_bound_birkhoff(
    B: FourierMatrix,
    N: int,
    n_orbits: int = 24,
    n_steps: int = 4096,
    seed: int = DEFAULT_SEED,
) -> tuple:
    """(value, error) Birkhoff estimate of (1/N) mean(log ||B^(N)||_F^2)."""
    nv, K, func = _lifted_cocycle_logs(B, N)
    orbits = [RationalOrbit(K, spawn_rng(seed, 1000 + i)) for i in range(n_orbits)]
    sums = np.zeros(n_orbits)
    for _ in range(n_steps):
        pts = np.array([o.point() for o in orbits])
        sums += func(pts)
        for o in orbits:
            o.step()
    means = sums / n_steps / N
    value = float(means.mean())
    err = float(means.std(ddof=1) / math.sqrt(n_orbits)) if n_orbits > 1 else 0.0
    return value, err


# -- verdicts ---------------------------------------------------------------


def _det_vanishes_identically(B: FourierMatrix, seed: int = DEFAULT_SEED) -> bool:
    try:
        det = det_polynomial(B)
        return len(det.terms) == 0
    except ValueError:
        rng = spawn_rng(seed, 5)
        for _ in range(8):
            k = rng.random(B.dimension)
            if abs(np.linalg.det(B.evaluate(k))) > 1e-9:
                return False
        return True


def singularity_verdict(
    rule: InflationRule,
    B: FourierMatrix,
    ladder: Optional[BoundLadder] = None,
    chi_bound: Optional[float] = None,
    chi_error: float = 0.0,
    detail: str = "",
) -> Verdict:
    """Compare the best available chi-bound with (1/2) log |det Q|.

    The conclusion is singular-diffraction only when the bound plus its
    error sits strictly below the threshold and det B(k) is not
    identically zero.
    """
    threshold = 0.5 * math.log(abs(rule.expansion.det()))
    convention = "exact-exponent"
    if ladder is not None:
        _, bound, err = ladder.best_chi_bound()
        convention = ladder.convention
        if chi_bound is not None and chi_bound + chi_error < bound + err:
            bound, err, convention = chi_bound, chi_error, "exact-exponent"
    elif chi_bound is not None:
        bound, err = chi_bound, chi_error
    else:
        raise ValueError("need a ladder or an explicit bound")
    if _det_vanishes_identically(B):
        return Verdict(
            threshold=threshold,
            bound=bound,
            bound_error=err,
            convention=convention,
            conclusion="inapplicable",
            margin=float("nan"),
            detail="det B(k) vanishes identically",
        )
    margin = threshold - bound - err
    conclusion = "singular-diffraction" if margin > 0 else "inconclusive"
    return Verdict(
        threshold=threshold,
        bound=bound,
        bound_error=err,
        convention=convention,
        conclusion=conclusion,
        margin=margin,
        detail=detail,
    )


def hermitian_rank_one_split(H: np.ndarray, tol: float = 1e-10) -> List[np.ndarray]:
    """Split a Hermitian PSD matrix into mutually annihilating rank-1 parts.

    Returns matrices H_r = lambda_r |v_r><v_r| with H = sum H_r and
    H_r H_s = 0 for r != s; the count is the numerical rank.  A zero
    diagonal entry must come with a zero row and column.
    """
    H = np.asarray(H, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(H))))
    if np.max(np.abs(H - H.conj().T)) > tol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    diag = np.real(np.diag(H))
    if np.any(diag < -tol * scale):
        raise ValueError("matrix is not positive semi-definite (negative diagonal)")
    for i in np.nonzero(np.abs(diag) <= tol * scale)[0]:
        row = np.abs(H[i, :])
        if np.max(row) > math.sqrt(tol) * scale:
            raise ValueError(
                f"diagonal entry {i} vanishes but its row does not: not PSD"
            )
    vals, vecs = np.linalg.eigh(H)
    if vals.min() < -tol * scale:
        raise ValueError("matrix is not positive semi-definite")
    parts = []
    for lam, v in zip(vals[::-1], vecs.T[::-1]):
        if lam > tol * scale:
            parts.append(lam * np.outer(v, v.conj()))
    return parts
