"""Logarithmic Mahler measures and quasiperiodic log-means.

Univariate measures are exact via Jensen's formula from the polynomial
roots (balanced companion eigenvalues, Newton-polished near the unit
circle); an FFT-grid quadrature path covers degrees where the eigensolver
is too slow.  Multivariate measures use iterated Jensen: exact in one
variable per quadrature node of the others.  Quasiperiodic means lift the
polynomial to a torus of one variable per (coordinate, generator) pair and
integrate there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sampling import (
    DEFAULT_SEED,
    LOG_CLIP,
    MeanEstimate,
    lattice_points,
    orbit_mean,
    spawn_rng,
)
from .trigpoly import Expansion, GenTrigPoly, TorusPolynomial

__all__ = [
    "MahlerResult",
    "mahler_univariate",
    "mahler_univariate_quadrature",
    "mahler_univariate_auto",
    "mahler_multivariate",
    "quasiperiodic_log_mean",
]

#: Degree at which the auto policy switches from eigenvalue root-finding to
#: FFT-grid quadrature (both stay below 1e-4 absolute error on the ladder
#: polynomials; the eigensolver is O(deg^3)).
ROOTS_DEGREE_CAP = 2**11

_TINY_REL = 1e-13


@dataclass
class MahlerResult:
    value: float
    error_estimate: float
    method: str
    clip_mass: float = 0.0

    def __float__(self):
        return self.value


def _as_coefficients(p) -> np.ndarray:
    """Low-to-high complex coefficient array from array-like or GenTrigPoly."""
    if isinstance(p, GenTrigPoly):
        _, coeffs = p.laurent_coefficients()
        return coeffs
    return np.atleast_1d(np.asarray(p, dtype=complex))


def _trim(coeffs: np.ndarray) -> np.ndarray:
    mags = np.abs(coeffs)
    top = mags.max()
    if top == 0.0:
        raise ValueError("zero polynomial has no Mahler measure")
    keep = np.nonzero(mags > _TINY_REL * top)[0]
    lo, hi = keep[0], keep[-1]
    # a monomial factor z^lo contributes nothing
    return coeffs[lo : hi + 1]


def mahler_univariate(p, polish: bool = True) -> MahlerResult:
    """Jensen's formula: log|lead| plus log of root moduli outside the disk.

    Accepts a low-to-high coefficient array or a univariate GenTrigPoly
    (whose monomial prefactor is dropped, contributing zero).
    """
    coeffs = _trim(_as_coefficients(p))
    deg = len(coeffs) - 1
    lead = coeffs[-1]
    if deg == 0:
        return MahlerResult(math.log(abs(lead)), 0.0, "jensen-exact")
    if np.allclose(coeffs.imag, 0.0):
        roots = np.roots(coeffs.real[::-1].astype(float))
    else:
        roots = np.roots(coeffs[::-1])
    polish_error = 0.0
    if polish:
        near = np.abs(np.abs(roots) - 1.0) < 0.05
        if np.any(near):
            r = roots[near]
            dcoeffs = coeffs[1:] * np.arange(1, deg + 1)
            for _ in range(2):
                pv = np.polyval(coeffs[::-1], r)
                dv = np.polyval(dcoeffs[::-1], r)
                step = np.where(np.abs(dv) > 0, pv / np.where(dv == 0, 1, dv), 0)
                r = r - step
            polish_error = float(np.sum(np.abs(np.abs(r) - np.abs(roots[near]))))
            roots = roots.copy()
            roots[near] = r
    mods = np.abs(roots)
    value = math.log(abs(lead)) + float(np.sum(np.log(np.maximum(1.0, mods))))
    error = polish_error + 1e-14 * (deg + 1)
    return MahlerResult(value, error, "jensen-exact")


def mahler_univariate_quadrature(
    p,
    n_nodes: int = 2**20,
    n_offsets: int = 4,
    seed: int = DEFAULT_SEED,
) -> MahlerResult:
    """Grid quadrature of the circle integral of log|p|, evaluated by FFT.

    Uses n_offsets randomly offset uniform grids; log singularities are
    clipped at the standard floor and the clipped mass is reported.
    """
    coeffs = _trim(_as_coefficients(p))
    deg = len(coeffs) - 1
    n = int(n_nodes)
    while n < 4 * (deg + 1):
        n *= 2
    rng = spawn_rng(seed, 977)
    means = []
    clip_total = 0.0
    tiny = math.exp(LOG_CLIP)
    a = np.arange(deg + 1)
    for _ in range(n_offsets):
        theta = rng.random()
        shifted = coeffs * np.exp(2j * np.pi * a * theta / n)
        buf = np.zeros(n, dtype=complex)
        buf[: deg + 1] = shifted
        vals = np.abs(np.fft.fft(buf))
        clip_total += float(np.mean(vals < tiny))
        means.append(float(np.mean(np.log(np.maximum(vals, tiny)))))
    value = float(np.mean(means))
    spread = float(np.std(means, ddof=1) / math.sqrt(n_offsets)) if n_offsets > 1 else 0.0
    return MahlerResult(value, max(spread, 1e-12), "quadrature-fft", clip_total / n_offsets)


def mahler_univariate_auto(p, degree_cap: int = ROOTS_DEGREE_CAP) -> MahlerResult:
    coeffs = _trim(_as_coefficients(p))
    if len(coeffs) - 1 <= degree_cap:
        return mahler_univariate(coeffs)
    return mahler_univariate_quadrature(coeffs)


# -- iterated Jensen ------------------------------------------------------


def _jensen_on_slices(coeff_rows: np.ndarray) -> np.ndarray:
    """Per-row Mahler measure of the univariate polynomials sum_j row[j] x^j.

    Rows are processed in groups of equal effective degree with stacked
    companion eigenvalue calls; identically vanishing rows get the clip
    floor.
    """
    n, width = coeff_rows.shape
    out = np.full(n, LOG_CLIP, dtype=float)
    mags = np.abs(coeff_rows)
    top = mags.max(axis=1)
    alive = top > 0
    keep = mags > _TINY_REL * np.maximum(top, 1e-300)[:, None]
    idx = np.arange(width)
    lo = np.where(alive, np.argmax(keep, axis=1), 0)
    hi = np.where(alive, width - 1 - np.argmax(keep[:, ::-1], axis=1), 0)
    degs = hi - lo
    for d in np.unique(degs[alive]):
        rows = np.nonzero(alive & (degs == d))[0]
        if d == 0:
            out[rows] = np.log(np.abs(coeff_rows[rows, hi[rows]]))
            continue
        block = np.empty((len(rows), d + 1), dtype=complex)
        for t, r in enumerate(rows):
            block[t] = coeff_rows[r, lo[r] : lo[r] + d + 1]
        lead = block[:, -1]
        if d == 1:
            roots = (-block[:, 0] / lead)[:, None]
        else:
            comp = np.zeros((len(rows), d, d), dtype=complex)
            comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
            comp[:, :, -1] = -block[:, :-1] / lead[:, None]
            roots = np.linalg.eigvals(comp)
        out[rows] = np.log(np.abs(lead)) + np.sum(
            np.log(np.maximum(1.0, np.abs(roots))), axis=1
        )
    return np.maximum(out, LOG_CLIP)


def _slice_coefficients(
    expo: np.ndarray, coeff: np.ndarray, inner: int, outer_points: np.ndarray
) -> np.ndarray:
    """Coefficients of the inner-variable polynomial at each outer node.

    expo: (T, nvars) integer exponent matrix; coeff: (T,) complex;
    outer_points: (n, nvars-1).  Returns (n, span+1) with the monomial
    prefactor removed.
    """
    inner_e = expo[:, inner]
    outer_e = np.delete(expo, inner, axis=1)
    lo, hi = int(inner_e.min()), int(inner_e.max())
    rows = np.zeros((outer_points.shape[0], hi - lo + 1), dtype=complex)
    phases = np.exp(2j * np.pi * (outer_points @ outer_e.T))  # (n, T)
    for col in range(lo, hi + 1):
        mask = inner_e == col
        if np.any(mask):
            rows[:, col - lo] = phases[:, mask] @ coeff[mask]
    return rows


def _pick_inner_variable(expo: np.ndarray) -> int:
    spans = expo.max(axis=0) - expo.min(axis=0)
    return int(np.argmax(spans))


def mahler_multivariate(
    p: GenTrigPoly,
    tolerance: float = 1e-6,
    start_nodes: int = 1 << 10,
    max_doublings: int = 8,
) -> MahlerResult:
    """Torus integral of log|p| by iterated Jensen.

    The variable with the largest degree span is integrated exactly per
    node (Jensen), which removes the log singularities; the remaining
    variables use uniform grids (d=2) or shifted lattices (d>2) with
    adaptive refinement until successive estimates differ by less than the
    tolerance.
    """
    if p.basis is not None and p.basis.size != 1:
        raise ValueError("multivariate Mahler measure needs periodic (integer) exponents")
    if not p.terms:
        raise ValueError("zero polynomial has no Mahler measure")
    if p.basis is None:
        expo_f = p.real_exponents()
        expo = np.rint(expo_f).astype(np.int64)
        if np.max(np.abs(expo - expo_f)) > 1e-9:
            raise ValueError("multivariate Mahler measure needs integer exponents")
    else:
        lift = p.torus_lift()
        expo = lift.exponent_matrix()
    coeff = p.coefficients()
    d = expo.shape[1]
    if d == 1:
        res = mahler_univariate(p)
        return res
    inner = _pick_inner_variable(expo)
    n = int(start_nodes)
    prev = None
    rng = spawn_rng(DEFAULT_SEED, 31)
    for round_idx in range(max_doublings + 1):
        if d == 2:
            pts = ((np.arange(n) + 0.5) / n)[:, None]
        else:
            shift = rng.random(d - 1)
            pts = lattice_points(n, d - 1, shift)
        rows = _slice_coefficients(expo, coeff, inner, pts)
        value = float(np.mean(_jensen_on_slices(rows)))
        if prev is not None and abs(value - prev) <= tolerance / 2:
            return MahlerResult(
                value, abs(value - prev) + 1e-15, "iterated-jensen"
            )
        prev = value
        n *= 2
    raise ArithmeticError(
        f"iterated Jensen did not reach tolerance {tolerance:g} within budget"
    )


# -- quasiperiodic means ---------------------------------------------------


def quasiperiodic_log_mean(
    p: GenTrigPoly,
    expansion: Expansion = None,
    method: str = "qmc",
    n_points: int = 2**16,
    n_shifts: int = 8,
    n_orbits: int = 24,
    n_steps: int = 4096,
    seed: int = DEFAULT_SEED,
) -> MahlerResult:
    """Mean of log|p| for a quasiperiodic trigonometric polynomial.

    The mean is the integral of the torus lift of p over T^{d*m}.  Method
    "qmc" integrates by Jensen in one lifted variable plus a shifted
    lattice over the rest; "birkhoff" averages clipped log|p| along exact
    rational orbits of the lift action of the expansion (doubling map if
    none is given).  Generators must be declared rationally independent.
    """
    if p.basis is None:
        raise ValueError("quasiperiodic mean needs an exact frequency basis")
    if not p.basis.rationally_independent:
        raise ValueError("generators declared rationally dependent; the lift torus is not the hull")
    lift = p.torus_lift()
    expo = lift.exponent_matrix()
    coeff = lift.coefficients()
    nvars = lift.n_variables
    if method == "qmc":
        if nvars == 1:
            res = mahler_univariate(p)
            return MahlerResult(res.value, res.error_estimate, "qmc-torus")
        inner = _pick_inner_variable(expo)
        rng = spawn_rng(seed, 53)
        means = []
        for _ in range(n_shifts):
            shift = rng.random(nvars - 1)
            pts = lattice_points(n_points, nvars - 1, shift)
            rows = _slice_coefficients(expo, coeff, inner, pts)
            means.append(float(np.mean(_jensen_on_slices(rows))))
        value = float(np.mean(means))
        err = float(np.std(means, ddof=1) / math.sqrt(n_shifts)) if n_shifts > 1 else 0.0
        return MahlerResult(value, err, "qmc-torus")
    if method == "birkhoff":
        if expansion is not None:
            step = expansion.lift_action(p.basis)
        else:
            step = 2 * np.eye(nvars, dtype=np.int64)
        clip_box = [0.0]

        def func(points: np.ndarray) -> np.ndarray:
            vals = np.abs(lift.evaluate_many(points))
            tiny = math.exp(LOG_CLIP)
            clip_box[0] += float(np.mean(vals < tiny))
            return np.log(np.maximum(vals, tiny))

        est = orbit_mean(func, step, n_orbits=n_orbits, n_steps=n_steps, seed=seed)
        return MahlerResult(est.value, est.error, "birkhoff", clip_box[0] / n_steps)
    raise ValueError(f"unknown method {method!r}")
