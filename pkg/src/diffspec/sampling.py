"""Quadrature and orbit sampling on tori.

Two engines feed all torus means in the package:

* rank-1 lattice rules (Korobov generating vector) with independent random
  shifts, giving an unbiased estimate and a spread-based error bar;
* exact rational orbits of an integer torus endomorphism, for Birkhoff
  averages.  States are kept as integer numerators over a large random odd
  denominator, so iterated doubling or matrix maps never collapse onto the
  dyadic rationals the way float orbits do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

__all__ = [
    "MeanEstimate",
    "lattice_points",
    "lattice_mean",
    "RationalOrbit",
    "orbit_mean",
    "spawn_rng",
]

#: Fixed default seed so CLI outputs are reproducible by default.
DEFAULT_SEED = 20250810

#: Clip floor for log integrands with integrable singularities.
LOG_CLIP = -40.0


def spawn_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by (seed, index): scheduling independent."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 16) + int(index)))


@dataclass
class MeanEstimate:
    value: float
    error: float
    samples: int
    method: str
    clip_mass: float = 0.0


def _korobov_vector(n: int, dim: int) -> np.ndarray:
    """Korobov generating vector (1, a, a^2, ...) with a near n/golden."""
    golden = (math.sqrt(5) - 1) / 2
    a = int(round(n * golden))
    a |= 1
    z = np.empty(dim, dtype=np.int64)
    z[0] = 1
    for j in range(1, dim):
        z[j] = (z[j - 1] * a) % n
    return z


def lattice_points(n: int, dim: int, shift: np.ndarray = None) -> np.ndarray:
    """Rank-1 lattice {frac(i z / n + shift)}; (n, dim) array."""
    z = _korobov_vector(n, dim)
    idx = np.arange(n, dtype=np.float64)[:, None]
    pts = idx * (z[None, :] / n)
    if shift is not None:
        pts = pts + shift[None, :]
    return np.mod(pts, 1.0)


def lattice_mean(
    func: Callable[[np.ndarray], np.ndarray],
    dim: int,
    n_points: int = 2**16,
    n_shifts: int = 8,
    seed: int = DEFAULT_SEED,
    target_error: float = None,
    max_doublings: int = 4,
    workers: int = 1,
) -> MeanEstimate:
    """Mean of func over T^dim by a randomly shifted lattice rule.

    ``func`` maps an (n, dim) array of torus points to n real values and may
    clip its own singularities; the error is the standard error over the
    independent shifts.  With ``target_error`` the node count doubles until
    the estimate is tight enough or ``max_doublings`` is exhausted.
    """
    n = int(n_points)
    rounds = 0
    while True:
        rng = spawn_rng(seed, rounds)
        shifts = rng.random((n_shifts, dim))
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(
                    pool.map(lambda s: float(np.mean(func(lattice_points(n, dim, s)))), shifts)
                )
            means = np.array(results)
        else:
            means = np.array(
                [float(np.mean(func(lattice_points(n, dim, s)))) for s in shifts]
            )
        value = float(means.mean())
        error = float(means.std(ddof=1) / math.sqrt(n_shifts)) if n_shifts > 1 else float("inf")
        if target_error is None or error <= target_error or rounds >= max_doublings:
            return MeanEstimate(
                value=value,
                error=error,
                samples=n * n_shifts,
                method="qmc-lattice",
            )
        n *= 2
        rounds += 1


def clipped_log(values: np.ndarray, floor: float = LOG_CLIP):
    """log of |values| with the floor applied; returns (logs, clipped_fraction)."""
    mags = np.abs(np.asarray(values))
    tiny = math.exp(floor)
    clipped = mags < tiny
    out = np.log(np.maximum(mags, tiny))
    return out, float(np.mean(clipped))


class RationalOrbit:
    """Exact orbit x -> K x mod 1 on T^dim with rational coordinates.

    Numerators are Python integers over a shared odd denominator of
    ``denominator_bits`` random bits, so the orbit is exact and its period
    is astronomically long for the integer maps used here.
    """

    def __init__(self, step_matrix: np.ndarray, rng: np.random.Generator, denominator_bits: int = 192):
        self.K = [[int(x) for x in row] for row in np.asarray(step_matrix, dtype=np.int64)]
        self.dim = len(self.K)
        bits = int(denominator_bits)
        den = 0
        while den.bit_length() < bits:
            den = (den << 32) | int(rng.integers(0, 2**32))
        self.den = den | 1
        self.nums = [int(rng.integers(0, 2**32)) for _ in range(self.dim)]
        for i in range(self.dim):
            n = self.nums[i]
            while n.bit_length() < bits:
                n = (n << 32) | int(rng.integers(0, 2**32))
            self.nums[i] = n % self.den

    def point(self) -> np.ndarray:
        return np.array([n / self.den for n in self.nums], dtype=float)

    def step(self):
        K, nums, den = self.K, self.nums, self.den
        self.nums = [
            sum(K[i][j] * nums[j] for j in range(self.dim)) % den for i in range(self.dim)
        ]

    def advance(self, n: int):
        for _ in range(n):
            self.step()


def orbit_mean(
    func: Callable[[np.ndarray], np.ndarray],
    step_matrix: np.ndarray,
    n_orbits: int = 16,
    n_steps: int = 4096,
    seed: int = DEFAULT_SEED,
    burn_in: int = 8,
) -> MeanEstimate:
    """Birkhoff mean of func along exact orbits of the integer torus map.

    ``func`` maps an (n_orbits, dim) batch of points to n_orbits values;
    orbit averages are aggregated into mean and standard error.
    """
    dim = len(np.atleast_2d(step_matrix))
    orbits = [RationalOrbit(step_matrix, spawn_rng(seed, i)) for i in range(n_orbits)]
    for o in orbits:
        o.advance(burn_in)
    sums = np.zeros(n_orbits)
    for _ in range(n_steps):
        pts = np.array([o.point() for o in orbits])
        sums += func(pts)
        for o in orbits:
            o.step()
    means = sums / n_steps
    value = float(means.mean())
    error = float(means.std(ddof=1) / math.sqrt(n_orbits)) if n_orbits > 1 else float("inf")
    return MeanEstimate(value=value, error=error, samples=n_orbits * n_steps, method="birkhoff")
