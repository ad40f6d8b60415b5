"""Gaussian kernels, discrete mixing distributions and Hellinger distance.

Everything here works in the log domain where it matters: the classifier
multiplies thousands of per-feature density ratios, so the raw densities
underflow long before the log densities lose precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import simpson
from scipy.special import logsumexp

from .errors import InvalidArgumentError, InvalidStateError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# atoms below this weight never enter a log-sum-exp
MIN_LOG_WEIGHT = -690.0  # ~ log(1e-300)

DEFAULT_GRID_POINTS = 10001
TAIL_SDS = 8.0


@dataclass(frozen=True, eq=False)
class MixingDistribution:
    """Discrete probability measure on the real line.

    Attributes
    ----------
    atoms : np.ndarray
        Strictly ascending support points.
    weights : np.ndarray
        Non-negative masses summing to one.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float).reshape(-1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if atoms.size < 1 or atoms.shape != weights.shape:
            raise InvalidArgumentError("atoms and weights must have equal length >= 1")
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(weights))):
            raise InvalidArgumentError("atoms and weights must be finite")
        if np.any(np.diff(atoms) <= 0):
            raise InvalidArgumentError("atoms must be strictly ascending")
        if np.any(weights < 0):
            raise InvalidArgumentError("weights must be non-negative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError(f"weights sum to {weights.sum()!r}, not 1")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def point_mass(cls, at: float) -> "MixingDistribution":
        return cls(np.array([float(at)]), np.array([1.0]))

    @classmethod
    def from_unnormalized(cls, atoms, weights, prune: float = 0.0) -> "MixingDistribution":
        """Build from raw weights, dropping atoms with weight <= ``prune`` and renormalizing."""
        atoms = np.asarray(atoms, dtype=float)
        weights = np.asarray(weights, dtype=float)
        keep = weights > prune
        if not np.any(keep):
            raise InvalidStateError("no atom carries positive weight")
        w = weights[keep]
        w = w / w.sum()
        # one more pass so the sum is as close to 1 as floating point allows
        w = w / math.fsum(w)
        return cls(atoms[keep], w)

    def __len__(self):
        return self.atoms.size

    @property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def mean(self) -> float:
        return float(np.dot(self.atoms, self.weights))

    def to_dict(self) -> dict:
        return {"atoms": [float(a) for a in self.atoms], "weights": [float(w) for w in self.weights]}

    @classmethod
    def from_dict(cls, d: dict) -> "MixingDistribution":
        return cls(np.array(d["atoms"], dtype=float), np.array(d["weights"], dtype=float))


@dataclass(frozen=True)
class DensityFn:
    """A vectorized density together with an interval holding all of its mass."""

    fn: Callable[[np.ndarray], np.ndarray]
    lo: float
    hi: float

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise InvalidArgumentError(f"non-finite input {v!r}")


def normal_log_density(x: float, mean: float, sd: float) -> float:
    """Log of the N(mean, sd^2) density at x."""
    _check_finite(x, mean, sd)
    if sd <= 0:
        raise InvalidArgumentError(f"sd must be positive, got {sd!r}")
    z = (x - mean) / sd
    return -0.5 * z * z - LOG_SQRT_2PI - math.log(sd)


def norm_logpdf(x, mean=0.0, sd=1.0):
    """Vectorized version of :func:`normal_log_density` without validation."""
    z = (np.asarray(x, dtype=float) - mean) / sd
    return -0.5 * z * z - LOG_SQRT_2PI - np.log(sd)


def _active_log_weights(mix: MixingDistribution):
    logw = mix.log_weights
    keep = logw > MIN_LOG_WEIGHT
    if not np.any(keep):
        raise InvalidStateError("all mixture weights are zero after filtering")
    return mix.atoms[keep], logw[keep]


def mixture_log_density(mix: MixingDistribution, x, sd: float = 1.0):
    """Log density of ``mix`` convolved with N(0, sd^2), at scalar or array ``x``.

    Uses a max-anchored log-sum-exp over atoms with non-negligible weight.
    """
    if not sd > 0:
        raise InvalidArgumentError(f"sd must be positive, got {sd!r}")
    atoms, logw = _active_log_weights(mix)
    xa = np.asarray(x, dtype=float)
    terms = logw + norm_logpdf(xa[..., None], atoms, sd)
    out = logsumexp(terms, axis=-1)
    return float(out) if xa.ndim == 0 else out


def convolution_density(mix: MixingDistribution, sd: float = 1.0) -> DensityFn:
    """Marginal density of X = mu + sd * Z with mu ~ mix, as a :class:`DensityFn`."""
    lo = float(mix.atoms[0]) - TAIL_SDS * sd
    hi = float(mix.atoms[-1]) + TAIL_SDS * sd
    return DensityFn(lambda x: np.exp(mixture_log_density(mix, x, sd)), lo, hi)


def normal_density(mean: float = 0.0, sd: float = 1.0) -> DensityFn:
    return convolution_density(MixingDistribution.point_mass(mean), sd)


def simpson_grid(lo: float, hi: float, grid_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    if grid_points < 3 or grid_points % 2 == 0:
        raise InvalidArgumentError("grid_points must be odd and >= 3")
    return np.linspace(lo, hi, grid_points)


def integrate(density: DensityFn, grid_points: int = DEFAULT_GRID_POINTS) -> float:
    """Composite Simpson integral of ``density`` over its declared support."""
    x = simpson_grid(density.lo, density.hi, grid_points)
    return float(simpson(density(x), x=x))


def hellinger_distance(p: DensityFn, q: DensityFn, grid_points: int = DEFAULT_GRID_POINTS) -> float:
    """L2 distance between sqrt(p) and sqrt(q).

    Composite Simpson over the union of the two declared supports.
    ``grid_points`` must be odd and at least 1001.
    """
    if grid_points < 1001 or grid_points % 2 == 0:
        raise InvalidArgumentError(f"grid_points must be odd and >= 1001, got {grid_points}")
    lo, hi = min(p.lo, q.lo), max(p.hi, q.hi)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InvalidArgumentError("densities need finite supports")
    x = np.linspace(lo, hi, grid_points)
    # underflowed values are exact zeros here, so the integrand is simply 0 there
    diff = np.sqrt(np.maximum(p(x), 0.0)) - np.sqrt(np.maximum(q(x), 0.0))
    val = simpson(diff * diff, x=x)
    return math.sqrt(max(float(val), 0.0))
