"""Posterior laws of a feature mean under a fitted discrete prior.

For a group average xbar of n_k unit-variance observations the posterior on
the prior's atoms is

    v_k  propto  w_k * phi(sqrt(n_k) * (xbar - mu_k)),

and a new observation on that feature has predictive density
sum_k v_k phi(x - mu_k). Everything is computed with log weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgumentError
from .mixture import LOG_SQRT_2PI, MixingDistribution

# bound on elements per chunk in the (points, features, atoms) tensor
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class PosteriorLaw:
    atoms: np.ndarray
    log_weights: np.ndarray
    degenerate: bool = False

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def mean(self) -> float:
        return float(np.dot(self.weights, self.atoms))

    def as_mixture(self) -> MixingDistribution:
        return MixingDistribution.from_unnormalized(self.atoms, self.weights)


def _check_n(n_k):
    if int(n_k) != n_k or n_k < 1:
        raise InvalidArgumentError(f"group size must be an integer >= 1, got {n_k!r}")


def posterior_log_weights(prior: MixingDistribution, xbar, sd: float):
    """Normalized log posterior weights for every entry of ``xbar``.

    Returns ``(logv, degenerate)`` with ``logv`` of shape ``xbar.shape + (G,)``.
    Rows whose normalizer is not finite are replaced by a point mass on the
    atom nearest to that xbar and flagged in ``degenerate``.
    """
    xbar = np.asarray(xbar, dtype=float)
    atoms = prior.atoms
    with np.errstate(over="ignore"):
        z = (xbar[..., None] - atoms) / sd
    with np.errstate(divide="ignore", over="ignore"):
        terms = prior.log_weights - 0.5 * z * z
    logz = logsumexp(terms, axis=-1, keepdims=True)
    degenerate = ~np.isfinite(logz[..., 0])
    with np.errstate(invalid="ignore"):
        logv = terms - logz
    if np.any(degenerate):
        nearest = np.argmin(np.abs(xbar[degenerate][:, None] - atoms), axis=-1)
        fallback = np.full((nearest.size, atoms.size), -np.inf)
        fallback[np.arange(nearest.size), nearest] = 0.0
        logv[degenerate] = fallback
    return logv, degenerate


def posterior_law(prior: MixingDistribution, xbar: float, n_k: int) -> PosteriorLaw:
    """Posterior of a feature mean given its group average over ``n_k`` samples."""
    _check_n(n_k)
    logv, deg = posterior_log_weights(prior, float(xbar), 1.0 / math.sqrt(n_k))
    return PosteriorLaw(prior.atoms, logv, bool(deg))


def predictive_log_density(prior: MixingDistribution, xbar: float, n_k: int, x: float) -> float:
    """log sum_k v_k phi(x - mu_k) with v the posterior weights."""
    law = posterior_law(prior, xbar, n_k)
    z = x - law.atoms
    with np.errstate(over="ignore"):  # huge distances give -inf terms, which logsumexp handles
        return float(logsumexp(law.log_weights - 0.5 * z * z) - LOG_SQRT_2PI)


def posterior_mean(prior: MixingDistribution, xbar: float, n_k: int) -> float:
    law = posterior_law(prior, xbar, n_k)
    m = law.mean()
    # guard against rounding just outside the atom range
    return min(max(m, float(prior.atoms[0])), float(prior.atoms[-1]))


def posterior_mean_difference(prior0, prior1, xbar0: float, xbar1: float, n0: int, n1: int) -> float:
    return posterior_mean(prior1, xbar1, n1) - posterior_mean(prior0, xbar0, n0)


def posterior_means(prior: MixingDistribution, xbar, sd: float) -> np.ndarray:
    """Vectorized posterior means for observations with noise sd ``sd``."""
    logv, _ = posterior_log_weights(prior, xbar, sd)
    m = np.exp(logv) @ prior.atoms
    return np.clip(m, prior.atoms[0], prior.atoms[-1])


def predictive_log_density_matrix(prior: MixingDistribution, xbar, n_k: int, X) -> np.ndarray:
    """Per-feature predictive log densities for a batch of points.

    ``xbar`` has length N (one group average per feature, all sharing
    ``prior``) and ``X`` is (T, N). Entry (t, j) is the log predictive
    density of feature j evaluated at ``X[t, j]``.
    """
    _check_n(n_k)
    xbar = np.asarray(xbar, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != xbar.size:
        raise InvalidArgumentError(f"points have {X.shape[1]} features, expected {xbar.size}")
    logv, _ = posterior_log_weights(prior, xbar, 1.0 / math.sqrt(n_k))
    atoms = prior.atoms
    G = atoms.size
    out = np.empty(X.shape)
    step = max(1, _CHUNK_ELEMENTS // max(1, X.shape[1] * G))
    for s in range(0, X.shape[0], step):
        z = X[s : s + step, :, None] - atoms
        terms = logv[None, :, :] - 0.5 * z * z
        m = terms.max(axis=-1)
        out[s : s + step] = m + np.log(np.exp(terms - m[..., None]).sum(axis=-1))
    return out - LOG_SQRT_2PI
