"""Grid-restricted NPMLE of a Gaussian location mixture.

The mixing distribution is restricted to K+1 equispaced atoms spanning the
data range and the weights are fitted by maximum likelihood. The core
iteration is the EM fixed-point map

    w_k <- w_k * (1/N) sum_j L_jk / p_j,      p_j = sum_l w_l L_jl,

which never increases the negative log-likelihood. Because EM crawls once the
support has been identified, a damped constrained-Newton step (quadratic model
of the log-likelihood solved by non-negative least squares) is tried every few
iterations and kept only when it lowers the objective. Termination is decided
by the first-order certificate

    D_k = (1/N) sum_j L_jk / p_j <= 1 for all k,  D_k = 1 where w_k > 0,

so a fit is only reported as converged when it is checkably optimal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import InvalidArgumentError, NumericFailureError
from .mixture import LOG_SQRT_2PI, MixingDistribution

PRUNE_WEIGHT = 1e-10
ACTIVE_WEIGHT = 1e-8


@dataclass(frozen=True)
class ObservationSet:
    values: np.ndarray
    noise_sd: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size < 1:
            raise InvalidArgumentError("need at least one observation")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("observations must be finite")
        if not (math.isfinite(self.noise_sd) and self.noise_sd > 0):
            raise InvalidArgumentError(f"noise_sd must be positive, got {self.noise_sd!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "noise_sd", float(self.noise_sd))

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 50000
    rel_tol: float = 1e-10
    kkt_tolerance: float = 1e-4
    newton: bool = True
    newton_warmup: int = 20
    newton_every: int = 5


@dataclass
class LikelihoodMatrix:
    """Kernel values L_jk = phi((x_j - mu_k)/sd)/sd and their logs."""

    values: np.ndarray
    log: np.ndarray

    @property
    def shape(self):
        return self.log.shape

    def row_scaled(self):
        """Rows rescaled by their maximum; returns (scaled, log row maxima).

        The EM map and the certificate are invariant to row scaling, and the
        scaled matrix cannot underflow to an all-zero row.
        """
        rmax = self.log.max(axis=1)
        return np.exp(self.log - rmax[:, None]), rmax


@dataclass
class NpmleFit:
    mix: MixingDistribution
    final_neg_log_lik: float
    iterations: int
    kkt_max_gradient: float
    active_atom_gap: float
    converged: bool
    noise_sd: float = 1.0
    grid: np.ndarray = field(default=None, repr=False)
    trace: np.ndarray = field(default=None, repr=False)
    newton_steps: int = 0

    def to_dict(self) -> dict:
        d = self.mix.to_dict()
        d.update(
            noise_sd=self.noise_sd,
            neg_log_lik=self.final_neg_log_lik,
            kkt_max_gradient=self.kkt_max_gradient,
            active_atom_gap=self.active_atom_gap,
            iterations=self.iterations,
            converged=self.converged,
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NpmleFit":
        return cls(
            mix=MixingDistribution.from_dict(d),
            final_neg_log_lik=float(d["neg_log_lik"]),
            iterations=int(d.get("iterations", 0)),
            kkt_max_gradient=float(d["kkt_max_gradient"]),
            active_atom_gap=float(d.get("active_atom_gap", 0.0)),
            converged=bool(d.get("converged", True)),
            noise_sd=float(d["noise_sd"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "NpmleFit":
        return cls.from_dict(json.loads(text))


def default_grid_size(N: int) -> int:
    """floor(sqrt(N)), at least 1."""
    return max(1, math.isqrt(int(N)))


def build_grid(obs: ObservationSet, K: int) -> np.ndarray:
    """K+1 equispaced atoms from min to max of the observations (one atom if they coincide)."""
    if int(K) != K or K < 1:
        raise InvalidArgumentError(f"K must be an integer >= 1, got {K!r}")
    lo, hi = float(obs.values.min()), float(obs.values.max())
    if lo == hi:
        return np.array([lo])
    grid = np.linspace(lo, hi, int(K) + 1)
    grid[-1] = hi
    return grid


def likelihood_matrix(obs: ObservationSet, grid) -> LikelihoodMatrix:
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise InvalidArgumentError("grid must be nonempty")
    sd = obs.noise_sd
    z = (obs.values[:, None] - grid[None, :]) / sd
    log = -0.5 * z * z - LOG_SQRT_2PI - math.log(sd)
    return LikelihoodMatrix(np.exp(log), log)


def _gradient(Ls: np.ndarray, w: np.ndarray):
    p = Ls @ w
    return p, (Ls.T @ (1.0 / p)) / Ls.shape[0]


def _certificate(w: np.ndarray, D: np.ndarray):
    active = w > ACTIVE_WEIGHT
    gap = float(np.max(np.abs(D[active] - 1.0))) if np.any(active) else math.inf
    return float(D.max()), gap


def kkt_residual(mix: MixingDistribution, L) -> dict:
    """First-order optimality residual of ``mix`` for likelihood matrix ``L``.

    ``L`` is a :class:`LikelihoodMatrix` or a plain (N, G) array of kernel
    values whose columns correspond to ``mix.atoms``. Returns
    ``max_gradient = max_k D_k`` and ``active_atom_gap = max |D_k - 1|`` over
    atoms with weight above 1e-8.
    """
    if isinstance(L, LikelihoodMatrix):
        Ls, _ = L.row_scaled()
    else:
        Ls = np.asarray(L, dtype=float)
    if Ls.ndim != 2 or Ls.shape[1] != len(mix):
        raise InvalidArgumentError(
            f"likelihood matrix has {Ls.shape[-1]} columns but mixture has {len(mix)} atoms"
        )
    w = np.asarray(mix.weights)
    _, D = _gradient(Ls, w)
    max_gradient, gap = _certificate(w, D)
    return {"max_gradient": max_gradient, "active_atom_gap": gap, "gradient": D}


def _neg_log_lik(Ls, rmax, w):
    p = Ls @ w
    with np.errstate(divide="ignore"):
        return -(float(np.sum(np.log(p))) + float(np.sum(rmax)))


def _newton_step(Ls, w, f, rmax):
    """Constrained Newton proposal from the quadratic model at w, with backtracking.

    With S = diag(1/p) L the model is maximized by minimizing ||S v - 2||^2
    over v >= 0, sum(v) = 1; the sum constraint enters as a heavily weighted
    extra row. Returns (w_new, f_new) or None when no decrease was found.
    """
    p = Ls @ w
    S = Ls / p[:, None]
    Q, R = np.linalg.qr(S, mode="reduced")
    target = Q.T @ np.full(S.shape[0], 2.0)
    c = 1e3 * math.sqrt(S.shape[0])
    A = np.vstack([R, np.full((1, R.shape[1]), c)])
    b = np.append(target, c)
    try:
        v, _ = nnls(A, b, maxiter=50 * A.shape[1])
    except RuntimeError:
        return None
    total = v.sum()
    if not (total > 0 and np.all(np.isfinite(v))):
        return None
    d = v / total - w
    t = 1.0
    for _ in range(30):
        cand = w + t * d
        cand = np.maximum(cand, 0.0)
        cand /= cand.sum()
        fc = _neg_log_lik(Ls, rmax, cand)
        if math.isfinite(fc) and fc < f:
            return cand, fc
        t *= 0.5
    return None


def solve_weights(L: LikelihoodMatrix, options: SolverOptions = SolverOptions(), w0=None, callback=None):
    """Maximize sum_j log sum_k w_k L_jk over the simplex.

    Returns ``(w, trace, iterations, converged, newton_steps)`` where ``w``
    covers every column of ``L`` (nothing pruned) and ``trace`` holds the
    negative log-likelihood after every iteration, starting with the initial
    point. ``callback(iteration, w)`` is called on every accepted iterate.
    """
    Ls, rmax = L.row_scaled()
    N, G = Ls.shape
    w = np.full(G, 1.0 / G) if w0 is None else np.asarray(w0, dtype=float).copy()
    f = _neg_log_lik(Ls, rmax, w)
    if not math.isfinite(f):
        raise NumericFailureError("non-finite objective at the starting point", w)
    trace = [f]
    converged = False
    newton_steps = 0
    it = 0
    for it in range(1, options.max_iters + 1):
        p, D = _gradient(Ls, w)
        mg, gap = _certificate(w, D)
        if mg <= 1 + options.kkt_tolerance and gap <= options.kkt_tolerance:
            converged = True
            it -= 1
            break
        w_new = w * D
        w_new /= w_new.sum()
        f_new = _neg_log_lik(Ls, rmax, w_new)
        tried_newton = False
        if options.newton and it >= options.newton_warmup and it % options.newton_every == 0:
            tried_newton = True
            step = _newton_step(Ls, w_new, f_new, rmax)
            if step is not None:
                w_new, f_new = step
                newton_steps += 1
        if not math.isfinite(f_new):
            raise NumericFailureError(f"non-finite objective at iteration {it}", w)
        if f_new > f + 1e-10 * abs(f):
            raise NumericFailureError(f"objective increased at iteration {it}", w)
        rel = abs(f - f_new) / max(abs(f), 1e-300)
        w, f = w_new, f_new
        trace.append(f)
        if callback is not None:
            callback(it, w)
        if rel < options.rel_tol and (tried_newton or not options.newton):
            p, D = _gradient(Ls, w)
            mg, gap = _certificate(w, D)
            converged = mg <= 1 + options.kkt_tolerance and gap <= options.kkt_tolerance
            break
    return w, np.array(trace), it, converged, newton_steps


def solve(obs: ObservationSet, K: int | None = None, options: SolverOptions = SolverOptions(), callback=None) -> NpmleFit:
    """Fit the grid-restricted NPMLE with K+1 atoms (default K = floor(sqrt(N)))."""
    if K is None:
        K = default_grid_size(len(obs))
    # sorted input makes every reduction order-independent
    sobs = ObservationSet(np.sort(obs.values), obs.noise_sd)
    grid = build_grid(sobs, K)
    N = len(sobs)
    if grid.size == 1:
        nll = N * (LOG_SQRT_2PI + math.log(sobs.noise_sd))
        return NpmleFit(
            mix=MixingDistribution.point_mass(grid[0]),
            final_neg_log_lik=nll,
            iterations=0,
            kkt_max_gradient=1.0,
            active_atom_gap=0.0,
            converged=True,
            noise_sd=sobs.noise_sd,
            grid=grid,
            trace=np.array([nll]),
        )
    L = likelihood_matrix(sobs, grid)
    w, trace, iters, converged, nsteps = solve_weights(L, options, callback=callback)
    full = MixingDistribution(grid, w / math.fsum(w))
    cert = kkt_residual(full, L)
    return NpmleFit(
        mix=MixingDistribution.from_unnormalized(grid, w, prune=PRUNE_WEIGHT),
        final_neg_log_lik=float(trace[-1]),
        iterations=iters,
        kkt_max_gradient=cert["max_gradient"],
        active_atom_gap=cert["active_atom_gap"],
        converged=converged,
        noise_sd=sobs.noise_sd,
        grid=grid,
        trace=trace,
        newton_steps=nsteps,
    )


def neg_log_lik(obs: ObservationSet, mix: MixingDistribution) -> float:
    """Negative log-likelihood of ``obs`` under ``mix`` convolved with the observation noise."""
    L = likelihood_matrix(obs, mix.atoms)
    Ls, rmax = L.row_scaled()
    return _neg_log_lik(Ls, rmax, np.asarray(mix.weights))
