"""Binary classifiers for n << N Gaussian-feature data.

All rules share the group summary (per-feature class means) and differ in
how they turn it into a decision:

* ``npmle``          empirical-Bayes rule with NPMLE priors on the feature means
* ``nb``             Fisher rule with identity covariance and raw mean differences
* ``thresholded_nb`` NB restricted to |delta_j| >= lambda
* ``gp``             NB with Tweedie-shrunken mean differences (kernel prior)
* ``mzy``            Fisher rule with a lasso discriminant direction

Scores are oriented so that label 1 is predicted iff the score is strictly
positive; exact ties go to label 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from . import posterior
from .errors import InvalidArgumentError, NumericFailureError
from .mixture import MixingDistribution
from .solver import ObservationSet, SolverOptions, default_grid_size, solve

VARIANTS = ("npmle", "nb", "thresholded_nb", "gp_tweedie", "mzy_lasso")


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels).reshape(-1)
        if X.shape[0] != y.size:
            raise InvalidArgumentError(f"{X.shape[0]} feature rows but {y.size} labels")
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("features contain non-finite entries")
        if not np.all((y == 0) | (y == 1)):
            raise InvalidArgumentError("labels must be 0 or 1")
        y = y.astype(np.int8)
        if not (np.any(y == 0) and np.any(y == 1)):
            raise InvalidArgumentError("need at least one sample with each label")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def N(self) -> int:
        return self.features.shape[1]

    def columns(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[:, idx], self.labels)


@dataclass(frozen=True)
class GroupSummary:
    xbar0: np.ndarray
    xbar1: np.ndarray
    n0: int
    n1: int

    @property
    def delta_hat(self) -> np.ndarray:
        return self.xbar1 - self.xbar0

    @property
    def midpoint(self) -> np.ndarray:
        return (self.xbar0 + self.xbar1) / 2.0

    @property
    def N(self) -> int:
        return self.xbar0.size

    def to_dict(self) -> dict:
        return {
            "xbar0": self.xbar0.tolist(),
            "xbar1": self.xbar1.tolist(),
            "n0": self.n0,
            "n1": self.n1,
        }

    @classmethod
    def from_dict(cls, d) -> "GroupSummary":
        return cls(np.array(d["xbar0"], dtype=float), np.array(d["xbar1"], dtype=float), int(d["n0"]), int(d["n1"]))


def summarize(train: LabeledDataset) -> GroupSummary:
    y = train.labels
    n0, n1 = int(np.sum(y == 0)), int(np.sum(y == 1))
    if n0 == 0 or n1 == 0:
        raise InvalidArgumentError("both groups must be nonempty")
    X = train.features
    return GroupSummary(X[y == 0].mean(axis=0), X[y == 1].mean(axis=0), n0, n1)


def log_prior_odds(pi_hat: float) -> float:
    """log((1 - pi)/pi)."""
    if not 0.0 < pi_hat < 1.0:
        raise InvalidArgumentError(f"pi_hat must lie in (0, 1), got {pi_hat!r}")
    return math.log(1.0 - pi_hat) - math.log(pi_hat)


def default_pi_hat(train: LabeledDataset, proportional: bool = False) -> float:
    return float(np.mean(train.labels)) if proportional else 0.5


def _as_points(X, N):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != N:
        raise InvalidArgumentError(f"points have {X.shape[1]} features, model expects {N}")
    return X, single


@dataclass
class ClassifierModel:
    """A fitted rule. Only the payload fields of its variant are set."""

    variant: str
    summary: GroupSummary
    pi_hat: float = 0.5
    prior0: MixingDistribution | None = None
    prior1: MixingDistribution | None = None
    unit_noise: bool = False
    lam: float | None = None
    direction: np.ndarray | None = field(default=None, repr=False)
    beta0: float | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidArgumentError(f"unknown classifier variant {self.variant!r}")
        log_prior_odds(self.pi_hat)
        if self.direction is not None and np.asarray(self.direction).size != self.summary.N:
            raise InvalidArgumentError("payload dimension does not match the feature count")

    @property
    def N(self) -> int:
        return self.summary.N

    def scores(self, X) -> np.ndarray:
        """Decision scores for the rows of X (label 1 iff score > 0)."""
        X, _ = _as_points(X, self.N)
        if self.variant == "npmle":
            return -npmle_log_ratio(self, X)
        return linear_scores(self.linear_direction(), self.summary, self.pi_hat, X)

    def linear_direction(self) -> np.ndarray:
        if self.variant == "nb":
            return self.summary.delta_hat
        if self.variant == "thresholded_nb":
            return threshold_delta(self.summary, self.lam)
        if self.variant in ("gp_tweedie", "mzy_lasso"):
            return np.asarray(self.direction)
        raise InvalidArgumentError(f"{self.variant} is not a linear rule")

    def predict(self, X) -> np.ndarray:
        return (self.scores(X) > 0).astype(np.int8)

    def to_dict(self) -> dict:
        d = {"variant": self.variant, "pi_hat": self.pi_hat, "summary": self.summary.to_dict()}
        if self.variant == "npmle":
            d["prior0"] = self.prior0.to_dict()
            d["prior1"] = self.prior1.to_dict()
            d["unit_noise"] = self.unit_noise
        if self.lam is not None:
            d["lambda"] = self.lam
        if self.direction is not None:
            d["direction"] = np.asarray(self.direction).tolist()
        if self.beta0 is not None:
            d["beta0"] = self.beta0
        return d

    @classmethod
    def from_dict(cls, d) -> "ClassifierModel":
        return cls(
            variant=d["variant"],
            summary=GroupSummary.from_dict(d["summary"]),
            pi_hat=float(d["pi_hat"]),
            prior0=MixingDistribution.from_dict(d["prior0"]) if "prior0" in d else None,
            prior1=MixingDistribution.from_dict(d["prior1"]) if "prior1" in d else None,
            unit_noise=bool(d.get("unit_noise", False)),
            lam=d.get("lambda"),
            direction=np.array(d["direction"], dtype=float) if "direction" in d else None,
            beta0=d.get("beta0"),
        )


# --------------------------------------------------------------------- NPMLE


def fit_npmle(
    train: LabeledDataset,
    K: int | None = None,
    pi_hat: float = 0.5,
    unit_noise: bool = False,
    options: SolverOptions = SolverOptions(),
) -> ClassifierModel:
    """Fit one NPMLE prior per group on the per-feature group means.

    The group means of group k have noise sd 1/sqrt(n_k); ``unit_noise=True``
    fits them with unit noise instead.
    """
    s = summarize(train)
    K = default_grid_size(s.N) if K is None else K
    priors = []
    for k, (xbar, nk) in enumerate(((s.xbar0, s.n0), (s.xbar1, s.n1))):
        sd = 1.0 if unit_noise else 1.0 / math.sqrt(nk)
        fit = solve(ObservationSet(xbar, sd), K, options)
        if not fit.converged:
            raise NumericFailureError(
                f"NPMLE for group {k} ({s.N} features, K={K}) did not certify: "
                f"max gradient {fit.kkt_max_gradient:.6g}, active gap {fit.active_atom_gap:.3g}"
            )
        priors.append(fit.mix)
    return ClassifierModel("npmle", s, pi_hat, prior0=priors[0], prior1=priors[1], unit_noise=unit_noise)


def npmle_log_ratio(model: ClassifierModel, X) -> np.ndarray:
    """sum_j log[(phi*F_j^0)(x_j) / (phi*F_j^1)(x_j)] + log((1-pi)/pi) for each row."""
    s = model.summary
    X, _ = _as_points(X, s.N)
    l0 = posterior.predictive_log_density_matrix(model.prior0, s.xbar0, s.n0, X)
    l1 = posterior.predictive_log_density_matrix(model.prior1, s.xbar1, s.n1, X)
    return np.sum(l0 - l1, axis=1) + log_prior_odds(model.pi_hat)


def classify_npmle(model: ClassifierModel, xnew):
    """Return ``(label, log_ratio)``; label 1 iff the log ratio is strictly negative."""
    if model.variant != "npmle":
        raise InvalidArgumentError("classify_npmle needs an npmle model")
    X, single = _as_points(xnew, model.N)
    lr = npmle_log_ratio(model, X)
    labels = (lr < 0).astype(np.int8)
    if single:
        return int(labels[0]), float(lr[0])
    return labels, lr


# --------------------------------------------------------------- linear rules


def linear_scores(direction, summary: GroupSummary, pi_hat: float, X) -> np.ndarray:
    """direction^T (x - midpoint) - log((1-pi)/pi) for each row of X."""
    X, _ = _as_points(X, summary.N)
    return (X - summary.midpoint) @ np.asarray(direction, dtype=float) - log_prior_odds(pi_hat)


def _linear_classify(direction, summary, pi_hat, xnew):
    X, single = _as_points(xnew, summary.N)
    score = linear_scores(direction, summary, pi_hat, X)
    labels = (score > 0).astype(np.int8)
    if single:
        return int(labels[0]), float(score[0])
    return labels, score


def classify_nb(summary: GroupSummary, pi_hat: float, xnew):
    return _linear_classify(summary.delta_hat, summary, pi_hat, xnew)


def fit_nb(train: LabeledDataset, pi_hat: float = 0.5) -> ClassifierModel:
    return ClassifierModel("nb", summarize(train), pi_hat)


def threshold_delta(summary: GroupSummary, lam: float) -> np.ndarray:
    if lam < 0:
        raise InvalidArgumentError(f"lambda must be >= 0, got {lam!r}")
    d = summary.delta_hat
    return np.where(np.abs(d) >= lam, d, 0.0)


def default_lambda_grid(summary: GroupSummary) -> np.ndarray:
    """0, every distinct |delta_j|, and +inf: the only places the rule changes."""
    return np.concatenate([[0.0], np.unique(np.abs(summary.delta_hat)), [np.inf]])


def misclassification_rate(predicted, truth) -> float:
    predicted, truth = np.asarray(predicted).reshape(-1), np.asarray(truth).reshape(-1)
    if predicted.size != truth.size or predicted.size < 1:
        raise InvalidArgumentError("label sequences must have equal nonzero length")
    return float(np.mean(predicted != truth))


def thresholded_errors(summary: GroupSummary, pi_hat: float, X, y, lambda_grid) -> np.ndarray:
    """Error of the thresholded NB rule on (X, y) at every lambda in the grid.

    Features are accumulated in order of decreasing |delta_j|, so one cumulative
    sum yields the scores for every threshold at once.
    """
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    d = summary.delta_hat
    X, _ = _as_points(X, summary.N)
    order = np.argsort(-np.abs(d), kind="stable")
    contrib = (X[:, order] - summary.midpoint[order]) * d[order]
    partial = np.concatenate([np.zeros((X.shape[0], 1)), np.cumsum(contrib, axis=1)], axis=1)
    kept = d.size - np.searchsorted(np.sort(np.abs(d)), lambda_grid, side="left")
    wrong = (partial[:, kept] - log_prior_odds(pi_hat) > 0) != (np.asarray(y)[:, None] == 1)
    return wrong.mean(axis=0)


@dataclass
class OracleResult:
    lambda_star: float
    model: ClassifierModel
    test_error: float
    errors: np.ndarray = field(repr=False)


def oracle_nb(summary: GroupSummary, labeled_test: LabeledDataset, lambda_grid=None, pi_hat: float = 0.5) -> OracleResult:
    """Thresholded NB with the lambda that minimizes error on the labeled test set.

    Ties go to the smallest lambda.
    """
    grid = default_lambda_grid(summary) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if grid.size == 0:
        raise InvalidArgumentError("lambda grid is empty")
    if np.any(np.diff(grid) < 0):
        raise InvalidArgumentError("lambda grid must be sorted ascending")
    errs = thresholded_errors(summary, pi_hat, labeled_test.features, labeled_test.labels, grid)
    best = int(np.argmin(errs))
    lam = float(grid[best])
    model = ClassifierModel("thresholded_nb", summary, pi_hat, lam=lam)
    err = misclassification_rate(model.predict(labeled_test.features), labeled_test.labels)
    return OracleResult(lam, model, err, errs)


def _folds(labels, n_folds, rng):
    """Stratified fold assignment."""
    folds = np.empty(labels.size, dtype=int)
    for k in (0, 1):
        idx = np.flatnonzero(labels == k)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = np.arange(idx.size) % n_folds
    return folds


def fit_thresholded_nb_cv(train: LabeledDataset, pi_hat: float = 0.5, n_folds: int = 3, seed: int = 0) -> ClassifierModel:
    """Thresholded NB with lambda chosen by stratified cross-validation on the training set."""
    s = summarize(train)
    grid = default_lambda_grid(s)
    folds = _folds(train.labels, n_folds, np.random.default_rng(seed))
    total = np.zeros(grid.size)
    for f in range(n_folds):
        tr, te = folds != f, folds == f
        if not (np.any(train.labels[tr] == 0) and np.any(train.labels[tr] == 1)):
            continue
        sf = summarize(LabeledDataset(train.features[tr], train.labels[tr]))
        total += thresholded_errors(sf, pi_hat, train.features[te], train.labels[te], grid) * te.sum()
    lam = float(grid[int(np.argmin(total))])
    return ClassifierModel("thresholded_nb", s, pi_hat, lam=lam)


# ------------------------------------------------------------ GP / Tweedie


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, dtype=float)
    sd = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.349) if q75 > q25 else sd
    if not spread > 0:
        return 0.0
    return 0.9 * spread * x.size ** (-0.2)


def kde_score(points, data, h: float, exact_limit: int = 4000):
    """Gaussian KDE of ``data`` with bandwidth h: returns (f, f') at ``points``.

    Exact pairwise sums for small inputs; above ``exact_limit`` data points the
    data are linearly binned on a fine grid and convolved by FFT.
    """
    points = np.asarray(points, dtype=float)
    data = np.asarray(data, dtype=float)
    if data.size <= exact_limit:
        f = np.zeros(points.size)
        fp = np.zeros(points.size)
        for s in range(0, data.size, 500):
            u = (points[:, None] - data[None, s : s + 500]) / h
            k = np.exp(-0.5 * u * u)
            f += k.sum(axis=1)
            fp -= (u * k).sum(axis=1)
        c = 1.0 / (data.size * h * math.sqrt(2 * math.pi))
        return f * c, fp * c / h
    lo = min(points.min(), data.min()) - 6 * h
    hi = max(points.max(), data.max()) + 6 * h
    M = 1 << 14
    dx = (hi - lo) / (M - 1)
    pos = (data - lo) / dx
    i = np.floor(pos).astype(int)
    frac = pos - i
    counts = np.bincount(i, weights=1 - frac, minlength=M + 1) + np.bincount(i + 1, weights=frac, minlength=M + 1)
    counts = counts[:M]
    half = int(math.ceil(6 * h / dx))
    u = np.arange(-half, half + 1) * dx / h
    ker = np.exp(-0.5 * u * u) / (data.size * h * math.sqrt(2 * math.pi))
    f_grid = fftconvolve(counts, ker, mode="same")
    fp_grid = fftconvolve(counts, -u / h * ker, mode="same")
    gx = lo + dx * np.arange(M)
    return np.interp(points, gx, f_grid), np.interp(points, gx, fp_grid)


@dataclass
class TweedieResult:
    delta_tilde: np.ndarray
    bandwidth: float
    flagged: np.ndarray = field(repr=False)


def gp_tweedie(summary: GroupSummary, bandwidth: float | None = None) -> TweedieResult:
    """Tweedie posterior means of the mean differences under a kernel-smoothed marginal.

    delta_hat_j has noise variance nu = 1/n0 + 1/n1, and
    E(delta_j | delta_hat_j) = delta_hat_j + nu * f'(delta_hat_j) / f(delta_hat_j).
    Coordinates where the density estimate falls below 1e-12 keep delta_hat_j.
    """
    d = summary.delta_hat
    if d.size < 2:
        raise InvalidArgumentError("need at least two features")
    nu = 1.0 / summary.n0 + 1.0 / summary.n1
    h = silverman_bandwidth(d) if bandwidth is None else float(bandwidth)
    if not h > 0:
        # all mean differences equal: the kernel estimate is symmetric about them
        return TweedieResult(d.copy(), 0.0, np.zeros(d.size, dtype=bool))
    f, fp = kde_score(d, d, h)
    flagged = f < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        shrunk = np.where(flagged, d, d + nu * fp / f)
    return TweedieResult(shrunk, h, flagged)


def fit_gp(train: LabeledDataset, pi_hat: float = 0.5, bandwidth: float | None = None) -> ClassifierModel:
    s = summarize(train)
    tw = gp_tweedie(s, bandwidth)
    return ClassifierModel(
        "gp_tweedie", s, pi_hat, direction=tw.delta_tilde, info={"bandwidth": tw.bandwidth, "flagged": int(tw.flagged.sum())}
    )


# ------------------------------------------------------------------ MZY lasso


@dataclass
class LassoFit:
    beta: np.ndarray
    beta0: float
    lam: float
    cycles: int
    objective: list = field(default_factory=list, repr=False)


def lasso_objective(Xc, yc, beta, lam) -> float:
    r = yc - Xc @ beta
    return float(r @ r) / Xc.shape[0] + lam * float(np.abs(beta).sum())


def _cd_cycle_py(Xc, r, beta, col_ss, lam, n, coords):
    """One cyclic pass over ``coords``; updates r and beta in place, returns max |change|."""
    biggest = 0.0
    half = lam / 2.0
    for j in coords:
        ss = col_ss[j]
        if ss == 0.0:
            continue
        old = beta[j]
        rho = (Xc[:, j] @ r) / n + ss * old
        new = math.copysign(max(abs(rho) - half, 0.0), rho) / ss
        if new != old:
            r -= Xc[:, j] * (new - old)
            beta[j] = new
            biggest = max(biggest, abs(new - old))
    return biggest


try:
    import numba

    @numba.njit(cache=True)
    def _cd_cycle(Xc, r, beta, col_ss, lam, n, coords):
        biggest = 0.0
        half = lam / 2.0
        m = Xc.shape[0]
        for j in coords:
            ss = col_ss[j]
            if ss == 0.0:
                continue
            old = beta[j]
            acc = 0.0
            for i in range(m):
                acc += Xc[i, j] * r[i]
            rho = acc / n + ss * old
            mag = abs(rho) - half
            new = 0.0
            if mag > 0.0:
                new = (mag if rho > 0 else -mag) / ss
            if new != old:
                d = new - old
                for i in range(m):
                    r[i] -= Xc[i, j] * d
                beta[j] = new
                if abs(d) > biggest:
                    biggest = abs(d)
        return biggest

except ImportError:  # pragma: no cover
    _cd_cycle = _cd_cycle_py


def mzy_lasso(
    train: LabeledDataset,
    lam: float,
    max_iters: int = 10000,
    tol: float = 1e-8,
    warm_start=None,
    track_objective: bool = False,
    active_set: bool = True,
) -> LassoFit:
    """Minimize n^-1 sum_i (y_i - b0 - x_i^T b)^2 + lam * ||b||_1 by cyclic coordinate descent.

    The soft-threshold level for a coordinate is lam/2 because of the n^-1
    (not (2n)^-1) scaling of the squared loss. Convergence means a cycle over
    all coordinates would move none of them by ``tol`` or more. With
    ``active_set`` the cycles run over the nonzero coordinates, and the zero
    ones are checked in one vectorized pass: a zero coordinate stays put under
    its update exactly when |x_j^T r / n| <= lam/2, so only violators are
    cycled over. Without it every cycle visits all coordinates.
    """
    if lam < 0:
        raise InvalidArgumentError(f"lambda must be >= 0, got {lam!r}")
    X = train.features
    y = train.labels.astype(float)
    n, N = X.shape
    xm, ym = X.mean(axis=0), y.mean()
    Xc, yc = X - xm, y - ym
    col_ss = np.einsum("ij,ij->j", Xc, Xc) / n
    beta = np.zeros(N) if warm_start is None else np.array(warm_start, dtype=float)
    r = yc - Xc @ beta
    objective = [lasso_objective(Xc, yc, beta, lam)] if track_objective else []
    live = col_ss > 0
    coords = np.arange(N, dtype=np.int64)
    check = True
    cycles = 0
    while cycles < max_iters:
        if active_set and check:
            grad = Xc.T @ r / n
            step = np.divide(np.abs(grad) - lam / 2.0, col_ss, out=np.zeros(N), where=live)
            viol = (beta == 0) & live & (step >= tol)
            if cycles > 0 and not viol.any():
                break
            coords = np.flatnonzero((beta != 0) | viol)
        cycles += 1
        change = _cd_cycle(Xc, r, beta, col_ss, lam, n, coords)
        if track_objective:
            objective.append(lasso_objective(Xc, yc, beta, lam))
        check = change < tol
        if not active_set and check:
            break
    else:
        raise NumericFailureError(
            f"lasso did not converge in {max_iters} cycles (lambda={lam:.4g})",
            last_iterate=(beta, float(ym - xm @ beta)),
        )
    return LassoFit(beta, float(ym - xm @ beta), lam, cycles, objective)


def lambda_max(train: LabeledDataset) -> float:
    """Smallest lambda for which the lasso solution is exactly zero."""
    X = train.features
    y = train.labels.astype(float)
    Xc, yc = X - X.mean(axis=0), y - y.mean()
    return 2.0 * float(np.max(np.abs(Xc.T @ yc))) / X.shape[0]


def lasso_path(train: LabeledDataset, n_lambdas: int = 50, min_ratio: float = 1e-2, **kw) -> list:
    """Warm-started fits along a log-spaced lambda path, largest lambda first.

    The path stops early (returning the fits so far) at the first lambda
    that fails to converge.
    """
    lmax = lambda_max(train)
    lams = lmax * np.logspace(0, math.log10(min_ratio), n_lambdas)
    fits, warm = [], None
    for lam in lams:
        try:
            fit = mzy_lasso(train, float(lam), warm_start=warm, **kw)
        except NumericFailureError:
            break
        fits.append(fit)
        warm = fit.beta
    return fits


def classify_mzy(fit: LassoFit, summary: GroupSummary, pi_hat: float, xnew):
    if fit.beta.size != summary.N:
        raise InvalidArgumentError("lasso coefficients do not match the feature count")
    return _linear_classify(fit.beta, summary, pi_hat, xnew)


def _mzy_model(fit: LassoFit, summary, pi_hat, **info):
    return ClassifierModel("mzy_lasso", summary, pi_hat, lam=fit.lam, direction=fit.beta, beta0=fit.beta0, info=info)


def oracle_mzy(train: LabeledDataset, labeled_test: LabeledDataset, pi_hat: float = 0.5, n_lambdas: int = 50) -> OracleResult:
    """MZY rule with lambda chosen on the labeled test set (largest lambda among ties)."""
    s = summarize(train)
    fits = lasso_path(train, n_lambdas)
    if not fits:
        raise NumericFailureError("lasso path produced no converged fit")
    errs = np.array(
        [misclassification_rate(classify_mzy(f, s, pi_hat, labeled_test.features)[0], labeled_test.labels) for f in fits]
    )
    best = int(np.argmin(errs))
    return OracleResult(fits[best].lam, _mzy_model(fits[best], s, pi_hat), float(errs[best]), errs)


def fit_mzy_cv(train: LabeledDataset, pi_hat: float = 0.5, n_folds: int = 3, n_lambdas: int = 50, seed: int = 0) -> ClassifierModel:
    """MZY rule with lambda chosen by stratified cross-validation."""
    s = summarize(train)
    lmax = lambda_max(train)
    lams = lmax * np.logspace(0, -2, n_lambdas)
    folds = _folds(train.labels, n_folds, np.random.default_rng(seed))
    wrong = np.zeros(n_lambdas)
    for f in range(n_folds):
        tr, te = folds != f, folds == f
        if not (np.any(train.labels[tr] == 0) and np.any(train.labels[tr] == 1)):
            continue
        sub = LabeledDataset(train.features[tr], train.labels[tr])
        ssub = summarize(sub)
        warm = None
        for i, lam in enumerate(lams):
            try:
                fit = mzy_lasso(sub, float(lam), warm_start=warm)
            except NumericFailureError:
                wrong[i:] += te.sum()
                break
            warm = fit.beta
            pred, _ = classify_mzy(fit, ssub, pi_hat, train.features[te])
            wrong[i] += np.sum(pred != train.labels[te])
    lam = float(lams[int(np.argmin(wrong))])
    return _mzy_model(mzy_lasso(train, lam), s, pi_hat)


# ------------------------------------------------------------------ screening


def screening_threshold(N: int) -> float:
    """2 sqrt(log(N)/N), the typical maximum |correlation| among N independent features."""
    if N < 2:
        raise InvalidArgumentError("need at least two features")
    return 2.0 * math.sqrt(math.log(N) / N)


@dataclass
class ScreenResult:
    retained: np.ndarray
    threshold: float
    zero_variance: np.ndarray
    pairs_examined: int


def correlated_pairs(features, threshold: float, block: int = 1024):
    """All (i, j), i < j, with |sample correlation| > threshold, in lexicographic order."""
    X = np.asarray(features, dtype=float)
    Xc = X - X.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    zero = norms == 0
    Z = np.divide(Xc, norms, out=np.zeros_like(Xc), where=~zero)
    N = Z.shape[1]
    out_i, out_j = [], []
    for s in range(0, N, block):
        C = Z[:, s : s + block].T @ Z
        ii, jj = np.nonzero(np.abs(C) > threshold)
        ii = ii + s
        keep = jj > ii
        out_i.append(ii[keep])
        out_j.append(jj[keep])
    i = np.concatenate(out_i) if out_i else np.zeros(0, int)
    j = np.concatenate(out_j) if out_j else np.zeros(0, int)
    order = np.lexsort((j, i))
    return i[order], j[order], zero


def screen_correlated(train_features, threshold: float | None = None, seed: int = 0) -> ScreenResult:
    """Drop one feature, chosen at random, from every pair correlated above ``threshold``.

    Pairs are visited in lexicographic order; a pair is skipped once either
    member has been removed. Zero-variance features have correlation 0 with
    everything and are reported in ``zero_variance``.
    """
    X = np.asarray(train_features, dtype=float)
    if X.ndim != 2 or X.shape[0] < 3:
        raise InvalidArgumentError("screening needs at least 3 samples")
    N = X.shape[1]
    thr = screening_threshold(N) if threshold is None else float(threshold)
    i, j, zero = correlated_pairs(X, thr)
    coin = np.random.default_rng(seed).integers(0, 2, size=i.size)
    alive = np.ones(N, dtype=bool)
    for a, b, c in zip(i.tolist(), j.tolist(), coin.tolist()):
        if alive[a] and alive[b]:
            alive[b if c else a] = False
    return ScreenResult(np.flatnonzero(alive), thr, np.flatnonzero(zero), int(i.size))


# ------------------------------------------------------------------ registry

PRACTICAL_METHODS = ("npmle", "nb", "gp", "thresholded_nb", "mzy_cv")
ORACLE_METHODS = ("oracle_nb", "mzy")
ALL_METHODS = PRACTICAL_METHODS + ORACLE_METHODS


def fit_method(method: str, train: LabeledDataset, test: LabeledDataset | None = None, *, K=None, pi_hat=0.5, seed=0):
    """Fit ``method`` on ``train``; oracle methods also read the labeled ``test`` set."""
    if method == "npmle":
        return fit_npmle(train, K=K, pi_hat=pi_hat)
    if method == "nb":
        return fit_nb(train, pi_hat)
    if method == "gp":
        return fit_gp(train, pi_hat)
    if method == "thresholded_nb":
        return fit_thresholded_nb_cv(train, pi_hat, seed=seed)
    if method == "mzy_cv":
        return fit_mzy_cv(train, pi_hat, seed=seed)
    if method in ORACLE_METHODS:
        if test is None:
            raise InvalidArgumentError(f"{method} needs a labeled test set")
        if method == "oracle_nb":
            return oracle_nb(summarize(train), test, pi_hat=pi_hat).model
        return oracle_mzy(train, test, pi_hat).model
    raise InvalidArgumentError(f"unknown method {method!r}; choose from {', '.join(ALL_METHODS)}")
