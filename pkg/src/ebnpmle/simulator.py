"""Monte-Carlo harness for the classification and convergence-rate experiments.

Random streams
--------------
Every replication draws from its own ``numpy.random.Generator`` (PCG64)
seeded by ``SeedSequence([master_seed, *scenario_words, rep])`` where the
scenario words are a SHA-256 digest of the scenario's data-generating
fields. A replication's data therefore depend only on (seed, scenario, rep),
never on execution order, worker count or which methods are requested.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .classifiers import ALL_METHODS, LabeledDataset, fit_method, misclassification_rate
from .errors import InvalidArgumentError, InvalidStateError, NumericFailureError
from .mixture import MixingDistribution, convolution_density, hellinger_distance
from .solver import ObservationSet, default_grid_size, solve

log = logging.getLogger(__name__)

NOISE_FAMILIES = ("gaussian", "t3", "ar1", "exchangeable")
MU1_PATTERNS = ("flat", "fixed_vector")

# the caught failure types; anything else is a bug and propagates
FIT_FAILURES = (NumericFailureError, InvalidArgumentError, InvalidStateError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class ExperimentConfig:
    N: int
    m: int = 10
    delta: float = 3.0
    n0: int = 25
    n1: int = 25
    n_test0: int = 200
    n_test1: int = 200
    reps: int = 100
    noise: str = "gaussian"
    rho: float = 0.0
    mu1_pattern: str = "flat"
    seed: int = 0
    methods: tuple = ("npmle", "nb", "gp", "oracle_nb")
    K: int | None = None
    pi_hat: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if not 1 <= self.m <= self.N:
            raise InvalidArgumentError(f"need 1 <= m <= N, got m={self.m}, N={self.N}")
        if not self.delta >= 0:
            raise InvalidArgumentError("delta must be non-negative")
        if self.reps < 1:
            raise InvalidArgumentError("reps must be >= 1")
        if self.noise not in NOISE_FAMILIES:
            raise InvalidArgumentError(f"noise must be one of {NOISE_FAMILIES}")
        if self.noise in ("ar1", "exchangeable") and not 0 <= self.rho < 1:
            raise InvalidArgumentError("rho must lie in [0, 1)")
        if self.mu1_pattern not in MU1_PATTERNS:
            raise InvalidArgumentError(f"mu1_pattern must be one of {MU1_PATTERNS}")
        for meth in self.methods:
            if meth not in ALL_METHODS:
                raise InvalidArgumentError(f"unknown method {meth!r}")
        if min(self.n0, self.n1, self.n_test0, self.n_test1) < 1:
            raise InvalidArgumentError("group sizes must be positive")

    def scenario(self) -> dict:
        """The fields that determine the data-generating process."""
        keys = ("N", "m", "delta", "n0", "n1", "n_test0", "n_test1", "noise", "rho", "mu1_pattern")
        return {k: getattr(self, k) for k in keys}

    def scenario_words(self) -> list:
        blob = json.dumps(self.scenario(), sort_keys=True).encode()
        digest = hashlib.sha256(blob).digest()
        return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]

    def rng(self, rep: int) -> np.random.Generator:
        ss = np.random.SeedSequence([int(self.seed), *self.scenario_words(), int(rep)])
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class RateExperimentConfig:
    atoms: tuple = (-2.0, 2.0)
    weights: tuple = (0.5, 0.5)
    N_values: tuple = (500, 2000, 8000, 32000)
    reps: int = 20
    K: int | None = None
    grid_points: int = 10001
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(float(a) for a in self.atoms))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "N_values", tuple(int(n) for n in self.N_values))
        self.true_prior()
        if list(self.N_values) != sorted(self.N_values) or min(self.N_values) < 1:
            raise InvalidArgumentError("N_values must be positive and ascending")
        if self.reps < 1:
            raise InvalidArgumentError("reps must be >= 1")

    def true_prior(self) -> MixingDistribution:
        return MixingDistribution(np.array(self.atoms), np.array(self.weights))


# ----------------------------------------------------------------- generators


def gen_mu1(N: int, m: int, delta: float) -> np.ndarray:
    """First m coordinates equal delta/sqrt(m), the rest zero (norm = delta)."""
    if not 1 <= m <= N:
        raise InvalidArgumentError(f"need 1 <= m <= N, got m={m}, N={N}")
    mu = np.zeros(N)
    mu[:m] = delta / math.sqrt(m)
    return mu


def fixed_mu1(N: int) -> np.ndarray:
    """2/sqrt(10) * (1,1,1,1,1,1,1,-1,-1,-1,0,...,0), used with correlated noise."""
    if N < 10:
        raise InvalidArgumentError("fixed_vector pattern needs N >= 10")
    mu = np.zeros(N)
    mu[:10] = np.array([1, 1, 1, 1, 1, 1, 1, -1, -1, -1]) * 2 / math.sqrt(10)
    return mu


def _as_rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gen_noise(N: int, family: str = "gaussian", seed=0, rho: float = 0.0, size: int | None = None) -> np.ndarray:
    """Unit-variance noise vectors of length N (``size`` rows, or one vector).

    gaussian      iid N(0, 1)
    t3            iid t_3 / sqrt(3)
    ar1           stationary AR(1) across coordinates, corr(Z_j, Z_k) = rho^|j-k|
    exchangeable  sqrt(rho) W + sqrt(1 - rho) eps_j with one W per vector
    """
    rng = _as_rng(seed)
    if family in ("ar1", "exchangeable") and not 0 <= rho < 1:
        raise InvalidArgumentError(f"rho must lie in [0, 1), got {rho!r}")
    shape = (N,) if size is None else (size, N)
    if family == "gaussian":
        return rng.standard_normal(shape)
    if family == "t3":
        z = rng.standard_normal(shape)
        chi = rng.chisquare(3, size=shape)
        return z / np.sqrt(chi / 3.0) / math.sqrt(3.0)
    if family == "ar1":
        eps = rng.standard_normal(shape)
        c = math.sqrt(1.0 - rho * rho)
        eps[..., 0] /= c  # so the filtered first coordinate is eps_0 itself
        return lfilter([c], [1.0, -rho], eps, axis=-1)
    if family == "exchangeable":
        eps = rng.standard_normal(shape)
        w = rng.standard_normal(shape[:-1] + (1,))
        return math.sqrt(rho) * w + math.sqrt(1.0 - rho) * eps
    raise InvalidArgumentError(f"unknown noise family {family!r}")


def draw_dataset(config: ExperimentConfig, rng: np.random.Generator, n0: int, n1: int) -> LabeledDataset:
    mu1 = gen_mu1(config.N, config.m, config.delta) if config.mu1_pattern == "flat" else fixed_mu1(config.N)
    y = np.concatenate([np.zeros(n0, dtype=np.int8), np.ones(n1, dtype=np.int8)])
    Z = gen_noise(config.N, config.noise, rng, config.rho, size=n0 + n1)
    return LabeledDataset(Z + y[:, None] * mu1, y)


# ----------------------------------------------------------------- experiment


@dataclass
class ReplicationResult:
    rep: int
    rates: dict
    failures: dict


def run_replication(config: ExperimentConfig, rep: int) -> ReplicationResult:
    rng = config.rng(rep)
    train = draw_dataset(config, rng, config.n0, config.n1)
    test = draw_dataset(config, rng, config.n_test0, config.n_test1)
    rates, failures = {}, {}
    for method in config.methods:
        try:
            model = fit_method(method, train, test, K=config.K, pi_hat=config.pi_hat, seed=rep)
            rates[method] = misclassification_rate(model.predict(test.features), test.labels)
        except FIT_FAILURES as exc:
            failures[method] = str(exc)
    return ReplicationResult(rep, rates, failures)


@dataclass
class ResultTable:
    """Per (scenario, method) summaries; ``per_rep`` keeps the raw rates."""

    rows: list = field(default_factory=list)
    per_rep: dict = field(default_factory=dict)

    COLUMNS = ("N", "m", "delta", "noise", "rho", "mu1_pattern", "n0", "n1", "method", "mean_rate", "std_err", "reps", "failures")

    def extend(self, other: "ResultTable"):
        self.rows.extend(other.rows)
        self.per_rep.update(other.per_rep)

    def lookup(self, method: str, **scenario) -> dict:
        for row in self.rows:
            if row["method"] == method and all(row[k] == v for k, v in scenario.items()):
                return row
        raise KeyError((method, scenario))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in self.COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"columns": list(self.COLUMNS), "rows": self.rows}, indent=2)

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            row = dict(rec)
            for k in ("N", "m", "n0", "n1", "reps", "failures"):
                row[k] = int(row[k])
            for k in ("delta", "rho", "mean_rate", "std_err"):
                row[k] = float(row[k])
            rows.append(row)
        return cls(rows)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def summarize_rates(rates) -> tuple:
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        return math.nan, math.nan
    se = float(np.std(rates, ddof=1) / math.sqrt(rates.size)) if rates.size > 1 else 0.0
    return float(np.mean(rates)), se


def run_experiment(config: ExperimentConfig, workers: int = 1, rep_order=None) -> ResultTable:
    """Run all replications of one scenario and aggregate them in replication order.

    ``rep_order`` only changes the submission order, never the result.
    """
    order = list(range(config.reps)) if rep_order is None else list(rep_order)
    if sorted(order) != list(range(config.reps)):
        raise InvalidArgumentError("rep_order must be a permutation of range(reps)")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(lambda r: run_replication(config, r), order))
    else:
        done = [run_replication(config, r) for r in order]
    results = sorted(done, key=lambda r: r.rep)
    table = ResultTable()
    scen = config.scenario()
    for method in config.methods:
        rates = [r.rates[method] for r in results if method in r.rates]
        nfail = sum(method in r.failures for r in results)
        if nfail:
            log.warning("%s: %d of %d replications failed in scenario %s", method, nfail, config.reps, scen)
        mean, se = summarize_rates(rates)
        table.rows.append(
            {
                "N": config.N,
                "m": config.m,
                "delta": float(config.delta),
                "noise": config.noise,
                "rho": float(config.rho),
                "mu1_pattern": config.mu1_pattern,
                "n0": config.n0,
                "n1": config.n1,
                "method": method,
                "mean_rate": mean,
                "std_err": se,
                "reps": len(rates),
                "failures": nfail,
            }
        )
        table.per_rep[(json.dumps(scen, sort_keys=True), method)] = rates
    return table


def run_suite(configs, workers: int = 1) -> ResultTable:
    table = ResultTable()
    for cfg in configs:
        log.info("scenario %s (%d reps)", cfg.scenario(), cfg.reps)
        table.extend(run_experiment(cfg, workers))
    return table


# ------------------------------------------------------------ rate experiment


@dataclass
class RateRow:
    N: int
    K: int
    median: float
    iqr: float
    q25: float
    q75: float
    reps: int
    nonconverged: int
    distances: list = field(default_factory=list, repr=False)


def rate_draw(config: RateExperimentConfig, N: int, rep: int):
    """One draw: returns (hellinger distance, converged flag, K)."""
    ss = np.random.SeedSequence([int(config.seed), int(N), int(rep)])
    rng = np.random.Generator(np.random.PCG64(ss))
    prior = config.true_prior()
    mu = rng.choice(prior.atoms, p=prior.weights, size=N)
    x = mu + rng.standard_normal(N)
    K = default_grid_size(N) if config.K is None else config.K
    fit = solve(ObservationSet(x, 1.0), K)
    h = hellinger_distance(convolution_density(fit.mix), convolution_density(prior), config.grid_points)
    return h, fit.converged, K


def rate_experiment(config: RateExperimentConfig, workers: int = 1) -> list:
    """Median and interquartile range of the Hellinger error for each N."""
    rows = []
    for N in config.N_values:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                draws = list(pool.map(lambda r: rate_draw(config, N, r), range(config.reps)))
        else:
            draws = [rate_draw(config, N, r) for r in range(config.reps)]
        d = np.array([h for h, _, _ in draws])
        nonconv = sum(not ok for _, ok, _ in draws)
        if nonconv:
            log.warning("N=%d: %d of %d fits did not certify", N, nonconv, config.reps)
        q25, med, q75 = np.percentile(d, [25, 50, 75])
        rows.append(RateRow(N, draws[0][2], float(med), float(q75 - q25), float(q25), float(q75), len(d), nonconv, d.tolist()))
    return rows


def rate_table_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ("N", "K", "median", "iqr", "q25", "q75", "reps", "nonconverged")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) if isinstance(getattr(r, c), float) else getattr(r, c) for c in cols])
    return buf.getvalue()


# ------------------------------------------------------------------- configs


def _load_toml(path):
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


_EXPERIMENT_FIELDS = {f for f in ExperimentConfig.__dataclass_fields__}
_RATE_FIELDS = {f for f in RateExperimentConfig.__dataclass_fields__}


def experiment_configs_from_dict(doc: dict, seed: int | None = None) -> list:
    """Top-level keys are defaults; each ``[[scenario]]`` table overrides them."""
    doc = dict(doc)
    scenarios = doc.pop("scenario", None) or [{}]
    unknown = set(doc) - _EXPERIMENT_FIELDS
    if unknown:
        raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
    out = []
    for i, scen in enumerate(scenarios):
        bad = set(scen) - _EXPERIMENT_FIELDS
        if bad:
            raise InvalidArgumentError(f"scenario {i + 1}: unknown keys {sorted(bad)}")
        merged = {**doc, **scen}
        if seed is not None:
            merged["seed"] = seed
        if "N" not in merged:
            raise InvalidArgumentError(f"scenario {i + 1}: N is required")
        out.append(ExperimentConfig(**merged))
    return out


def load_experiment_configs(path, seed: int | None = None) -> list:
    return experiment_configs_from_dict(_load_toml(path), seed)


def load_rate_config(path, seed: int | None = None) -> RateExperimentConfig:
    doc = _load_toml(path)
    bad = set(doc) - _RATE_FIELDS
    if bad:
        raise InvalidArgumentError(f"unknown config keys: {sorted(bad)}")
    if seed is not None:
        doc["seed"] = seed
    return RateExperimentConfig(**doc)


def config_digest(configs) -> str:
    if isinstance(configs, (ExperimentConfig, RateExperimentConfig)):
        configs = [configs]
    blob = json.dumps([asdict(c) for c in configs], sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


# --------------------------------------------------------------------- chart


def bar_chart_svg(table: ResultTable) -> str:
    """Grouped bars of mean error by m, one panel per (N, delta, noise, rho)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "ebnpmle"

    panels = {}
    for row in table.rows:
        key = (row["N"], row["delta"], row["noise"], row["rho"])
        panels.setdefault(key, []).append(row)
    keys = sorted(panels)
    fig, axes = plt.subplots(1, len(keys), figsize=(4 * len(keys), 3.2), squeeze=False)
    for ax, key in zip(axes[0], keys):
        rows = panels[key]
        ms = sorted({r["m"] for r in rows})
        methods = list(dict.fromkeys(r["method"] for r in rows))
        width = 0.8 / len(methods)
        for i, meth in enumerate(methods):
            vals = [next((r["mean_rate"] for r in rows if r["m"] == m and r["method"] == meth), np.nan) for m in ms]
            ax.bar(np.arange(len(ms)) + i * width, vals, width, label=meth)
        ax.set_xticks(np.arange(len(ms)) + 0.4 - width / 2)
        ax.set_xticklabels([str(m) for m in ms])
        N, delta, noise, rho = key
        title = f"N={N}, Δ={delta:g}" + (f", {noise}" if noise != "gaussian" else "") + (f" ρ={rho:g}" if rho else "")
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("m")
    axes[0][0].set_ylabel("misclassification rate")
    axes[0][-1].legend(fontsize=7)
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def with_methods(config: ExperimentConfig, methods) -> ExperimentConfig:
    return replace(config, methods=tuple(methods))
