"""Synthetic logistic data with dependent errors and replicated experiments.

Random streams are keyed by ``(master seed, replication, stream)`` through
:class:`numpy.random.SeedSequence`, so every estimator cell of a table sees
the same covariates and errors for a given replication, and results do not
depend on how replications are spread over worker processes.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import NumericalError, PMWLSError, ValidationError
from .model import Dataset, Scale, log_logistic_model, logistic_model
from .objective import ObjectiveContext, Penalty
from .solver import ACTIVE_TOL, SolverConfig, fit_additive_naive
from .tuning import select_tau
from .weights import IDENTITY, WeightSpec, arma_autocovariance, innovation_variance

log = logging.getLogger(__name__)

STREAM_COVARIATES = 0
STREAM_ERRORS = 1
ARMA_BURN_IN = 1000
MAX_FAILURE_FRACTION = 0.10


def true_theta(d: int = 20) -> np.ndarray:
    theta = np.zeros(d)
    theta[:3] = (1.0, 1.2, 0.6)
    return theta


@dataclass(frozen=True)
class ErrorProcessSpec:
    """Stationary AR(1)/ARMA(1,1) with mean ``mu`` and marginal sd ``sigma``.

    With ``exponentiate`` the generated values are ``exp`` of the process,
    i.e. ``mu`` and ``sigma`` are log-scale moments.
    """

    family: str = "ar1"
    rho: float = 0.5
    phi: float = 0.0
    mu: float = 0.0
    sigma: float = 1.0
    exponentiate: bool = False

    def __post_init__(self):
        if self.family not in ("ar1", "arma11"):
            raise ValidationError(f"unknown error family {self.family!r}")
        if not abs(self.rho) < 1:
            raise ValidationError("error process needs |rho| < 1")
        if not abs(self.phi) < 1:
            raise ValidationError("error process needs |phi| < 1")
        if self.family == "ar1" and self.phi != 0:
            raise ValidationError("ar1 error process takes no MA term")
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")


def seeded_rng(seed: int, rep: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(rep, stream)))


def gen_covariates(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Column 1 uniform on [-1, 1]; the rest jointly normal (var .6, cov .1)."""
    if d < 2:
        raise ValidationError("covariate dimension must be >= 2")
    cov = np.full((d - 1, d - 1), 0.1)
    np.fill_diagonal(cov, 0.6)
    chol = np.linalg.cholesky(cov)
    x = np.empty((n, d))
    x[:, 0] = rng.uniform(-1.0, 1.0, n)
    x[:, 1:] = rng.standard_normal((n, d - 1)) @ chol.T
    return x


def gen_errors(spec: ErrorProcessSpec, n: int,
               rng: np.random.Generator) -> np.ndarray:
    if spec.family == "ar1":
        sd_e = spec.sigma * math.sqrt(1 - spec.rho ** 2)
        e = rng.standard_normal(n)
        e[0] *= spec.sigma
        e[1:] *= sd_e
        x = lfilter([1.0], [1.0, -spec.rho], e)
    else:
        sd_e = math.sqrt(innovation_variance(spec.rho, spec.phi, spec.sigma))
        e = sd_e * rng.standard_normal(n + ARMA_BURN_IN)
        x = lfilter([1.0, spec.phi], [1.0, -spec.rho], e)[ARMA_BURN_IN:]
    x = x + spec.mu
    return np.exp(x) if spec.exponentiate else x


@dataclass(frozen=True)
class Estimator:
    """One row of a results table: method, working weight, penalty."""

    method: str = "pmwls"  # pmwls, pwls or additive
    weight: WeightSpec = IDENTITY
    penalty: str = "scad"

    def __post_init__(self):
        if self.method not in ("pmwls", "pwls", "additive"):
            raise ValidationError(f"unknown method {self.method!r}")
        if self.method == "additive" and self.weight.kind != "identity":
            raise ValidationError("the additive comparator is unweighted")
        if self.penalty not in ("lasso", "scad"):
            raise ValidationError(f"unknown penalty {self.penalty!r}")

    @property
    def label(self) -> str:
        name = {"pmwls": "PMWLS", "pwls": "PWLS",
                "additive": "Additive"}[self.method]
        if self.weight.kind == "identity":
            return name
        if self.weight.kind == "ar1":
            return f"{name} (rho={self.weight.rho:g})"
        return f"{name} (rho={self.weight.rho:g},phi={self.weight.phi:g})"


@dataclass(frozen=True)
class SimConfig:
    n: int = 200
    reps: int = 100
    d: int = 20
    errors: ErrorProcessSpec = ErrorProcessSpec()
    model_form: str = "additive"  # or "multiplicative"
    estimators: tuple = (Estimator(),)
    seed: int = 0
    tau_count: int = 50
    tau_floor: float = 1e-4
    solver: SolverConfig = SolverConfig()
    theta0: Optional[tuple] = None
    # Optional box |theta_i| <= theta_bound for every estimator (default:
    # unbounded parameter space).
    theta_bound: Optional[float] = None

    def __post_init__(self):
        if self.theta_bound is not None and not self.theta_bound > 0:
            raise ValidationError("theta_bound must be positive")
        if self.reps < 1:
            raise ValidationError("reps must be >= 1")
        if self.n < 2:
            raise ValidationError("n must be >= 2")
        if self.model_form not in ("additive", "multiplicative"):
            raise ValidationError(f"unknown model form {self.model_form!r}")
        if self.theta0 is not None and len(self.theta0) != self.d:
            raise ValidationError("theta0 length must equal d")
        if self.model_form == "multiplicative" and not self.errors.exponentiate:
            object.__setattr__(self, "errors",
                               replace(self.errors, exponentiate=True))
        if self.model_form == "additive" and self.errors.exponentiate:
            raise ValidationError("additive model takes unexponentiated errors")

    @property
    def theta_true(self) -> np.ndarray:
        if self.theta0 is None:
            return true_theta(self.d)
        return np.asarray(self.theta0, dtype=float)

    @property
    def s(self) -> int:
        return int(np.count_nonzero(self.theta_true))


def gen_dataset(cfg: SimConfig, rep: int) -> Dataset:
    """Replication ``rep`` of the logistic design.

    Multiplicative data store ``log z`` with the raw ``z`` kept alongside.
    """
    if not 0 <= rep < cfg.reps:
        raise ValidationError(f"replication index {rep} outside [0, {cfg.reps})")
    x = gen_covariates(cfg.n, cfg.d, seeded_rng(cfg.seed, rep, STREAM_COVARIATES))
    eps = gen_errors(cfg.errors, cfg.n, seeded_rng(cfg.seed, rep, STREAM_ERRORS))
    f = logistic_model(cfg.d).value(x, cfg.theta_true)
    if cfg.model_form == "additive":
        return Dataset(f + eps, x)
    z = f * eps
    assert np.all(z > 0)
    return Dataset(np.log(z), x, Scale.LOG, z)


def fit_estimator(est: Estimator, data: Dataset, cfg: SimConfig):
    """Tuned fit of one estimator; returns the :class:`TuningResult`."""
    pen = Penalty(est.penalty, 1.0)
    if data.scale is Scale.LOG:
        mean_model = log_logistic_model(cfg.d)
    else:
        mean_model = logistic_model(cfg.d)
    raw_model = logistic_model(cfg.d)
    if cfg.theta_bound is not None:
        box = np.tile([-cfg.theta_bound, cfg.theta_bound], (cfg.d, 1))
        mean_model = replace(mean_model, bounds=box)
        raw_model = replace(raw_model, bounds=box)
    if est.method == "pmwls":
        ctx = ObjectiveContext.pmwls(data, mean_model, est.weight, pen)
    elif est.method == "pwls":
        ctx = ObjectiveContext.pwls(data, mean_model, est.weight, pen)
    else:
        raw = Dataset(data.z, data.x) if data.scale is Scale.LOG else data
        ctx = ObjectiveContext.pmwls(raw, raw_model, IDENTITY, pen)
    res = select_tau(ctx, cfg.solver, cfg.tau_count, cfg.tau_floor)
    if est.method == "additive":
        res.fit.method = "additive"
    return res


@dataclass
class MetricsRow:
    mse: float
    sd: float
    tp: float
    tn: float
    reps: int
    failures: int = 0


def metrics(thetas, theta0, targets=None, s: Optional[int] = None
            ) -> MetricsRow:
    """MSE, SD, TP and TN over replications.

    ``thetas`` is ``(R, p)``.  SD is the root mean squared vector deviation
    from the average estimate (needs R >= 2; reported as NaN otherwise).
    The first ``s`` coordinates are the true signals.
    """
    th = np.atleast_2d(np.asarray(thetas, dtype=float))
    theta0 = np.asarray(theta0, dtype=float)
    R, p = th.shape
    if theta0.shape != (p,):
        raise ValidationError("theta0 does not match estimate dimension")
    targets = np.zeros(p) if targets is None else np.asarray(targets, float)
    if targets.shape != (p,):
        raise ValidationError("targets do not match estimate dimension")
    if s is None:
        s = int(np.count_nonzero(theta0))
    mse = float(np.sum((th - theta0) ** 2) / (R * p))
    if R >= 2:
        dev = th - th.mean(axis=0)
        sd = math.sqrt(float(np.sum(dev ** 2)) / (R - 1))
    else:
        sd = math.nan
    sig = np.abs(th - targets) > ACTIVE_TOL
    tp = float(np.mean(sig[:, :s].sum(axis=1)))
    tn = float(np.mean((~sig[:, s:]).sum(axis=1)))
    return MetricsRow(mse, sd, tp, tn, R)


def _run_rep(args):
    cfg, rep = args
    data = gen_dataset(cfg, rep)
    out = []
    for est in cfg.estimators:
        try:
            res = fit_estimator(est, data, cfg)
            out.append(res.fit.theta)
        except PMWLSError as exc:
            log.warning("rep %d, %s failed: %s", rep, est.label, exc)
            out.append(None)
    return out


def run_replications(cfg: SimConfig, threads: int = 1):
    """Per-replication estimates, ordered by replication index."""
    jobs = [(cfg, rep) for rep in range(cfg.reps)]
    if threads <= 1:
        return [_run_rep(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_rep, jobs, chunksize=1))


@dataclass
class ExperimentRow:
    label: str
    method: str
    weight: str
    penalty: str
    n: int
    mu: float
    sigma: float
    metrics: MetricsRow


def run_experiment(cfg: SimConfig, threads: int = 1) -> list:
    """One :class:`ExperimentRow` per estimator of ``cfg``.

    Failed replications are dropped and counted; a cell with more than 10%
    failures raises :class:`NumericalError`.
    """
    results = run_replications(cfg, threads)
    rows = []
    for j, est in enumerate(cfg.estimators):
        thetas = [r[j] for r in results if r[j] is not None]
        failures = cfg.reps - len(thetas)
        if failures > MAX_FAILURE_FRACTION * cfg.reps:
            raise NumericalError(
                f"{est.label}: {failures} of {cfg.reps} replications failed")
        m = metrics(np.array(thetas), cfg.theta_true, s=cfg.s)
        m.failures = failures
        rows.append(ExperimentRow(est.label, est.method, est.weight.label,
                                  est.penalty, cfg.n, cfg.errors.mu,
                                  cfg.errors.sigma, m))
    return rows


# Table presets -----------------------------------------------------------

WEIGHTS = (IDENTITY, WeightSpec("ar1", 0.5), WeightSpec("ar1", 0.9),
           WeightSpec("arma11", 0.8, 0.4))
ERRORS = {
    "5": ("ar1", 0.5, 0.0),
    "9": ("ar1", 0.9, 0.0),
    "8_4": ("arma11", 0.8, 0.4),
}
MU_SIGMA = ((0.1, 0.5), (0.5, 0.5))
SAMPLE_SIZES = (50, 100, 200)


@dataclass(frozen=True)
class TablePreset:
    name: str
    model_form: str
    errors: tuple
    estimators: tuple
    mu_sigma: tuple = MU_SIGMA
    sample_sizes: tuple = SAMPLE_SIZES
    reps: int = 100

    def configs(self, seed: int, sample_sizes=None, reps=None,
                mu_sigma=None, methods=None, **extra):
        ests = self.estimators
        if methods:
            wanted = {m.lower() for m in methods}
            ests = tuple(e for e in ests if e.label.lower() in wanted
                         or e.method in wanted)
            if not ests:
                raise ValidationError(f"no estimator matches {methods}")
        family, rho, phi = self.errors
        for mu, sigma in (mu_sigma or self.mu_sigma):
            for n in (sample_sizes or self.sample_sizes):
                err = ErrorProcessSpec(family, rho, phi, mu, sigma,
                                       self.model_form == "multiplicative")
                yield SimConfig(n=n, reps=reps or self.reps, errors=err,
                                model_form=self.model_form,
                                estimators=ests, seed=seed, **extra)


def _presets():
    out = {}
    for key, err in ERRORS.items():
        for pen in ("scad", "lasso"):
            ests = tuple(Estimator(m, w, pen)
                         for m in ("pmwls", "pwls") for w in WEIGHTS)
            for form, prefix in (("additive", "add"),
                                 ("multiplicative", "multi")):
                name = f"{prefix}_{pen}_{key}"
                out[name] = TablePreset(name, form, err, ests)
        name = f"multi_add_{key}"
        out[name] = TablePreset(
            name, "multiplicative", err,
            (Estimator("pmwls", IDENTITY, "scad"),
             Estimator("additive", IDENTITY, "scad")))
    return out


TABLES = _presets()


def get_table(name: str) -> TablePreset:
    try:
        return TABLES[name]
    except KeyError:
        raise ValidationError(
            f"unknown table {name!r}; choose from {sorted(TABLES)}") from None


CSV_FIELDS = ("table", "mu", "sigma", "method", "weight", "penalty", "n",
              "reps", "failures", "mse", "sd", "tp", "tn")


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def rows_to_csv(table: str, rows: Sequence[ExperimentRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        m = r.metrics
        w.writerow([_fmt(v) for v in (
            table, r.mu, r.sigma, r.label, r.weight, r.penalty, r.n,
            m.reps, m.failures, m.mse, m.sd, m.tp, m.tn)])
    return buf.getvalue()


def config_to_dict(cfg: SimConfig) -> dict:
    d = asdict(cfg)
    d.pop("solver")
    return d
