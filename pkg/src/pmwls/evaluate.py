"""Goodness of fit, residual diagnostics and the train/test trial protocol."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.signal import lfilter

from .errors import NumericalError, PMWLSError, ValidationError
from .model import Dataset, ModelSpec, Scale
from .objective import ObjectiveContext, Penalty
from .solver import SolverConfig, fit_pmwls
from .tuning import select_tau
from .weights import IDENTITY, WeightSpec, build_weight

ARMA_BOX = 0.99


def vaf(y, yhat) -> float:
    """Variance accounted for, ``(1 - sum (y - yhat)^2 / sum y^2) * 100``."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValidationError("y and yhat must have equal length")
    denom = float(np.sum(y * y))
    if denom <= 0:
        raise ValidationError("VAF is undefined for an all-zero response")
    return (1.0 - float(np.sum((y - yhat) ** 2)) / denom) * 100.0


def acf_pacf(series, maxlag: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample ACF and PACF at lags ``0..maxlag``.

    The ACF is mean-centred and normalised by the lag-0 sum; the PACF comes
    from the Durbin-Levinson recursion on it (``pacf[0] = 1``).
    """
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    if not 0 < maxlag < n / 2:
        raise ValidationError("maxlag must satisfy 0 < maxlag < n/2")
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom <= 0:
        raise ValidationError("zero-variance series")
    acf = np.array([1.0] + [float(xc[:-k] @ xc[k:]) / denom
                            for k in range(1, maxlag + 1)])

    pacf = np.empty(maxlag + 1)
    pacf[0] = 1.0
    phi = np.zeros(maxlag + 1)
    v = 1.0
    for k in range(1, maxlag + 1):
        a = (acf[k] - phi[1:k] @ acf[k - 1:0:-1]) / v
        new = phi.copy()
        new[k] = a
        new[1:k] = phi[1:k] - a * phi[k - 1:0:-1]
        phi = new
        v *= 1 - a * a
        pacf[k] = a
    return acf, pacf


def css(residuals, rho: float, phi: float) -> float:
    """Conditional sum of squares of an ARMA(1,1) fit to the residuals.

    One-step errors ``e_t = x_t - rho x_{t-1} - phi e_{t-1}`` on the
    mean-centred series, started from ``e_1 = 0``.
    """
    x = np.asarray(residuals, dtype=float)
    x = x - x.mean()
    a = x[1:] - rho * x[:-1]
    e = lfilter([1.0], [1.0, phi], a)
    return float(e @ e)


@dataclass
class ArmaFit:
    rho: float
    phi: float
    css: float
    on_boundary: bool = False

    @property
    def weight(self) -> WeightSpec:
        return WeightSpec("arma11", self.rho, self.phi)


def fit_residual_arma(residuals, grid: int = 5, restarts: int = 3) -> ArmaFit:
    """CSS estimate of ``(rho, phi)`` on ``(-0.99, 0.99)^2``.

    Nelder-Mead is started from the ``restarts`` best points of a coarse
    ``grid x grid`` lattice; the best end point wins.
    """
    r = np.asarray(residuals, dtype=float)
    if r.shape[0] < 20:
        raise ValidationError("need at least 20 residuals")
    lattice = np.linspace(-0.8, 0.8, grid)
    starts = sorted(((css(r, a, b), a, b) for a in lattice for b in lattice))
    bounds = [(-ARMA_BOX, ARMA_BOX)] * 2
    best = None
    for val, a, b in starts[:restarts]:
        res = optimize.minimize(lambda v: css(r, v[0], v[1]), [a, b],
                                method="Nelder-Mead", bounds=bounds,
                                options={"xatol": 1e-7, "fatol": 1e-10,
                                         "maxiter": 2000})
        cand = (float(res.fun), float(res.x[0]), float(res.x[1]))
        if best is None or cand[0] < best[0]:
            best = cand
        if val < best[0]:
            best = (val, a, b)
    val, rho, phi = best
    edge = ARMA_BOX - 1e-3
    return ArmaFit(rho, phi, val, abs(rho) >= edge or abs(phi) >= edge)


def typical_values(trial: Dataset, model: ModelSpec,
                   cfg: SolverConfig = SolverConfig(), K: int = 10,
                   seed: int = 0, box: Optional[np.ndarray] = None,
                   center: Optional[np.ndarray] = None,
                   weight: WeightSpec = IDENTITY,
                   max_workers: int = 1) -> np.ndarray:
    """Average of ``K`` unpenalized fits from random starting points.

    Starts are uniform in ``box`` (``(p, 2)`` limits), defaulting to
    ``center +/- 1`` (``center`` defaults to zeros, or the middle of the
    model bounds).
    """
    if K < 2:
        raise ValidationError("need K >= 2 pre-estimations")
    p = model.dim_theta
    if box is None:
        if model.bounds is not None:
            box = np.asarray(model.bounds, dtype=float)
        else:
            c = np.zeros(p) if center is None else np.asarray(center, float)
            box = np.column_stack([c - 1.0, c + 1.0])
    box = np.asarray(box, dtype=float)
    if box.shape != (p, 2):
        raise ValidationError("box must have shape (p, 2)")
    rng = np.random.default_rng(seed)
    starts = rng.uniform(box[:, 0], box[:, 1], size=(K, p))
    ctx = ObjectiveContext.pmwls(trial, model, weight, Penalty())

    def one(start):
        try:
            return fit_pmwls(ctx, cfg, theta_init=start)
        except PMWLSError:
            return None

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            fits = list(pool.map(one, starts))
    else:
        fits = [one(s) for s in starts]
    good = [f.theta for f in fits if f is not None and f.converged]
    if len(good) < K / 2:
        raise NumericalError(
            f"only {len(good)} of {K} pre-estimations converged")
    return np.mean(good, axis=0)


@dataclass
class TrialSet:
    subject: str
    trials: list

    def __post_init__(self):
        if len(self.trials) < 2:
            raise ValidationError("train/test evaluation needs >= 2 trials")
        if len({t.d for t in self.trials}) != 1:
            raise ValidationError("trials have inconsistent covariate width")


@dataclass
class PipelineConfig:
    penalty: str = "scad"
    K: int = 10
    seed: int = 0
    tau_count: int = 50
    tau_floor: float = 1e-4
    solver: SolverConfig = SolverConfig()
    box: Optional[np.ndarray] = None


@dataclass
class TrialReport:
    train: int
    train_vaf: float
    test_vaf: dict
    rho: float
    phi: float
    weight: str
    tau: float
    df: int
    level: float
    theta_hat: list
    theta_typical: list
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "train_trial": self.train,
            "train_vaf": self.train_vaf,
            "test_vaf": {str(k): v for k, v in self.test_vaf.items()},
            "rho_hat": self.rho,
            "phi_hat": self.phi,
            "weight": self.weight,
            "tau": self.tau,
            "df": self.df,
            "level": self.level,
            "theta_hat": self.theta_hat,
            "theta_typical": self.theta_typical,
            "notes": self.notes,
        }


def predict_on_scale(data: Dataset, model: ModelSpec, theta,
                     level: float = 0.0):
    """Observed and fitted responses on the original measurement scale.

    ``level`` is added to the mean function on the fitting scale.  The
    mean-subtracted criterion leaves the response level free, so predictions
    use the mean training residual for it.
    """
    f = model.value(data.x, np.asarray(theta, dtype=float)) + level
    if data.scale is Scale.LOG:
        z = data.z if data.z is not None else np.exp(data.y)
        return z, np.exp(f)
    return data.y, f


def _working_weight(arma: ArmaFit, n: int, notes: list) -> WeightSpec:
    preferred = arma.weight
    for spec in (preferred, WeightSpec("ar1", arma.rho), IDENTITY):
        try:
            build_weight(spec, n)
            if spec is not preferred:
                notes.append(f"fell back to weight {spec.label}")
            return spec
        except PMWLSError as exc:
            notes.append(f"weight {spec.label} unusable: {exc}")
    return IDENTITY


def evaluate_trial(train: Dataset, model: ModelSpec, cfg: PipelineConfig
                   ) -> tuple:
    """Typical values, residual-fitted weight and tuned fit on one trial."""
    notes: list[str] = []
    typical = typical_values(train, model, cfg.solver, cfg.K, cfg.seed,
                             box=cfg.box)
    pen = Penalty(cfg.penalty, 1.0, targets=typical)
    base = ObjectiveContext.pmwls(train, model, IDENTITY, pen)
    unweighted = select_tau(base, cfg.solver, cfg.tau_count, cfg.tau_floor)
    arma = fit_residual_arma(unweighted.fit.residuals)
    if arma.on_boundary:
        notes.append("ARMA fit reached the parameter box boundary")
    spec = _working_weight(arma, train.n, notes)
    ctx = ObjectiveContext.pmwls(train, model, spec, pen)
    tuned = select_tau(ctx, cfg.solver, cfg.tau_count, cfg.tau_floor)
    if not tuned.fit.converged:
        notes.append("final fit did not converge")
    return typical, arma, spec, tuned, notes


def train_test_eval(trials: TrialSet, model: ModelSpec,
                    cfg: PipelineConfig = PipelineConfig()) -> dict:
    """Use each trial once for fitting and score it on the others.

    Only the training trial enters typical values, weight selection and
    tuning; held-out trials are touched only to compute their VAF.
    """
    reports = []
    for i, train in enumerate(trials.trials):
        try:
            typical, arma, spec, tuned, notes = evaluate_trial(
                train, model, cfg)
        except PMWLSError as exc:
            reports.append({"train_trial": i, "error": str(exc)})
            continue
        theta = tuned.fit.theta
        level = float(np.mean(tuned.fit.residuals))
        tr = vaf(*predict_on_scale(train, model, theta, level))
        tests = {j: vaf(*predict_on_scale(t, model, theta, level))
                 for j, t in enumerate(trials.trials) if j != i}
        reports.append(TrialReport(
            i, tr, tests, arma.rho, arma.phi, spec.label, tuned.tau,
            tuned.fit.df, level, [float(v) for v in theta],
            [float(v) for v in typical], notes).to_dict())
    ok = [r for r in reports if "error" not in r]
    summary = {
        "subject": trials.subject,
        "trials": reports,
        "failures": len(reports) - len(ok),
    }
    if ok:
        summary["average_train_vaf"] = float(np.mean(
            [r["train_vaf"] for r in ok]))
        summary["average_test_vaf"] = float(np.mean(
            [v for r in ok for v in r["test_vaf"].values()]))
    return summary


def report_scaled(value: float) -> int:
    """VAF in the 1e-4 reporting unit (fraction times 10^4)."""
    return int(round(value / 100.0 * 1e4)) if math.isfinite(value) else 0
