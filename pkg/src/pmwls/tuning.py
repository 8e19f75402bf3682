"""BIC-type choice of the penalty level along a warm-started path."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .model import model_gradient
from .objective import ObjectiveContext, prox_scalar
from .solver import FLAT_CURVATURE, FitResult, SolverConfig, fit

DEGENERATE_VAR = 1e-300


def residual_variance(residuals) -> float:
    r = np.asarray(residuals, dtype=float)
    return float(np.mean(r * r) - np.mean(r) ** 2)


def bic(fit_or_residuals, n: int | None = None, df: int | None = None
        ) -> float:
    """``log(sigma2) + log(n) * df / n`` with ``sigma2`` the residual variance.

    Accepts a :class:`FitResult` or a residual vector plus ``df``.  A
    (numerically) zero residual variance returns ``-inf``.
    """
    if isinstance(fit_or_residuals, FitResult):
        r = fit_or_residuals.residuals
        df = fit_or_residuals.df if df is None else df
    else:
        r = np.asarray(fit_or_residuals, dtype=float)
        if df is None:
            raise ValidationError("df is required with raw residuals")
    n = r.shape[0] if n is None else n
    s2 = residual_variance(r)
    if s2 <= DEGENERATE_VAR:
        return -math.inf
    return math.log(s2) + math.log(n) * df / n


def _zero_threshold(ctx: ObjectiveContext, g: float, h: float,
                    target: float, theta_k: float) -> float:
    """Smallest tau at which the scalar prox keeps the coordinate fixed."""
    n = ctx.n
    pen = ctx.penalty
    z = theta_k - g / h
    w = abs(z - target)
    if w == 0.0:
        return 0.0
    lasso = abs(g) / n
    if pen.family == "lasso":
        return lasso

    def stays(tau):
        return prox_scalar(pen.with_tau(tau), z, h, n, target) == target

    hi = max(lasso, w * math.sqrt(h / (n * (pen.a + 1)))) * 1.01 + 1e-300
    while not stays(hi):
        hi *= 2.0
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if stays(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-14 * hi:
            break
    return hi


def tau_max(ctx: ObjectiveContext, cfg: SolverConfig = SolverConfig()
            ) -> float:
    """Smallest tau at which one sweep from the start moves nothing."""
    if ctx.penalty.family == "none":
        raise ValidationError("tau selection needs a lasso or scad penalty")
    probe = ctx.with_penalty(ctx.penalty.with_tau(1.0))
    theta = cfg.start(probe)
    targets = ctx.targets
    r = ctx.residuals(theta)
    kr = ctx.apply_kernel(r)
    J = model_gradient(ctx.model, ctx.data.x, theta)
    best = 0.0
    for k in range(ctx.p):
        jk = J[:, k]
        h = 2.0 * float(jk @ ctx.apply_kernel(jk))
        if h < FLAT_CURVATURE:
            continue
        g = -2.0 * float(jk @ kr)
        best = max(best, _zero_threshold(probe, g, h, targets[k], theta[k]))
    return best


def tau_grid(tmax: float, count: int = 50, floor: float = 1e-4
             ) -> np.ndarray:
    if count < 1:
        raise ValidationError("grid needs at least one value")
    if not 0 < floor < 1:
        raise ValidationError("floor ratio must be in (0, 1)")
    if tmax <= 0:
        return np.array([0.0])
    if count == 1:
        return np.array([tmax])
    return tmax * np.logspace(0.0, math.log10(floor), count)


@dataclass
class PathPoint:
    tau: float
    bic: float
    df: int
    fit: FitResult
    degenerate: bool = False

    @property
    def eligible(self) -> bool:
        return self.fit.converged


@dataclass
class TuningResult:
    tau: float
    fit: FitResult
    path: list = field(default_factory=list)
    # Grid values never fitted because the path stopped at a divergent fit.
    skipped: int = 0

    @property
    def bic(self) -> float:
        for pt in self.path:
            if pt.fit is self.fit:
                return pt.bic
        return bic(self.fit)

    def path_rows(self):
        for pt in self.path:
            yield pt.tau, pt.bic, pt.df


def select_tau(ctx: ObjectiveContext, cfg: SolverConfig = SolverConfig(),
               count: int = 50, floor: float = 1e-4,
               taus=None) -> TuningResult:
    """Fit a descending tau path with warm starts and keep the BIC minimiser.

    Ties go to the larger tau.  ``taus`` overrides the automatic grid.

    The path stops at the first fit that does not converge: below that level
    the criterion has no finite minimiser on the data (the iterates drift off
    to infinity), and every smaller tau would only continue the drift.
    Non-converged fits are not eligible unless nothing converged.
    """
    if ctx.penalty.family == "none":
        raise ValidationError("tau selection needs a lasso or scad penalty")
    if taus is None:
        grid = tau_grid(tau_max(ctx, cfg), count, floor)
    else:
        grid = np.sort(np.asarray(taus, dtype=float))[::-1]
        if grid.size == 0 or np.any(grid < 0):
            raise ValidationError("tau grid must be non-empty and >= 0")
        if np.any(np.diff(grid) == 0):
            raise ValidationError("tau grid must be strictly decreasing")
    warm = None
    path: list[PathPoint] = []
    for tau in grid:
        res = fit(ctx.with_penalty(ctx.penalty.with_tau(float(tau))), cfg,
                  theta_init=warm)
        warm = res.theta
        b = bic(res, ctx.n)
        path.append(PathPoint(float(tau), b, res.df, res, b == -math.inf))
        if not res.converged:
            break
    if all(pt.degenerate for pt in path):
        raise NumericalError("every fit on the tau path is degenerate "
                             "(zero residual variance)")
    pool = [pt for pt in path if pt.eligible] or path
    best = pool[0]
    for pt in pool[1:]:
        if pt.bic < best.bic:
            best = pt
    return TuningResult(best.tau, best.fit, path, len(grid) - len(path))
