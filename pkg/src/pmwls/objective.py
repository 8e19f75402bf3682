"""Modified weighted least squares objective, penalties and scalar prox.

The unpenalized criterion is ``S(theta) = r' K r`` with residuals
``r = y - f(x; theta)``.  For the proposed estimator ``K = Sigma_w``; the
intercept comparator uses the intercept-profiled inverse covariance.  The
penalized criterion adds ``n * sum_i p_tau(|theta_i - target_i|)``.

SCAD (Fan and Li, 2001) has derivative

    q(u) = tau                          for u <= tau
    q(u) = max(a tau - u, 0) / (a - 1)  for u > tau

and ``p`` is its integral from zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import NumericalError, ValidationError
from .model import Dataset, ModelSpec, model_gradient
from .weights import (IDENTITY, WeightSpec, build_weight,
                      intercept_profiled_kernel, inverse_covariance)

FAMILIES = ("none", "lasso", "scad")


@dataclass(frozen=True)
class Penalty:
    family: str = "none"
    tau: float = 0.0
    a: float = 3.7
    targets: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown penalty {self.family!r}")
        if not self.tau >= 0:
            raise ValidationError("tau must be >= 0")
        if self.family == "scad" and not self.a > 2:
            raise ValidationError("SCAD requires a > 2")
        if self.targets is not None:
            t = np.asarray(self.targets, dtype=float)
            if t.ndim != 1:
                raise ValidationError("targets must be a vector")
            object.__setattr__(self, "targets", t)

    @property
    def active(self) -> bool:
        return self.family != "none" and self.tau > 0

    def with_tau(self, tau: float) -> "Penalty":
        return replace(self, tau=float(tau))

    def target_vector(self, p: int) -> np.ndarray:
        if self.targets is None:
            return np.zeros(p)
        if self.targets.shape != (p,):
            raise ValidationError(
                f"targets have length {self.targets.shape[0]}, expected {p}")
        return self.targets


def _scad_p(u, tau, a):
    u = np.asarray(u, dtype=float)
    mid = (2 * a * tau * u - u ** 2 - tau ** 2) / (2 * (a - 1))
    top = 0.5 * (a + 1) * tau ** 2
    return np.where(u <= tau, tau * u, np.where(u <= a * tau, mid, top))


def penalty_deriv(pen: Penalty, u):
    """``q_tau(u)``, the derivative of the penalty at ``u >= 0``."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValidationError("penalty derivative needs u >= 0")
    if pen.family == "none" or pen.tau == 0:
        out = np.zeros_like(u)
    elif pen.family == "lasso":
        out = np.full_like(u, pen.tau)
    else:
        tau, a = pen.tau, pen.a
        out = np.where(u <= tau, tau, np.maximum(a * tau - u, 0.0) / (a - 1))
    return out[()] if out.ndim == 0 else out


def penalty_terms(pen: Penalty, u):
    """Per-coordinate ``p_tau(u)`` for ``u >= 0``."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValidationError("penalty needs u >= 0")
    if pen.family == "none" or pen.tau == 0:
        return np.zeros_like(u)
    if pen.family == "lasso":
        return pen.tau * u
    return _scad_p(u, pen.tau, pen.a)


def penalty_value(pen: Penalty, theta) -> float:
    """``sum_i p_tau(|theta_i - target_i|)`` (without the factor ``n``)."""
    theta = np.asarray(theta, dtype=float)
    dev = np.abs(theta - pen.target_vector(theta.shape[0]))
    return float(np.sum(penalty_terms(pen, dev)))


def scad_scalar(u: float, tau: float, a: float) -> float:
    """SCAD penalty at a single ``u >= 0`` (plain floats, no numpy)."""
    if u <= tau:
        return tau * u
    if u <= a * tau:
        return (2 * a * tau * u - u * u - tau * tau) / (2 * (a - 1))
    return 0.5 * (a + 1) * tau * tau


def penalty_scalar(pen: Penalty, u: float) -> float:
    if pen.family == "none" or pen.tau == 0:
        return 0.0
    if pen.family == "lasso":
        return pen.tau * u
    return scad_scalar(u, pen.tau, pen.a)


def prox_scalar(pen: Penalty, z: float, h: float, n: float,
                target: float = 0.0) -> float:
    """Global minimiser of ``h/2 (u - z)^2 + n p_tau(|u - target|)``.

    For SCAD the scalar problem may be nonconvex; each piece of the penalty
    gives a quadratic, so the minimiser is one of the clipped stationary
    points or breakpoints, and all of them are compared.  Ties go to the
    candidate closest to ``target``.
    """
    if not h > 0:
        raise ValidationError("curvature h must be positive")
    if pen.family == "none" or pen.tau == 0:
        return float(z)
    w = z - target
    s = 1.0 if w >= 0 else -1.0
    aw = abs(w)
    lam = n * pen.tau / h
    if pen.family == "lasso":
        return float(target + s * max(aw - lam, 0.0))

    tau, a = pen.tau, pen.a
    gamma = n / h
    cands = [0.0, tau, a * tau, min(max(aw - lam, 0.0), tau),
             max(aw, a * tau)]
    denom = 1.0 - gamma / (a - 1)
    if denom != 0.0:
        v = (aw - gamma * a * tau / (a - 1)) / denom
        cands.append(min(max(v, tau), a * tau))
    objs = [0.5 * (c - aw) ** 2 + gamma * scad_scalar(c, tau, a)
            for c in cands]
    best = min(objs)
    # Tie tolerance scales with the objective magnitude.
    tol = 1e-14 * max(1.0, abs(best), 0.5 * aw * aw)
    v = min(c for c, o in zip(cands, objs) if o <= best + tol)
    return float(target + s * v)


@dataclass(frozen=True, eq=False)
class ObjectiveContext:
    """Data, model, quadratic kernel and penalty for one fit.

    ``kernel`` is ``None`` for the plain centering projector (no weighting),
    which is applied in O(n) instead of through a dense matrix.
    """

    data: Dataset
    model: ModelSpec
    kernel: Optional[np.ndarray]
    penalty: Penalty = Penalty()
    weight: WeightSpec = IDENTITY
    method: str = "pmwls"
    # (n,) vector: V1 / 1'V1 for recovering the profiled intercept.
    intercept_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.data.n
        if self.kernel is not None and self.kernel.shape != (n, n):
            raise ValidationError(
                f"kernel shape {self.kernel.shape} does not match n={n}")
        self.penalty.target_vector(self.model.dim_theta)

    @classmethod
    def pmwls(cls, data: Dataset, model: ModelSpec,
              weight: WeightSpec = IDENTITY,
              penalty: Penalty = Penalty()) -> "ObjectiveContext":
        kernel = None
        if weight.kind != "identity":
            kernel = build_weight(weight, data.n).sigma_w
        return cls(data, model, kernel, penalty, weight, "pmwls")

    @classmethod
    def pwls(cls, data: Dataset, model: ModelSpec,
             weight: WeightSpec = IDENTITY,
             penalty: Penalty = Penalty()) -> "ObjectiveContext":
        V = inverse_covariance(weight, data.n)
        v1 = V.sum(axis=1)
        kernel = None
        if weight.kind != "identity":
            kernel = intercept_profiled_kernel(weight, data.n)
        return cls(data, model, kernel, penalty, weight, "pwls",
                   intercept_weights=v1 / v1.sum())

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def p(self) -> int:
        return self.model.dim_theta

    @property
    def targets(self) -> np.ndarray:
        return self.penalty.target_vector(self.p)

    def with_penalty(self, penalty: Penalty) -> "ObjectiveContext":
        return replace(self, penalty=penalty)

    def with_data(self, data: Dataset) -> "ObjectiveContext":
        if data.n != self.n:
            raise ValidationError("replacement data must keep n")
        return replace(self, data=data)

    def apply_kernel(self, v: np.ndarray) -> np.ndarray:
        # Every kernel annihilates constants, so centring first is exact in
        # arithmetic and keeps a level shift of the data out of the rounding.
        vc = v - v.mean(axis=0)
        if self.kernel is None:
            return vc
        return self.kernel @ vc

    def quadratic(self, r: np.ndarray) -> tuple[np.ndarray, float]:
        """``(K r, r' K r)`` evaluated on the centred residual."""
        rc = r - r.mean()
        kr = rc if self.kernel is None else self.kernel @ rc
        return kr, float(rc @ kr)

    def fitted(self, theta) -> np.ndarray:
        f = self.model.value(self.data.x, np.asarray(theta, dtype=float))
        if not np.all(np.isfinite(f)):
            raise NumericalError("model returned non-finite values")
        return f

    def residuals(self, theta) -> np.ndarray:
        return self.data.y - self.fitted(theta)

    def intercept(self, theta) -> Optional[float]:
        if self.intercept_weights is None:
            return None
        return float(self.intercept_weights @ self.residuals(theta))


def s_n(ctx: ObjectiveContext, theta) -> float:
    """``r' K r`` at ``theta``."""
    return ctx.quadratic(ctx.residuals(theta))[1]


def s_n_gradient(ctx: ObjectiveContext, theta) -> np.ndarray:
    """``-2 J' K r`` where ``J`` is the model Jacobian."""
    theta = np.asarray(theta, dtype=float)
    r = ctx.residuals(theta)
    J = model_gradient(ctx.model, ctx.data.x, theta)
    return -2.0 * (J.T @ ctx.apply_kernel(r))


def q_n(ctx: ObjectiveContext, theta) -> float:
    return s_n(ctx, theta) + ctx.n * penalty_value(ctx.penalty, theta)
