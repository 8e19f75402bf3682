"""Nonlinear mean functions and the data containers they are fitted to.

A :class:`ModelSpec` wraps a vectorised mean function ``value(X, theta)``
returning one value per row of ``X``, and optionally its Jacobian
``jacobian(X, theta)`` of shape ``(n, p)``.  When no Jacobian is given,
central differences are used.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .errors import NumericalError, ValidationError

ValueFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class Scale(str, Enum):
    ADDITIVE = "additive"
    LOG = "log-of-multiplicative"


@dataclass(frozen=True)
class Dataset:
    """Responses ``y`` and covariate rows ``x``.

    For multiplicative data ``y`` holds ``log(z)`` and ``z`` keeps the raw
    positive observations.
    """

    y: np.ndarray
    x: np.ndarray
    scale: Scale = Scale.ADDITIVE
    z: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim != 1 or x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValidationError(
                f"shape mismatch: y {y.shape}, x {x.shape}")
        if y.shape[0] < 2:
            raise ValidationError("need at least 2 observations")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValidationError("non-finite entries in data")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "scale", Scale(self.scale))
        if self.z is not None:
            z = np.asarray(self.z, dtype=float)
            if z.shape != y.shape:
                raise ValidationError("raw responses must match y in length")
            object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def shifted(self, c: float) -> "Dataset":
        return Dataset(self.y + c, self.x, self.scale, self.z)

    @classmethod
    def from_multiplicative(cls, z, x) -> "Dataset":
        z = np.asarray(z, dtype=float)
        if np.any(~(z > 0)):
            raise ValidationError(
                "log ingestion requires strictly positive responses")
        return cls(np.log(z), x, Scale.LOG, z)


@dataclass(frozen=True)
class ModelSpec:
    """A mean function ``f(x; theta)`` with ``dim_theta`` parameters.

    ``bounds`` is an optional ``(p, 2)`` array of box limits; the solver
    projects onto it when present.
    """

    dim_theta: int
    value: ValueFn
    jacobian: Optional[ValueFn] = None
    name: str = "custom"
    bounds: Optional[np.ndarray] = field(default=None, compare=False)

    def __call__(self, x, theta):
        return self.value(np.atleast_2d(x), np.asarray(theta, dtype=float))

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim_theta,):
            raise ValidationError(
                f"theta has shape {theta.shape}, model expects "
                f"({self.dim_theta},)")
        return theta

    def project(self, theta: np.ndarray) -> np.ndarray:
        if self.bounds is None:
            return theta
        return np.clip(theta, self.bounds[:, 0], self.bounds[:, 1])


def logistic_model(d: int) -> ModelSpec:
    """``f(x; theta) = 1 / (1 + exp(-x'theta))`` with ``p = d``."""
    if d < 1:
        raise ValidationError("dimension must be >= 1")

    def value(X, theta):
        return expit(X @ theta)

    def jacobian(X, theta):
        f = expit(X @ theta)
        return (f * (1.0 - f))[:, None] * X

    return ModelSpec(d, value, jacobian, name="logistic")


def log_logistic_model(d: int) -> ModelSpec:
    """Log of the logistic mean, ``-log(1 + exp(-x'theta))``.

    This is the mean function of multiplicative logistic data after the
    log transform.
    """
    if d < 1:
        raise ValidationError("dimension must be >= 1")

    def value(X, theta):
        return -np.logaddexp(0.0, -(X @ theta))

    def jacobian(X, theta):
        return expit(-(X @ theta))[:, None] * X

    return ModelSpec(d, value, jacobian, name="log-logistic")


def log_model(m: ModelSpec) -> ModelSpec:
    """Log of a strictly positive model; gradient is ``grad g / g``."""

    def value(X, theta):
        return np.log(m.value(X, theta))

    def jacobian(X, theta):
        g = m.value(X, theta)
        return model_gradient(m, X, theta) / g[:, None]

    return ModelSpec(m.dim_theta, value, jacobian, name=f"log-{m.name}",
                     bounds=m.bounds)


def linear_model(d: int) -> ModelSpec:
    return ModelSpec(d, lambda X, theta: X @ theta,
                     lambda X, theta: X.copy(), name="linear")


def constant_model(p: int, c: float = 0.0) -> ModelSpec:
    return ModelSpec(p, lambda X, theta: np.full(X.shape[0], float(c)),
                     lambda X, theta: np.zeros((X.shape[0], p)),
                     name="constant")


MODELS = {
    "logistic": logistic_model,
    "log-logistic": log_logistic_model,
    "linear": linear_model,
}


def get_model(name: str, d: int) -> ModelSpec:
    try:
        return MODELS[name](d)
    except KeyError:
        raise ValidationError(
            f"unknown model {name!r}; choose from {sorted(MODELS)}") from None


def fd_step(theta: np.ndarray) -> np.ndarray:
    return 1e-6 * np.maximum(1.0, np.abs(theta))


def finite_difference_jacobian(m: ModelSpec, X, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    steps = fd_step(theta)
    cols = []
    for k, h in enumerate(steps):
        tp = theta.copy()
        tm = theta.copy()
        tp[k] += h
        tm[k] -= h
        cols.append((m.value(X, tp) - m.value(X, tm)) / (2.0 * h))
    return np.column_stack(cols) if cols else np.zeros((X.shape[0], 0))


def model_gradient(m: ModelSpec, X, theta) -> np.ndarray:
    """The ``n x p`` matrix whose row ``t`` is ``grad_theta f(x_t; theta)``.

    Raises :class:`NumericalError` naming the first non-finite entry.
    """
    if isinstance(X, Dataset):
        X = X.x
    theta = m.check_theta(theta)
    if m.jacobian is not None:
        J = np.asarray(m.jacobian(X, theta), dtype=float)
    else:
        J = finite_difference_jacobian(m, X, theta)
    bad = np.argwhere(~np.isfinite(J))
    if bad.size:
        t, k = bad[0]
        raise NumericalError(f"non-finite derivative at row {t}, "
                             f"coordinate {k}")
    return J


def read_dataset_csv(path, log: bool = False) -> Dataset:
    """Read a CSV with header ``y, x1..xd``.

    With ``log=True`` the responses are treated as raw multiplicative
    observations and log transformed.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if not header or header[0] != "y" or len(header) < 2:
            raise ValidationError(
                f"{path}: line 1: header must be 'y,x1,...,xd'")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: line {lineno}: expected {len(header)} fields, "
                    f"got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from None
    if len(rows) < 2:
        raise ValidationError(f"{path}: need at least 2 data rows")
    arr = np.array(rows)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{path}: non-finite values")
    if log:
        return Dataset.from_multiplicative(arr[:, 0], arr[:, 1:])
    return Dataset(arr[:, 0], arr[:, 1:])


def write_dataset_csv(path, data: Dataset) -> None:
    y = data.z if data.scale is Scale.LOG and data.z is not None else data.y
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y"] + [f"x{j + 1}" for j in range(data.d)])
        for yt, xt in zip(y, data.x):
            w.writerow([repr(float(yt))] + [repr(float(v)) for v in xt])
