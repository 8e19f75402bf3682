"""Temporal weight matrices with unit row sums.

The weight for an AR(1) or ARMA(1,1) working model is the lower-triangular
whitening factor ``L`` of the process covariance ``C`` (``L C L' = I``),
with every row rescaled so that it sums to one.  The quadratic kernel of
the modified objective is ``Sigma_w = W' (I - 11'/n) W``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import NumericalError, ValidationError

ROW_SUM_TOL = 1e-10


@dataclass(frozen=True)
class WeightSpec:
    kind: str = "identity"
    rho: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "ar1", "arma11"):
            raise ValidationError(f"unknown weight kind {self.kind!r}")
        if self.kind != "identity" and not abs(self.rho) < 1:
            raise ValidationError("weight requires |rho| < 1")
        if self.kind == "arma11" and not abs(self.phi) < 1:
            raise ValidationError("weight requires |phi| < 1")
        if self.kind == "ar1" and self.phi != 0:
            raise ValidationError("ar1 weight takes no MA coefficient")

    @property
    def label(self) -> str:
        if self.kind == "identity":
            return "none"
        if self.kind == "ar1":
            return f"ar1({self.rho:g})"
        return f"arma11({self.rho:g},{self.phi:g})"


IDENTITY = WeightSpec()


def parse_weight(text: str) -> WeightSpec:
    """Parse ``none``/``identity``, ``ar1:RHO`` or ``arma11:RHO,PHI``."""
    text = text.strip().lower()
    if text in ("", "none", "identity"):
        return IDENTITY
    kind, _, args = text.partition(":")
    try:
        vals = [float(v) for v in args.split(",")] if args else []
    except ValueError:
        raise ValidationError(f"bad weight specification {text!r}") from None
    if kind == "ar1" and len(vals) == 1:
        return WeightSpec("ar1", vals[0])
    if kind == "arma11" and len(vals) == 2:
        return WeightSpec("arma11", vals[0], vals[1])
    raise ValidationError(
        f"bad weight specification {text!r}; use none, ar1:RHO or "
        "arma11:RHO,PHI")


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    spec: WeightSpec
    W: np.ndarray
    sigma_w: np.ndarray
    lambda_w: float

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def is_identity(self) -> bool:
        return self.spec.kind == "identity"


def centering_matrix(n: int) -> np.ndarray:
    if n < 2:
        raise ValidationError("n must be >= 2")
    return np.eye(n) - np.full((n, n), 1.0 / n)


def innovation_variance(rho: float, phi: float = 0.0,
                        sigma: float = 1.0) -> float:
    """Innovation variance giving marginal variance ``sigma**2``."""
    return sigma ** 2 * (1 - rho ** 2) / (1 + 2 * rho * phi + phi ** 2)


def arma_autocovariance(rho: float, phi: float = 0.0, sigma: float = 1.0,
                        maxlag: int = 0) -> np.ndarray:
    """Autocovariances ``gamma(0..maxlag)`` of a stationary ARMA(1,1).

    The process is ``x_t = rho x_{t-1} + e_t + phi e_{t-1}`` scaled to
    marginal standard deviation ``sigma``; ``phi = 0`` gives AR(1).
    """
    if not abs(rho) < 1:
        raise ValidationError("non-stationary AR coefficient")
    if not abs(phi) < 1:
        raise ValidationError("non-invertible MA coefficient")
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    if maxlag < 0:
        raise ValidationError("maxlag must be >= 0")
    s2e = innovation_variance(rho, phi, sigma)
    gamma = np.empty(maxlag + 1)
    gamma[0] = sigma ** 2
    if maxlag >= 1:
        gamma[1] = s2e * (1 + rho * phi) * (rho + phi) / (1 - rho ** 2)
    for k in range(2, maxlag + 1):
        gamma[k] = rho * gamma[k - 1]
    return gamma


def process_covariance(spec: WeightSpec, n: int) -> np.ndarray:
    if spec.kind == "identity":
        return np.eye(n)
    gamma = arma_autocovariance(spec.rho, spec.phi, 1.0, n - 1)
    return linalg.toeplitz(gamma)


def whitening_factor(C: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with ``L C L' = I``."""
    G = linalg.cholesky(C, lower=True)
    return linalg.solve_triangular(G, np.eye(C.shape[0]), lower=True)


@lru_cache(maxsize=64)
def _build(spec: WeightSpec, n: int) -> WeightMatrix:
    if n < 2:
        raise ValidationError("n must be >= 2")
    if spec.kind == "identity":
        W = np.eye(n)
    else:
        L = whitening_factor(process_covariance(spec, n))
        sums = L.sum(axis=1)
        small = np.flatnonzero(np.abs(sums) < ROW_SUM_TOL)
        if small.size:
            raise NumericalError(
                f"row {small[0]} of the whitening matrix sums to "
                f"{sums[small[0]]:.3g}; cannot rescale to unit row sums")
        W = L / sums[:, None]
    # W' (I - 11'/n) W without forming the projector.
    Wc = W - W.mean(axis=0)
    sigma_w = Wc.T @ Wc
    sigma_w = 0.5 * (sigma_w + sigma_w.T)
    lam = float(linalg.eigvalsh(sigma_w)[-1])
    W.setflags(write=False)
    sigma_w.setflags(write=False)
    return WeightMatrix(spec, W, sigma_w, lam)


def build_weight(spec: WeightSpec, n: int) -> WeightMatrix:
    """Unit-row-sum weight matrix for ``spec`` at sample size ``n``."""
    return _build(spec, int(n))


@lru_cache(maxsize=64)
def _inverse_cov(spec: WeightSpec, n: int) -> np.ndarray:
    if spec.kind == "identity":
        out = np.eye(n)
    else:
        C = process_covariance(spec, n)
        out = linalg.cho_solve(linalg.cho_factor(C, lower=True), np.eye(n))
        out = 0.5 * (out + out.T)
    out.setflags(write=False)
    return out


def inverse_covariance(spec: WeightSpec, n: int) -> np.ndarray:
    """``C^{-1}`` of the working process (identity for no weighting)."""
    return _inverse_cov(spec, int(n))


def intercept_profiled_kernel(spec: WeightSpec, n: int) -> np.ndarray:
    """Kernel of ``min_b (r - b1)' V (r - b1)`` with ``V = C^{-1}``.

    Profiling out the intercept gives ``r' (V - V11'V / 1'V1) r``.
    """
    V = inverse_covariance(spec, n)
    v1 = V.sum(axis=1)
    K = V - np.outer(v1, v1) / v1.sum()
    return 0.5 * (K + K.T)


def assumption_ratio(wm: WeightMatrix) -> tuple[float, float]:
    """``||W||_1 ||W||_inf / ||Sigma_w||_2`` and ``lambda_w``.

    Informational only: the rate condition on this ratio cannot be checked
    at a fixed sample size.
    """
    num = np.linalg.norm(wm.W, 1) * np.linalg.norm(wm.W, np.inf)
    return float(num / wm.lambda_w), wm.lambda_w


def write_matrix_csv(path, M: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def describe(wm: WeightMatrix, extra: Optional[str] = None) -> str:
    ratio, lam = assumption_ratio(wm)
    msg = (f"weight {wm.spec.label}, n={wm.n}: lambda_w={lam:.6g}, "
           f"||W||_1*||W||_inf/||Sigma_w||_2={ratio:.6g}")
    return msg if extra is None else f"{msg} ({extra})"
