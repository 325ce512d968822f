"""Closed-form posterior summaries of the regression weights, covariate effects
and noise variance of one family under the bgecm model."""
import logging
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict
from scipy import linalg
from scipy.special import gammaln

from covnet.api.data_types import Hyperparams, MetricKind
from covnet.validation import ConstraintError, check_positive
from covnet.workflows.metrics import (
    ScoredNetwork,
    covariate_precision_complement,
    effective_dataset,
)
from covnet.workflows.model import CovariateMatrix, Dataset, MetricSpec

__all__ = [
    "FamilyPosterior",
    "family_posterior",
    "log_evidence",
    "network_posterior",
    "parent_complement",
    "posterior_b",
    "posterior_gamma",
    "posterior_psi",
]

_logger = logging.getLogger(__name__)


class FamilyPosterior(BaseModel):
    """Posterior of (gamma, b, psi) for one node.

    gamma | psi ~ N(gamma_mean, psi * gamma_scale), b | psi ~ N(b_mean, psi * b_scale)
    and psi ~ InvGamma(psi_shape, psi_rate) in the rate parameterisation.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    gamma_mean: np.ndarray
    gamma_scale: np.ndarray
    b_mean: np.ndarray
    b_scale: np.ndarray
    psi_shape: float
    psi_rate: float

    @property
    def psi_mean(self) -> float:
        if self.psi_shape <= 1:
            return float("inf")
        return self.psi_rate / (self.psi_shape - 1)


def _check_dims(y: np.ndarray, X: Optional[np.ndarray], J: Optional[np.ndarray] = None):
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if X is None:
        X = np.empty((n, 0))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise ConstraintError(f"The parent matrix has {X.shape[0]} rows, expected {n}.")
    if J is not None:
        J = np.asarray(J, dtype=float)
        if J.shape != (n, n):
            raise ConstraintError(f"J has shape {J.shape}, expected {(n, n)}.")
    return y, X, J


def _spd_solve_and_inverse(A: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    factor = linalg.cho_factor(A, lower=True)
    sol = linalg.cho_solve(factor, rhs)
    inv = linalg.cho_solve(factor, np.eye(A.shape[0]))
    return sol, 0.5 * (inv + inv.T)


def posterior_gamma(
    y: np.ndarray, X: Optional[np.ndarray], J: np.ndarray, tau: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior mean and scale of the regression weights given psi.

    mean = (tau I + X^T J X)^{-1} X^T J y, scale = (tau I + X^T J X)^{-1}; the
    posterior covariance is psi * scale. A node without parents gets empty
    summaries.
    """
    check_positive("tau", tau)
    y, X, J = _check_dims(y, X, J)
    k = X.shape[1]
    if k == 0:
        return np.empty(0), np.empty((0, 0))
    JX = J @ X
    return _spd_solve_and_inverse(tau * np.eye(k) + X.T @ JX, JX.T @ y)


def parent_complement(X: Optional[np.ndarray], tau: float, n: int) -> np.ndarray:
    """J* = I - X (tau I + X^T X)^{-1} X^T (the identity without parents)."""
    if X is None or X.shape[1] == 0:
        return np.eye(n)
    k = X.shape[1]
    Jstar = np.eye(n) - X @ linalg.solve(tau * np.eye(k) + X.T @ X, X.T, assume_a="pos")
    return 0.5 * (Jstar + Jstar.T)


def posterior_b(
    y: np.ndarray,
    X: Optional[np.ndarray],
    Q: Union[CovariateMatrix, np.ndarray],
    tau: float,
    upsilon: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior mean and scale of the covariate effects given psi.

    mean = (upsilon I + Q^T J* Q)^{-1} Q^T J* y and scale = (upsilon I + Q^T J* Q)^{-1},
    where J* is built from the parent data and tau (the regression weights
    integrated out), not from the covariates.
    """
    check_positive("tau", tau)
    check_positive("upsilon", upsilon)
    y, X, _ = _check_dims(y, X)
    Q = Q.values if isinstance(Q, CovariateMatrix) else np.asarray(Q, dtype=float)
    if Q.shape[0] != y.size:
        raise ConstraintError(f"The covariates have {Q.shape[0]} rows, expected {y.size}.")
    Jstar = parent_complement(X, tau, y.size)
    JQ = Jstar @ Q
    return _spd_solve_and_inverse(upsilon * np.eye(Q.shape[1]) + Q.T @ JQ, JQ.T @ y)


def posterior_psi(
    y: np.ndarray, X: Optional[np.ndarray], J: np.ndarray, tau: float, delta: float
) -> Tuple[float, float]:
    """Shape and rate of the inverse gamma posterior of the noise variance.

    shape = (n + k + delta) / 2 and
    rate = tau / 2 + y^T {J - J X (tau I + X^T J X)^{-1} X^T J} y / 2.
    """
    check_positive("tau", tau)
    check_positive("delta", delta)
    y, X, J = _check_dims(y, X, J)
    n, k = X.shape
    Jy = J @ y
    quad = float(y @ Jy)
    if k > 0:
        JX = J @ X
        A = tau * np.eye(k) + X.T @ JX
        w = linalg.cho_solve(linalg.cho_factor(A, lower=True), JX.T @ y)
        quad -= float((JX.T @ y) @ w)
    shape = 0.5 * (n + k + delta)
    rate = 0.5 * tau + 0.5 * max(quad, 0.0)
    return shape, rate


def family_posterior(
    y: np.ndarray,
    X: Optional[np.ndarray],
    Q: Union[CovariateMatrix, np.ndarray],
    hp: Hyperparams,
) -> FamilyPosterior:
    """All posterior summaries of one family under the bgecm model."""
    Q = Q if isinstance(Q, CovariateMatrix) else CovariateMatrix(Q)
    J = covariate_precision_complement(Q.values, hp.upsilon)
    gamma_mean, gamma_scale = posterior_gamma(y, X, J, hp.tau)
    b_mean, b_scale = posterior_b(y, X, Q, hp.tau, hp.upsilon)
    shape, rate = posterior_psi(y, X, J, hp.tau, hp.delta)
    return FamilyPosterior(
        gamma_mean=gamma_mean,
        gamma_scale=gamma_scale,
        b_mean=b_mean,
        b_scale=b_scale,
        psi_shape=shape,
        psi_rate=rate,
    )


def log_evidence(
    y: np.ndarray, X: Optional[np.ndarray], J: np.ndarray, tau: float, delta: float
) -> float:
    """Log marginal likelihood of a family from prior and posterior normalisers.

    The Gaussian likelihood constant and 0.5 * log|J| come from integrating out the
    covariate effects; the regression weights contribute the ratio of the prior
    and posterior Gaussian normalisers, the noise variance the ratio of the
    inverse gamma normalisers. Equals ``bgecm_family_direct`` for the J built
    from the covariates.
    """
    y, X, J = _check_dims(y, X, J)
    n, k = X.shape
    sign, logdet_J = np.linalg.slogdet(J)
    if sign <= 0:
        raise ConstraintError("J must be positive definite.")
    shape0, rate0 = 0.5 * (delta + k), 0.5 * tau
    shape_n, rate_n = posterior_psi(y, X, J, tau, delta)
    value = (
        -0.5 * n * np.log(2 * np.pi)
        + 0.5 * logdet_J
        + shape0 * np.log(rate0)
        - gammaln(shape0)
        + gammaln(shape_n)
        - shape_n * np.log(rate_n)
    )
    if k > 0:
        _, gamma_scale = posterior_gamma(y, X, J, tau)
        _, logdet_scale = np.linalg.slogdet(gamma_scale)
        value += 0.5 * k * np.log(tau) + 0.5 * logdet_scale
    return float(value)


def _join(values) -> str:
    return ";".join(f"{v:.17g}" for v in values)


def network_posterior(
    scored: ScoredNetwork,
    data: Dataset,
    metric: MetricSpec,
    hp: Hyperparams,
) -> pd.DataFrame:
    """Tabulate the posterior summaries of every family of a scored network.

    For bgecm the summaries use the raw data and J; the residual and bge metrics
    score data without covariate effects, so the summaries use their effective
    data with J = I and no covariate effects are reported.

    Returns
    -------
    pd.DataFrame
        One row per node with columns node (1-indexed), name, parents, gamma_mean,
        b[<covariate>] (bgecm only), psi_shape, psi_rate and psi_mean.
    """
    rows = []
    if metric.kind == MetricKind.bgecm:
        values = data.values
        J = covariate_precision_complement(metric.covariates.values, hp.upsilon)
    else:
        effective, _ = effective_dataset(data, metric, hp)
        values = effective.values
        J = np.eye(effective.n)

    for v in range(scored.dag.p):
        pa = scored.dag.parents(v)
        y = values[:, v]
        X = values[:, pa] if pa else None
        gamma_mean, _ = posterior_gamma(y, X, J, hp.tau)
        shape, rate = posterior_psi(y, X, J, hp.tau, hp.delta)
        row = {
            "node": v + 1,
            "name": data.names[v],
            "parents": ";".join(data.names[u] for u in pa),
            "gamma_mean": _join(gamma_mean),
        }
        if metric.kind == MetricKind.bgecm:
            b_mean, _ = posterior_b(y, X, metric.covariates, hp.tau, hp.upsilon)
            for name, b in zip(metric.covariates.names, b_mean):
                row[f"b[{name}]"] = b
        row["psi_shape"] = shape
        row["psi_rate"] = rate
        row["psi_mean"] = rate / (shape - 1) if shape > 1 else np.inf
        rows.append(row)
    return pd.DataFrame(rows)
