"""Decomposable log marginal likelihoods for the bge, bgecm and residual metrics.

All three metrics share one engine, the bge family marginal: the bgecm metric
scores the data transformed by L^T where J = L L^T, the residual metric scores
the data projected by P^T onto the orthogonal complement of the covariates.
"""
import logging
import threading
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import linalg
from scipy.special import gammaln

from covnet.api.data_types import GraphPrior, Hyperparams, MetricKind
from covnet.validation import (
    ConstraintError,
    NumericalError,
    check_finite,
    check_positive,
)
from covnet.workflows.model import CovariateMatrix, Dag, Dataset, MetricSpec

__all__ = [
    "BgecmTransform",
    "FamilyScore",
    "FamilyScorer",
    "ORTHO_TOL",
    "ResidualTransform",
    "ScoreCache",
    "ScoredNetwork",
    "bgecm_family_direct",
    "build_bgecm_transform",
    "build_residual_transform",
    "covariate_precision_complement",
    "dag_log_score",
    "effective_dataset",
    "family_log_marginal",
    "transform_dataset",
]

_logger = logging.getLogger(__name__)

ORTHO_TOL = 1e-10


def _as_design(X: Optional[np.ndarray], n: int) -> np.ndarray:
    if X is None:
        return np.empty((n, 0))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise ConstraintError(
            f"The parent matrix has {X.shape[0]} rows, expected {n}."
        )
    return X


def _log_mvt(n: int, nu: float, logdet_sigma: float, maha_over_nu: float) -> float:
    """Log density of an n-variate t with location 0.

    ``maha_over_nu`` is y^T Sigma^{-1} y / nu.
    """
    return float(
        gammaln(0.5 * (nu + n))
        - gammaln(0.5 * nu)
        - 0.5 * n * np.log(nu * np.pi)
        - 0.5 * logdet_sigma
        - 0.5 * (nu + n) * np.log1p(maha_over_nu)
    )


def family_log_marginal(
    y: np.ndarray, X: Optional[np.ndarray], tau: float, delta: float
) -> float:
    """Log marginal likelihood of one family under the bge metric.

    The node data ``y`` given its parent data ``X`` is multivariate t with
    nu = delta + k degrees of freedom and scale
    (tau / nu) * {I - X (tau I + X^T X)^{-1} X^T}^{-1}. The scale is never inverted
    explicitly: both its log determinant and the quadratic form come from the
    Cholesky factor of tau I + X^T X.

    Parameters
    ----------
    y : np.ndarray
        The n samples of the node.
    X : np.ndarray, optional
        The n x k matrix of parent samples in sorted parent order, None or an
        empty matrix when the node has no parents.
    tau : float
        Prior precision scale.
    delta : float
        Prior degrees of freedom.

    Returns
    -------
    float
        The natural log marginal likelihood.
    """
    check_positive("tau", tau)
    check_positive("delta", delta)
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if n < 1:
        raise ConstraintError("A family needs at least one sample.")
    X = _as_design(X, n)
    check_finite(y, "node data")
    check_finite(X, "parent data")
    k = X.shape[1]
    nu = delta + k

    yy = float(y @ y)
    if k == 0:
        quad = yy
        logdet_sigma = n * np.log(tau / nu)
    else:
        A = tau * np.eye(k) + X.T @ X
        try:
            chol = linalg.cholesky(A, lower=True)
        except linalg.LinAlgError as e:
            raise NumericalError(
                "Cholesky factorization of tau*I + X^T X failed."
            ) from e
        w = linalg.solve_triangular(chol, X.T @ y, lower=True)
        quad = max(yy - float(w @ w), 0.0)
        logdet_A = 2.0 * float(np.sum(np.log(np.diag(chol))))
        logdet_sigma = n * np.log(tau / nu) - k * np.log(tau) + logdet_A

    # y^T Sigma^{-1} y / nu = y^T M y / tau
    return _log_mvt(n, nu, logdet_sigma, quad / tau)


class BgecmTransform:
    def __init__(self, J: np.ndarray, L: np.ndarray, upsilon: float):
        """J = I - Q (upsilon I + Q^T Q)^{-1} Q^T and its lower Cholesky factor L."""
        self.J = J
        self.L = L
        self.upsilon = upsilon

    @property
    def n(self) -> int:
        return self.J.shape[0]

    @property
    def log_det_J(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    @property
    def matrix(self) -> np.ndarray:
        """The n x n map applied to every data column (L^T)."""
        return self.L.T


def covariate_precision_complement(Q: np.ndarray, upsilon: float) -> np.ndarray:
    """J = I - Q (upsilon I + Q^T Q)^{-1} Q^T, symmetrised."""
    n, m = Q.shape
    S = upsilon * np.eye(m) + Q.T @ Q
    J = np.eye(n) - Q @ linalg.cho_solve(linalg.cho_factor(S, lower=True), Q.T)
    return 0.5 * (J + J.T)


def build_bgecm_transform(
    Q: Union[CovariateMatrix, np.ndarray],
    upsilon: float,
    logger: Optional[logging.Logger] = None,
) -> BgecmTransform:
    """Build the J matrix of the bgecm metric and its Cholesky factor.

    Parameters
    ----------
    Q : CovariateMatrix
        The covariates; must have full column rank.
    upsilon : float
        Precision of the covariate effects relative to the noise variance.

    Returns
    -------
    BgecmTransform
        J and its lower-triangular factor L with J = L L^T.
    """
    logger = logger or _logger
    check_positive("upsilon", upsilon)
    if not isinstance(Q, CovariateMatrix):
        Q = CovariateMatrix(Q)
    J = covariate_precision_complement(Q.values, upsilon)
    try:
        L = linalg.cholesky(J, lower=True)
    except linalg.LinAlgError:
        jitter = 1e-12 * np.trace(J) / J.shape[0]
        logger.warning(
            f"Cholesky factorization of J failed for upsilon={upsilon}; "
            f"adding diagonal jitter {jitter:.3g}."
        )
        try:
            L = linalg.cholesky(J + jitter * np.eye(J.shape[0]), lower=True)
        except linalg.LinAlgError as e:
            raise NumericalError(
                f"J is not numerically positive definite for upsilon={upsilon}."
            ) from e
    return BgecmTransform(J=J, L=L, upsilon=upsilon)


class ResidualTransform:
    def __init__(self, P: np.ndarray, check: bool = True):
        """Orthonormal basis P of the orthogonal complement of span(Q).

        Parameters
        ----------
        P : np.ndarray
            n x (n - m) matrix with orthonormal columns.
        check : bool, optional
            Verify P^T P = I, by default True.
        """
        P = np.asarray(P, dtype=float)
        if check:
            gram = P.T @ P
            if not np.allclose(gram, np.eye(P.shape[1]), rtol=0, atol=ORTHO_TOL):
                raise ConstraintError("The columns of P are not orthonormal.")
        self.P = P

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """The (n - m) x n map applied to every data column (P^T)."""
        return self.P.T

    def rotated(self, R: np.ndarray) -> "ResidualTransform":
        """Another valid P for the same covariates, P R for orthogonal R."""
        return ResidualTransform(self.P @ R)


def build_residual_transform(Q: Union[CovariateMatrix, np.ndarray]) -> ResidualTransform:
    """Build P from the trailing columns of a full QR factorization of Q.

    The result satisfies P^T Q = 0, P^T P = I and P P^T = I - Q (Q^T Q)^{-1} Q^T.
    """
    if not isinstance(Q, CovariateMatrix):
        Q = CovariateMatrix(Q)
    q_full, _ = linalg.qr(Q.values, mode="full")
    return ResidualTransform(q_full[:, Q.m :], check=False)


def transform_dataset(data: Dataset, T: np.ndarray) -> Dataset:
    """Replace every variable column x_i of the data by T x_i."""
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[1] != data.n:
        raise ConstraintError(
            f"Transform of shape {T.shape} does not match a data set with {data.n} samples."
        )
    return Dataset(T @ data.values, data.names)


def bgecm_family_direct(
    y: np.ndarray,
    X: Optional[np.ndarray],
    Q: Union[CovariateMatrix, np.ndarray],
    hp: Hyperparams,
) -> float:
    """Log density of the bgecm family marginal evaluated in the original sample space.

    Uses the J-form scale (tau / nu) {J - J X (tau I + X^T J X)^{-1} X^T J}^{-1}
    without transforming the data. This is an independent computational path of
    the bgecm score: it equals ``family_log_marginal(L^T y, L^T X, tau, delta)``
    plus 0.5 * log|J|, the Jacobian of the map L^T.
    """
    if not isinstance(Q, CovariateMatrix):
        Q = CovariateMatrix(Q)
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if Q.n != n:
        raise ConstraintError(f"The covariates have {Q.n} rows, expected {n}.")
    X = _as_design(X, n)
    check_finite(y, "node data")
    check_finite(X, "parent data")
    k = X.shape[1]
    nu = hp.delta + k

    J = covariate_precision_complement(Q.values, hp.upsilon)
    if k == 0:
        B = J
    else:
        JX = J @ X
        B = J - JX @ linalg.solve(hp.tau * np.eye(k) + X.T @ JX, JX.T, assume_a="pos")
    sign, logdet_B = np.linalg.slogdet(B)
    if sign <= 0:
        raise NumericalError("The bgecm scale matrix is not positive definite.")
    logdet_sigma = n * np.log(hp.tau / nu) - logdet_B
    quad = max(float(y @ B @ y), 0.0)
    return _log_mvt(n, nu, logdet_sigma, quad / hp.tau)


class FamilyScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    node: int
    parent_set: Tuple[int, ...]
    log_ml: float


class ScoredNetwork(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dag: Dag
    family_scores: List[FamilyScore]
    log_prior: float = 0.0
    total_log_score: float

    @model_validator(mode="after")
    def _check_total(self):
        if len(self.family_scores) != self.dag.p:
            raise ValueError("Expected one family score per node.")
        recomputed = self.log_prior + sum(f.log_ml for f in self.family_scores)
        if abs(recomputed - self.total_log_score) > 1e-9 * max(1.0, abs(recomputed)):
            raise ValueError(
                f"Total log score {self.total_log_score} does not match the sum of "
                f"family scores {recomputed}."
            )
        return self

    def family(self, node: int) -> FamilyScore:
        return self.family_scores[node]


class ScoreCache:
    """Map (node, sorted parent set) -> log marginal likelihood.

    Safe to share between threads: lookups and inserts hold a lock, the
    computation itself does not. Two threads racing on the same key compute
    identical values and the first one stored wins.
    """

    def __init__(self):
        self._entries: Dict[Tuple[int, Tuple[int, ...]], float] = dict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key) -> bool:
        with self._lock:
            return key in self._entries

    def get_or_compute(
        self, node: int, parent_set: Tuple[int, ...], compute: Callable[[], float]
    ) -> float:
        key = (node, parent_set)
        with self._lock:
            if key in self._entries:
                self.hits += 1
                return self._entries[key]
        value = compute()
        with self._lock:
            self.misses += 1
            return self._entries.setdefault(key, value)


def effective_dataset(
    data: Dataset,
    metric: MetricSpec,
    hp: Hyperparams,
    logger: Optional[logging.Logger] = None,
) -> Tuple[Dataset, Optional[Union[BgecmTransform, ResidualTransform]]]:
    """Return the data the bge engine scores for the given metric, and the transform."""
    metric.check_dataset(data)
    if metric.kind == MetricKind.bge:
        return (data.centered() if metric.center else data), None
    if metric.kind == MetricKind.bgecm:
        transform = build_bgecm_transform(metric.covariates, hp.upsilon, logger=logger)
    else:
        transform = build_residual_transform(metric.covariates)
    return transform_dataset(data, transform.matrix), transform


class FamilyScorer:
    def __init__(
        self,
        data: Dataset,
        metric: MetricSpec,
        hp: Hyperparams,
        cache: Optional[ScoreCache] = None,
        logger: Optional[logging.Logger] = None,
    ):
        """Score families of one data set under one metric.

        The metric transform is applied once at construction, family scores are
        kept in ``cache``.

        Parameters
        ----------
        data : Dataset
            The raw data.
        metric : MetricSpec
            The metric to score with.
        hp : Hyperparams
            The prior hyperparameters.
        cache : ScoreCache, optional
            A family-score cache to use, by default a new one.
        logger : logging.Logger, optional
            A logger object, by default the module logger.
        """
        self.logger = logger or _logger
        self.metric = metric
        self.hp = hp
        self.raw = data
        self.data, self.transform = effective_dataset(data, metric, hp, self.logger)
        self.cache = cache if cache is not None else ScoreCache()

    @property
    def p(self) -> int:
        return self.data.p

    @property
    def n_effective(self) -> int:
        return self.data.n

    @property
    def log_det_J(self) -> Optional[float]:
        if isinstance(self.transform, BgecmTransform):
            return self.transform.log_det_J
        return None

    def check_parent_count(self, k: int) -> None:
        if k >= self.n_effective:
            raise ConstraintError(
                f"A parent set of size {k} needs more than {self.n_effective} "
                f"effective samples for the {self.metric.kind.value} metric."
            )

    def compute(self, node: int, parent_set: Sequence[int]) -> float:
        parent_set = tuple(parent_set)
        X = self.data.values[:, list(parent_set)] if parent_set else None
        return family_log_marginal(
            self.data.values[:, node], X, self.hp.tau, self.hp.delta
        )

    def log_ml(self, node: int, parent_set: Sequence[int]) -> float:
        parent_set = tuple(sorted(parent_set))
        self.check_parent_count(len(parent_set))
        return self.cache.get_or_compute(
            node, parent_set, lambda: self.compute(node, parent_set)
        )

    def family(self, node: int, parent_set: Sequence[int]) -> FamilyScore:
        parent_set = tuple(sorted(parent_set))
        return FamilyScore(
            node=node, parent_set=parent_set, log_ml=self.log_ml(node, parent_set)
        )

    def score(self, dag: Dag, prior: Optional[GraphPrior] = None) -> ScoredNetwork:
        prior = prior or GraphPrior()
        if dag.p != self.p:
            raise ConstraintError(
                f"The graph has {dag.p} nodes but the data has {self.p} variables."
            )
        families = [self.family(v, dag.parent_tuple(v)) for v in range(dag.p)]
        log_prior = prior.log_prior(dag.n_edges)
        total = log_prior + sum(f.log_ml for f in families)
        return ScoredNetwork(
            dag=dag, family_scores=families, log_prior=log_prior, total_log_score=total
        )


def dag_log_score(
    dag: Dag,
    data: Dataset,
    metric: MetricSpec,
    hp: Optional[Hyperparams] = None,
    prior: Optional[GraphPrior] = None,
) -> ScoredNetwork:
    """Score a graph: log graph prior plus the sum of the family log marginals.

    Parameters
    ----------
    dag : Dag
        The graph to score, with as many nodes as the data has variables.
    data : Dataset
        The raw data.
    metric : MetricSpec
        The metric; bge scores the (centred) data, bgecm the L^T transformed data
        and residual the P^T projected data.
    hp : Hyperparams, optional
        Prior hyperparameters, by default tau=1, delta=2, upsilon=1.
    prior : GraphPrior, optional
        The graph prior, by default uniform.

    Returns
    -------
    ScoredNetwork
        The graph with its per-family and total log scores.
    """
    scorer = FamilyScorer(data, metric, hp or Hyperparams())
    return scorer.score(dag, prior)
