"""Seeded simulation of linear recursive equation systems with covariate effects.

Every random quantity is drawn from its own stream, ``stream(seed, purpose,
variable[, replicate])``: purpose 0 holds the parameters of one variable and
purpose 1 the noise of one variable in one replicate. Adding replicates or
variables never changes the draws of existing ones. Normals come from
``Generator.standard_normal`` and gammas from ``Generator.gamma`` on PCG64; an
inverse gamma draw is the reciprocal of a gamma draw with scale 1 / rate.
"""
import logging
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from covnet.api.data_types import Hyperparams
from covnet.util import DATADIR
from covnet.validation import ConstraintError
from covnet.workflows.model import CovariateMatrix, Dag, Dataset
from covnet.workflows.utils import stream

__all__ = [
    "EXAMPLE2_Q",
    "SimOutput",
    "TrueParams",
    "example1_covariates",
    "example1_truth",
    "example2_covariates",
    "example2_truth",
    "gen_example1",
    "gen_example2",
    "gen_generic",
    "stream",
]

_logger = logging.getLogger(__name__)

PARAMS = 0
NOISE = 1

EXAMPLE1_P = 100
EXAMPLE1_GROUP_SIZE = 50
EXAMPLE2_P = 20


def _read_example2_q() -> np.ndarray:
    df = pd.read_csv(DATADIR / "example2_covariates.csv")
    return df.to_numpy(dtype=float)


EXAMPLE2_Q = _read_example2_q()
EXAMPLE2_Q.setflags(write=False)


class TrueParams(BaseModel):
    """The generating parameters of one simulation.

    gamma[i] is aligned with the sorted parents of node i, b has one row per
    variable and one column per covariate.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    psi: np.ndarray
    gamma: List[np.ndarray]
    b: np.ndarray


class SimOutput(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    data: Dataset
    covariates: CovariateMatrix
    truth: Dag
    true_params: TrueParams
    replicate: int = Field(0, ge=0)


def example1_covariates() -> CovariateMatrix:
    """Two one-hot group indicators, 50 samples each."""
    Q = np.zeros((2 * EXAMPLE1_GROUP_SIZE, 2))
    Q[:EXAMPLE1_GROUP_SIZE, 0] = 1.0
    Q[EXAMPLE1_GROUP_SIZE:, 1] = 1.0
    return CovariateMatrix(Q, ["group1", "group2"])


def example1_truth() -> Dag:
    return Dag(EXAMPLE1_P)


def example2_covariates() -> CovariateMatrix:
    return CovariateMatrix(EXAMPLE2_Q, ["q1", "q2", "q3"])


def example2_truth() -> Dag:
    # variables 1 and 2 drive 19, which drives 20 (1-indexed)
    return Dag(EXAMPLE2_P, [(0, 18), (1, 18), (18, 19)])


def sample_params(
    truth: Dag, m: int, hp: Hyperparams, seed: int
) -> TrueParams:
    """Draw psi, gamma and b of every variable from the conjugate prior.

    1 / psi_i ~ Gamma((delta + k_i) / 2, rate = tau / 2), gamma_i ~ N(0, psi_i / tau I)
    and b_i ~ N(0, psi_i / upsilon I), with k_i the number of parents of node i.
    """
    psi = np.empty(truth.p)
    gamma = []
    b = np.empty((truth.p, m))
    for i in range(truth.p):
        rng = stream(seed, PARAMS, i)
        k = len(truth.parent_tuple(i))
        shape = 0.5 * (hp.delta + k)
        psi[i] = 1.0 / rng.gamma(shape, scale=2.0 / hp.tau)
        gamma.append(rng.standard_normal(k) * np.sqrt(psi[i] / hp.tau))
        b[i] = rng.standard_normal(m) * np.sqrt(psi[i] / hp.upsilon)
    return TrueParams(psi=psi, gamma=gamma, b=b)


def sample_data(
    truth: Dag,
    Q: CovariateMatrix,
    params: TrueParams,
    seed: int,
    replicate: int = 0,
) -> Dataset:
    """Generate one data set in topological order: x_i = X_Pi gamma_i + Q b_i + eps_i."""
    n = Q.n
    values = np.zeros((n, truth.p))
    for i in truth.topological_order():
        rng = stream(seed, NOISE, i, replicate)
        pa = list(truth.parent_tuple(i))
        x = Q.values @ params.b[i] + rng.standard_normal(n) * np.sqrt(params.psi[i])
        if pa:
            x = x + values[:, pa] @ params.gamma[i]
        values[:, i] = x
    return Dataset(values)


def _simulate(
    truth: Dag,
    Q: CovariateMatrix,
    hp: Hyperparams,
    seed: int,
    replicates: int,
) -> List[SimOutput]:
    if replicates < 1:
        raise ConstraintError(f"Need at least one replicate, got {replicates}.")
    params = sample_params(truth, Q.m, hp, seed)
    return [
        SimOutput(
            data=sample_data(truth, Q, params, seed, r),
            covariates=Q,
            truth=truth,
            true_params=params,
            replicate=r,
        )
        for r in range(replicates)
    ]


def gen_example1(seed: int = 0, replicates: int = 10) -> List[SimOutput]:
    """Group-mean simulation: 100 independent variables, two groups of 50 samples.

    psi_i ~ InvGamma(1, 1/2) and the group effects b_ij ~ N(0, psi_i) are drawn
    once and shared by all replicates; only the noise is redrawn. The true graph
    is empty.
    """
    outputs = _simulate(
        example1_truth(), example1_covariates(), Hyperparams(), seed, replicates
    )
    _logger.debug(f"Generated {replicates} replicates of example 1 with seed {seed}.")
    return outputs


def gen_example2(seed: int = 0, replicates: int = 10) -> List[SimOutput]:
    """Twenty variables observed on ten samples with three known covariates.

    Variable 19 regresses on variables 1 and 2 and variable 20 on variable 19;
    psi_i ~ InvGamma((2 + |P_i|) / 2, 1/2), the regression weights
    ~ N(0, psi_i) and the covariate effects ~ N(0, psi_i), all fixed across
    replicates.
    """
    outputs = _simulate(
        example2_truth(), example2_covariates(), Hyperparams(), seed, replicates
    )
    _logger.debug(f"Generated {replicates} replicates of example 2 with seed {seed}.")
    return outputs


def gen_generic(
    truth: Dag,
    Q: CovariateMatrix,
    hp: Optional[Hyperparams] = None,
    n: Optional[int] = None,
    seed: int = 0,
) -> SimOutput:
    """Sample parameters from the prior with hyperparameters ``hp`` and one data set.

    Parameters
    ----------
    truth : Dag
        The generating graph.
    Q : CovariateMatrix
        The covariates, one row per sample.
    hp : Hyperparams, optional
        The prior hyperparameters, by default tau=1, delta=2, upsilon=1.
    n : int, optional
        The number of samples, must match the rows of Q when given.
    seed : int
        The seed of all random streams.
    """
    if n is not None and n != Q.n:
        raise ConstraintError(f"Asked for {n} samples but the covariates have {Q.n} rows.")
    return _simulate(truth, Q, hp or Hyperparams(), seed, 1)[0]
