from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class MetricKind(str, Enum):
    bge = "bge"
    bgecm = "bgecm"
    residual = "residual"


class PriorKind(str, Enum):
    uniform = "uniform"
    edge_penalty = "edge-penalty"


class InitKind(str, Enum):
    empty = "empty"
    random = "random"


class Command(str, Enum):
    learn = "learn"
    score = "score"
    simulate = "simulate"
    posterior = "posterior"
    moralize = "moralize"


class OperationKind(int, Enum):
    """Edge operations; the integer value is the tie-break order of the search."""

    add = 0
    delete = 1
    reverse = 2


class Hyperparams(BaseModel):
    """Prior hyperparameters shared by all families.

    tau is the prior precision scale of the regression weights, delta the prior
    degrees of freedom of the noise variance and upsilon the precision of the
    covariate effects relative to the noise variance.
    """

    model_config = ConfigDict(frozen=True)

    tau: float = Field(1.0, gt=0)
    delta: float = Field(2.0, gt=0)
    upsilon: float = Field(1.0, gt=0)


class GraphPrior(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: PriorKind = PriorKind.uniform
    kappa: float = Field(1.0, gt=0, le=1)

    def log_prior(self, n_edges: int) -> float:
        """Log prior of a graph with ``n_edges`` edges (up to a constant)."""
        if self.kind == PriorKind.uniform:
            return 0.0
        return n_edges * float(np.log(self.kappa))

    def log_prior_delta(self, edge_change: int) -> float:
        if self.kind == PriorKind.uniform:
            return 0.0
        return edge_change * float(np.log(self.kappa))

    @classmethod
    def sparse(cls, p: int) -> "GraphPrior":
        """Edge-penalty prior with kappa = 1/p, the default of the simulation studies.

        With a uniform prior the greedy search keeps every edge whose Bayes factor
        exceeds one, which on p(p-1)/2 candidate pairs adds many noise edges.
        """
        return cls(kind=PriorKind.edge_penalty, kappa=1.0 / max(p, 1))


class SearchConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_parents: int = Field(4, ge=1)
    restarts: int = Field(10, ge=0)
    seed: int = Field(0, ge=0, lt=2**64)
    max_iterations: int = Field(10_000, ge=1)
    init: InitKind = InitKind.empty
    threads: Optional[int] = Field(None, ge=1)
