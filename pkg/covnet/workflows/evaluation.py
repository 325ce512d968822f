"""Simulation studies: learn networks on simulated replicates and count edges."""
import logging
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel
from scipy import linalg
from tqdm import tqdm

from covnet.api.data_types import GraphPrior, Hyperparams, MetricKind, SearchConfig
from covnet.validation import check_rows_match
from covnet.workflows.graphs import edge_accuracy
from covnet.workflows.metrics import FamilyScorer
from covnet.workflows.model import CovariateMatrix, Dataset, MetricSpec
from covnet.workflows.search import search
from covnet.workflows.simgen import SimOutput

__all__ = [
    "COUNTS",
    "StudyRow",
    "UPSILON_GRID",
    "run_study",
    "summarise_study",
    "upsilon_sweep",
    "variable_spread",
]

_logger = logging.getLogger(__name__)

UPSILON_GRID = (1e-4, 1e-3, 1e-2, 0.1, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 1000.0)
COUNTS = ["correct", "spurious", "missing"]


class StudyRow(BaseModel):
    metric: MetricKind
    upsilon: Optional[float]
    replicate: int
    correct: int
    spurious: int
    missing: int
    total_log_score: float


def run_study(
    outputs: Sequence[SimOutput],
    metrics: Iterable[Union[MetricKind, str]] = tuple(MetricKind),
    hp: Optional[Hyperparams] = None,
    search_cfg: Optional[SearchConfig] = None,
    prior: Optional[GraphPrior] = None,
    directed: bool = False,
    progress: bool = True,
    logger: Optional[logging.Logger] = None,
) -> pd.DataFrame:
    """Learn a network per replicate and metric and compare it with the truth.

    Parameters
    ----------
    outputs : Sequence[SimOutput]
        The simulated replicates.
    metrics : Iterable[MetricKind]
        The metrics to learn with, by default all three.
    hp : Hyperparams, optional
        Prior hyperparameters, by default tau=1, delta=2, upsilon=1.
    search_cfg : SearchConfig, optional
        Search settings.
    prior : GraphPrior, optional
        Graph prior, by default GraphPrior.sparse(p) for the p variables of each
        replicate.
    directed : bool, optional
        Count directed instead of skeleton edges, by default False.
    progress : bool, optional
        Show a progress bar, by default True.
    logger : logging.Logger, optional
        A logger object.

    Returns
    -------
    pd.DataFrame
        One StudyRow per (metric, replicate). The upsilon column is empty for bge.
    """
    logger = logger or _logger
    hp = hp or Hyperparams()
    search_cfg = search_cfg or SearchConfig()
    metrics = [MetricKind(m) for m in metrics]

    rows: List[dict] = []
    jobs = [(out, kind) for out in outputs for kind in metrics]
    for out, kind in tqdm(jobs, desc="replicates", disable=not progress):
        covariates = None if kind == MetricKind.bge else out.covariates
        scorer = FamilyScorer(out.data, MetricSpec(kind, covariates), hp, logger=logger)
        best = search(scorer, prior or GraphPrior.sparse(out.data.p), search_cfg, logger)
        acc = edge_accuracy(best.dag, out.truth, directed=directed)
        row = StudyRow(
            metric=kind,
            upsilon=hp.upsilon if kind == MetricKind.bgecm else None,
            replicate=out.replicate,
            total_log_score=best.total_log_score,
            **acc.model_dump(),
        )
        logger.info(
            f"{kind.value} replicate {out.replicate}: {acc.correct} correct, "
            f"{acc.spurious} spurious, {acc.missing} missing."
        )
        rows.append(row.model_dump(mode="json"))
    columns = list(StudyRow.model_fields.keys())
    return pd.DataFrame(rows, columns=columns)


def summarise_study(df: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard deviation of the edge counts per metric and upsilon."""
    grouped = df.groupby(["metric", "upsilon"], dropna=False, sort=False)[COUNTS]
    summary = grouped.agg(["mean", "std"])
    summary.columns = [f"{count}_{stat}" for count, stat in summary.columns]
    summary["replicates"] = grouped.size()
    return summary.reset_index()


def upsilon_sweep(
    outputs: Sequence[SimOutput],
    upsilons: Iterable[float] = UPSILON_GRID,
    hp: Optional[Hyperparams] = None,
    search_cfg: Optional[SearchConfig] = None,
    prior: Optional[GraphPrior] = None,
    directed: bool = False,
    progress: bool = True,
    logger: Optional[logging.Logger] = None,
) -> pd.DataFrame:
    """Repeat a bgecm study for every value of upsilon and stack the rows."""
    hp = hp or Hyperparams()
    frames = []
    for upsilon in upsilons:
        frames.append(
            run_study(
                outputs,
                [MetricKind.bgecm],
                hp.model_copy(update={"upsilon": float(upsilon)}),
                search_cfg,
                prior,
                directed=directed,
                progress=progress,
                logger=logger,
            )
        )
    return pd.concat(frames, ignore_index=True)


def variable_spread(data: Dataset, covariates: CovariateMatrix) -> pd.DataFrame:
    """Per-variable standard deviation and residual standard error on the covariates.

    The residual standard error is sqrt(RSS / (n - m)) of the least-squares fit
    of each data column on the covariate columns.
    """
    check_rows_match(data.n, covariates.n)
    Q = covariates.values
    coef, *_ = linalg.lstsq(Q, data.values)
    rss = np.sum((data.values - Q @ coef) ** 2, axis=0)
    return pd.DataFrame(
        {
            "name": data.names,
            "std": data.values.std(axis=0, ddof=1),
            "residual_se": np.sqrt(rss / (data.n - covariates.m)),
        }
    )
