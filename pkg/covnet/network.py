"""Implement the covnet model class"""

import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd
from pydantic import BaseModel

from covnet.api.data_types import (
    Command,
    GraphPrior,
    Hyperparams,
    MetricKind,
    SearchConfig,
)
from covnet.config import Config
from covnet.interface.config import RunConfigModel
from covnet.validation import ConstraintError
from covnet.version import __version__
from covnet.workflows.graphs import moralize, to_dot
from covnet.workflows.metrics import FamilyScorer, ScoredNetwork
from covnet.workflows.model import CovariateMatrix, Dag, Dataset, MetricSpec
from covnet.workflows.posterior import network_posterior
from covnet.workflows.search import search
from covnet.workflows.simgen import gen_example1, gen_example2
from covnet.workflows.utils import read_edge_list, read_numeric_csv

__all__ = ["CovNetModel", "FamilyReport", "NetworkReport"]

_logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


class FamilyReport(BaseModel):
    node: int
    name: str
    parents: List[str]
    log_ml: float


class NetworkReport(BaseModel):
    tool: str = "covnet"
    version: str = __version__
    timestamp: str
    metric: MetricKind
    total_log_score: float
    log_prior: float
    log_det_J: Optional[float] = None
    edges: List[List[str]]
    families: List[FamilyReport]
    config: dict


class CovNetModel:
    """Learn, score and summarise Gaussian networks of one data set.

    The model keeps the tables, DOT texts and reports it produces and writes them
    below ``root`` with ``write``.
    """

    _NAME = "covnet"
    _CONF = "settings.toml"

    def __init__(
        self,
        root: Optional[Union[str, Path]] = None,
        config: Optional[RunConfigModel] = None,
        logger: logging.Logger = _logger,
    ):
        self.root = Path(root) if root is not None else Path(".")
        self.config = config or RunConfigModel(command=Command.simulate)
        self.logger = logger

        self.data: Optional[Dataset] = None
        self.covariates: Optional[CovariateMatrix] = None
        self.metric: Optional[MetricSpec] = None
        self.hp = Hyperparams()
        self.prior = GraphPrior()
        self.search_cfg = SearchConfig()
        self.scorer: Optional[FamilyScorer] = None
        self.network: Optional[ScoredNetwork] = None

        self._tables: Dict[str, pd.DataFrame] = dict()
        self._texts: Dict[str, str] = dict()

    @classmethod
    def from_config(
        cls, config: RunConfigModel, logger: logging.Logger = _logger
    ) -> "CovNetModel":
        """Build a model with data, metric and search settings from a run config."""
        model = cls(root=config.output.dir, config=config, logger=logger)
        model.setup_search(config.search, config.prior)
        if config.input.data is not None:
            model.setup_data(config.input.data)
        if config.input.covariates is not None:
            model.setup_covariates(config.input.covariates)
        if config.command not in (Command.simulate, Command.moralize):
            model.setup_metric(config.metric, config.hyperparams, config.center)
        return model

    def setup_data(self, data: Union[str, Path, Dataset, pd.DataFrame]) -> None:
        """Set the observations, from a csv file (header row of variable names) or in memory."""
        if isinstance(data, (str, Path)):
            self.logger.info(f"Reading data from {data}.")
            data = read_numeric_csv(data, "data")
        if isinstance(data, pd.DataFrame):
            data = Dataset.from_frame(data)
        self.data = data
        self.logger.info(f"Data has {data.n} samples of {data.p} variables.")

    def setup_covariates(
        self, covariates: Union[str, Path, CovariateMatrix, pd.DataFrame]
    ) -> None:
        """Set the covariate matrix; rows must align with the data rows."""
        if isinstance(covariates, (str, Path)):
            self.logger.info(f"Reading covariates from {covariates}.")
            covariates = read_numeric_csv(covariates, "covariates")
        if isinstance(covariates, pd.DataFrame):
            covariates = CovariateMatrix.from_frame(covariates)
        if not covariates.has_intercept():
            self.logger.warning(
                "The covariates do not span the constant vector; variable means are "
                "not removed by the bgecm or residual metric."
            )
        self.covariates = covariates

    def setup_metric(
        self,
        kind: Union[MetricKind, str] = MetricKind.bge,
        hp: Optional[Hyperparams] = None,
        center: bool = True,
    ) -> None:
        """Select the metric and build the family scorer for the current data."""
        if self.data is None:
            raise ConstraintError("Set the data before the metric.")
        kind = MetricKind(kind)
        covariates = None if kind == MetricKind.bge else self.covariates
        self.metric = MetricSpec(kind, covariates, center=center)
        self.hp = hp or Hyperparams()
        self.scorer = FamilyScorer(self.data, self.metric, self.hp, logger=self.logger)
        self.logger.info(
            f"Scoring with the {kind.value} metric (tau={self.hp.tau}, "
            f"delta={self.hp.delta}, upsilon={self.hp.upsilon})."
        )

    def setup_search(
        self, cfg: Optional[SearchConfig] = None, prior: Optional[GraphPrior] = None
    ) -> None:
        self.search_cfg = cfg or SearchConfig()
        self.prior = prior or GraphPrior()

    def _check_scorer(self) -> FamilyScorer:
        if self.scorer is None:
            raise ConstraintError("Set up the data and the metric first.")
        return self.scorer

    def read_graph(self, fn: Union[str, Path]) -> Dag:
        """Read a ``from,to`` edge list naming data variables or 1-indexed ids."""
        pairs = read_edge_list(fn)
        if self.data is not None:
            return Dag.from_edge_list(pairs, self.data.p, self.data.names)
        names = _names_from_edges(pairs)
        return Dag.from_edge_list(pairs, len(names), names)

    def learn(self) -> ScoredNetwork:
        """Search the highest scoring network and stage its outputs."""
        scorer = self._check_scorer()
        self.logger.info(
            f"Hill climbing with {self.search_cfg.restarts} restarts, at most "
            f"{self.search_cfg.max_parents} parents, seed {self.search_cfg.seed}."
        )
        self.network = search(scorer, self.prior, self.search_cfg, self.logger)
        self._stage_network(self.network)
        return self.network

    def score(self, dag: Union[Dag, str, Path]) -> ScoredNetwork:
        """Score a given graph and stage its report."""
        scorer = self._check_scorer()
        if not isinstance(dag, Dag):
            dag = self.read_graph(dag)
        self.network = scorer.score(dag, self.prior)
        self.logger.info(f"Total log score {self.network.total_log_score:.6f}.")
        self.set_text(self.report(self.network).model_dump_json(indent=2), "report")
        return self.network

    def posterior(self, dag: Optional[Union[Dag, str, Path]] = None) -> pd.DataFrame:
        """Posterior summaries per node for a given graph, or for the learned one."""
        if dag is not None:
            self.score(dag)
        elif self.network is None:
            self.learn()
        table = network_posterior(self.network, self.data, self.metric, self.hp)
        self.set_tables(table, "posterior")
        return table

    def moralize(self, dag: Union[Dag, str, Path]) -> str:
        if not isinstance(dag, Dag):
            if self.data is None:
                pairs = read_edge_list(dag)
                names = _names_from_edges(pairs)
                dag = Dag.from_edge_list(pairs, len(names), names)
            else:
                names = self.data.names
                dag = self.read_graph(dag)
        else:
            names = self.data.names if self.data is not None else None
        text = to_dot(moralize(dag), names)
        self.set_text(text, "moral")
        return text

    def simulate(self, example: int = 2, seed: int = 0, replicates: int = 10) -> None:
        """Generate replicates of a simulation example and stage them as tables."""
        generate = {1: gen_example1, 2: gen_example2}.get(int(example))
        if generate is None:
            raise ConstraintError(f"Unknown simulation example {example}, use 1 or 2.")
        outputs = generate(seed, replicates)
        width = len(str(replicates))
        for out in outputs:
            self.set_tables(out.data.to_frame(), f"data_{out.replicate + 1:0{width}d}")
        first = outputs[0]
        self.set_tables(first.covariates.to_frame(), "covariates")
        self.set_tables(first.truth.to_frame(first.data.names), "truth")
        params = pd.DataFrame(
            {"name": first.data.names, "psi": first.true_params.psi}
        )
        for j, name in enumerate(first.covariates.names):
            params[f"b[{name}]"] = first.true_params.b[:, j]
        params["gamma"] = [
            ";".join(f"{g:.17g}" for g in gamma) for gamma in first.true_params.gamma
        ]
        self.set_tables(params, "true_params")
        self.logger.info(
            f"Simulated {replicates} replicates of example {example} with seed {seed}."
        )

    def report(self, network: ScoredNetwork) -> NetworkReport:
        names = self.data.names
        families = [
            FamilyReport(
                node=f.node + 1,
                name=names[f.node],
                parents=[names[u] for u in f.parent_set],
                log_ml=f.log_ml,
            )
            for f in network.family_scores
        ]
        return NetworkReport(
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            metric=self.metric.kind,
            total_log_score=network.total_log_score,
            log_prior=network.log_prior,
            log_det_J=self.scorer.log_det_J if self.scorer is not None else None,
            edges=[[names[u], names[v]] for u, v in network.dag.sorted_edges()],
            families=families,
            config=self.config.model_dump(mode="json"),
        )

    def _stage_network(self, network: ScoredNetwork) -> None:
        names = self.data.names
        self.set_tables(network.dag.to_frame(names), "edges")
        self.set_text(to_dot(network.dag, names), "dag")
        self.set_text(to_dot(moralize(network.dag), names), "moral")
        self.set_text(self.report(network).model_dump_json(indent=2), "report")

    def set_tables(self, df: pd.DataFrame, name: str) -> None:
        """Add <pandas.DataFrame> to the tables variable.

        Parameters
        ----------
        df : pd.DataFrame
            New DataFrame to add
        name : str
            Name of the DataFrame to add
        """
        if not isinstance(df, (pd.DataFrame, pd.Series)):
            raise ValueError("df type not recognized, should be pandas.DataFrame.")
        if name in self._tables:
            self.logger.debug(f"Overwriting table: {name}")
        self._tables[name] = df

    def set_text(self, text: str, name: str) -> None:
        self._texts[name] = text

    def _fn(self, name: str, default_ext: str) -> str:
        out = self.config.output
        return {
            "edges": out.edges,
            "posterior": out.posterior,
            "moral": out.moral,
            "dag": out.dag,
            "report": out.report,
        }.get(name, f"{name}.{default_ext}")

    def write_tables(self) -> None:
        if len(self._tables) == 0:
            self.logger.debug("No table data found, skip writing.")
            return
        for name, df in self._tables.items():
            fn = self._fn(name, "csv")
            self.logger.info(f"Writing model {name} table file to {fn}.")
            path = self.root / fn
            path.parent.mkdir(parents=True, exist_ok=True)
            df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

    def write_texts(self) -> None:
        for name, text in self._texts.items():
            ext = "json" if name == "report" else "dot"
            fn = self._fn(name, ext)
            self.logger.info(f"Writing model {name} file to {fn}.")
            path = self.root / fn
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)

    def write(self) -> None:
        """Write all staged tables, graphs and reports plus the settings file."""
        self.logger.info(f"Writing model data to {self.root}")
        self.root.mkdir(parents=True, exist_ok=True)
        self.write_tables()
        self.write_texts()
        Config().save(self.config, self.root / self._CONF)

    def run(self) -> None:
        """Execute the command of the run config and write its outputs."""
        config = self.config
        if config.command == Command.learn:
            self.learn()
            if config.posterior:
                self.posterior()
        elif config.command == Command.score:
            self.score(_require(config.input.graph, "input.graph"))
        elif config.command == Command.posterior:
            self.posterior(config.input.graph)
        elif config.command == Command.moralize:
            self.moralize(_require(config.input.graph, "input.graph"))
        elif config.command == Command.simulate:
            self.simulate(
                config.simulate.example, config.search.seed, config.simulate.replicates
            )
        self.write()


def _require(value, name: str):
    if value is None:
        raise ConstraintError(f"The setting {name} is required for this command.")
    return value


def _names_from_edges(pairs) -> List[str]:
    """Node names of a bare edge list: 1..max id for numeric lists, else the sorted tokens."""
    tokens = {t for pair in pairs for t in pair}
    if not tokens:
        return ["1"]
    try:
        ids = [int(t) for t in tokens]
    except ValueError:
        return sorted(tokens)
    return [str(i + 1) for i in range(max(max(ids), 1))]
