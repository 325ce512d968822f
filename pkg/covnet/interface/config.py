import os
from abc import ABC, abstractmethod
from typing import Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator

from covnet.api.data_types import (
    Command,
    GraphPrior,
    Hyperparams,
    MetricKind,
    SearchConfig,
)


class InputModel(BaseModel):
    data: Optional[str] = None
    covariates: Optional[str] = None
    graph: Optional[str] = None


class OutputModel(BaseModel):
    dir: str = "."
    edges: str = "edges.csv"
    moral: str = "moral.dot"
    dag: str = "dag.dot"
    report: str = "report.json"
    posterior: str = "posterior.csv"
    log: Optional[str] = None


class SimulateModel(BaseModel):
    example: Literal[1, 2] = 2
    replicates: int = Field(10, ge=1)


class RunConfigModel(BaseModel):
    """BaseModel describing the variables and data types of a covnet settings toml file."""

    command: Command = Command.learn
    input: InputModel = InputModel()
    output: OutputModel = OutputModel()
    metric: MetricKind = MetricKind.bge
    center: bool = True
    hyperparams: Hyperparams = Hyperparams()
    search: SearchConfig = SearchConfig()
    prior: GraphPrior = GraphPrior()
    simulate: SimulateModel = SimulateModel()
    posterior: bool = False

    @model_validator(mode="after")
    def _check_inputs(self):
        if self.command in (Command.simulate, Command.moralize):
            return self
        if self.input.data is None:
            raise ValueError(f"The {self.command.value} command needs input.data.")
        if self.metric == MetricKind.bge and self.input.covariates is not None:
            raise ValueError("The bge metric does not take covariates.")
        if self.metric != MetricKind.bge and self.input.covariates is None:
            raise ValueError(f"The {self.metric.value} metric needs input.covariates.")
        return self


class IConfig(ABC):
    attrs: RunConfigModel

    @abstractmethod
    def load_file(self, filepath: Union[str, os.PathLike]) -> RunConfigModel:
        """Get covnet run settings from a settings toml file."""
        ...

    @abstractmethod
    def save(self, config: RunConfigModel, filepath: Union[str, os.PathLike]):
        """Save covnet run settings to a settings toml file."""
        ...
