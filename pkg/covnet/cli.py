"""Command line interface of covnet."""
import functools
import logging
import sys
from pathlib import Path
from typing import List, Optional

import click
from pydantic import ValidationError

from covnet.api.data_types import (
    Command,
    GraphPrior,
    Hyperparams,
    InitKind,
    MetricKind,
    PriorKind,
    SearchConfig,
)
from covnet.config import Config
from covnet.interface.config import InputModel, OutputModel, RunConfigModel, SimulateModel
from covnet.log import setuplog
from covnet.network import CovNetModel
from covnet.validation import ConstraintError, CovnetError, DataFormatError
from covnet.version import __version__
from covnet.workflows.evaluation import (
    UPSILON_GRID,
    run_study,
    summarise_study,
    upsilon_sweep,
    variable_spread,
)
from covnet.workflows.model import CovariateMatrix, Dataset
from covnet.workflows.simgen import gen_example1, gen_example2
from covnet.workflows.utils import read_numeric_csv

EXIT_OTHER = 1
EXIT_FORMAT = 2
EXIT_CONSTRAINT = 3
EXIT_IO = 4


def _one_line(e: Exception) -> str:
    if isinstance(e, ValidationError):
        err = e.errors()[0]
        loc = ".".join(str(part) for part in err["loc"])
        msg = f"invalid setting {loc}: {err['msg']}" if loc else err["msg"]
    else:
        msg = str(e)
    return " ".join(msg.split())


def _exit_code(e: Exception) -> int:
    if isinstance(e, DataFormatError):
        return EXIT_FORMAT
    if isinstance(e, (ConstraintError, ValidationError)):
        return EXIT_CONSTRAINT
    if isinstance(e, OSError):
        return EXIT_IO
    return EXIT_OTHER


def handle_errors(func):
    """Turn covnet, settings and I/O errors into a one-line message and an exit code."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (CovnetError, ValidationError, OSError) as e:
            click.echo(f"error: {_one_line(e)}", err=True)
            sys.exit(_exit_code(e))

    return wrapper


def metric_options(func):
    options = [
        click.option("--data", "data", type=click.Path(), required=True, help="Data csv, one column per variable."),
        click.option("--covariates", type=click.Path(), default=None, help="Covariate csv, rows aligned with the data."),
        click.option("--metric", type=click.Choice([m.value for m in MetricKind]), default="bge", show_default=True),
        click.option("--tau", type=float, default=1.0, show_default=True),
        click.option("--delta", type=float, default=2.0, show_default=True),
        click.option("--upsilon", type=float, default=1.0, show_default=True),
        click.option("--center/--no-center", default=True, show_default=True, help="Centre the data for the bge metric."),
        click.option("--prior", type=click.Choice([p.value for p in PriorKind]), default="uniform", show_default=True),
        click.option("--kappa", type=float, default=1.0, show_default=True, help="Per-edge prior factor of the edge-penalty prior."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def search_options(func):
    options = [
        click.option("--max-parents", type=int, default=4, show_default=True),
        click.option("--restarts", type=int, default=10, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--max-iterations", type=int, default=10_000, show_default=True),
        click.option("--init", type=click.Choice([i.value for i in InitKind]), default="empty", show_default=True),
    ]
    for option in reversed(options):
        func = option(func)
    return func


out_dir_option = click.option(
    "--out-dir", type=click.Path(file_okay=False), default=".", show_default=True
)


def _run_config(command: Command, out_dir: str, **kw) -> RunConfigModel:
    return RunConfigModel(
        command=command,
        input=InputModel(
            data=kw.get("data"), covariates=kw.get("covariates"), graph=kw.get("graph")
        ),
        output=OutputModel(dir=out_dir),
        metric=kw.get("metric", "bge"),
        center=kw.get("center", True),
        hyperparams=Hyperparams(
            tau=kw.get("tau", 1.0), delta=kw.get("delta", 2.0), upsilon=kw.get("upsilon", 1.0)
        ),
        search=SearchConfig(
            max_parents=kw.get("max_parents", 4),
            restarts=kw.get("restarts", 10),
            seed=kw.get("seed", 0),
            max_iterations=kw.get("max_iterations", 10_000),
            init=kw.get("init", "empty"),
        ),
        prior=GraphPrior(kind=kw.get("prior", "uniform"), kappa=kw.get("kappa", 1.0)),
        simulate=SimulateModel(
            example=kw.get("example", 2), replicates=kw.get("replicates", 10)
        ),
        posterior=kw.get("posterior", False),
    )


def _execute(ctx: click.Context, config: RunConfigModel) -> None:
    logger = ctx.obj["logger"]
    if config.output.log is not None and ctx.obj.get("log_file") is None:
        logger = setuplog(
            "covnet",
            Path(config.output.dir, config.output.log),
            log_level=logger.level,
        )
    CovNetModel.from_config(config, logger=logger).run()


@click.group()
@click.version_option(__version__, message="%(version)s")
@click.option("--quiet", is_flag=True, help="Only log warnings and hide progress bars.")
@click.option("--verbose", "-v", is_flag=True, help="Log every search move.")
@click.option("--log-file", type=click.Path(dir_okay=False), default=None, help="Also write the log to this file.")
@click.pass_context
def main(ctx, quiet, verbose, log_file):
    """Learn Gaussian Bayesian networks from data with exogenous covariates."""
    level = logging.WARNING if quiet else (logging.DEBUG if verbose else logging.INFO)
    ctx.ensure_object(dict)
    ctx.obj["quiet"] = quiet
    ctx.obj["log_file"] = log_file
    ctx.obj["logger"] = setuplog("covnet", log_file, log_level=level)


@main.command()
@metric_options
@search_options
@out_dir_option
@click.option("--posterior", is_flag=True, help="Also write the posterior summaries.")
@click.pass_context
@handle_errors
def learn(ctx, out_dir, **kw):
    """Learn a network and write its edge list, DOT files and JSON report."""
    _execute(ctx, _run_config(Command.learn, out_dir, **kw))


@main.command()
@metric_options
@click.option("--graph", type=click.Path(), required=True, help="Edge list csv with columns from,to.")
@out_dir_option
@click.pass_context
@handle_errors
def score(ctx, out_dir, **kw):
    """Score a given graph and write the JSON report."""
    _execute(ctx, _run_config(Command.score, out_dir, **kw))


@main.command()
@metric_options
@search_options
@click.option("--graph", type=click.Path(), default=None, help="Edge list csv; learned when omitted.")
@out_dir_option
@click.pass_context
@handle_errors
def posterior(ctx, out_dir, **kw):
    """Write per-node posterior summaries of a given or learned graph."""
    _execute(ctx, _run_config(Command.posterior, out_dir, **kw))


@main.command()
@click.option("--example", type=click.Choice(["1", "2"]), default="2", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--replicates", type=int, default=10, show_default=True)
@out_dir_option
@click.pass_context
@handle_errors
def simulate(ctx, example, out_dir, **kw):
    """Write simulated data sets, the covariates and the true edge list."""
    _execute(ctx, _run_config(Command.simulate, out_dir, example=int(example), **kw))


@main.command()
@click.option("--graph", type=click.Path(), required=True, help="Edge list csv with columns from,to.")
@click.option("--data", type=click.Path(), default=None, help="Data csv providing the node names.")
@out_dir_option
@click.pass_context
@handle_errors
def moralize(ctx, out_dir, **kw):
    """Write the moral graph of an edge list as DOT."""
    _execute(ctx, _run_config(Command.moralize, out_dir, **kw))


@main.command()
@click.argument("settings", type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def run(ctx, settings):
    """Execute the run described by a settings toml file."""
    _execute(ctx, Config().load_file(settings))


def _parse_floats(text: Optional[str]) -> List[float]:
    if text is None or text == "default":
        return list(UPSILON_GRID)
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConstraintError(f"Cannot read the upsilon grid '{text}'.") from None


def _study_prior(kind: str, kappa: Optional[float]) -> Optional[GraphPrior]:
    """The graph prior of a study; None selects GraphPrior.sparse per data set."""
    if kind == PriorKind.uniform.value:
        return GraphPrior()
    if kappa is None:
        return None
    return GraphPrior(kind=kind, kappa=kappa)


def _parse_metrics(text: str) -> List[MetricKind]:
    try:
        return [MetricKind(m.strip()) for m in text.split(",") if m.strip()]
    except ValueError:
        raise ConstraintError(f"Unknown metric in '{text}'.") from None


@main.command()
@click.option("--example", type=click.Choice(["1", "2"]), default="2", show_default=True)
@click.option("--replicates", type=int, default=10, show_default=True)
@click.option("--metrics", default="bge,bgecm,residual", show_default=True)
@click.option("--upsilon-grid", default=None, help="Comma separated upsilon values or 'default'; runs a bgecm sweep.")
@click.option("--tau", type=float, default=1.0, show_default=True)
@click.option("--delta", type=float, default=2.0, show_default=True)
@click.option("--upsilon", type=float, default=1.0, show_default=True)
@click.option("--prior", type=click.Choice([p.value for p in PriorKind]), default="edge-penalty", show_default=True)
@click.option("--kappa", type=float, default=None, help="Per-edge prior factor of the edge-penalty prior, by default 1/p.")
@click.option("--directed", is_flag=True, help="Count directed instead of skeleton edges.")
@search_options
@out_dir_option
@click.pass_context
@handle_errors
def study(
    ctx, example, replicates, metrics, upsilon_grid, tau, delta, upsilon, prior, kappa, directed,
    out_dir, **kw,
):
    """Learn networks on simulated replicates and summarise the edge counts."""
    logger = ctx.obj["logger"]
    progress = not ctx.obj["quiet"]
    hp = Hyperparams(tau=tau, delta=delta, upsilon=upsilon)
    cfg = SearchConfig(**kw)
    graph_prior = _study_prior(prior, kappa)
    generate = gen_example1 if example == "1" else gen_example2
    outputs = generate(cfg.seed, replicates)
    if upsilon_grid is not None:
        rows = upsilon_sweep(
            outputs, _parse_floats(upsilon_grid), hp, cfg, graph_prior, directed, progress, logger
        )
    else:
        kinds = _parse_metrics(metrics)
        rows = run_study(
            outputs, kinds, hp, cfg, graph_prior, directed=directed, progress=progress, logger=logger
        )
    model = CovNetModel(root=out_dir, logger=logger)
    model.set_tables(rows, "study")
    model.set_tables(summarise_study(rows), "study_summary")
    model.write_tables()


@main.command()
@click.option("--data", type=click.Path(), required=True)
@click.option("--covariates", type=click.Path(), required=True)
@out_dir_option
@click.pass_context
@handle_errors
def spread(ctx, data, covariates, out_dir):
    """Write per-variable standard deviations and residual standard errors."""
    dataset = Dataset.from_frame(read_numeric_csv(data, "data"))
    cov = CovariateMatrix.from_frame(read_numeric_csv(covariates, "covariates"))
    model = CovNetModel(root=out_dir, logger=ctx.obj["logger"])
    model.set_tables(variable_spread(dataset, cov), "spread")
    model.write_tables()


if __name__ == "__main__":
    main()
