"""Score-based structure search.

A best-improvement hill climber over single edge additions, deletions and
reversals with random restarts, plus an exhaustive enumerator of all graphs on
a handful of nodes that serves as an oracle for the climber.
"""
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import FrozenSet, List, Optional, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict

from covnet.api.data_types import (
    GraphPrior,
    Hyperparams,
    InitKind,
    OperationKind,
    SearchConfig,
)
from covnet.validation import ConstraintError
from covnet.workflows.metrics import FamilyScorer, ScoreCache, ScoredNetwork
from covnet.workflows.model import Dag, Dataset, MetricSpec, is_acyclic
from covnet.workflows.utils import worker_count

__all__ = [
    "EdgeOperation",
    "ScoreCache",
    "climb",
    "enumerate_dags",
    "exhaustive_search",
    "hill_climb",
    "random_dag",
    "score_delta",
]

_logger = logging.getLogger(__name__)

MAX_ENUMERATION_NODES = 5
# smallest accepted improvement; guards against cycling on rounding noise
MIN_IMPROVEMENT = 1e-10


class EdgeOperation(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: OperationKind
    source: int
    target: int

    @property
    def edge_change(self) -> int:
        return {OperationKind.add: 1, OperationKind.delete: -1}.get(self.kind, 0)

    def apply(self, dag: Dag) -> Dag:
        u, v = self.source, self.target
        if self.kind == OperationKind.add:
            return dag.add_edge(u, v)
        if self.kind == OperationKind.delete:
            return dag.remove_edge(u, v)
        return dag.reverse_edge(u, v)

    def family_changes(self, dag: Dag) -> List[Tuple[int, Tuple[int, ...]]]:
        """The (node, new parent set) pairs this operation changes."""
        u, v = self.source, self.target
        pa_v = set(dag.parent_tuple(v))
        if self.kind == OperationKind.add:
            return [(v, tuple(sorted(pa_v | {u})))]
        if self.kind == OperationKind.delete:
            return [(v, tuple(sorted(pa_v - {u})))]
        pa_u = set(dag.parent_tuple(u))
        return [(u, tuple(sorted(pa_u | {v}))), (v, tuple(sorted(pa_v - {u})))]

    def check_legal(self, dag: Dag, max_parents: Optional[int] = None) -> None:
        u, v = self.source, self.target
        if u == v:
            raise ConstraintError("Edge operations need two distinct nodes.")
        if self.kind == OperationKind.add:
            if dag.has_edge(u, v):
                raise ConstraintError(f"Edge {u}->{v} already present.")
            edges = dag.edges | {(u, v)}
        elif not dag.has_edge(u, v):
            raise ConstraintError(f"Edge {u}->{v} not present.")
        elif self.kind == OperationKind.delete:
            return
        else:
            edges = (dag.edges - {(u, v)}) | {(v, u)}
        if not is_acyclic(edges, dag.p):
            raise ConstraintError(f"{self.kind.name} {u}->{v} would create a cycle.")
        if max_parents is not None:
            for node, pa in self.family_changes(dag):
                if len(pa) > max_parents:
                    raise ConstraintError(
                        f"{self.kind.name} {u}->{v} gives node {node} more than "
                        f"{max_parents} parents."
                    )


def score_delta(
    scorer: FamilyScorer,
    current: ScoredNetwork,
    op: EdgeOperation,
    prior: Optional[GraphPrior] = None,
    max_parents: Optional[int] = None,
) -> float:
    """Change of the total log score when ``op`` is applied to ``current``.

    Only the families the operation touches are scored (one for an addition or
    deletion, two for a reversal), through the scorer's cache, plus the change of
    the graph prior.

    Raises
    ------
    ConstraintError
        If the operation is illegal (cyclic result or too many parents).
    """
    prior = prior or GraphPrior()
    op.check_legal(current.dag, max_parents)
    delta = 0.0
    for node, pa in op.family_changes(current.dag):
        delta += scorer.log_ml(node, pa) - current.family(node).log_ml
    return delta + prior.log_prior_delta(op.edge_change)


def random_dag(p: int, max_parents: int, rng: np.random.Generator) -> Dag:
    """Sparse random starting graph.

    Every ordered pair is drawn with probability min(0.5, 2 / p); edges pointing
    backwards in a random node order are dropped and surplus parents are thinned
    at random.
    """
    prob = min(0.5, 2.0 / p)
    draw = rng.random((p, p)) < prob
    np.fill_diagonal(draw, False)
    position = np.argsort(rng.permutation(p))
    edges = []
    for v in range(p):
        pa = [u for u in range(p) if draw[u, v] and position[u] < position[v]]
        if len(pa) > max_parents:
            pa = sorted(rng.choice(pa, size=max_parents, replace=False).tolist())
        edges.extend((u, v) for u in pa)
    return Dag(p, edges)


class _Climber:
    """Hill-climbing state of one restart.

    add[x, w] holds the family change of node w when x becomes a parent and
    dele[x, w] the change when parent x is dropped, so every candidate move is
    scored from two table entries. Only the columns of nodes whose parent set
    changed are refreshed after a move.
    """

    def __init__(
        self,
        scorer: FamilyScorer,
        prior: GraphPrior,
        max_parents: int,
        start: Dag,
        logger: logging.Logger,
    ):
        self.scorer = scorer
        self.prior = prior
        self.max_parents = max_parents
        self.logger = logger
        self.p = p = scorer.p
        self.graph = start.to_networkx()
        self.pa = [set(start.parent_tuple(v)) for v in range(p)]
        self.E = np.zeros((p, p), dtype=bool)
        for u, v in start.edges:
            self.E[u, v] = True
        self.fam = np.empty(p)
        self.add = np.full((p, p), -np.inf)
        self.dele = np.full((p, p), -np.inf)
        for w in range(p):
            self.refresh(w)

    def refresh(self, w: int) -> None:
        pa = self.pa[w]
        self.fam[w] = self.scorer.log_ml(w, tuple(sorted(pa)))
        self.add[:, w] = -np.inf
        self.dele[:, w] = -np.inf
        for x in range(self.p):
            if x == w:
                continue
            if x in pa:
                new = tuple(sorted(pa - {x}))
                self.dele[x, w] = self.scorer.log_ml(w, new) - self.fam[w]
            elif len(pa) < self.max_parents:
                new = tuple(sorted(pa | {x}))
                self.add[x, w] = self.scorer.log_ml(w, new) - self.fam[w]

    def candidates(self) -> Tuple[np.ndarray, ...]:
        E = self.E
        deltas = {
            OperationKind.add: self.add + self.prior.log_prior_delta(1),
            OperationKind.delete: self.dele + self.prior.log_prior_delta(-1),
            OperationKind.reverse: self.dele + self.add.T,
        }
        masks = {
            OperationKind.add: ~E & ~E.T & np.isfinite(self.add),
            OperationKind.delete: E,
            OperationKind.reverse: E & np.isfinite(self.add.T),
        }
        d_all, k_all, u_all, v_all = [], [], [], []
        for kind, d in deltas.items():
            u, v = np.nonzero(masks[kind] & (d > MIN_IMPROVEMENT))
            d_all.append(d[u, v])
            k_all.append(np.full(u.size, kind.value))
            u_all.append(u)
            v_all.append(v)
        d = np.concatenate(d_all)
        k = np.concatenate(k_all)
        u = np.concatenate(u_all)
        v = np.concatenate(v_all)
        # largest delta first; ties by (operation, source, target)
        order = np.lexsort((v, u, k, -d))
        return d[order], k[order], u[order], v[order]

    def is_legal(self, kind: OperationKind, u: int, v: int) -> bool:
        if kind == OperationKind.add:
            return not nx.has_path(self.graph, v, u)
        if kind == OperationKind.delete:
            return True
        self.graph.remove_edge(u, v)
        legal = not nx.has_path(self.graph, u, v)
        self.graph.add_edge(u, v)
        return legal

    def best_move(self) -> Optional[Tuple[EdgeOperation, float]]:
        for d, k, u, v in zip(*self.candidates()):
            kind = OperationKind(int(k))
            if self.is_legal(kind, int(u), int(v)):
                return EdgeOperation(kind=kind, source=int(u), target=int(v)), float(d)
        return None

    def apply(self, op: EdgeOperation) -> None:
        u, v = op.source, op.target
        if op.kind == OperationKind.add:
            self.graph.add_edge(u, v)
            self.E[u, v] = True
            self.pa[v].add(u)
            self.refresh(v)
        elif op.kind == OperationKind.delete:
            self.graph.remove_edge(u, v)
            self.E[u, v] = False
            self.pa[v].discard(u)
            self.refresh(v)
        else:
            self.graph.remove_edge(u, v)
            self.graph.add_edge(v, u)
            self.E[u, v] = False
            self.E[v, u] = True
            self.pa[v].discard(u)
            self.pa[u].add(v)
            self.refresh(u)
            self.refresh(v)

    def dag(self) -> Dag:
        return Dag(self.p, self.graph.edges())


def climb(
    scorer: FamilyScorer,
    prior: GraphPrior,
    cfg: SearchConfig,
    start: Dag,
    logger: Optional[logging.Logger] = None,
) -> Tuple[ScoredNetwork, int]:
    """Run one best-improvement climb from ``start``.

    Returns
    -------
    Tuple[ScoredNetwork, int]
        The local optimum and the number of accepted moves.
    """
    logger = logger or _logger
    state = _Climber(scorer, prior, cfg.max_parents, start, logger)
    total = float(np.sum(state.fam)) + prior.log_prior(start.n_edges)
    iterations = 0
    while iterations < cfg.max_iterations:
        move = state.best_move()
        if move is None:
            break
        op, delta = move
        state.apply(op)
        total += delta
        iterations += 1
        logger.debug(
            f"move {iterations}: {op.kind.name} {op.source}->{op.target} "
            f"delta={delta:.6g} total={total:.6f}"
        )
    return scorer.score(state.dag(), prior), iterations


def _check_config(scorer: FamilyScorer, cfg: SearchConfig) -> None:
    if cfg.max_parents >= scorer.n_effective:
        raise ConstraintError(
            f"max_parents={cfg.max_parents} must be smaller than the "
            f"{scorer.n_effective} effective samples of the "
            f"{scorer.metric.kind.value} metric."
        )


def search(
    scorer: FamilyScorer,
    prior: GraphPrior,
    cfg: SearchConfig,
    logger: Optional[logging.Logger] = None,
) -> ScoredNetwork:
    """Hill climbing with restarts on an existing scorer (and its cache).

    Restart 0 starts from ``cfg.init``, restarts 1..``cfg.restarts`` from random
    graphs; restart r draws from the generator seeded with ``cfg.seed + r``. The
    best network wins, ties going to the lowest restart index.
    """
    logger = logger or _logger
    _check_config(scorer, cfg)
    p = scorer.p

    def run(r: int) -> Tuple[ScoredNetwork, int]:
        rng = np.random.default_rng(cfg.seed + r)
        if r == 0 and cfg.init == InitKind.empty:
            start = Dag(p)
        else:
            start = random_dag(p, cfg.max_parents, rng)
        return climb(scorer, prior, cfg, start, logger)

    indices = list(range(cfg.restarts + 1))
    workers = min(worker_count(cfg.threads), len(indices))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, indices))
    else:
        results = [run(r) for r in indices]

    best = None
    for r, (net, iterations) in enumerate(results):
        logger.debug(
            f"restart {r}: {iterations} moves, {net.dag.n_edges} edges, "
            f"total={net.total_log_score:.6f}"
        )
        if best is None or net.total_log_score > best.total_log_score:
            best = net
    logger.info(
        f"Best network has {best.dag.n_edges} edges, total log score "
        f"{best.total_log_score:.6f} ({len(scorer.cache)} families scored, "
        f"{scorer.cache.hits} cache hits)."
    )
    return best


def hill_climb(
    data: Dataset,
    metric: MetricSpec,
    hp: Optional[Hyperparams] = None,
    prior: Optional[GraphPrior] = None,
    cfg: Optional[SearchConfig] = None,
    logger: Optional[logging.Logger] = None,
) -> ScoredNetwork:
    """Find a high-scoring graph by greedy hill climbing with restarts.

    Parameters
    ----------
    data : Dataset
        The raw data.
    metric : MetricSpec
        The score metric.
    hp : Hyperparams, optional
        Prior hyperparameters, by default tau=1, delta=2, upsilon=1.
    prior : GraphPrior, optional
        Graph prior, by default uniform.
    cfg : SearchConfig, optional
        Search settings, by default 4 parents at most and 10 restarts.
    logger : logging.Logger, optional
        A logger object.

    Returns
    -------
    ScoredNetwork
        The best network over all restarts. Identical inputs give an identical
        edge set and a bit-identical total.
    """
    scorer = FamilyScorer(data, metric, hp or Hyperparams(), logger=logger)
    return search(scorer, prior or GraphPrior(), cfg or SearchConfig(), logger)


def enumerate_dags(p: int) -> List[FrozenSet[Tuple[int, int]]]:
    """All directed acyclic graphs on ``p`` labelled nodes, each exactly once."""
    if p < 1:
        raise ConstraintError(f"Need at least one node, got p={p}.")
    if p > MAX_ENUMERATION_NODES:
        raise ConstraintError(
            f"Enumeration is limited to {MAX_ENUMERATION_NODES} nodes, got p={p}."
        )
    pairs = list(itertools.combinations(range(p), 2))
    dags = []
    # each unordered pair is absent, forward or backward
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        edges = []
        for (a, b), state in zip(pairs, states):
            if state == 1:
                edges.append((a, b))
            elif state == 2:
                edges.append((b, a))
        if is_acyclic(edges, p):
            dags.append(frozenset(edges))
    return dags


def exhaustive_search(
    scorer: FamilyScorer,
    prior: Optional[GraphPrior] = None,
    max_parents: Optional[int] = None,
) -> ScoredNetwork:
    """Score every graph on the scorer's nodes and return the best one."""
    prior = prior or GraphPrior()
    best = None
    for edges in enumerate_dags(scorer.p):
        dag = Dag(scorer.p, edges)
        if max_parents is not None and any(
            len(dag.parent_tuple(v)) > max_parents for v in range(dag.p)
        ):
            continue
        net = scorer.score(dag, prior)
        if best is None or net.total_log_score > best.total_log_score:
            best = net
    return best
