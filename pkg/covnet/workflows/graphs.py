"""Graph post-processing: moral graphs, Markov equivalence, edge accuracy and DOT."""
import re
from typing import FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

import networkx as nx
from pydantic import BaseModel, ConfigDict

from covnet.validation import ConstraintError, DataFormatError, check_node
from covnet.workflows.model import Dag

__all__ = [
    "EdgeAccuracy",
    "UndirectedGraph",
    "edge_accuracy",
    "markov_equivalent",
    "moralize",
    "parse_dot",
    "skeleton",
    "to_dot",
    "v_structures",
]

Pair = Tuple[int, int]


def _canonical(u: int, v: int) -> Pair:
    return (u, v) if u < v else (v, u)


class UndirectedGraph:
    """An undirected simple graph on nodes 0, ..., p - 1.

    Edges are stored as (low, high) pairs.
    """

    def __init__(self, p: int, edges: Iterable[Pair] = ()):
        if p < 1:
            raise ConstraintError(f"A graph needs at least one node, got p={p}.")
        pairs = set()
        for u, v in edges:
            u, v = int(u), int(v)
            check_node(u, p)
            check_node(v, p)
            if u == v:
                raise ConstraintError(f"Self-loop on node {u} is not allowed.")
            pairs.add(_canonical(u, v))
        self._p = p
        self._edges: FrozenSet[Pair] = frozenset(pairs)

    @property
    def p(self) -> int:
        return self._p

    @property
    def edges(self) -> FrozenSet[Pair]:
        return self._edges

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def sorted_edges(self) -> List[Pair]:
        return sorted(self._edges)

    def has_edge(self, u: int, v: int) -> bool:
        return _canonical(u, v) in self._edges

    def neighbours(self, v: int) -> List[int]:
        check_node(v, self._p)
        return sorted({b if a == v else a for a, b in self._edges if v in (a, b)})

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self._p))
        g.add_edges_from(self.sorted_edges())
        return g

    @classmethod
    def from_networkx(cls, g: nx.Graph, p: Optional[int] = None) -> "UndirectedGraph":
        return cls(p if p is not None else g.number_of_nodes(), g.edges())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, UndirectedGraph)
            and self._p == other._p
            and self._edges == other._edges
        )

    def __hash__(self) -> int:
        return hash((self._p, self._edges))

    def __repr__(self) -> str:
        return f"UndirectedGraph(p={self._p}, edges={self.sorted_edges()})"


def skeleton(dag: Dag) -> UndirectedGraph:
    """The graph with every directed edge replaced by an undirected one."""
    return UndirectedGraph(dag.p, dag.edges)


def moralize(dag: Dag) -> UndirectedGraph:
    """Moral graph: the skeleton plus an edge between every two parents of a common child."""
    return UndirectedGraph.from_networkx(nx.moral_graph(dag.to_networkx()), dag.p)


def v_structures(dag: Dag) -> Set[Tuple[int, int, int]]:
    """Unshielded colliders as (a, c, b) triples with a < b, for a -> c <- b."""
    found = set()
    for c in range(dag.p):
        pa = dag.parent_tuple(c)
        for i, a in enumerate(pa):
            for b in pa[i + 1 :]:
                if not dag.has_edge(a, b) and not dag.has_edge(b, a):
                    found.add((a, c, b))
    return found


def _check_same_size(a, b) -> None:
    if a.p != b.p:
        raise ConstraintError(
            f"The graphs have different node counts ({a.p} and {b.p})."
        )


def markov_equivalent(a: Dag, b: Dag) -> bool:
    """True if both graphs have the same skeleton and the same v-structures."""
    _check_same_size(a, b)
    return skeleton(a) == skeleton(b) and v_structures(a) == v_structures(b)


class EdgeAccuracy(BaseModel):
    model_config = ConfigDict(frozen=True)

    correct: int
    spurious: int
    missing: int


def edge_accuracy(estimated: Dag, truth: Dag, directed: bool = False) -> EdgeAccuracy:
    """Count correct, spurious and missing edges of an estimate against the truth.

    Parameters
    ----------
    estimated : Dag
        The learned graph.
    truth : Dag
        The true graph.
    directed : bool, optional
        Compare directed edges instead of skeletons, by default False. With the
        skeleton comparison a reversed edge counts as correct.

    Returns
    -------
    EdgeAccuracy
        correct + missing equals the true edge count, correct + spurious the
        estimated edge count.
    """
    _check_same_size(estimated, truth)
    if directed:
        est, true = set(estimated.edges), set(truth.edges)
    else:
        est, true = set(skeleton(estimated).edges), set(skeleton(truth).edges)
    return EdgeAccuracy(
        correct=len(est & true), spurious=len(est - true), missing=len(true - est)
    )


def _quote(name: str) -> str:
    if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*|-?[0-9]+(\.[0-9]+)?", name):
        return name
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(
    graph: Union[Dag, UndirectedGraph],
    names: Optional[Sequence[str]] = None,
    title: str = "covnet",
) -> str:
    """GraphViz DOT source of a graph.

    Directed graphs become a ``digraph`` with ``->`` edges, undirected graphs a
    ``graph`` with ``--`` edges. Nodes are declared in id order, edges sorted by
    id pair, lines indented by two spaces and terminated by LF.
    """
    if names is None:
        names = [str(i + 1) for i in range(graph.p)]
    names = [str(name) for name in names]
    if len(names) != graph.p:
        raise ConstraintError(f"Got {len(names)} names for a graph with {graph.p} nodes.")
    if isinstance(graph, Dag):
        kind, arrow = "digraph", "->"
    else:
        kind, arrow = "graph", "--"
    lines = [f"{kind} {_quote(title)} {{"]
    lines.extend(f"  {_quote(name)};" for name in names)
    for u, v in graph.sorted_edges():
        lines.append(f"  {_quote(names[u])} {arrow} {_quote(names[v])};")
    lines.append("}")
    return "\n".join(lines) + "\n"


_NODE = r'("(?:[^"\\]|\\.)*"|[^\s;]+)'
_EDGE_LINE = re.compile(rf"^\s*{_NODE}\s*(->|--)\s*{_NODE}\s*;?\s*$")


def _unquote(token: str) -> str:
    if token.startswith('"') and token.endswith('"'):
        return token[1:-1].replace('\\"', '"').replace("\\\\", "\\")
    return token


def parse_dot(text: str, names: Sequence[str]) -> Union[Dag, UndirectedGraph]:
    """Read back the edge set of DOT text written by ``to_dot``."""
    header = text.lstrip().split(None, 1)[0] if text.strip() else ""
    if header not in ("digraph", "graph"):
        raise DataFormatError("DOT text should start with 'digraph' or 'graph'.")
    lookup = {str(name): i for i, name in enumerate(names)}
    edges = []
    for line in text.splitlines():
        match = _EDGE_LINE.match(line)
        if match is None:
            continue
        a, b = _unquote(match.group(1)), _unquote(match.group(3))
        if a not in lookup or b not in lookup:
            raise DataFormatError(f"Unknown node in DOT edge line '{line.strip()}'.")
        edges.append((lookup[a], lookup[b]))
    if header == "digraph":
        return Dag(len(names), edges)
    return UndirectedGraph(len(names), edges)
