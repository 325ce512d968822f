"""Core data types: datasets, covariates, graphs and metric selection."""
import logging
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd
from scipy import linalg

from covnet.api.data_types import MetricKind
from covnet.validation import (
    ConstraintError,
    DataFormatError,
    check_finite,
    check_node,
    check_rows_match,
    check_uniqueness,
)

__all__ = [
    "CovariateMatrix",
    "Dag",
    "Dataset",
    "MetricSpec",
    "RANK_TOL",
    "is_acyclic",
    "matrix_rank",
    "parents",
]

_logger = logging.getLogger(__name__)

RANK_TOL = 1e-10

Edge = Tuple[int, int]


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


class Dataset:
    def __init__(self, values: np.ndarray, names: Optional[Sequence[str]] = None):
        """An n x p matrix of observations, one column per variable.

        Parameters
        ----------
        values : np.ndarray
            The observations, rows are samples and columns are variables.
        names : Sequence[str], optional
            The variable names. Defaults to "1", ..., "p" to match the 1-indexed
            node numbering used in all user facing output.
        """
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise DataFormatError(
                f"The data should be a two-dimensional matrix, got {values.ndim} dimensions."
            )
        n, p = values.shape
        if n < 1 or p < 1:
            raise DataFormatError("The data should have at least one sample and one variable.")
        check_finite(values, "data")
        if names is None:
            names = [str(i + 1) for i in range(p)]
        names = [str(name) for name in names]
        if len(names) != p:
            raise DataFormatError(
                f"Got {len(names)} variable names for {p} data columns."
            )
        check_uniqueness(names)

        self.values = _frozen(values)
        self.names = names

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def centered(self) -> "Dataset":
        """Return a copy with every column centred on its mean."""
        return Dataset(self.values - self.values.mean(axis=0), self.names)

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "Dataset":
        try:
            values = df.to_numpy(dtype=float)
        except (TypeError, ValueError) as e:
            raise DataFormatError(f"The data contains non-numeric cells: {e}") from e
        return cls(values, [str(c) for c in df.columns])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(np.array(self.values), columns=self.names)

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, p={self.p})"


class CovariateMatrix:
    def __init__(self, values: np.ndarray, names: Optional[Sequence[str]] = None):
        """The n x m matrix of exogenous variables; must have full column rank.

        Parameters
        ----------
        values : np.ndarray
            The covariate values, rows aligned with the data samples.
        names : Sequence[str], optional
            The covariate names, by default "q1", ..., "qm".
        """
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DataFormatError("The covariates should be a two-dimensional matrix.")
        check_finite(values, "covariate matrix")
        n, m = values.shape
        if m < 1:
            raise DataFormatError("The covariate matrix should have at least one column.")
        if m >= n:
            raise ConstraintError(
                f"The number of covariates ({m}) should be smaller than the number of "
                f"samples ({n})."
            )
        rank = matrix_rank(values)
        if rank < m:
            raise ConstraintError(
                f"The covariate matrix is rank deficient (rank {rank} < {m} columns)."
            )
        if names is None:
            names = [f"q{j + 1}" for j in range(m)]
        names = [str(name) for name in names]
        if len(names) != m:
            raise DataFormatError(f"Got {len(names)} covariate names for {m} columns.")
        check_uniqueness(names, what="covariate")

        self.values = _frozen(values)
        self.names = names

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def has_intercept(self, tol: float = 1e-8) -> bool:
        """Whether the constant vector lies in the column space of the covariates."""
        ones = np.ones(self.n)
        coef, *_ = linalg.lstsq(self.values, ones)
        resid = ones - self.values @ coef
        return bool(np.linalg.norm(resid) < tol * np.sqrt(self.n))

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "CovariateMatrix":
        try:
            values = df.to_numpy(dtype=float)
        except (TypeError, ValueError) as e:
            raise DataFormatError(
                f"The covariates contain non-numeric cells: {e}"
            ) from e
        return cls(values, [str(c) for c in df.columns])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(np.array(self.values), columns=self.names)

    def __repr__(self) -> str:
        return f"CovariateMatrix(n={self.n}, m={self.m})"


def matrix_rank(values: np.ndarray, rtol: float = RANK_TOL) -> int:
    """Numerical rank from a column-pivoted QR factorization.

    Diagonal entries of R below ``rtol`` times the largest singular value count
    as zero.
    """
    if values.size == 0:
        return 0
    smax = np.linalg.norm(values, 2)
    if smax == 0:
        return 0
    _, r, _ = linalg.qr(values, mode="economic", pivoting=True)
    return int(np.sum(np.abs(np.diag(r)) > rtol * smax))


def is_acyclic(edges: Iterable[Edge], p: int) -> bool:
    """Return True if the directed graph on ``p`` nodes admits a topological order."""
    g = nx.DiGraph()
    g.add_nodes_from(range(p))
    g.add_edges_from(edges)
    return nx.is_directed_acyclic_graph(g)


class Dag:
    """An immutable directed acyclic graph on nodes 0, ..., p - 1."""

    def __init__(self, p: int, edges: Iterable[Edge] = ()):
        if p < 1:
            raise ConstraintError(f"A graph needs at least one node, got p={p}.")
        edges = [(int(u), int(v)) for u, v in edges]
        for u, v in edges:
            check_node(u, p)
            check_node(v, p)
            if u == v:
                raise ConstraintError(f"Self-loop on node {u} is not allowed.")
        edge_set = frozenset(edges)
        if len(edge_set) != len(edges):
            raise ConstraintError("The edge list contains duplicate edges.")
        if not is_acyclic(edge_set, p):
            raise ConstraintError("The edge set contains a directed cycle.")

        self._p = p
        self._edges: FrozenSet[Edge] = edge_set
        parents: List[List[int]] = [[] for _ in range(p)]
        for u, v in edge_set:
            parents[v].append(u)
        self._parents = tuple(tuple(sorted(pa)) for pa in parents)

    @property
    def p(self) -> int:
        return self._p

    @property
    def edges(self) -> FrozenSet[Edge]:
        return self._edges

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def sorted_edges(self) -> List[Edge]:
        return sorted(self._edges)

    def parents(self, v: int) -> List[int]:
        check_node(v, self._p)
        return list(self._parents[v])

    def parent_tuple(self, v: int) -> Tuple[int, ...]:
        return self._parents[v]

    def children(self, v: int) -> List[int]:
        check_node(v, self._p)
        return sorted(w for u, w in self._edges if u == v)

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self._edges

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self._p))
        g.add_edges_from(self.sorted_edges())
        return g

    def topological_order(self) -> List[int]:
        return list(nx.lexicographical_topological_sort(self.to_networkx()))

    def add_edge(self, u: int, v: int) -> "Dag":
        if (u, v) in self._edges:
            raise ConstraintError(f"Edge {u}->{v} already present.")
        return Dag(self._p, self._edges | {(u, v)})

    def remove_edge(self, u: int, v: int) -> "Dag":
        if (u, v) not in self._edges:
            raise ConstraintError(f"Edge {u}->{v} not present.")
        return Dag(self._p, self._edges - {(u, v)})

    def reverse_edge(self, u: int, v: int) -> "Dag":
        if (u, v) not in self._edges:
            raise ConstraintError(f"Edge {u}->{v} not present.")
        return Dag(self._p, (self._edges - {(u, v)}) | {(v, u)})

    @classmethod
    def from_edge_list(
        cls,
        pairs: Iterable[Tuple[Union[int, str], Union[int, str]]],
        p: int,
        names: Optional[Sequence[str]] = None,
        one_indexed: bool = True,
    ) -> "Dag":
        """Build a graph from (from, to) pairs given as variable names or ids.

        Names are looked up first; anything else is read as an integer id,
        1-indexed unless ``one_indexed`` is False.
        """
        lookup = {name: i for i, name in enumerate(names)} if names else {}
        offset = 1 if one_indexed else 0
        edges = []
        for a, b in pairs:
            edges.append((_node_id(a, lookup, offset, p), _node_id(b, lookup, offset, p)))
        return cls(p, edges)

    def to_frame(
        self, names: Optional[Sequence[str]] = None, one_indexed: bool = True
    ) -> pd.DataFrame:
        if names is None:
            offset = 1 if one_indexed else 0
            rows = [(u + offset, v + offset) for u, v in self.sorted_edges()]
        else:
            rows = [(names[u], names[v]) for u, v in self.sorted_edges()]
        return pd.DataFrame(rows, columns=["from", "to"])

    def __eq__(self, other) -> bool:
        return isinstance(other, Dag) and self._p == other._p and self._edges == other._edges

    def __hash__(self) -> int:
        return hash((self._p, self._edges))

    def __repr__(self) -> str:
        return f"Dag(p={self._p}, edges={self.sorted_edges()})"


def _node_id(token, lookup: dict, offset: int, p: int) -> int:
    key = str(token).strip()
    if key in lookup:
        return lookup[key]
    try:
        v = int(key) - offset
    except ValueError:
        raise DataFormatError(f"Unknown node '{token}' in edge list.") from None
    if not 0 <= v < p:
        raise DataFormatError(
            f"Node id {key} in edge list is out of range for {p} variables "
            f"(ids run from {offset} to {p - 1 + offset})."
        )
    return v


def parents(dag: Dag, v: int) -> List[int]:
    """Sorted parents of node ``v``."""
    return dag.parents(v)


class MetricSpec:
    def __init__(
        self,
        kind: Union[MetricKind, str] = MetricKind.bge,
        covariates: Optional[CovariateMatrix] = None,
        center: bool = True,
    ):
        """Selection of the score metric.

        Parameters
        ----------
        kind : MetricKind
            One of bge, bgecm or residual.
        covariates : CovariateMatrix, optional
            Required for bgecm and residual, must be None for bge.
        center : bool, optional
            Centre the data columns before scoring with bge, by default True.
        """
        kind = MetricKind(kind)
        if kind == MetricKind.bge and covariates is not None:
            raise ConstraintError("The bge metric does not take covariates.")
        if kind != MetricKind.bge and covariates is None:
            raise ConstraintError(f"The {kind.value} metric requires covariates.")
        self.kind = kind
        self.covariates = covariates
        self.center = center

    def check_dataset(self, data: Dataset) -> None:
        if self.covariates is not None:
            check_rows_match(data.n, self.covariates.n)

    def effective_samples(self, n: int) -> int:
        if self.kind == MetricKind.residual:
            return n - self.covariates.m
        return n

    def __repr__(self) -> str:
        return f"MetricSpec(kind={self.kind.value}, covariates={self.covariates!r})"
