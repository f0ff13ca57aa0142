"""
Directed weighted graphs and the scalar statistics used by evaluation.

A graph is a dense N x N matrix of nonnegative weights; row i, column j holds
the weight of edge i -> j and an edge exists iff its weight is positive.
Structural statistics (degrees, density, reciprocity) are computed on the
binarized view.
"""
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np


class UndefinedMetricError(ValueError):
    """Raised when a statistic has no defined value for the given graph."""


@dataclass(frozen=True)
class DirectedGraph:
    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64, copy=True)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
            raise ValueError("weights must be a square matrix, got shape %s" % (weights.shape,))
        if weights.shape[0] < 1:
            raise ValueError("graph needs at least one node")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        weights.setflags(write=False)
        object.__setattr__(self, 'weights', weights)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        """Boolean edge indicator."""
        return self.weights > 0

    def edges(self) -> List[Tuple[int, int, float]]:
        sources, targets = np.nonzero(self.weights)
        return [(int(i), int(j), float(self.weights[i, j])) for i, j in zip(sources, targets)]

    def __eq__(self, other):
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return self.weights.shape == other.weights.shape and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.n, self.weights.tobytes()))


@dataclass(frozen=True)
class DegreeDistribution:
    support: Tuple[int, ...]
    probabilities: Tuple[float, ...]

    def __post_init__(self):
        if len(self.support) != len(self.probabilities):
            raise ValueError("support and probabilities differ in length")
        if list(self.support) != sorted(set(self.support)):
            raise ValueError("support must be sorted and unique")
        if any(d < 0 for d in self.support):
            raise ValueError("degrees must be nonnegative")
        if any(p < 0 for p in self.probabilities):
            raise ValueError("probabilities must be nonnegative")
        if abs(sum(self.probabilities) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")

    @classmethod
    def from_degrees(cls, degrees: Iterable[int]) -> 'DegreeDistribution':
        degrees = np.asarray(list(degrees), dtype=np.int64)
        if degrees.size == 0:
            raise ValueError("cannot build a distribution from no degrees")
        counts = np.bincount(degrees)
        support = np.flatnonzero(counts)
        probabilities = counts[support] / degrees.size
        return cls(tuple(int(d) for d in support), tuple(float(p) for p in probabilities))

    def mean(self) -> float:
        return float(np.dot(self.support, self.probabilities))


def new_graph(n: int, edges: Sequence[Tuple[int, int, float]]) -> DirectedGraph:
    if n < 1:
        raise ValueError("node count must be positive, got %d" % n)
    weights = np.zeros((n, n), dtype=np.float64)
    seen = set()
    for source, target, weight in edges:
        if not (0 <= source < n and 0 <= target < n):
            raise ValueError("edge (%d, %d) out of range for n=%d" % (source, target, n))
        if weight < 0:
            raise ValueError("edge (%d, %d) has negative weight %r" % (source, target, weight))
        if (source, target) in seen:
            raise ValueError("duplicate edge (%d, %d)" % (source, target))
        seen.add((source, target))
        weights[source, target] = weight
    return DirectedGraph(weights)


def empty_graph(n: int) -> DirectedGraph:
    return DirectedGraph(np.zeros((n, n)))


def pad_graph(g: DirectedGraph, n: int) -> DirectedGraph:
    """Appends isolated nodes until the graph has n nodes."""
    if n < g.n:
        raise ValueError("cannot pad a %d-node graph down to %d nodes" % (g.n, n))
    weights = np.zeros((n, n))
    weights[:g.n, :g.n] = g.weights
    return DirectedGraph(weights)


def binarize(g: DirectedGraph, threshold: float) -> DirectedGraph:
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    return DirectedGraph((g.weights > threshold).astype(np.float64))


def edge_count(g: DirectedGraph) -> int:
    return int(np.count_nonzero(g.adjacency))


def density(g: DirectedGraph) -> float:
    if g.n < 2:
        raise ValueError("density needs at least two nodes")
    off_diagonal = g.adjacency & ~np.eye(g.n, dtype=bool)
    return float(np.count_nonzero(off_diagonal)) / (g.n * (g.n - 1))


def reciprocity(g: DirectedGraph) -> float:
    adjacency = g.adjacency
    edges = np.count_nonzero(adjacency)
    if edges == 0:
        raise UndefinedMetricError("reciprocity is undefined for an edgeless graph")
    return float(np.count_nonzero(adjacency & adjacency.T)) / edges


def total_degrees(g: DirectedGraph) -> np.ndarray:
    adjacency = g.adjacency
    return adjacency.sum(axis=0) + adjacency.sum(axis=1)


def average_degree(g: DirectedGraph) -> float:
    # Each directed edge adds one out-degree and one in-degree.
    return 2.0 * edge_count(g) / g.n


def degree_histogram(g: DirectedGraph) -> DegreeDistribution:
    return DegreeDistribution.from_degrees(total_degrees(g))
