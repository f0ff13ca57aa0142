"""
Synthetic input -> target graph pairs.

Scale-free pairs grow a directed preferential-attachment graph (three moves:
new node with an out-edge, new edge between existing nodes with probability
beta, new node with an in-edge) and build the target by continuing the
existing-node move for |E(input)| more edges.

Poisson pairs start from a Barabasi-Albert tree oriented from newer to older
node and add k * |E| uniformly random non-edges, k ~ Poisson(lambda).
"""
import logging

import networkx as nx
import numpy as np
from tqdm import tqdm

from data.dataset import KINDS, TEST, TRAIN, Dataset, GraphPair
from data.graph import DirectedGraph
from utils.utils import derive_seeds

logger = logging.getLogger(__name__)

# networkx scale_free_graph defaults for the attachment offsets
DELTA_IN = 0.2
DELTA_OUT = 0.0


class _PreferentialGrowth(object):
    """Mutable state of the directed preferential-attachment process."""

    def __init__(self, capacity, rng):
        self.adjacency = np.zeros((capacity, capacity), dtype=bool)
        self.in_degree = np.zeros(capacity)
        self.out_degree = np.zeros(capacity)
        self.size = 0
        self.edges = 0
        self.rng = rng

    def add_node(self):
        self.size += 1
        return self.size - 1

    def add_edge(self, source, target):
        self.adjacency[source, target] = True
        self.out_degree[source] += 1
        self.in_degree[target] += 1
        self.edges += 1

    def full(self):
        return self.edges >= self.size * (self.size - 1)

    def _choose(self, degrees, delta):
        weights = degrees[:self.size] + delta
        total = weights.sum()
        if total <= 0:
            return int(self.rng.integers(self.size))
        return int(self.rng.choice(self.size, p=weights / total))

    def by_in_degree(self):
        return self._choose(self.in_degree, DELTA_IN)

    def by_out_degree(self):
        return self._choose(self.out_degree, DELTA_OUT)

    def try_existing_edge(self):
        source, target = self.by_out_degree(), self.by_in_degree()
        if source == target or self.adjacency[source, target]:
            return False
        self.add_edge(source, target)
        return True

    def add_random_non_edge(self):
        free = ~self.adjacency[:self.size, :self.size] & ~np.eye(self.size, dtype=bool)
        candidates = np.flatnonzero(free)
        pick = int(self.rng.choice(candidates))
        self.add_edge(pick // self.size, pick % self.size)

    def graph(self):
        return DirectedGraph(self.adjacency[:self.size, :self.size].astype(np.float64))


def gen_scale_free_pair(n, beta=0.54, seed=0, alpha=None, gamma=None):
    if n < 3:
        raise ValueError("scale-free growth needs n >= 3, got %d" % n)
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1), got %r" % beta)
    if alpha is None and gamma is None:
        alpha = gamma = (1.0 - beta) / 2.0
    elif alpha is None or gamma is None:
        raise ValueError("alpha and gamma must be given together")
    if abs(alpha + beta + gamma - 1.0) > 1e-9 or alpha < 0 or gamma < 0:
        raise ValueError("move probabilities must be nonnegative and sum to 1")

    rng = np.random.default_rng(seed)
    growth = _PreferentialGrowth(n, rng)
    # seed graph: directed 3-cycle
    for _ in range(3):
        growth.add_node()
    for source, target in ((0, 1), (1, 2), (2, 0)):
        growth.add_edge(source, target)

    while growth.size < n:
        r = rng.random()
        if r < alpha:
            target = growth.by_in_degree()
            growth.add_edge(growth.add_node(), target)
        elif r < alpha + beta:
            if not growth.full():
                growth.try_existing_edge()
        else:
            source = growth.by_out_degree()
            growth.add_edge(source, growth.add_node())
    input_graph = growth.graph()

    wanted = min(growth.edges, n * (n - 1) - growth.edges)
    added, attempts = 0, 0
    while added < wanted:
        if attempts < 100 * wanted:
            attempts += 1
            if growth.try_existing_edge():
                added += 1
        else:
            # preference mass is concentrated on saturated nodes; finish uniformly
            growth.add_random_non_edge()
            added += 1
    meta = {'seed': int(seed), 'beta': float(beta), 'added': int(added)}
    return GraphPair(input_graph, growth.graph(), meta)


def _barabasi_albert_input(n, seed):
    tree = nx.barabasi_albert_graph(n, 1, seed=seed)
    weights = np.zeros((n, n))
    for u, v in tree.edges():
        # orient from the newer node to the older one
        weights[max(u, v), min(u, v)] = 1.0
    return weights


def gen_poisson_pair(n, lam=5.0, seed=0):
    if n < 3:
        raise ValueError("Poisson pairs need n >= 3, got %d" % n)
    if lam <= 0:
        raise ValueError("lambda must be positive, got %r" % lam)
    rng = np.random.default_rng(seed)
    weights = _barabasi_albert_input(n, int(rng.integers(2 ** 31)))
    edges = int(np.count_nonzero(weights))
    k = int(rng.poisson(lam))

    requested = k * edges
    free = np.flatnonzero((weights == 0) & ~np.eye(n, dtype=bool))
    added = min(requested, free.size)
    target = weights.copy()
    if added:
        chosen = rng.choice(free, size=added, replace=False)
        target.flat[chosen] = 1.0
    meta = {'seed': int(seed), 'k': k, 'added': int(added), 'capped': bool(added < requested)}
    return GraphPair(DirectedGraph(weights), DirectedGraph(target), meta)


def make_dataset(kind, n, count, train_fraction, seed, beta=0.54, lam=5.0):
    if kind not in ('scale_free', 'poisson'):
        raise ValueError("unknown dataset kind %r (generated kinds: scale_free, poisson; %s)"
                         % (kind, ', '.join(KINDS)))
    if count < 2:
        raise ValueError("a dataset needs at least two pairs")
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")

    pair_seeds = derive_seeds(seed, count)
    pairs = []
    for index, pair_seed in enumerate(tqdm(pair_seeds, desc="[%s n=%d]" % (kind, n), leave=False)):
        if kind == 'scale_free':
            pair = gen_scale_free_pair(n, beta=beta, seed=pair_seed)
        else:
            pair = gen_poisson_pair(n, lam=lam, seed=pair_seed)
        pairs.append(GraphPair(pair.input, pair.target, pair.meta, str(index)))

    order = np.random.default_rng(seed).permutation(count)
    n_train = int(np.floor(count * train_fraction))
    splits = [TEST] * count
    for index in order[:n_train]:
        splits[index] = TRAIN
    logger.info("generated %d %s pairs (n=%d, %d train / %d test)",
                count, kind, n, n_train, count - n_train)
    return Dataset(pairs, splits, kind)
