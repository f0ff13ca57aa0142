import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional

import numpy as np
import torch
from torch.utils.data import Dataset as TorchDataset

from data.graph import DirectedGraph, new_graph
from utils.utils import DTYPE, atomic_write

TRAIN = 'train'
TEST = 'test'
SPLITS = (TRAIN, TEST)
KINDS = ('scale_free', 'poisson', 'auth')

logger = logging.getLogger(__name__)


class DatasetFormatError(ValueError):
    def __init__(self, lineno, message):
        super().__init__("line %d: %s" % (lineno, message))
        self.lineno = lineno


@dataclass(frozen=True)
class GraphPair:
    input: DirectedGraph
    target: DirectedGraph
    meta: Dict[str, Any] = field(default_factory=dict)
    pair_id: str = ''

    def __post_init__(self):
        if self.input.n != self.target.n:
            raise ValueError("input has %d nodes but target has %d" % (self.input.n, self.target.n))


@dataclass(frozen=True)
class Dataset:
    """Input/target pairs with a train/test assignment per pair."""
    pairs: List[GraphPair]
    splits: List[str]
    kind: Optional[str] = None

    def __post_init__(self):
        if len(self.pairs) != len(self.splits):
            raise ValueError("%d pairs but %d split labels" % (len(self.pairs), len(self.splits)))
        unknown = set(self.splits) - set(SPLITS)
        if unknown:
            raise ValueError("unknown split labels %s" % sorted(unknown))
        if self.kind is not None and self.kind not in KINDS:
            raise ValueError("unknown dataset kind %r (valid: %s)" % (self.kind, ', '.join(KINDS)))
        sizes = {pair.input.n for pair in self.pairs}
        if len(sizes) > 1:
            raise ValueError("pairs have mixed node counts %s" % sorted(sizes))

    def __len__(self):
        return len(self.pairs)

    @property
    def n(self) -> Optional[int]:
        return self.pairs[0].input.n if self.pairs else None

    def part(self, split) -> List[GraphPair]:
        return [pair for pair, label in zip(self.pairs, self.splits) if label == split]

    def train_pairs(self) -> List[GraphPair]:
        return self.part(TRAIN)

    def test_pairs(self) -> List[GraphPair]:
        return self.part(TEST)

    def subset(self, split) -> 'Dataset':
        pairs = self.part(split)
        return Dataset(pairs, [split] * len(pairs), self.kind)

    def split_by_group(self, key, train_fraction, seed) -> 'Dataset':
        """Reassigns splits so every value of meta[key] lands wholly in train or test."""
        if not 0 < train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        groups = sorted({str(pair.meta.get(key)) for pair in self.pairs})
        if len(groups) < 2:
            raise ValueError("splitting by %r needs at least two groups, got %d" % (key, len(groups)))
        order = np.random.default_rng(seed).permutation(len(groups))
        # both sides keep at least one group
        n_train = min(len(groups) - 1, max(1, int(np.floor(len(groups) * train_fraction))))
        train_groups = {groups[i] for i in order[:n_train]}
        splits = [TRAIN if str(pair.meta.get(key)) in train_groups else TEST for pair in self.pairs]
        return replace(self, splits=splits)

    def cross_validation(self, folds, seed, key=None):
        """Yields one re-split Dataset per fold; fold i is the test part of the i-th dataset."""
        if folds < 2:
            raise ValueError("cross validation needs at least two folds")
        if key is None:
            units = [str(i) for i in range(len(self.pairs))]
            unit_of = units
        else:
            unit_of = [str(pair.meta.get(key)) for pair in self.pairs]
            units = sorted(set(unit_of))
        if len(units) < folds:
            raise ValueError("%d groups cannot fill %d folds" % (len(units), folds))
        order = np.random.default_rng(seed).permutation(len(units))
        fold_of = {units[u]: rank % folds for rank, u in enumerate(order)}
        for fold in range(folds):
            splits = [TEST if fold_of[unit] == fold else TRAIN for unit in unit_of]
            yield replace(self, splits=splits)


class GraphPairDataset(TorchDataset):
    """Exposes graph pairs to a torch DataLoader as double tensors."""

    def __init__(self, pairs):
        super().__init__()
        self.pairs = list(pairs)

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, index):
        pair = self.pairs[index]
        data = dict()
        data['inputs'] = torch.from_numpy(np.array(pair.input.weights)).to(DTYPE)
        data['targets'] = torch.from_numpy(np.array(pair.target.weights)).to(DTYPE)
        data['index'] = index
        return data


def _edge_list(g):
    return [[i, j, w] for i, j, w in g.edges()]


def write_dataset(ds, path):
    with atomic_write(path) as handle:
        for index, (pair, split) in enumerate(zip(ds.pairs, ds.splits)):
            record = {
                'id': pair.pair_id or str(index),
                'n': pair.input.n,
                'split': split,
                'kind': ds.kind,
                'x_edges': _edge_list(pair.input),
                'y_edges': _edge_list(pair.target),
                'meta': pair.meta,
            }
            handle.write(json.dumps(record) + '\n')
    logger.info("wrote %d pairs to %s", len(ds), path)


def _parse_edges(n, edges, lineno, name):
    try:
        return new_graph(n, [(int(i), int(j), float(w)) for i, j, w in edges])
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(lineno, "%s: %s" % (name, exc)) from exc


def read_dataset(path):
    pairs, splits, kinds = [], [], set()
    n = None
    with open(path, encoding='utf-8') as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(lineno, "invalid JSON (%s)" % exc.msg) from exc
            if not isinstance(record, dict):
                raise DatasetFormatError(lineno, "expected a JSON object")
            missing = {'id', 'n', 'split', 'x_edges', 'y_edges'} - set(record)
            if missing:
                raise DatasetFormatError(lineno, "missing fields %s" % sorted(missing))
            if n is None:
                n = record['n']
            elif record['n'] != n:
                raise DatasetFormatError(lineno, "n=%r differs from earlier lines (n=%r)" % (record['n'], n))
            if not isinstance(n, int) or n < 1:
                raise DatasetFormatError(lineno, "n must be a positive integer")
            if record['split'] not in SPLITS:
                raise DatasetFormatError(lineno, "unknown split %r" % (record['split'],))
            x = _parse_edges(n, record['x_edges'], lineno, 'x_edges')
            y = _parse_edges(n, record['y_edges'], lineno, 'y_edges')
            pairs.append(GraphPair(x, y, dict(record.get('meta') or {}), str(record['id'])))
            splits.append(record['split'])
            kinds.add(record.get('kind'))
    if len(kinds) > 1:
        raise DatasetFormatError(0, "mixed dataset kinds %s" % sorted(map(str, kinds)))
    kind = kinds.pop() if kinds else None
    return Dataset(pairs, splits, kind)
