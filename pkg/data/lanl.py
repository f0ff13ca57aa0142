"""
Authentication logs -> per-user, per-window directed weighted graphs.

Input is a simplified LANL-style CSV, one event per line, no header:

    time,user,src_computer,dst_computer,red_team

with integer seconds and red_team in {0, 1}. Events are grouped into
tumbling windows of `window` seconds per user. Nodes are the computers the
user touched in the window, sorted lexicographically; edge weights count
authentications per (src, dst). The normal graph counts regular events, the
malicious graph (only when the window holds red-team events) counts all of
them.
"""
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from data.dataset import TEST, TRAIN, Dataset, GraphPair
from data.graph import DirectedGraph, new_graph, pad_graph

logger = logging.getLogger(__name__)

FIELDS = ('time', 'user', 'src_computer', 'dst_computer', 'red_team')


class AuthLogParseError(ValueError):
    def __init__(self, lineno, message):
        super().__init__("line %d: %s" % (lineno, message))
        self.lineno = lineno


@dataclass(frozen=True)
class AuthEvent:
    time: int
    user: str
    src_computer: str
    dst_computer: str
    red_team: bool


@dataclass(frozen=True)
class UserWindowGraphs:
    user: str
    window_start: int
    window_end: int
    normal: DirectedGraph
    malicious: Optional[DirectedGraph]
    node_labels: List[str]


def _parse_line(line, lineno):
    fields = line.split(',')
    if len(fields) != len(FIELDS):
        raise AuthLogParseError(lineno, "expected %d fields (%s), got %d"
                                % (len(FIELDS), ','.join(FIELDS), len(fields)))
    time, user, src, dst, red = (f.strip() for f in fields)
    try:
        time = int(time)
    except ValueError:
        raise AuthLogParseError(lineno, "time %r is not an integer" % time) from None
    if time < 0:
        raise AuthLogParseError(lineno, "time must be nonnegative")
    if not (user and src and dst):
        raise AuthLogParseError(lineno, "user and computer identifiers must be nonempty")
    if red not in ('0', '1'):
        raise AuthLogParseError(lineno, "red_team must be 0 or 1, got %r" % red)
    return AuthEvent(time, user, src, dst, red == '1')


def parse_auth_log(lines):
    events = []
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip('\r\n')
        if not line.strip():
            continue
        events.append(_parse_line(line, lineno))
    return events


def build_user_graphs(events, window):
    if window <= 0:
        raise ValueError("window must be positive, got %r" % window)
    groups = defaultdict(list)
    for event in events:
        groups[(event.user, event.time // window)].append(event)

    windows = []
    for (user, slot) in sorted(groups):
        group = groups[(user, slot)]
        labels = sorted({e.src_computer for e in group} | {e.dst_computer for e in group})
        index = {label: i for i, label in enumerate(labels)}
        normal_counts = Counter((index[e.src_computer], index[e.dst_computer])
                                for e in group if not e.red_team)
        all_counts = Counter((index[e.src_computer], index[e.dst_computer]) for e in group)
        normal = new_graph(len(labels), [(i, j, float(c)) for (i, j), c in sorted(normal_counts.items())])
        malicious = None
        if any(e.red_team for e in group):
            malicious = new_graph(len(labels), [(i, j, float(c)) for (i, j), c in sorted(all_counts.items())])
        windows.append(UserWindowGraphs(user, slot * window, (slot + 1) * window,
                                        normal, malicious, labels))
    logger.info("built %d user windows from %d events", len(windows), len(events))
    return windows


def make_auth_dataset(windows, n, train_fraction=0.5, seed=0):
    """
    Pairs each window's normal graph with its malicious graph, padded to n
    nodes, and splits train/test by user.
    """
    pairs = []
    skipped = 0
    for w in windows:
        if w.malicious is None:
            continue
        if w.normal.n > n:
            skipped += 1
            continue
        labels = list(w.node_labels) + [None] * (n - w.normal.n)
        meta = {'user': w.user, 'window_start': w.window_start,
                'window_end': w.window_end, 'node_labels': labels}
        pair_id = '%s@%d' % (w.user, w.window_start)
        pairs.append(GraphPair(pad_graph(w.normal, n), pad_graph(w.malicious, n), meta, pair_id))
    if skipped:
        logger.warning("skipped %d windows with more than %d computers", skipped, n)
    if len(pairs) < 2:
        raise ValueError("only %d usable windows with red-team activity" % len(pairs))
    dataset = Dataset(pairs, [TRAIN] * len(pairs), 'auth')
    users = {pair.meta['user'] for pair in pairs}
    if len(users) < 2:
        order = np.random.default_rng(seed).permutation(len(pairs))
        n_train = max(1, int(np.floor(len(pairs) * train_fraction)))
        splits = [TEST] * len(pairs)
        for i in order[:n_train]:
            splits[i] = TRAIN
        return Dataset(pairs, splits, 'auth')
    return dataset.split_by_group('user', train_fraction, seed)
