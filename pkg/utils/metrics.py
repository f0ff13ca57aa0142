"""
Distances between degree distributions, graph-property errors and
classification scores used by the evaluation reports.
"""
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.special import rel_entr
from scipy.stats import wasserstein_distance
from sklearn.metrics import f1_score, precision_score, recall_score, roc_auc_score

from data.graph import (DegreeDistribution, UndefinedMetricError, average_degree, binarize, density,
                        edge_count, reciprocity, total_degrees)

GENERATED_TRAINED = 'generated_trained'
REAL_TRAINED = 'real_trained'
VARIANTS = (GENERATED_TRAINED, REAL_TRAINED)


def _json_number(value):
    if value is None:
        return None
    if math.isinf(value):
        return "Inf"
    return float(value)


@dataclass(frozen=True)
class DistanceReport:
    js: float
    hellinger: float
    bhattacharyya: float
    wasserstein: float

    def to_dict(self):
        return {key: _json_number(value) for key, value in asdict(self).items()}


@dataclass(frozen=True)
class PropertyMseReport:
    density_mse: float
    average_degree_mse: float
    reciprocity_mse: Optional[float]
    degree_wasserstein: float
    reciprocity_excluded: int = 0

    def to_dict(self):
        record = {key: _json_number(value) for key, value in asdict(self).items()}
        record['reciprocity_excluded'] = self.reciprocity_excluded
        return record


@dataclass(frozen=True)
class ClassifierReport:
    precision: float
    recall: float
    auc: float
    f1: float
    variant: Optional[str] = None

    def to_dict(self):
        return asdict(self)


def align(p, q):
    """
    Puts two degree distributions on the sorted union of their supports.

    :return: (support, p vector, q vector)
    """
    support = np.array(sorted(set(p.support) | set(q.support)), dtype=np.int64)
    index = {d: i for i, d in enumerate(support)}
    p_vec = np.zeros(len(support))
    q_vec = np.zeros(len(support))
    for d, prob in zip(p.support, p.probabilities):
        p_vec[index[d]] = prob
    for d, prob in zip(q.support, q.probabilities):
        q_vec[index[d]] = prob
    return support, p_vec, q_vec


def _vectors(p, q):
    if isinstance(p, DegreeDistribution):
        return align(p, q)[1:]
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions are not aligned: %s vs %s" % (p.shape, q.shape))
    return p, q


def js_distance(p, q):
    """Square root of the base-2 Jensen-Shannon divergence, in [0, 1]."""
    p, q = _vectors(p, q)
    m = 0.5 * (p + q)
    divergence = 0.5 * (rel_entr(p, m).sum() + rel_entr(q, m).sum()) / np.log(2)
    return float(np.sqrt(np.clip(divergence, 0.0, 1.0)))


def hellinger(p, q):
    p, q = _vectors(p, q)
    # equals sqrt(1 - sum(sqrt(p q))) for normalized inputs without the cancellation
    return float(min(1.0, np.sqrt(0.5 * np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))))


def bhattacharyya(p, q):
    p, q = _vectors(p, q)
    coefficient = float(np.sum(np.sqrt(p * q)))
    if coefficient <= 0.0:
        return math.inf
    return max(0.0, -math.log(min(coefficient, 1.0)))


def wasserstein1(p, q, support=None):
    """
    Earth mover's distance over integer degrees. Bare vectors are read on
    `support` (as returned by align) or, without one, on degrees 0..len-1.
    """
    if isinstance(p, DegreeDistribution):
        support, p_vec, q_vec = align(p, q)
    else:
        p_vec, q_vec = _vectors(p, q)
        if support is None:
            support = np.arange(len(p_vec))
        support = np.asarray(support, dtype=np.float64)
        if support.shape != p_vec.shape:
            raise ValueError("support of length %d for vectors of length %d" % (support.size, p_vec.size))
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly increasing")
    return float(wasserstein_distance(support, support, p_vec, q_vec))


def distance_report(p, q):
    return DistanceReport(js_distance(p, q), hellinger(p, q), bhattacharyya(p, q), wasserstein1(p, q))


def pooled_degree_distribution(graphs):
    if len(graphs) == 0:
        raise ValueError("cannot pool degrees of an empty collection")
    return DegreeDistribution.from_degrees(np.concatenate([total_degrees(g) for g in graphs]))


def degree_distance_report(generated, real):
    """All four distances between the pooled degree distributions of two collections."""
    if len(generated) == 0 or len(real) == 0:
        raise ValueError("degree distance needs two nonempty collections")
    return distance_report(pooled_degree_distribution(generated), pooled_degree_distribution(real))


def pairwise_distance_report(generated, real):
    """Per-pair degree distances averaged over index-aligned collections."""
    _check_aligned(generated, real)
    reports = [distance_report(pooled_degree_distribution([g]), pooled_degree_distribution([r]))
               for g, r in zip(generated, real)]
    return DistanceReport(*(float(np.mean([getattr(rep, f) for rep in reports]))
                            for f in ('js', 'hellinger', 'bhattacharyya', 'wasserstein')))


def _check_aligned(generated, real):
    if len(generated) != len(real):
        raise ValueError("collections differ in length: %d vs %d" % (len(generated), len(real)))
    if len(generated) == 0:
        raise ValueError("collections are empty")


def property_mse_report(generated, real):
    _check_aligned(generated, real)
    density_err = [(density(g) - density(r)) ** 2 for g, r in zip(generated, real)]
    degree_err = [(average_degree(g) - average_degree(r)) ** 2 for g, r in zip(generated, real)]
    reciprocity_err, excluded = [], 0
    for g, r in zip(generated, real):
        try:
            reciprocity_err.append((reciprocity(g) - reciprocity(r)) ** 2)
        except UndefinedMetricError:
            excluded += 1
    return PropertyMseReport(
        density_mse=float(np.mean(density_err)),
        average_degree_mse=float(np.mean(degree_err)),
        reciprocity_mse=float(np.mean(reciprocity_err)) if reciprocity_err else None,
        degree_wasserstein=wasserstein1(pooled_degree_distribution(generated), pooled_degree_distribution(real)),
        reciprocity_excluded=excluded)


def estimate_k(g_x, g_y, threshold=0.5):
    """Edge-increasing ratio (|E(y)| - |E(x)|) / |E(x)| on binarized graphs."""
    edges_x = edge_count(binarize(g_x, threshold))
    if edges_x == 0:
        raise UndefinedMetricError("edge-increasing ratio is undefined for an edgeless input graph")
    edges_y = edge_count(binarize(g_y, threshold))
    return (edges_y - edges_x) / edges_x


def k_distribution_report(generated_ks, real_ks):
    generated_ks = np.asarray(generated_ks, dtype=np.float64)
    real_ks = np.asarray(real_ks, dtype=np.float64)
    if generated_ks.size == 0 or real_ks.size == 0:
        raise ValueError("k distribution needs nonempty samples")

    def histogram(values):
        rounded = np.rint(values).astype(np.int64)
        bins, counts = np.unique(rounded, return_counts=True)
        return {str(int(b)): int(c) for b, c in zip(bins, counts)}

    return {
        'generated_mean': float(generated_ks.mean()),
        'generated_std': float(generated_ks.std()),
        'real_mean': float(real_ks.mean()),
        'real_std': float(real_ks.std()),
        'generated_histogram': histogram(generated_ks),
        'real_histogram': histogram(real_ks),
        'wasserstein': float(wasserstein_distance(generated_ks, real_ks)),
    }


def edge_f1(generated, real, threshold=0.5):
    """Edge-level F1 of binarized generated graphs against real ones, pooled over the collection."""
    _check_aligned(generated, real)
    predicted = np.concatenate([binarize(g, threshold).adjacency.ravel() for g in generated])
    actual = np.concatenate([binarize(r, threshold).adjacency.ravel() for r in real])
    return float(f1_score(actual, predicted, zero_division=1.0))


def classification_metrics(scores, labels, threshold=0.5, variant=None):
    """
    Precision, recall and F1 at `threshold` (score >= threshold is positive)
    plus ROC AUC, where tied scores count one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ValueError("got %d scores but %d labels" % (scores.size, labels.size))
    if labels.all() or not labels.any():
        raise ValueError("classification metrics need both positive and negative labels")
    predicted = scores >= threshold
    return ClassifierReport(
        precision=float(precision_score(labels, predicted, zero_division=0)),
        recall=float(recall_score(labels, predicted, zero_division=0)),
        auc=float(roc_auc_score(labels, scores)),
        f1=float(f1_score(labels, predicted, zero_division=0)),
        variant=variant)
