import math

import numpy as np
import pytest

from data.graph import DegreeDistribution, UndefinedMetricError, empty_graph, new_graph
from utils.metrics import (align, bhattacharyya, classification_metrics, degree_distance_report, distance_report,
                           edge_f1, estimate_k, hellinger, js_distance, k_distribution_report,
                           pairwise_distance_report, property_mse_report, wasserstein1)


def _graph_with_edges(n, count):
    positions = [(i, j) for i in range(n) for j in range(n) if i != j][:count]
    return new_graph(n, [(i, j, 1.0) for i, j in positions])


def complete_graph(n):
    return _graph_with_edges(n, n * (n - 1))


def _random_distribution(rng, size=6):
    weights = rng.random(size) * (rng.random(size) < 0.7)
    weights[rng.integers(size)] += 0.1
    return weights / weights.sum()


def test_align_merges_supports():
    support, p, q = align(DegreeDistribution((0, 2), (0.5, 0.5)), DegreeDistribution((1, 2), (0.25, 0.75)))
    assert support.tolist() == [0, 1, 2]
    assert p.tolist() == [0.5, 0.0, 0.5]
    assert q.tolist() == [0.0, 0.25, 0.75]


def test_js_distance_values():
    assert js_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert js_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    assert js_distance([1.0, 0.0], [0.5, 0.5]) == pytest.approx(0.5579, abs=1e-4)


def test_hellinger_values():
    assert hellinger([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert hellinger([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    value = hellinger([0.5, 0.5], [0.9, 0.1])
    assert value == pytest.approx(0.3249, abs=1e-4)
    coefficient = math.sqrt(0.45) + math.sqrt(0.05)
    assert value ** 2 == pytest.approx(1.0 - coefficient)


def test_bhattacharyya_values():
    assert bhattacharyya([0.3, 0.7], [0.3, 0.7]) == pytest.approx(0.0, abs=1e-12)
    assert bhattacharyya([0.5, 0.5], [0.9, 0.1]) == pytest.approx(0.1116, abs=1e-4)
    assert bhattacharyya([1.0, 0.0], [0.0, 1.0]) == math.inf


def test_wasserstein_values():
    assert wasserstein1([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]) == pytest.approx(3.0)
    assert wasserstein1([0.5, 0.5], [0.0, 1.0]) == pytest.approx(0.5)
    far = wasserstein1(DegreeDistribution((0,), (1.0,)), DegreeDistribution((10,), (1.0,)))
    assert far == pytest.approx(10.0)


def test_wasserstein_on_aligned_vectors_uses_support_gaps():
    p, q = DegreeDistribution((0,), (1.0,)), DegreeDistribution((10,), (1.0,))
    support, p_vec, q_vec = align(p, q)
    assert support.tolist() == [0, 10]
    assert wasserstein1(p_vec, q_vec, support=support) == pytest.approx(wasserstein1(p, q))
    assert wasserstein1(p_vec, q_vec, support=support) == pytest.approx(10.0)
    gapped = align(DegreeDistribution((1, 4), (0.5, 0.5)), DegreeDistribution((2, 9), (0.25, 0.75)))
    assert wasserstein1(gapped[1], gapped[2], support=gapped[0]) == pytest.approx(
        wasserstein1(DegreeDistribution((1, 4), (0.5, 0.5)), DegreeDistribution((2, 9), (0.25, 0.75))))
    with pytest.raises(ValueError):
        wasserstein1(p_vec, q_vec, support=[0, 1, 2])
    with pytest.raises(ValueError):
        wasserstein1(p_vec, q_vec, support=[3, 1])


def test_disjoint_report_serializes_infinity():
    report = distance_report([1.0, 0.0], [0.0, 1.0])
    assert report.js == pytest.approx(1.0)
    assert report.hellinger == pytest.approx(1.0)
    assert report.bhattacharyya == math.inf
    assert report.to_dict()['bhattacharyya'] == "Inf"


def test_vectors_must_be_aligned():
    with pytest.raises(ValueError):
        js_distance([0.5, 0.5], [1.0])


@pytest.mark.parametrize("seed", range(10))
def test_distances_are_symmetric(seed):
    rng = np.random.default_rng(seed)
    p, q = _random_distribution(rng), _random_distribution(rng)
    for distance in (js_distance, hellinger, bhattacharyya, wasserstein1):
        assert distance(p, q) == pytest.approx(distance(q, p), abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_triangle_inequality(seed):
    rng = np.random.default_rng(100 + seed)
    p, q, r = (_random_distribution(rng) for _ in range(3))
    for distance in (js_distance, hellinger):
        assert distance(p, r) <= distance(p, q) + distance(q, r) + 1e-9


def test_moving_mass_farther_never_decreases_wasserstein():
    p = [1.0, 0.0, 0.0, 0.0, 0.0]
    previous = 0.0
    for target in range(5):
        q = [0.0] * 5
        q[target] = 1.0
        current = wasserstein1(p, q)
        assert current >= previous
        previous = current


def test_degree_distance_of_identical_collections(cycle3):
    report = degree_distance_report([cycle3, empty_graph(3)], [cycle3, empty_graph(3)])
    assert report.js == 0.0 and report.hellinger == 0.0
    assert report.bhattacharyya == 0.0
    assert report.wasserstein == 0.0


def test_empty_versus_complete_graph():
    report = degree_distance_report([empty_graph(4)], [complete_graph(4)])
    assert report.wasserstein == pytest.approx(6.0)
    assert report.bhattacharyya == math.inf


def test_degree_distance_ignores_collection_order(cycle3):
    a = [cycle3, _graph_with_edges(3, 4), empty_graph(3)]
    b = [_graph_with_edges(3, 2), complete_graph(3), cycle3]
    assert degree_distance_report(a, b) == degree_distance_report(a[::-1], b[::-1])
    with pytest.raises(ValueError):
        degree_distance_report([], b)


def test_pairwise_distance_report(cycle3):
    same = pairwise_distance_report([cycle3, empty_graph(3)], [cycle3, empty_graph(3)])
    assert same.js == 0.0 and same.wasserstein == 0.0
    with pytest.raises(ValueError):
        pairwise_distance_report([cycle3], [])


def test_property_mse_density_example():
    report = property_mse_report([_graph_with_edges(6, 6)], [_graph_with_edges(6, 12)])
    assert report.density_mse == pytest.approx(0.04)
    assert report.average_degree_mse == pytest.approx((2.0 - 4.0) ** 2)


def test_property_mse_is_symmetric_and_zero_on_self():
    a = [_graph_with_edges(5, 3), _graph_with_edges(5, 9)]
    b = [_graph_with_edges(5, 7), _graph_with_edges(5, 20)]
    forward, backward = property_mse_report(a, b), property_mse_report(b, a)
    assert forward.density_mse == backward.density_mse
    assert forward.reciprocity_mse == backward.reciprocity_mse
    assert forward.degree_wasserstein == pytest.approx(backward.degree_wasserstein)
    self_report = property_mse_report(a, a)
    assert self_report.density_mse == 0.0
    assert self_report.reciprocity_mse == 0.0
    assert self_report.degree_wasserstein == 0.0


def test_property_mse_excludes_edgeless_reciprocity(cycle3):
    report = property_mse_report([cycle3, empty_graph(3)], [cycle3, cycle3])
    assert report.reciprocity_excluded == 1
    assert report.reciprocity_mse == 0.0
    all_empty = property_mse_report([empty_graph(3)], [cycle3])
    assert all_empty.reciprocity_mse is None
    assert all_empty.to_dict()['reciprocity_mse'] is None
    with pytest.raises(ValueError):
        property_mse_report([cycle3], [cycle3, cycle3])


def test_estimate_k():
    x, y = _graph_with_edges(30, 100), _graph_with_edges(30, 450)
    assert estimate_k(x, y) == pytest.approx(3.5)
    assert estimate_k(x, x) == 0.0
    assert estimate_k(y, x) < 0
    with pytest.raises(UndefinedMetricError):
        estimate_k(empty_graph(30), y)


def test_estimate_k_binarizes_weights():
    x = new_graph(3, [(0, 1, 1.0), (1, 2, 1.0)])
    y = new_graph(3, [(0, 1, 0.9), (1, 2, 0.7), (2, 0, 0.4), (0, 2, 0.6)])
    assert estimate_k(x, y) == pytest.approx(0.5)


def test_k_distribution_report():
    report = k_distribution_report([4.0, 5.0, 6.0], [5.0, 5.0, 5.0])
    assert report['generated_mean'] == pytest.approx(5.0)
    assert report['real_std'] == 0.0
    assert report['generated_histogram'] == {'4': 1, '5': 1, '6': 1}
    assert report['wasserstein'] == pytest.approx(2.0 / 3.0)
    with pytest.raises(ValueError):
        k_distribution_report([], [1.0])


def test_edge_f1(cycle3):
    assert edge_f1([cycle3], [cycle3]) == 1.0
    assert edge_f1([empty_graph(3)], [empty_graph(3)]) == 1.0
    half = new_graph(3, [(0, 1, 1.0), (1, 0, 1.0)])
    # one hit, one false alarm, two misses
    assert edge_f1([half], [cycle3]) == pytest.approx(0.4)


def test_classification_example():
    report = classification_metrics([0.9, 0.8, 0.3], [True, False, True], threshold=0.5)
    assert report.precision == pytest.approx(0.5)
    assert report.recall == pytest.approx(0.5)
    assert report.auc == pytest.approx(0.5)
    assert report.f1 == pytest.approx(0.5)


def test_classification_separated_and_tied():
    report = classification_metrics([0.9, 0.8, 0.2, 0.1], [True, True, False, False], variant='real_trained')
    assert (report.precision, report.recall, report.f1, report.auc) == (1.0, 1.0, 1.0, 1.0)
    assert report.to_dict()['variant'] == 'real_trained'
    tied = classification_metrics([0.4] * 4, [True, False, True, False])
    assert tied.auc == pytest.approx(0.5)


def test_auc_ignores_monotone_transforms():
    rng = np.random.default_rng(0)
    scores = rng.random(20)
    labels = rng.random(20) < 0.5
    labels[:2] = [True, False]
    base = classification_metrics(scores, labels).auc
    assert classification_metrics(np.exp(3 * scores), labels).auc == pytest.approx(base)


def test_f1_is_harmonic_mean():
    rng = np.random.default_rng(1)
    for _ in range(5):
        scores = rng.random(12)
        labels = np.arange(12) % 3 == 0
        report = classification_metrics(scores, labels)
        if report.precision + report.recall > 0:
            expected = 2 * report.precision * report.recall / (report.precision + report.recall)
            assert report.f1 == pytest.approx(expected, abs=1e-9)


def test_classification_needs_both_classes():
    with pytest.raises(ValueError):
        classification_metrics([0.2, 0.9], [True, True])
    with pytest.raises(ValueError):
        classification_metrics([0.2, 0.9], [True])
