"""
Evaluation of a trained translator.

Direct evaluation compares generated targets with real ones through degree
distribution distances, graph-property errors and edge-increasing ratios.
Indirect evaluation trains two graph classifiers that tell inputs from
targets: one sees generated targets as positives, the other real ones. Both
are scored on the same held-out real pairs.
"""
import logging
from collections import defaultdict
from dataclasses import fields

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, TensorDataset
from tqdm import tqdm

from data.graph import UndefinedMetricError, binarize
from models.model import CLASSIFIER, init_params
from train import TrainingDivergedError
from utils.metrics import (GENERATED_TRAINED, REAL_TRAINED, ClassifierReport, classification_metrics,
                           degree_distance_report, edge_f1, estimate_k, k_distribution_report,
                           pairwise_distance_report, property_mse_report)
from utils.optim import GraphAdam
from utils.utils import DTYPE, derive_seeds, graphs_to_tensor, tensor_to_graphs, torch_generator

logger = logging.getLogger(__name__)


def generate_targets(translator, inputs, seed, batch_size=32):
    """One generated target per input; item i always uses the i-th seed derived from `seed`."""
    inputs = list(inputs)
    if not inputs:
        return []
    arch = translator.arch
    for idx, g in enumerate(inputs):
        if g.n != arch.n:
            raise ValueError("input %d has %d nodes but the translator is bound to n=%d" % (idx, g.n, arch.n))

    noise = torch.stack([torch.randn((arch.noise_dim, arch.n), generator=torch_generator(s), dtype=DTYPE)
                         for s in derive_seeds(seed, len(inputs))])
    translator.eval()
    generated = []
    with torch.no_grad():
        for start in tqdm(range(0, len(inputs), batch_size), desc="[generate]", leave=False):
            batch = graphs_to_tensor(inputs[start:start + batch_size])
            generated.extend(tensor_to_graphs(translator(batch, noise[start:start + batch_size])))
    return generated


def _check_class_graphs(positives, negatives):
    if not positives or not negatives:
        raise ValueError("classifier training needs at least one positive and one negative graph")
    sizes = {g.n for g in list(positives) + list(negatives)}
    if len(sizes) > 1:
        raise ValueError("classifier graphs have mixed node counts %s" % sorted(sizes))


def binary_classifier_train(positives, negatives, arch, cfg):
    """
    Trains a single-channel graph classifier (discriminator backbone without
    the conditioning channel) with binary cross-entropy and ADAM.
    Uses cfg.epochs, cfg.batch_size, cfg.lr_d, the ADAM settings and cfg.seed.
    """
    _check_class_graphs(positives, negatives)
    if positives[0].n != arch.n:
        raise ValueError("graphs have n=%d but the architecture is bound to n=%d" % (positives[0].n, arch.n))
    init_seed, order_seed = derive_seeds(cfg.seed, 2)
    classifier = init_params(arch, CLASSIFIER, init_seed)
    graphs = graphs_to_tensor(list(positives) + list(negatives))
    labels = torch.cat([torch.ones(len(positives), dtype=DTYPE), torch.zeros(len(negatives), dtype=DTYPE)])
    dataloader = DataLoader(TensorDataset(graphs, labels), batch_size=cfg.batch_size, shuffle=True,
                            generator=torch_generator(order_seed))
    optimizer = GraphAdam(classifier.parameters(), lr=cfg.lr_d, betas=(cfg.beta1, cfg.beta2), eps=cfg.epsilon)

    step = 0
    classifier.train()
    for epoch in tqdm(range(cfg.epochs), desc="[classifier]", leave=False):
        for batch, batch_labels in dataloader:
            step += 1
            probs = classifier(batch).clamp(cfg.prob_clamp, 1 - cfg.prob_clamp)
            loss = F.binary_cross_entropy(probs, batch_labels)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(step, "classifier loss is not finite")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    logger.debug("classifier trained for %d steps on %d/%d graphs", step, len(positives), len(negatives))
    return classifier


def classifier_scores(classifier, graphs):
    if not graphs:
        return np.zeros(0)
    classifier.eval()
    with torch.no_grad():
        return classifier(graphs_to_tensor(list(graphs))).numpy()


def _binarized(graphs, threshold):
    return [binarize(g, threshold) for g in graphs]


def direct_report(test_pairs, generated, threshold=0.5):
    """
    Reports for generated targets against the real ones of the same pairs.

    :return: dict with 'degree_distance', 'pairwise_degree_distance',
        'property_mse', 'edge_f1' and, when pairs carry meta 'k', 'k_distribution'
    """
    if not test_pairs:
        raise ValueError("direct evaluation needs a nonempty test split")
    if len(generated) != len(test_pairs):
        raise ValueError("%d generated graphs for %d test pairs" % (len(generated), len(test_pairs)))
    real = _binarized([pair.target for pair in test_pairs], threshold)
    fake = _binarized(generated, threshold)

    report = {
        'degree_distance': degree_distance_report(fake, real).to_dict(),
        'pairwise_degree_distance': pairwise_distance_report(fake, real).to_dict(),
        'property_mse': property_mse_report(fake, real).to_dict(),
        'edge_f1': edge_f1(fake, real, threshold),
    }
    if all('k' in pair.meta for pair in test_pairs):
        generated_ks, real_ks = [], []
        for pair, g in zip(test_pairs, generated):
            try:
                generated_ks.append(estimate_k(pair.input, g, threshold))
                real_ks.append(estimate_k(pair.input, pair.target, threshold))
            except UndefinedMetricError:
                continue
        if generated_ks:
            report['k_distribution'] = k_distribution_report(generated_ks, real_ks)
            report['k_distribution']['meta_mean'] = float(np.mean([pair.meta['k'] for pair in test_pairs]))
    return report


def direct_eval(translator, test_set, seed, threshold=0.5):
    test_pairs = test_set.test_pairs()
    if not test_pairs:
        raise ValueError("direct evaluation needs a nonempty test split")
    generated = generate_targets(translator, [pair.input for pair in test_pairs], seed)
    return direct_report(test_pairs, generated, threshold)


def split_halves(count, seed, fraction=0.5):
    """Seeded split of range(count) into two nonempty index lists."""
    if count < 2:
        raise ValueError("indirect evaluation needs at least two test pairs, got %d" % count)
    order = np.random.default_rng(seed).permutation(count)
    cut = min(count - 1, max(1, int(np.floor(count * fraction))))
    return sorted(order[:cut].tolist()), sorted(order[cut:].tolist())


def indirect_report(test_pairs, generated, arch, cfg, seed, binarize_graphs=True, threshold=0.5, fraction=0.5):
    """
    Classifier transfer on precomputed generated targets.

    :return: (ClassifierReport generated_trained, ClassifierReport real_trained)
    """
    if len(generated) != len(test_pairs):
        raise ValueError("%d generated graphs for %d test pairs" % (len(generated), len(test_pairs)))
    part1, part2 = split_halves(len(test_pairs), seed, fraction)
    inputs = [pair.input for pair in test_pairs]
    targets = [pair.target for pair in test_pairs]
    if binarize_graphs:
        inputs = _binarized(inputs, threshold)
        targets = _binarized(targets, threshold)
        generated = _binarized(generated, threshold)

    negatives = [inputs[i] for i in part1]
    classifier_a = binary_classifier_train([generated[i] for i in part1], negatives, arch, cfg)
    classifier_b = binary_classifier_train([targets[i] for i in part1], negatives, arch, cfg)

    eval_graphs = [targets[i] for i in part2] + [inputs[i] for i in part2]
    eval_labels = [True] * len(part2) + [False] * len(part2)
    report_a = classification_metrics(classifier_scores(classifier_a, eval_graphs), eval_labels,
                                       threshold, GENERATED_TRAINED)
    report_b = classification_metrics(classifier_scores(classifier_b, eval_graphs), eval_labels,
                                      threshold, REAL_TRAINED)
    return report_a, report_b


def indirect_eval(translator, test_set, cfg, seed, threshold=0.5, fraction=0.5):
    """
    Part 1 of the seeded test split trains the two classifiers, part 2 scores
    them. Synthetic graphs are binarized; auth graphs keep their counts.
    """
    test_pairs = test_set.test_pairs()
    if len(test_pairs) < 2:
        raise ValueError("indirect evaluation needs at least two test pairs, got %d" % len(test_pairs))
    generated = generate_targets(translator, [pair.input for pair in test_pairs], seed)
    return indirect_report(test_pairs, generated, translator.arch, cfg, seed,
                           binarize_graphs=test_set.kind != 'auth', threshold=threshold, fraction=fraction)


def average_reports(reports, variant):
    values = {f.name: float(np.mean([getattr(r, f.name) for r in reports]))
              for f in fields(ClassifierReport) if f.name != 'variant'}
    return ClassifierReport(variant=variant, **values)


def indirect_eval_by_group(translator, test_set, key, cfg, seed, threshold=0.5, fraction=0.5):
    """
    Runs indirect evaluation within each group of meta[key] (for auth data,
    each user) and averages the reports over groups with at least two pairs.

    :return: (averaged generated_trained, averaged real_trained, {group: (report_a, report_b)})
    """
    groups = defaultdict(list)
    for pair in test_set.test_pairs():
        groups[str(pair.meta.get(key))].append(pair)
    usable = {group: pairs for group, pairs in sorted(groups.items()) if len(pairs) >= 2}
    if not usable:
        raise ValueError("no %s group has two or more test pairs" % key)

    per_group = {}
    for group, group_seed in zip(usable, derive_seeds(seed, len(usable))):
        pairs = usable[group]
        generated = generate_targets(translator, [pair.input for pair in pairs], group_seed)
        per_group[group] = indirect_report(pairs, generated, translator.arch, cfg, group_seed,
                                           binarize_graphs=test_set.kind != 'auth', threshold=threshold,
                                           fraction=fraction)
    logger.info("indirect evaluation over %d %s groups (%d skipped)", len(usable), key, len(groups) - len(usable))
    return (average_reports([a for a, _ in per_group.values()], GENERATED_TRAINED),
            average_reports([b for _, b in per_group.values()], REAL_TRAINED),
            per_group)


def graph_diff(input_graph, real, generated, node_labels=None, threshold=0.5):
    """
    Edges added by the translation, compared with the edges the real target adds.

    :return: dict of 'hits', 'misses' and 'false_alarms', each a sorted list of [source, target]
    """
    if not (input_graph.n == real.n == generated.n):
        raise ValueError("graph_diff needs three graphs on the same node set")
    base = binarize(input_graph, threshold).adjacency
    real_added = binarize(real, threshold).adjacency & ~base
    fake_added = binarize(generated, threshold).adjacency & ~base

    def edges(mask):
        result = []
        for i, j in zip(*np.nonzero(mask)):
            if node_labels is not None:
                result.append([node_labels[i] if node_labels[i] is not None else int(i),
                               node_labels[j] if node_labels[j] is not None else int(j)])
            else:
                result.append([int(i), int(j)])
        return result

    return {
        'hits': edges(real_added & fake_added),
        'misses': edges(real_added & ~fake_added),
        'false_alarms': edges(fake_added & ~real_added),
    }


class Predictor(object):
    """Runs the evaluation protocols for one translator and logs headline numbers."""

    def __init__(self, translator, cfg, threshold=0.5, fraction=0.5, summary_writer=None):
        super(Predictor, self).__init__()
        self.translator = translator
        self.cfg = cfg
        self.threshold = threshold
        self.fraction = fraction
        self.summary_writer = summary_writer
        self._logger = logging.getLogger(__name__)

    def evaluate_direct(self, test_set, seed):
        report = direct_eval(self.translator, test_set, seed, self.threshold)
        distance = report['degree_distance']
        self._logger.info("direct: JS %.4f HD %.4f BD %s WD %.4f edge F1 %.4f",
                          distance['js'], distance['hellinger'], distance['bhattacharyya'],
                          distance['wasserstein'], report['edge_f1'])
        self._write_scalars('direct', {'wasserstein': distance['wasserstein'], 'edge_f1': report['edge_f1']})
        return report

    def evaluate_indirect(self, test_set, seed, group_key=None):
        if group_key is None:
            report_a, report_b = indirect_eval(self.translator, test_set, self.cfg, seed, self.threshold,
                                               self.fraction)
            groups = None
        else:
            report_a, report_b, per_group = indirect_eval_by_group(self.translator, test_set, group_key,
                                                                   self.cfg, seed, self.threshold, self.fraction)
            groups = {g: {'generated_trained': a.to_dict(), 'real_trained': b.to_dict()}
                      for g, (a, b) in per_group.items()}
        for report in (report_a, report_b):
            self._logger.info("indirect %s: P %.4f R %.4f AUC %.4f F1 %.4f", report.variant,
                              report.precision, report.recall, report.auc, report.f1)
            self._write_scalars('indirect/' + report.variant, {'auc': report.auc, 'f1': report.f1})
        result = {'generated_trained': report_a.to_dict(), 'real_trained': report_b.to_dict()}
        if groups is not None:
            result['groups'] = groups
        return result

    def _write_scalars(self, prefix, values):
        if self.summary_writer is None:
            return
        for name, value in values.items():
            self.summary_writer.add_scalar('%s/%s' % (prefix, name), value, 0)
