import argparse
import collections
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict

from config.hparams import PARAMS
from data.dataset import TEST, Dataset, GraphPair, read_dataset, write_dataset
from data.lanl import build_user_graphs, make_auth_dataset, parse_auth_log
from data.synthetic import make_dataset
from models.model import DISCRIMINATOR, TRANSLATOR, ArchSpec, init_params, param_count, shape_trace
from predictor import Predictor, generate_targets, graph_diff
from train import TrainConfig, train
from utils.checkpointing import CheckpointManager, load_checkpoint
from utils.gradcheck import layer_suite, network_grad_check
from utils.utils import atomic_write, loglog_slope, profile_translator

COMMANDS = ('gen-data', 'ingest-auth', 'train', 'translate', 'eval-direct', 'eval-indirect', 'gradcheck', 'info')
GENERATED_KINDS = ('scale_free', 'poisson')
GRADCHECK_TOLERANCE = 1e-4

logger = logging.getLogger(__name__)


def init_logger(path=None):
    logger = logging.getLogger()
    logger.handlers = []
    logger.setLevel(logging.DEBUG)

    info_formatter = logging.Formatter('%(asctime)s | %(levelname)-8s | %(message)s')
    debug_formatter = logging.Formatter('%(asctime)s | %(levelname)-8s | %(message)s | %(lineno)d:%(funcName)s')

    ch = logging.StreamHandler()
    ch.setLevel(os.environ.get('GTGAN_LOG_LEVEL', 'INFO').upper())
    ch.setFormatter(info_formatter)
    logger.addHandler(ch)

    if path:
        if not os.path.exists(path):
            os.makedirs(path)
        debug_fh = logging.FileHandler(os.path.join(path, "debug.log"))
        debug_fh.setLevel(logging.DEBUG)
        debug_fh.setFormatter(debug_formatter)
        info_fh = logging.FileHandler(os.path.join(path, "info.log"))
        info_fh.setLevel(logging.INFO)
        info_fh.setFormatter(info_formatter)
        logger.addHandler(debug_fh)
        logger.addHandler(info_fh)

    return logger


def default_hparams():
    hparams = PARAMS
    return collections.namedtuple("HParams", sorted(hparams.keys()))(**hparams)


@dataclass
class Command:
    name: str
    options: Dict[str, Any] = field(default_factory=dict)

    def __getattr__(self, item):
        options = self.__dict__.get('options', {})
        if item in options:
            return options[item]
        raise AttributeError(item)


def _channels(text):
    try:
        values = tuple(int(v) for v in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers, got %r" % text) from None
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("channel counts must be positive")
    return values


def _add_arch_options(parser):
    parser.add_argument("--noise-dim", dest="noise_dim", type=int, default=None)
    parser.add_argument("--skip-mode", dest="skip_mode", choices=('add', 'none'), default=None)
    parser.add_argument("--output-activation", dest="output_activation", choices=('relu', 'sigmoid'), default=None)
    parser.add_argument("--encoder-channels", dest="encoder_channels", type=_channels, default=None)
    parser.add_argument("--decoder-channels", dest="decoder_channels", type=_channels, default=None)
    parser.add_argument("--fc-width", dest="fc_width", type=int, default=None)


def build_parser():
    arg_parser = argparse.ArgumentParser(prog="gtgan", description="Graph translation with adversarial training (PyTorch)")
    subparsers = arg_parser.add_subparsers(dest="command", metavar="{%s}" % ','.join(COMMANDS))
    subparsers.required = True

    gen = subparsers.add_parser("gen-data", help="generate a synthetic pair dataset")
    gen.add_argument("--kind", required=True, choices=GENERATED_KINDS,
                     help="scale_free or poisson (auth datasets come from ingest-auth)")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--seed", type=int, default=PARAMS['seed'])
    gen.add_argument("--out", required=True, help="output .jsonl file or directory")
    gen.add_argument("--train-fraction", dest="train_fraction", type=float, default=PARAMS['train_fraction'])
    gen.add_argument("--beta", type=float, default=PARAMS['scale_free_beta'])
    gen.add_argument("--lam", type=float, default=PARAMS['poisson_lambda'])

    ingest = subparsers.add_parser("ingest-auth", help="build an auth dataset from a time,user,src,dst,red_team CSV")
    ingest.add_argument("--log", required=True)
    ingest.add_argument("--n", type=int, required=True)
    ingest.add_argument("--window", type=int, default=PARAMS['auth_window'])
    ingest.add_argument("--seed", type=int, default=PARAMS['seed'])
    ingest.add_argument("--train-fraction", dest="train_fraction", type=float, default=0.5)
    ingest.add_argument("--out", required=True)

    tr = subparsers.add_parser("train", help="train translator and discriminator")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True, help="output directory")
    tr.add_argument("--seed", type=int, default=PARAMS['seed'])
    tr.add_argument("--epochs", type=int, default=PARAMS['num_epochs'])
    tr.add_argument("--max-steps", dest="max_steps", type=int, default=PARAMS['max_steps'])
    tr.add_argument("--batch-size", dest="batch_size", type=int, default=PARAMS['batch_size'])
    tr.add_argument("--lr-g", dest="lr_g", type=float, default=PARAMS['learning_rate_g'])
    tr.add_argument("--lr-d", dest="lr_d", type=float, default=PARAMS['learning_rate_d'])
    tr.add_argument("--d-steps", dest="d_steps_per_g_step", type=int, default=PARAMS['d_steps_per_g_step'])
    tr.add_argument("--loss-mode", dest="loss_mode", choices=('non_saturating', 'minimax'),
                    default=PARAMS['loss_mode'])
    tr.add_argument("--recon-weight", dest="recon_weight", type=float, default=PARAMS['recon_weight'])
    tr.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=PARAMS['checkpoint_every'])
    tr.add_argument("--tensorboard", action="store_true", help="write scalars under OUT/tensorboard")
    _add_arch_options(tr)

    tl = subparsers.add_parser("translate", help="generate targets for the test inputs")
    tl.add_argument("--checkpoint", required=True)
    tl.add_argument("--data", required=True)
    tl.add_argument("--seed", type=int, default=PARAMS['seed'])
    tl.add_argument("--out", required=True, help="output directory")

    for name in ("eval-direct", "eval-indirect"):
        ev = subparsers.add_parser(name)
        ev.add_argument("--checkpoint", required=True)
        ev.add_argument("--data", required=True)
        ev.add_argument("--seed", type=int, default=PARAMS['seed'])
        ev.add_argument("--out", required=True, help="report .json file")
        ev.add_argument("--threshold", type=float, default=PARAMS['binarize_threshold'])
        if name == "eval-indirect":
            ev.add_argument("--classifier-epochs", dest="classifier_epochs", type=int,
                            default=PARAMS['classifier_epochs'])
            ev.add_argument("--split-fraction", dest="eval_split_fraction", type=float,
                            default=PARAMS['eval_split_fraction'],
                            help="share of test pairs that trains the two classifiers")
            ev.add_argument("--group-key", dest="group_key", default=None,
                            help="evaluate per meta group (e.g. user) and average")

    gc = subparsers.add_parser("gradcheck", help="finite-difference checks of every layer kind")
    gc.add_argument("--seeds", type=int, default=20)
    gc.add_argument("--n", type=int, default=8)
    gc.add_argument("--epsilon", type=float, default=1e-5)
    gc.add_argument("--network", action="store_true", help="also check whole translator and discriminator")

    info = subparsers.add_parser("info", help="parameter counts and layer shapes")
    info.add_argument("--checkpoint", default=None)
    info.add_argument("--n", type=int, default=None)
    info.add_argument("--profile", action="store_true", help="time forward+backward over node counts")
    _add_arch_options(info)
    return arg_parser


def _validate(parser, args):
    def require(condition, message):
        if not condition:
            parser.error("%s: %s" % (args.command, message))

    if args.command == "gen-data":
        require(args.n >= 3, "--n must be at least 3")
        require(args.count >= 2, "--count must be at least 2")
        require(0 < args.train_fraction < 1, "--train-fraction must lie in (0, 1)")
        require(0 < args.beta < 1, "--beta must lie in (0, 1)")
        require(args.lam > 0, "--lam must be positive")
    elif args.command == "ingest-auth":
        require(args.n >= 1, "--n must be positive")
        require(args.window > 0, "--window must be positive")
        require(0 < args.train_fraction < 1, "--train-fraction must lie in (0, 1)")
    elif args.command == "train":
        require(args.epochs >= 0 and args.max_steps >= 0, "--epochs and --max-steps must be nonnegative")
        require(args.batch_size >= 1, "--batch-size must be at least 1")
        require(args.lr_g >= 0 and args.lr_d >= 0, "learning rates must be nonnegative")
        require(args.d_steps_per_g_step >= 1, "--d-steps must be at least 1")
        require(args.recon_weight >= 0, "--recon-weight must be nonnegative")
        require(args.noise_dim is None or args.noise_dim >= 0, "--noise-dim must be nonnegative")
    elif args.command in ("eval-direct", "eval-indirect"):
        require(args.threshold >= 0, "--threshold must be nonnegative")
        if args.command == "eval-indirect":
            require(args.classifier_epochs >= 0, "--classifier-epochs must be nonnegative")
            require(0 < args.eval_split_fraction < 1, "--split-fraction must lie in (0, 1)")
    elif args.command == "gradcheck":
        require(args.seeds >= 1, "--seeds must be positive")
        require(args.n >= 1, "--n must be positive")
        require(0 < args.epsilon <= 1e-2, "--epsilon must lie in (0, 1e-2]")
    elif args.command == "info":
        require((args.checkpoint is None) != (args.n is None), "give exactly one of --checkpoint and --n")
        require(args.n is None or args.n >= 1, "--n must be positive")


def parse_args(argv):
    """Parses and validates argv; usage errors exit with status 2."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    options = vars(args)
    name = options.pop("command")
    return Command(name, options)


def _dataset_path(out):
    path = Path(out)
    if str(out).endswith(os.sep) or path.is_dir() or path.suffix == '':
        return path / "dataset.jsonl"
    return path


def _write_json(path, record):
    with atomic_write(path) as handle:
        json.dump(record, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _hparams_for(cmd):
    hparams = default_hparams()
    overrides = {key: value for key, value in cmd.options.items()
                 if value is not None and key in hparams._fields}
    return hparams._replace(**overrides)


def _load_translator(path, dataset=None):
    model, meta = load_checkpoint(path)
    if meta["role"] != TRANSLATOR:
        raise ValueError("%s holds a %s, not a translator" % (path, meta["role"]))
    if dataset is not None and dataset.n is not None and dataset.n != model.arch.n:
        raise ValueError("checkpoint %s is bound to n=%d but dataset graphs have n=%d"
                         % (path, model.arch.n, dataset.n))
    return model


def cmd_gen_data(cmd):
    dataset = make_dataset(cmd.kind, cmd.n, cmd.count, cmd.train_fraction, cmd.seed, beta=cmd.beta, lam=cmd.lam)
    path = _dataset_path(cmd.out)
    write_dataset(dataset, path)
    return "wrote %d %s pairs (n=%d, seed=%d) to %s" % (len(dataset), cmd.kind, cmd.n, cmd.seed, path)


def cmd_ingest_auth(cmd):
    with open(cmd.log, encoding="utf-8") as handle:
        events = parse_auth_log(handle)
    windows = build_user_graphs(events, cmd.window)
    dataset = make_auth_dataset(windows, cmd.n, cmd.train_fraction, cmd.seed)
    path = _dataset_path(cmd.out)
    write_dataset(dataset, path)
    return "wrote %d auth pairs from %d events (%d windows) to %s" % (len(dataset), len(events), len(windows), path)


def cmd_train(cmd):
    dataset = read_dataset(cmd.data)
    if not dataset.train_pairs():
        raise ValueError("%s has no train pairs" % cmd.data)
    out = Path(cmd.out)
    hparams = _hparams_for(cmd)._replace(
        num_epochs=cmd.epochs, learning_rate_g=cmd.lr_g, learning_rate_d=cmd.lr_d,
        save_dirpath=str(out / "checkpoints"),
        log_dir=str(out / "tensorboard") if cmd.tensorboard else '')
    arch = ArchSpec.from_hparams(hparams, dataset.n)
    cfg = TrainConfig.from_hparams(hparams)
    translator, discriminator, history = train(dataset, arch, cfg, hparams)

    # translator.json, discriminator.json, hparams.json and the commit marker
    CheckpointManager({TRANSLATOR: translator, DISCRIMINATOR: discriminator}, out,
                      seed=cfg.seed, hparams=hparams).save()
    history.write_csv(out / "history.csv")
    last = history.records[-1] if history.records else None
    summary = "trained %d steps (seed=%d) into %s" % (len(history), cfg.seed, out)
    if last is not None:
        summary += "; final loss_d %.4f loss_g %.4f" % (last.loss_d, last.loss_g)
    return summary


def cmd_translate(cmd):
    dataset = read_dataset(cmd.data)
    translator = _load_translator(cmd.checkpoint, dataset)
    pairs = dataset.test_pairs()
    generated = generate_targets(translator, [pair.input for pair in pairs], cmd.seed)
    out = Path(cmd.out)
    translated = Dataset([GraphPair(pair.input, g, dict(pair.meta, translation_seed=cmd.seed), pair.pair_id)
                          for pair, g in zip(pairs, generated)], [TEST] * len(pairs), dataset.kind)
    write_dataset(translated, out / "generated.jsonl")
    with atomic_write(out / "diffs.jsonl") as handle:
        for index, (pair, g) in enumerate(zip(pairs, generated)):
            record = {'id': pair.pair_id or str(index)}
            record.update(graph_diff(pair.input, pair.target, g, pair.meta.get('node_labels')))
            handle.write(json.dumps(record) + "\n")
    return "translated %d test inputs (seed=%d) into %s" % (len(pairs), cmd.seed, out)


def cmd_eval_direct(cmd):
    dataset = read_dataset(cmd.data)
    translator = _load_translator(cmd.checkpoint, dataset)
    predictor = Predictor(translator, TrainConfig(), threshold=cmd.threshold)
    report = {'seed': cmd.seed, 'threshold': cmd.threshold, 'data': str(cmd.data),
              'direct': predictor.evaluate_direct(dataset, cmd.seed)}
    _write_json(cmd.out, report)
    distance = report['direct']['degree_distance']
    return "direct evaluation: WD %.4f JS %.4f (seed=%d) -> %s" % (
        distance['wasserstein'], distance['js'], cmd.seed, cmd.out)


def cmd_eval_indirect(cmd):
    dataset = read_dataset(cmd.data)
    translator = _load_translator(cmd.checkpoint, dataset)
    hparams = default_hparams()
    cfg = TrainConfig.from_hparams(hparams, epochs=cmd.classifier_epochs, seed=cmd.seed,
                                   noise_dim=translator.arch.noise_dim, checkpoint_dir='', log_dir='')
    predictor = Predictor(translator, cfg, threshold=cmd.threshold, fraction=cmd.eval_split_fraction)
    report = {'seed': cmd.seed, 'threshold': cmd.threshold, 'data': str(cmd.data),
              'classifier_epochs': cmd.classifier_epochs, 'split_fraction': cmd.eval_split_fraction,
              'indirect': predictor.evaluate_indirect(dataset, cmd.seed, cmd.group_key)}
    _write_json(cmd.out, report)
    a, b = report['indirect']['generated_trained'], report['indirect']['real_trained']
    return "indirect evaluation: AUC %.4f (generated) vs %.4f (real), F1 %.4f vs %.4f -> %s" % (
        a['auc'], b['auc'], a['f1'], b['f1'], cmd.out)


def cmd_gradcheck(cmd):
    worst = 0.0
    for (kind, activation), error in layer_suite(range(cmd.seeds), cmd.n, 3, 2, cmd.epsilon).items():
        worst = max(worst, error)
        print("%-14s %-7s max relative error %.3e" % (kind, activation, error))
    if cmd.network:
        arch = ArchSpec(n=min(cmd.n, 6))
        for role in (TRANSLATOR, DISCRIMINATOR):
            error = network_grad_check(init_params(arch, role, 0), role, seed=0)
            worst = max(worst, error)
            print("%-14s %-7s max relative error %.3e" % (role, 'network', error))
    return worst


def cmd_info(cmd):
    if cmd.checkpoint:
        model, meta = load_checkpoint(cmd.checkpoint)
        arch = model.arch
        models = {meta['role']: model}
    else:
        arch = ArchSpec.from_hparams(_hparams_for(cmd), cmd.n)
        models = {role: init_params(arch, role, 0) for role in (TRANSLATOR, DISCRIMINATOR)}
    for role, model in models.items():
        print("%s: %d parameters" % (role, param_count(arch, role)))
        for name, shape in shape_trace(model, role):
            print("  %-14s %s" % (name, "x".join(str(s) for s in shape)))
    if cmd.profile:
        timings = profile_translator()
        for n, seconds in timings:
            print("  n=%-4d %.6f s" % (n, seconds))
        print("  log-log slope %.3f" % loglog_slope([n for n, _ in timings], [s for _, s in timings]))
    return "info for n=%d" % arch.n


HANDLERS = {
    'gen-data': cmd_gen_data,
    'ingest-auth': cmd_ingest_auth,
    'train': cmd_train,
    'translate': cmd_translate,
    'eval-direct': cmd_eval_direct,
    'eval-indirect': cmd_eval_indirect,
    'info': cmd_info,
}


def run(cmd):
    """Executes a parsed command; returns the process exit code."""
    try:
        if cmd.name == 'gradcheck':
            worst = cmd_gradcheck(cmd)
            passed = worst < GRADCHECK_TOLERANCE
            print("gradcheck %s: worst relative error %.3e (tolerance %.0e)"
                  % ("passed" if passed else "FAILED", worst, GRADCHECK_TOLERANCE))
            return 0 if passed else 1
        print(HANDLERS[cmd.name](cmd))
        return 0
    except (ValueError, OSError, RuntimeError, FloatingPointError) as exc:
        logger.error("%s failed: %s", cmd.name, exc)
        return 1


def main(argv=None):
    cmd = parse_args(sys.argv[1:] if argv is None else argv)
    init_logger(cmd.options.get('out') if cmd.name == 'train' else None)
    return run(cmd)


if __name__ == '__main__':
    sys.exit(main())
