import csv
import logging
from dataclasses import astuple, dataclass, field, fields
from datetime import datetime
from typing import List

import torch
from torch.utils.data import DataLoader
from torch.utils.tensorboard import SummaryWriter
from tqdm import tqdm

from data.dataset import GraphPairDataset
from models.model import DISCRIMINATOR, TRANSLATOR, init_params
from utils.checkpointing import CheckpointManager
from utils.optim import GraphAdam, NonFiniteGradientError
from utils.utils import DTYPE, atomic_write, derive_seeds, torch_generator

LOSS_MODES = ('non_saturating', 'minimax')


class TrainingDivergedError(RuntimeError):
    def __init__(self, step, message):
        super().__init__("step %d: %s" % (step, message))
        self.step = step


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    d_steps_per_g_step: int = 1
    seed: int = 0
    noise_dim: int = 2
    checkpoint_every: int = 0
    checkpoint_dir: str = ''
    max_steps: int = 0
    loss_mode: str = 'non_saturating'
    recon_weight: float = 0.0
    prob_clamp: float = 1e-7
    log_dir: str = ''

    def __post_init__(self):
        # lr 0 is accepted: it freezes a network, which the isolation checks rely on
        if self.lr_g < 0 or self.lr_d < 0:
            raise ValueError("learning rates must be nonnegative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("ADAM betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("ADAM epsilon must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.d_steps_per_g_step < 1:
            raise ValueError("d_steps_per_g_step must be at least 1")
        if self.epochs < 0 or self.max_steps < 0 or self.checkpoint_every < 0:
            raise ValueError("epochs, max_steps and checkpoint_every must be nonnegative")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError("loss_mode must be one of %s" % (LOSS_MODES,))
        if self.recon_weight < 0:
            raise ValueError("recon_weight must be nonnegative")
        if not 0 < self.prob_clamp < 0.5:
            raise ValueError("prob_clamp must lie in (0, 0.5)")

    @classmethod
    def from_hparams(cls, hparams, **overrides):
        values = dict(
            epochs=hparams.num_epochs,
            batch_size=hparams.batch_size,
            lr_g=hparams.learning_rate_g,
            lr_d=hparams.learning_rate_d,
            beta1=hparams.optimizer_adam_beta1,
            beta2=hparams.optimizer_adam_beta2,
            epsilon=hparams.optimizer_adam_epsilon,
            d_steps_per_g_step=hparams.d_steps_per_g_step,
            seed=hparams.seed,
            noise_dim=hparams.noise_dim,
            checkpoint_every=hparams.checkpoint_every,
            checkpoint_dir=hparams.save_dirpath,
            max_steps=hparams.max_steps,
            loss_mode=hparams.loss_mode,
            recon_weight=hparams.recon_weight,
            prob_clamp=hparams.prob_clamp,
            log_dir=hparams.log_dir,
        )
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class StepRecord:
    step: int
    loss_d: float
    loss_g: float
    d_real_mean: float
    d_fake_mean: float


@dataclass
class TrainHistory:
    records: List[StepRecord] = field(default_factory=list)

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def write_csv(self, path):
        with atomic_write(path) as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow([f.name for f in fields(StepRecord)])
            for record in self.records:
                writer.writerow([repr(value) for value in astuple(record)])


def gan_losses(d_real, d_fake, mode='non_saturating', clamp=1e-7):
    """
    loss_d = -mean(log D(real)) - mean(log(1 - D(fake)))
    loss_g = -mean(log D(fake))         (non_saturating)
           =  mean(log(1 - D(fake)))    (minimax)
    Probabilities are clamped to [clamp, 1 - clamp] first.
    """
    d_real = torch.as_tensor(d_real, dtype=DTYPE)
    d_fake = torch.as_tensor(d_fake, dtype=DTYPE)
    if d_real.numel() == 0 or d_fake.numel() == 0:
        raise ValueError("GAN losses need nonempty batches")
    if mode not in LOSS_MODES:
        raise ValueError("loss mode must be one of %s" % (LOSS_MODES,))
    d_real = d_real.clamp(clamp, 1 - clamp)
    d_fake = d_fake.clamp(clamp, 1 - clamp)
    loss_d = -torch.log(d_real).mean() - torch.log1p(-d_fake).mean()
    if mode == 'non_saturating':
        loss_g = -torch.log(d_fake).mean()
    else:
        loss_g = torch.log1p(-d_fake).mean()
    return loss_d, loss_g


class GraphTranslation(object):
    """Adversarial training of a translator against a conditional discriminator."""

    def __init__(self, dataset, arch, cfg, hparams=None):
        self.cfg = cfg
        self.arch = arch
        self.hparams = hparams
        self._logger = logging.getLogger(__name__)

        if not dataset.train_pairs():
            raise ValueError("dataset has no train pairs")
        if dataset.n != arch.n:
            raise ValueError("dataset graphs have n=%d but the architecture is bound to n=%d"
                             % (dataset.n, arch.n))
        if cfg.noise_dim != arch.noise_dim:
            raise ValueError("noise_dim differs between train config (%d) and architecture (%d)"
                             % (cfg.noise_dim, arch.noise_dim))
        # data order, noise, translator init, discriminator init
        self.seeds = derive_seeds(cfg.seed, 4)

        self.build_dataloader(dataset)
        self.build_model()
        self.setup_training()

    def build_dataloader(self, dataset):
        self.train_dataset = GraphPairDataset(dataset.train_pairs())
        self.train_dataloader = DataLoader(
            self.train_dataset,
            batch_size=self.cfg.batch_size,
            shuffle=True,
            drop_last=False,
            generator=torch_generator(self.seeds[0]),
        )
        self.noise_generator = torch_generator(self.seeds[1])

    def build_model(self):
        cfg = self.cfg
        self.translator = init_params(self.arch, TRANSLATOR, self.seeds[2])
        self.discriminator = init_params(self.arch, DISCRIMINATOR, self.seeds[3])
        self.optimizer_g = GraphAdam(self.translator.parameters(), lr=cfg.lr_g,
                                     betas=(cfg.beta1, cfg.beta2), eps=cfg.epsilon)
        self.optimizer_d = GraphAdam(self.discriminator.parameters(), lr=cfg.lr_d,
                                     betas=(cfg.beta1, cfg.beta2), eps=cfg.epsilon)
        self._logger.info("translator: %d parameters, discriminator: %d parameters",
                          sum(p.numel() for p in self.translator.parameters()),
                          sum(p.numel() for p in self.discriminator.parameters()))

    def setup_training(self):
        cfg = self.cfg
        self.summary_writer = SummaryWriter(cfg.log_dir) if cfg.log_dir else None
        self.checkpoint_manager = None
        if cfg.checkpoint_dir and cfg.checkpoint_every:
            self.checkpoint_manager = CheckpointManager(
                {TRANSLATOR: self.translator, DISCRIMINATOR: self.discriminator},
                cfg.checkpoint_dir, step_size=cfg.checkpoint_every, seed=cfg.seed, hparams=self.hparams)

    def sample_noise(self, batch_size):
        return torch.randn((batch_size, self.arch.noise_dim, self.arch.n),
                           generator=self.noise_generator, dtype=DTYPE)

    def _check_finite(self, step, **losses):
        for name, value in losses.items():
            if not torch.isfinite(value):
                raise TrainingDivergedError(step, "%s is not finite (%r)" % (name, float(value)))

    def discriminator_step(self, step, inputs, targets, fakes):
        d_real = self.discriminator(targets, inputs)
        d_fake = self.discriminator(fakes, inputs)
        loss_d, _ = gan_losses(d_real, d_fake, self.cfg.loss_mode, self.cfg.prob_clamp)
        self._check_finite(step, loss_d=loss_d)
        self.optimizer_d.zero_grad()
        loss_d.backward()
        self.optimizer_d.step()
        return loss_d.detach(), d_real.detach(), d_fake.detach()

    def generator_step(self, step, inputs, targets, noise, d_real):
        self.discriminator.requires_grad_(False)
        try:
            fakes = self.translator(inputs, noise)
            d_fake = self.discriminator(fakes, inputs)
            _, loss_g = gan_losses(d_real, d_fake, self.cfg.loss_mode, self.cfg.prob_clamp)
            if self.cfg.recon_weight:
                loss_g = loss_g + self.cfg.recon_weight * (fakes - targets).abs().mean()
            self._check_finite(step, loss_g=loss_g)
            self.optimizer_g.zero_grad()
            loss_g.backward()
            self.optimizer_g.step()
        finally:
            self.discriminator.requires_grad_(True)
        return loss_g.detach()

    def train(self):
        cfg = self.cfg
        history = TrainHistory()
        train_begin = datetime.utcnow()
        global_iteration_step = 0
        for epoch in range(cfg.epochs):
            if cfg.max_steps and global_iteration_step >= cfg.max_steps:
                break
            self.translator.train()
            self.discriminator.train()
            tqdm_batch_iterator = tqdm(self.train_dataloader, leave=False)
            for batch_idx, batch in enumerate(tqdm_batch_iterator):
                inputs, targets = batch['inputs'], batch['targets']
                noise = self.sample_noise(inputs.shape[0])
                step = global_iteration_step + 1
                try:
                    with torch.no_grad():
                        fakes = self.translator(inputs, noise)
                    for _ in range(cfg.d_steps_per_g_step):
                        loss_d, d_real, d_fake = self.discriminator_step(step, inputs, targets, fakes)
                    loss_g = self.generator_step(step, inputs, targets, noise, d_real)
                except NonFiniteGradientError as exc:
                    raise TrainingDivergedError(step, str(exc)) from exc

                global_iteration_step = step
                record = StepRecord(step, float(loss_d), float(loss_g),
                                    float(d_real.mean()), float(d_fake.mean()))
                history.append(record)
                self._log_step(record)

                description = "[{}][Epoch: {:3d}][Iter: {:6d}][Loss D: {:6f}][Loss G: {:6f}]".format(
                    datetime.utcnow() - train_begin,
                    epoch,
                    global_iteration_step, record.loss_d, record.loss_g)
                tqdm_batch_iterator.set_description(description)

                if self.checkpoint_manager is not None:
                    self.checkpoint_manager.step(global_iteration_step)
                if cfg.max_steps and global_iteration_step >= cfg.max_steps:
                    break

        if self.summary_writer is not None:
            self.summary_writer.flush()
            self.summary_writer.close()
        self._logger.info("trained %d generator steps over %d epochs", global_iteration_step, cfg.epochs)
        return history

    def _log_step(self, record):
        if self.summary_writer is None:
            return
        self.summary_writer.add_scalar('train/loss_d', record.loss_d, record.step)
        self.summary_writer.add_scalar('train/loss_g', record.loss_g, record.step)
        self.summary_writer.add_scalar('train/d_real', record.d_real_mean, record.step)
        self.summary_writer.add_scalar('train/d_fake', record.d_fake_mean, record.step)


def train(dataset, arch, cfg, hparams=None):
    """
    :return: (translator, discriminator, TrainHistory)
    """
    trainer = GraphTranslation(dataset, arch, cfg, hparams)
    history = trainer.train()
    return trainer.translator, trainer.discriminator, history
