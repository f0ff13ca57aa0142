"""
A checkpoint manager periodically saves the translator and discriminator
as versioned JSON files during training.

Next to the JSON files it leaves a `.commit-<sha>` marker naming the git
commit that wrote them, and `hparams.json` with the resolved configuration.
Loading a checkpoint whose directory has no marker, or a marker for another
commit, emits a UserWarning; the parameters still load.

Checkpoint format:

    {"format_version": 1, "role": "translator" | "discriminator" | "classifier",
     "arch": {ArchSpec fields}, "rng_seed": int,
     "parameters": [flat doubles, layer order, phi then psi then bias, input-map-major]}
"""
import json
import warnings
from pathlib import Path
from subprocess import PIPE, Popen

from torch import nn

from models.model import ArchSpec, build_model, flat_parameters, load_flat_parameters
from utils.utils import atomic_write

FORMAT_VERSION = 1


def current_commit_sha():
    try:
        commit_sha_subprocess = Popen(
            ["git", "rev-parse", "--short", "HEAD"], stdout=PIPE, stderr=PIPE
        )
        commit_sha, _ = commit_sha_subprocess.communicate()
    except OSError:
        return "unknown"
    commit_sha = commit_sha.decode("utf-8").strip().replace("\n", "")
    return commit_sha or "unknown"


class CheckpointManager(object):
    """A checkpoint manager saves every model it wraps as a JSON checkpoint
    in a specified directory.

    Parameters
    ----------
    models: dict
        role -> nn.Module, each bound to an ``arch`` attribute.
    checkpoint_dirpath: str
        Path to an empty or non-existent directory to save checkpoints.
    step_size: int, optional (default=1)
        Period of saving checkpoints, in generator steps.
    seed: int, optional (default=0)
        Seed recorded in every checkpoint.

    Example
    --------
    >>> ckpt_manager = CheckpointManager({"translator": T, "discriminator": D}, "/tmp/ckpt")
    >>> for step in range(1, 101):
    ...     do_iteration(batch)
    ...     ckpt_manager.step(step)
    """

    def __init__(self, models, checkpoint_dirpath, step_size=1, seed=0, **kwargs):
        for role, model in models.items():
            if not isinstance(model, nn.Module):
                raise TypeError("{} is not a Module".format(type(model).__name__))
        if step_size < 1:
            raise ValueError("step_size must be positive")

        self.models = models
        self.ckpt_dirpath = Path(checkpoint_dirpath)
        self.step_size = step_size
        self.seed = seed
        self.last_step = 0
        self.init_directory(**kwargs)

    def init_directory(self, hparams=None):
        """Initialize empty checkpoint directory and record commit SHA
        in it. Also save hyper-parameters config in this directory to
        associate checkpoints with their hyper-parameters.
        """
        self.ckpt_dirpath.mkdir(parents=True, exist_ok=True)
        commit_sha_filepath = self.ckpt_dirpath / f".commit-{current_commit_sha()}"
        commit_sha_filepath.touch()
        if hparams is not None:
            if hasattr(hparams, '_asdict'):
                hparams = hparams._asdict()
            with atomic_write(self.ckpt_dirpath / "hparams.json") as hparams_handle:
                json.dump(hparams, hparams_handle, sort_keys=True, default=list)

    def step(self, step=None):
        """Save checkpoints if step size conditions meet. """
        if not step:
            step = self.last_step + 1
        self.last_step = step

        if not self.last_step % self.step_size:
            self.save(f"_{self.last_step}")

    def save(self, suffix=""):
        paths = []
        for role, model in self.models.items():
            path = self.ckpt_dirpath / f"{role}{suffix}.json"
            save_checkpoint(model, path, role, self.seed)
            paths.append(path)
        return paths


def checkpoint_record(model, role, seed):
    return {
        "format_version": FORMAT_VERSION,
        "role": role,
        "arch": model.arch.to_dict(),
        "rng_seed": int(seed),
        "parameters": flat_parameters(model).tolist(),
    }


def save_checkpoint(model, path, role, seed):
    with atomic_write(path) as handle:
        json.dump(checkpoint_record(model, role, seed), handle)
        handle.write("\n")


def _check_commit(checkpoint_path):
    markers = list(checkpoint_path.resolve().parent.glob(".commit-*"))
    if not markers:
        warnings.warn(f"{checkpoint_path} has no .commit-* marker; cannot tell which code wrote it")
        return
    saved_sha = markers[0].name[len(".commit-"):]
    commit_sha = current_commit_sha()
    if commit_sha != saved_sha:
        warnings.warn(f"{checkpoint_path} was written at commit {saved_sha} "
                      f"but the working tree is at {commit_sha}")


def load_checkpoint(checkpoint_path, check_commit=True):
    """Given a path to a saved checkpoint, rebuild the network it holds.

    Returns
    -------
    nn.Module, dict
        The model (with ``arch`` bound) and the checkpoint record without parameters.

    Raises
    ------
    ValueError
        If the file is not a valid checkpoint or the parameter count does
        not match the recorded architecture.
    UserWarning
        If the directory has no commit marker or one for another commit.
    """
    checkpoint_path = Path(checkpoint_path)
    if check_commit:
        _check_commit(checkpoint_path)

    with open(checkpoint_path, encoding="utf-8") as handle:
        try:
            record = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{checkpoint_path}: not a JSON checkpoint ({exc})") from None
    for key in ("format_version", "role", "arch", "rng_seed", "parameters"):
        if key not in record:
            raise ValueError(f"{checkpoint_path}: missing field {key!r}")
    if record["format_version"] != FORMAT_VERSION:
        raise ValueError(f"{checkpoint_path}: unsupported format_version {record['format_version']}")

    arch = ArchSpec(**record["arch"])
    model = build_model(arch, record["role"])
    try:
        load_flat_parameters(model, record["parameters"])
    except ValueError as exc:
        raise ValueError(f"{checkpoint_path}: {exc}") from None
    meta = {key: value for key, value in record.items() if key != "parameters"}
    return model, meta
