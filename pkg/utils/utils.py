import contextlib
import os
import tempfile
import time
from pathlib import Path

import numpy as np
import torch

from data.graph import DirectedGraph

DTYPE = torch.float64


def derive_seeds(seed, count):
    """Splits one seed into `count` independent integer seeds."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint32)[0]) for child in children]


def torch_generator(seed):
    generator = torch.Generator()
    generator.manual_seed(int(seed))
    return generator


def graphs_to_tensor(graphs):
    """Stacks graphs into a [batch, N, N] double tensor."""
    if len(graphs) == 0:
        raise ValueError("no graphs to stack")
    return torch.from_numpy(np.stack([g.weights for g in graphs])).to(DTYPE)


def tensor_to_graphs(tensor):
    array = tensor.detach().cpu().numpy()
    # relu/sigmoid outputs may carry -0.0; clip keeps the graph invariant
    return [DirectedGraph(np.clip(weights, 0.0, None)) for weights in array]


@contextlib.contextmanager
def atomic_write(path, mode='w'):
    """Writes to a sibling temporary file and renames it over `path` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix='.' + path.name + '.', dir=str(path.parent))
    try:
        with os.fdopen(fd, mode, encoding=None if 'b' in mode else 'utf-8') as handle:
            yield handle
        os.replace(tmp_path, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp_path)
        raise


def compare_models(model_1, model_2):
    """Returns the names of parameters that differ between two models."""
    differ = []
    for (name_1, value_1), (name_2, value_2) in zip(model_1.state_dict().items(),
                                                    model_2.state_dict().items()):
        if name_1 != name_2:
            raise ValueError("models have different layouts (%s vs %s)" % (name_1, name_2))
        if not torch.equal(value_1, value_2):
            differ.append(name_1)
    return differ


def loglog_slope(xs, ys):
    """Least-squares slope of log(ys) against log(xs)."""
    slope, _ = np.polyfit(np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float)), 1)
    return float(slope)


def profile_translator(sizes=(16, 32, 64, 128), repeats=5, batch_size=4, seed=0):
    """
    Median forward+backward wall time of the default translator per node count.

    :return: list of (n, median seconds)
    """
    # local import: models depends on this module
    from models.model import ArchSpec, init_params

    timings = []
    for n in sizes:
        arch = ArchSpec(n=n)
        translator = init_params(arch, 'translator', seed)
        generator = torch_generator(seed)
        inputs = torch.rand((batch_size, n, n), generator=generator, dtype=DTYPE)
        noise = torch.randn((batch_size, arch.noise_dim, n), generator=generator, dtype=DTYPE)
        samples = []
        for _ in range(repeats):
            translator.zero_grad()
            start = time.perf_counter()
            translator(inputs, noise).sum().backward()
            samples.append(time.perf_counter() - start)
        timings.append((n, float(np.median(samples))))
    return timings
