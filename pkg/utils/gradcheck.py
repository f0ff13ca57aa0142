"""
Central finite-difference checks for the hand-derived layer gradients and
for whole networks built from them.

Relative error per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
"""
import logging

import torch

from models.layers.functional import LAYER_KINDS, layer_backward, layer_forward, random_input, random_kernels
from models.model import GraphTranslator
from utils.utils import DTYPE, torch_generator

logger = logging.getLogger(__name__)

# relu inputs are redrawn until every pre-activation is this many epsilons from the kink
KINK_MARGIN = 100
MAX_REDRAWS = 1000


def _relative_error(analytic, numeric):
    scale = torch.clamp(torch.maximum(analytic.abs(), numeric.abs()), min=1.0)
    return float(((analytic - numeric).abs() / scale).max())


def _numeric_gradient(loss_fn, tensor, epsilon):
    grad = torch.zeros_like(tensor)
    flat, grad_flat = tensor.view(-1), grad.view(-1)
    for idx in range(flat.numel()):
        original = float(flat[idx])
        flat[idx] = original + epsilon
        plus = loss_fn()
        flat[idx] = original - epsilon
        minus = loss_fn()
        flat[idx] = original
        grad_flat[idx] = (plus - minus) / (2 * epsilon)
    return grad


def _sample_layer(kind, n, m_in, m_out, generator, epsilon, activation):
    for _ in range(MAX_REDRAWS):
        kernels = random_kernels(kind, n, m_in, m_out, generator, activation)
        x = random_input(kind, n, m_in, generator)
        _, cache = layer_forward(kind, x, kernels)
        if activation != 'relu' or float(cache.pre.abs().min()) > KINK_MARGIN * epsilon:
            return kernels, x
    raise RuntimeError("could not draw a %s layer away from the relu kink" % kind)


def grad_check(kind, n, m_in, m_out, seed, epsilon=1e-5, activation='linear'):
    """
    Compares layer_backward with central differences over every input,
    kernel and bias entry of one randomly drawn layer.

    :return: max relative error over all coordinates
    """
    if not 0 < epsilon <= 1e-2:
        raise ValueError("epsilon must lie in (0, 1e-2], got %r" % epsilon)
    if kind not in LAYER_KINDS:
        raise ValueError("unknown layer kind %r (valid: %s)" % (kind, ', '.join(LAYER_KINDS)))
    generator = torch_generator(seed)
    kernels, x = _sample_layer(kind, n, m_in, m_out, generator, epsilon, activation)
    out, cache = layer_forward(kind, x, kernels)
    upstream = torch.randn(out.shape, generator=generator, dtype=DTYPE)
    grad_x, grads = layer_backward(kind, cache, upstream)

    def loss():
        value, _ = layer_forward(kind, x, kernels)
        return float((value * upstream).sum())

    checks = [(x, grad_x), (kernels.phi, grads.phi)]
    if kernels.psi is not None:
        checks.append((kernels.psi, grads.psi))
    if kernels.bias is not None:
        checks.append((kernels.bias, grads.bias))
    error = max(_relative_error(analytic, _numeric_gradient(loss, tensor, epsilon))
                for tensor, analytic in checks)
    logger.debug("grad_check %s (%s, n=%d, %d->%d, seed=%d): %.3e",
                 kind, activation, n, m_in, m_out, seed, error)
    return error


def _network_inputs(model, generator):
    n = model.arch.n
    graphs = torch.rand((1, n, n), generator=generator, dtype=DTYPE)
    if isinstance(model, GraphTranslator):
        noise = torch.randn((1, model.arch.noise_dim, n), generator=generator, dtype=DTYPE)
        return lambda: model(graphs, noise)
    if model.conditional:
        inputs = torch.rand((1, n, n), generator=generator, dtype=DTYPE)
        return lambda: model(graphs, inputs)
    return lambda: model(graphs)


def network_grad_check(model, role=None, seed=0, epsilon=1e-6):
    """
    Whole-network check: gradients of <output, R> for a random upstream R,
    chained through every layer, against central differences per parameter.
    Meant for small models (n <= 8).
    """
    if not 0 < epsilon <= 1e-2:
        raise ValueError("epsilon must lie in (0, 1e-2], got %r" % epsilon)
    generator = torch_generator(seed)
    forward = _network_inputs(model, generator)
    with torch.no_grad():
        upstream = torch.randn(forward().shape, generator=generator, dtype=DTYPE)

    names, params = zip(*model.named_parameters())
    analytic = torch.autograd.grad((forward() * upstream).sum(), params, allow_unused=True)

    def loss():
        return float((forward() * upstream).sum())

    error = 0.0
    with torch.no_grad():
        for name, param, grad in zip(names, params, analytic):
            grad = torch.zeros_like(param) if grad is None else grad
            numeric = _numeric_gradient(loss, param.data, epsilon)
            error = max(error, _relative_error(grad, numeric))
    logger.debug("network_grad_check %s (n=%d, seed=%d): %.3e", role or type(model).__name__,
                 model.arch.n, seed, error)
    return error


def layer_suite(seeds=range(20), n=8, m_in=3, m_out=2, epsilon=1e-5):
    """Max error per (layer kind, activation) over `seeds`, linear and off-kink relu."""
    results = {}
    for kind in LAYER_KINDS:
        for activation in ('linear', 'relu'):
            results[(kind, activation)] = max(grad_check(kind, n, m_in, m_out, seed, epsilon, activation)
                                              for seed in seeds)
    return results
