import math

import pytest
import torch

from models.layers import Dense, EdgeToEdgeConv, EdgeToNodeConv, NodeToGraph
from models.layers.functional import (DENSE, E2E_CONV, E2E_DECONV, E2N_CONV, LAYER_KINDS, N2E_DECONV,
                                      LayerKernels, dense_forward, e2e_conv_forward,
                                      e2e_deconv_forward, e2n_conv_forward, layer_backward, layer_forward,
                                      n2e_deconv_forward, node_to_graph_forward, random_input, random_kernels)
from utils.gradcheck import grad_check, layer_suite
from utils.utils import DTYPE, torch_generator


def t(values):
    return torch.tensor(values, dtype=DTYPE)


def unit_kernels(n, m_in=1, m_out=1, psi=True):
    ones = torch.ones((m_in, m_out, n), dtype=DTYPE)
    return LayerKernels(ones, ones.clone() if psi else None, torch.zeros(m_out, dtype=DTYPE), 'linear')


SWAP = [[[[0.0, 1.0], [1.0, 0.0]]]]


def test_e2e_conv_unit_kernels():
    out, _ = e2e_conv_forward(t(SWAP), unit_kernels(2))
    assert torch.equal(out, torch.full((1, 1, 2, 2), 2.0, dtype=DTYPE))


def test_e2n_conv_unit_kernels():
    out, _ = e2n_conv_forward(t(SWAP), unit_kernels(2))
    assert out.tolist() == [[[2.0, 2.0]]]
    out, _ = e2n_conv_forward(t([[[[1.0, 0.0], [0.0, 0.0]]]]), unit_kernels(2))
    assert out.tolist() == [[[2.0, 0.0]]]


def test_n2e_deconv_unit_kernels():
    out, _ = n2e_deconv_forward(t([[[1.0, 2.0]]]), unit_kernels(2))
    assert out.tolist() == [[[[2.0, 3.0], [3.0, 4.0]]]]


def test_e2e_deconv_unit_kernels():
    out, _ = e2e_deconv_forward(t(SWAP), unit_kernels(2))
    assert torch.equal(out, torch.full((1, 1, 2, 2), 2.0, dtype=DTYPE))


def test_node_to_graph_pooling():
    out, _ = node_to_graph_forward(t([[[1.0, 1.0, 1.0]]]), unit_kernels(3, psi=False))
    assert out.tolist() == [[3.0]]
    out, _ = node_to_graph_forward(t([[[1.0, 0.0, 0.0], [0.0, 0.0, 2.0]]]), unit_kernels(3, 2, 1, psi=False))
    assert out.tolist() == [[3.0]]


def test_dense_sigmoid():
    out, _ = dense_forward(t([[3.0, 4.0]]), t([[1.0, 2.0]]), t([1.0]), "sigmoid")
    assert out.item() == pytest.approx(1.0 / (1.0 + math.exp(-12.0)))
    identity = LayerKernels(torch.eye(3, dtype=DTYPE), None, torch.zeros(3, dtype=DTYPE), 'linear')
    x = t([[0.5, -1.0, 2.0]])
    assert torch.equal(layer_forward(DENSE, x, identity)[0], x)


@pytest.mark.parametrize("kind", LAYER_KINDS)
def test_zero_input_gives_activated_bias(kind):
    generator = torch_generator(0)
    kernels = random_kernels(kind, 4, 2, 3, generator, 'relu')
    x = torch.zeros_like(random_input(kind, 4, 2, generator))
    out, _ = layer_forward(kind, x, kernels)
    expected = torch.relu(kernels.bias).view(1, -1, *([1] * (out.dim() - 2))).expand_as(out)
    assert torch.equal(out, expected)


@pytest.mark.parametrize("kind", [E2E_CONV, E2N_CONV, N2E_DECONV, E2E_DECONV])
def test_preactivation_is_linear(kind):
    generator = torch_generator(1)
    kernels = random_kernels(kind, 5, 2, 3, generator, 'linear', bias=False)
    x1 = random_input(kind, 5, 2, generator)
    x2 = random_input(kind, 5, 2, generator)
    combined = layer_forward(kind, 2.0 * x1 - 0.5 * x2, kernels)[0]
    separate = 2.0 * layer_forward(kind, x1, kernels)[0] - 0.5 * layer_forward(kind, x2, kernels)[0]
    assert torch.allclose(combined, separate, atol=1e-10)


def _transposed(kernels):
    return LayerKernels(kernels.phi.transpose(0, 1).contiguous(), kernels.psi.transpose(0, 1).contiguous(),
                        None, 'linear')


@pytest.mark.parametrize("seed", range(100))
def test_deconvolutions_are_adjoint(seed):
    generator = torch_generator(seed)
    n, m_in, m_out = 5, 3, 2
    conv = random_kernels(E2N_CONV, n, m_in, m_out, generator, 'linear', bias=False)
    edges = random_input(E2E_CONV, n, m_in, generator)
    nodes = random_input(N2E_DECONV, n, m_out, generator)
    lhs = (e2n_conv_forward(edges, conv)[0] * nodes).sum()
    rhs = (edges * layer_forward(N2E_DECONV, nodes, _transposed(conv))[0]).sum()
    assert abs(float(lhs - rhs)) < 1e-9 * max(1.0, abs(float(lhs)))

    other = random_input(E2E_CONV, n, m_out, generator)
    lhs = (layer_forward(E2E_CONV, edges, conv)[0] * other).sum()
    rhs = (edges * layer_forward(E2E_DECONV, other, _transposed(conv))[0]).sum()
    assert abs(float(lhs - rhs)) < 1e-9 * max(1.0, abs(float(lhs)))


@pytest.mark.parametrize("kind", LAYER_KINDS)
def test_relu_outputs_are_nonnegative(kind):
    generator = torch_generator(2)
    out, _ = layer_forward(kind, random_input(kind, 4, 2, generator),
                           random_kernels(kind, 4, 2, 3, generator, 'relu'))
    assert (out >= 0).all()


@pytest.mark.parametrize("kind", LAYER_KINDS)
def test_zero_upstream_gives_zero_gradients(kind):
    generator = torch_generator(3)
    x = random_input(kind, 4, 2, generator)
    out, cache = layer_forward(kind, x, random_kernels(kind, 4, 2, 3, generator, 'relu'))
    grad_x, grads = layer_backward(kind, cache, torch.zeros_like(out))
    assert not grad_x.any()
    assert not grads.phi.any() and not grads.bias.any()
    if grads.psi is not None:
        assert not grads.psi.any()


@pytest.mark.parametrize("kind", LAYER_KINDS)
def test_relu_on_positive_domain_matches_linear(kind):
    generator = torch_generator(4)
    kernels = random_kernels(kind, 4, 2, 3, generator, 'linear')
    kernels.bias = torch.full_like(kernels.bias, 1000.0)
    x = random_input(kind, 4, 2, generator)
    out, linear_cache = layer_forward(kind, x, kernels)
    relu = LayerKernels(kernels.phi, kernels.psi, kernels.bias, 'relu')
    _, relu_cache = layer_forward(kind, x, relu)
    upstream = torch.randn(out.shape, generator=generator, dtype=DTYPE)
    linear_grads = layer_backward(kind, linear_cache, upstream)
    relu_grads = layer_backward(kind, relu_cache, upstream)
    assert torch.equal(linear_grads[0], relu_grads[0])
    assert torch.equal(linear_grads[1].phi, relu_grads[1].phi)


def test_layer_backward_validates_inputs():
    generator = torch_generator(5)
    x = random_input(E2E_CONV, 4, 2, generator)
    out, cache = layer_forward(E2E_CONV, x, random_kernels(E2E_CONV, 4, 2, 3, generator))
    with pytest.raises(ValueError):
        layer_backward(E2N_CONV, cache, out)
    with pytest.raises(ValueError):
        layer_backward(E2E_CONV, cache, out[:, :1])
    with pytest.raises(ValueError):
        layer_backward('spectral', cache, out)


def test_forward_shape_errors():
    generator = torch_generator(6)
    kernels = random_kernels(E2E_CONV, 4, 2, 3, generator)
    with pytest.raises(ValueError):
        layer_forward(E2E_CONV, random_input(E2E_CONV, 5, 2, generator), kernels)
    with pytest.raises(ValueError):
        layer_forward(E2E_CONV, random_input(E2E_CONV, 4, 3, generator), kernels)
    with pytest.raises(ValueError):
        layer_forward(E2E_CONV, random_input(E2N_CONV, 4, 2, generator)[:, :, :, 0], kernels)


@pytest.mark.parametrize("kind", LAYER_KINDS)
def test_grad_check_linear_is_exact(kind):
    assert grad_check(kind, 6, 2, 3, seed=0, epsilon=1e-5, activation='linear') < 1e-7


def test_grad_check_suite():
    results = layer_suite(range(20), n=8, m_in=3, m_out=2, epsilon=1e-5)
    assert set(results) == {(kind, activation) for kind in LAYER_KINDS for activation in ("linear", "relu")}
    assert max(results.values()) < 1e-4


@pytest.mark.parametrize("kind", LAYER_KINDS)
def test_grad_check_sigmoid(kind):
    assert grad_check(kind, 5, 2, 2, seed=1, epsilon=1e-5, activation='sigmoid') < 1e-6


def test_grad_check_is_deterministic():
    assert grad_check(E2E_DECONV, 5, 2, 2, 9, 1e-5, 'relu') == grad_check(E2E_DECONV, 5, 2, 2, 9, 1e-5, 'relu')


def test_grad_check_rejects_large_epsilon():
    with pytest.raises(ValueError):
        grad_check(E2E_CONV, 4, 1, 1, 0, epsilon=0.1)


def test_module_layers_chain_with_autograd():
    generator = torch_generator(7)
    layers = [EdgeToEdgeConv(4, 1, 2), EdgeToNodeConv(4, 2, 3), NodeToGraph(4, 3, 2), Dense(2, 1, 'sigmoid')]
    for layer in layers:
        layer.reset_parameters(generator)
        assert not layer.bias.any()
    x = torch.rand((2, 1, 4, 4), generator=generator, dtype=DTYPE)
    for layer in layers:
        x = layer(x)
    assert x.shape == (2, 1)
    x.sum().backward()
    assert layers[0].phi.grad is not None
    assert layers[2].psi is None
