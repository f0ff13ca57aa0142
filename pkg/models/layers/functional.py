"""
Forward and backward math of the directed graph layers.

Tensor layout (batch first, feature maps second):
    edge tensor  [B, M, N, N]   entry (i, j) is edge i -> j
    node tensor  [B, M, N]
    graph vector [B, M]

Kernels for one layer hold phi (incoming) and psi (outgoing), each of shape
[M_in, M_out, N], plus one bias per output map. For the dense layer phi is
the [out, in] weight matrix and psi is absent.

Every layer computes act(pre + bias [+ residual]) where pre is linear in the
input:

    e2e_conv    pre[o,i,j] = sum_m  x[m,i,:] . psi[m,o]  +  phi[m,o] . x[m,:,j]
    e2n_conv    pre[o,i]   = sum_m  x[m,i,:] . psi[m,o]  +  phi[m,o] . x[m,:,i]
    n2e_deconv  pre[o,i,j] = sum_m  phi[m,o,i] x[m,j]    +  x[m,i] psi[m,o,j]
    e2e_deconv  pre[o,i,j] = sum_m  phi[m,o,i] colsum_j(x[m]) + rowsum_i(x[m]) psi[m,o,j]
    node_to_graph pre[o]   = sum_m  phi[m,o] . x[m]
    dense       pre        = W x

Edge (i, j) of an edge-to-edge convolution combines the out-edges of its
source i with the in-edges of its target j. With channel-transposed kernels,
zero bias and linear activation, n2e_deconv is the adjoint of e2n_conv and
e2e_deconv the adjoint of e2e_conv.

Gradients are derived by hand in `layer_backward`; `GraphLayerFunction` only
hands them to torch so layers can be chained inside nn.Modules.
"""
from dataclasses import dataclass
from functools import partial
from typing import Optional

import torch

from utils.utils import DTYPE

E2E_CONV = 'e2e_conv'
E2N_CONV = 'e2n_conv'
N2E_DECONV = 'n2e_deconv'
E2E_DECONV = 'e2e_deconv'
NODE_TO_GRAPH = 'node_to_graph'
DENSE = 'dense'

LAYER_KINDS = (E2E_CONV, E2N_CONV, N2E_DECONV, E2E_DECONV, NODE_TO_GRAPH, DENSE)
ACTIVATIONS = ('linear', 'relu', 'sigmoid')

# input rank (batch included) and output rank per layer kind
_INPUT_RANK = {E2E_CONV: 4, E2N_CONV: 4, E2E_DECONV: 4, N2E_DECONV: 3, NODE_TO_GRAPH: 3, DENSE: 2}
_OUTPUT_RANK = {E2E_CONV: 4, E2N_CONV: 3, E2E_DECONV: 4, N2E_DECONV: 4, NODE_TO_GRAPH: 2, DENSE: 2}
_USES_PSI = (E2E_CONV, E2N_CONV, N2E_DECONV, E2E_DECONV)


@dataclass
class LayerKernels:
    phi: torch.Tensor
    psi: Optional[torch.Tensor] = None
    bias: Optional[torch.Tensor] = None
    activation: str = 'linear'

    @property
    def in_maps(self):
        return self.phi.shape[1] if self.phi.dim() == 2 else self.phi.shape[0]

    @property
    def out_maps(self):
        return self.phi.shape[0] if self.phi.dim() == 2 else self.phi.shape[1]


@dataclass
class LayerCache:
    kind: str
    x: torch.Tensor
    kernels: LayerKernels
    pre: torch.Tensor
    out: torch.Tensor


def _check_kind(kind):
    if kind not in LAYER_KINDS:
        raise ValueError("unknown layer kind %r (valid: %s)" % (kind, ', '.join(LAYER_KINDS)))


def check_shapes(kind, x, kernels, residual=None):
    _check_kind(kind)
    if kernels.activation not in ACTIVATIONS:
        raise ValueError("unknown activation %r" % kernels.activation)
    if x.dim() != _INPUT_RANK[kind]:
        raise ValueError("%s expects a rank-%d input, got shape %s" % (kind, _INPUT_RANK[kind], tuple(x.shape)))
    phi, psi = kernels.phi, kernels.psi
    if kind == DENSE:
        if phi.dim() != 2 or phi.shape[1] != x.shape[1]:
            raise ValueError("dense weights %s do not match input width %d" % (tuple(phi.shape), x.shape[1]))
    else:
        if phi.dim() != 3:
            raise ValueError("%s kernels must be [M_in, M_out, N], got %s" % (kind, tuple(phi.shape)))
        m_in, _, n = phi.shape
        if x.shape[1] != m_in:
            raise ValueError("%s expects %d input maps, got %d" % (kind, m_in, x.shape[1]))
        if any(size != n for size in x.shape[2:]):
            raise ValueError("%s kernels have length %d but input is %s" % (kind, n, tuple(x.shape)))
        if kind in _USES_PSI and (psi is None or psi.shape != phi.shape):
            raise ValueError("%s needs psi with the same shape as phi %s" % (kind, tuple(phi.shape)))
    if kernels.bias is not None and kernels.bias.shape != (kernels.out_maps,):
        raise ValueError("bias must have one entry per output map (%d)" % kernels.out_maps)
    if residual is not None and residual.dim() != _OUTPUT_RANK[kind]:
        raise ValueError("residual rank %d does not match %s output" % (residual.dim(), kind))


def _preactivation(kind, x, phi, psi):
    if kind == E2E_CONV:
        rows = torch.einsum('bmik,mok->boi', x, psi)
        cols = torch.einsum('bmkj,mok->boj', x, phi)
        return rows.unsqueeze(-1) + cols.unsqueeze(-2)
    if kind == E2N_CONV:
        return torch.einsum('bmik,mok->boi', x, psi) + torch.einsum('bmki,mok->boi', x, phi)
    if kind == N2E_DECONV:
        return torch.einsum('moi,bmj->boij', phi, x) + torch.einsum('bmi,moj->boij', x, psi)
    if kind == E2E_DECONV:
        col_sums, row_sums = x.sum(dim=2), x.sum(dim=3)
        return torch.einsum('moi,bmj->boij', phi, col_sums) + torch.einsum('bmi,moj->boij', row_sums, psi)
    if kind == NODE_TO_GRAPH:
        return torch.einsum('bmi,moi->bo', x, phi)
    return x @ phi.t()


def _activate(activation, pre):
    if activation == 'relu':
        return torch.relu(pre)
    if activation == 'sigmoid':
        return torch.sigmoid(pre)
    return pre.clone()


def layer_forward(kind, x, kernels, residual=None):
    """
    Runs one layer.

    :return: (output, LayerCache) - the cache feeds layer_backward
    """
    check_shapes(kind, x, kernels, residual)
    pre = _preactivation(kind, x, kernels.phi, kernels.psi)
    if kernels.bias is not None:
        pre = pre + kernels.bias.view(1, -1, *([1] * (pre.dim() - 2)))
    if residual is not None:
        if residual.shape != pre.shape:
            raise ValueError("residual shape %s does not match layer output %s"
                             % (tuple(residual.shape), tuple(pre.shape)))
        pre = pre + residual
    out = _activate(kernels.activation, pre)
    return out, LayerCache(kind, x, kernels, pre, out)


e2e_conv_forward = partial(layer_forward, E2E_CONV)
e2n_conv_forward = partial(layer_forward, E2N_CONV)
n2e_deconv_forward = partial(layer_forward, N2E_DECONV)
e2e_deconv_forward = partial(layer_forward, E2E_DECONV)
node_to_graph_forward = partial(layer_forward, NODE_TO_GRAPH)


def dense_forward(x, weights, bias=None, activation='linear'):
    return layer_forward(DENSE, x, LayerKernels(weights, None, bias, activation))


def activation_backward(cache, grad_out):
    """Gradient with respect to the pre-activation."""
    activation = cache.kernels.activation
    if activation == 'relu':
        return grad_out * (cache.pre > 0).to(grad_out.dtype)
    if activation == 'sigmoid':
        return grad_out * cache.out * (1.0 - cache.out)
    return grad_out


def _linear_backward(kind, x, phi, psi, grad_pre):
    grad_psi = None
    if kind == E2E_CONV:
        grad_rows, grad_cols = grad_pre.sum(dim=3), grad_pre.sum(dim=2)
        grad_x = (torch.einsum('boi,mok->bmik', grad_rows, psi)
                  + torch.einsum('mok,boj->bmkj', phi, grad_cols))
        grad_psi = torch.einsum('bmik,boi->mok', x, grad_rows)
        grad_phi = torch.einsum('bmkj,boj->mok', x, grad_cols)
    elif kind == E2N_CONV:
        grad_x = (torch.einsum('boi,mok->bmik', grad_pre, psi)
                  + torch.einsum('mok,boi->bmki', phi, grad_pre))
        grad_psi = torch.einsum('bmik,boi->mok', x, grad_pre)
        grad_phi = torch.einsum('bmki,boi->mok', x, grad_pre)
    elif kind == N2E_DECONV:
        grad_x = (torch.einsum('boij,moi->bmj', grad_pre, phi)
                  + torch.einsum('boij,moj->bmi', grad_pre, psi))
        grad_phi = torch.einsum('boij,bmj->moi', grad_pre, x)
        grad_psi = torch.einsum('boij,bmi->moj', grad_pre, x)
    elif kind == E2E_DECONV:
        col_sums, row_sums = x.sum(dim=2), x.sum(dim=3)
        grad_col_sums = torch.einsum('boij,moi->bmj', grad_pre, phi)
        grad_row_sums = torch.einsum('boij,moj->bmi', grad_pre, psi)
        grad_x = grad_row_sums.unsqueeze(-1) + grad_col_sums.unsqueeze(-2)
        grad_phi = torch.einsum('boij,bmj->moi', grad_pre, col_sums)
        grad_psi = torch.einsum('boij,bmi->moj', grad_pre, row_sums)
    elif kind == NODE_TO_GRAPH:
        grad_x = torch.einsum('bo,moi->bmi', grad_pre, phi)
        grad_phi = torch.einsum('bo,bmi->moi', grad_pre, x)
    else:
        grad_x = grad_pre @ phi
        grad_phi = grad_pre.t() @ x
    return grad_x, grad_phi, grad_psi


def layer_backward(kind, cache, grad_out):
    """
    Exact gradients of a scalar loss given dL/d(output).

    :return: (grad_input, LayerKernels holding dL/dphi, dL/dpsi, dL/dbias)
    """
    _check_kind(kind)
    if cache is None or cache.kind != kind:
        raise ValueError("no forward cache for a %s layer" % kind)
    if grad_out.shape != cache.out.shape:
        raise ValueError("grad_out shape %s does not match layer output %s"
                         % (tuple(grad_out.shape), tuple(cache.out.shape)))
    grad_pre = activation_backward(cache, grad_out)
    kernels = cache.kernels
    grad_x, grad_phi, grad_psi = _linear_backward(kind, cache.x, kernels.phi, kernels.psi, grad_pre)
    grad_bias = None
    if kernels.bias is not None:
        reduce_dims = [d for d in range(grad_pre.dim()) if d != 1]
        grad_bias = grad_pre.sum(dim=reduce_dims)
    return grad_x, LayerKernels(grad_phi, grad_psi, grad_bias, kernels.activation)


class GraphLayerFunction(torch.autograd.Function):
    """Bridges layer_forward/layer_backward into torch's graph of operations."""

    @staticmethod
    def forward(ctx, kind, activation, x, phi, psi, bias, residual):
        kernels = LayerKernels(phi, psi, bias, activation)
        out, cache = layer_forward(kind, x, kernels, residual)
        ctx.kind = kind
        ctx.activation = activation
        ctx.has_residual = residual is not None
        ctx.save_for_backward(x, phi, psi, bias, cache.pre, out)
        return out

    @staticmethod
    def backward(ctx, grad_out):
        x, phi, psi, bias, pre, out = ctx.saved_tensors
        cache = LayerCache(ctx.kind, x, LayerKernels(phi, psi, bias, ctx.activation), pre, out)
        grad_pre = activation_backward(cache, grad_out)
        grad_x, grad_phi, grad_psi = _linear_backward(ctx.kind, x, phi, psi, grad_pre)
        grad_bias = None
        if bias is not None:
            grad_bias = grad_pre.sum(dim=[d for d in range(grad_pre.dim()) if d != 1])
        grad_residual = grad_pre if ctx.has_residual else None
        return None, None, grad_x, grad_phi, grad_psi, grad_bias, grad_residual


def graph_layer(kind, x, kernels, residual=None):
    return GraphLayerFunction.apply(kind, kernels.activation, x, kernels.phi,
                                    kernels.psi, kernels.bias, residual)


def random_kernels(kind, n, m_in, m_out, generator, activation='linear', bias=True):
    """Standard-normal kernels for tests and gradient checks."""
    _check_kind(kind)
    if kind == DENSE:
        phi = torch.randn((m_out, m_in), generator=generator, dtype=DTYPE)
    else:
        phi = torch.randn((m_in, m_out, n), generator=generator, dtype=DTYPE)
    psi = torch.randn(phi.shape, generator=generator, dtype=DTYPE) if kind in _USES_PSI else None
    b = torch.randn((m_out,), generator=generator, dtype=DTYPE) if bias else None
    return LayerKernels(phi, psi, b, activation)


def random_input(kind, n, m_in, generator, batch=1):
    _check_kind(kind)
    rank = _INPUT_RANK[kind]
    if kind == DENSE:
        shape = (batch, m_in)
    else:
        shape = (batch, m_in) + (n,) * (rank - 2)
    return torch.randn(shape, generator=generator, dtype=DTYPE)
