import math

import torch
import torch.nn as nn

from .functional import (DENSE, E2E_CONV, E2E_DECONV, E2N_CONV, N2E_DECONV, NODE_TO_GRAPH,
                         LayerKernels, graph_layer)
from utils.utils import DTYPE


class GraphKernelLayer(nn.Module):
    """
    One directed graph layer: incoming kernels phi and outgoing kernels psi,
    both [in_maps, out_maps, num_nodes], plus a bias per output map.
    """
    kind = None
    uses_psi = True

    def __init__(self, num_nodes, in_maps, out_maps, activation='relu', use_bias=True):
        """
        Parameters:
            num_nodes: Node count N the kernels are bound to
            in_maps: Number of input feature maps
            out_maps: Number of output feature maps
            activation: linear, relu or sigmoid
            use_bias: Set to False for bias-free layers (adjointness checks)
        """
        super(GraphKernelLayer, self).__init__()
        self.num_nodes = num_nodes
        self.in_maps = in_maps
        self.out_maps = out_maps
        self.activation = activation

        self.phi = nn.Parameter(torch.zeros((in_maps, out_maps, num_nodes), dtype=DTYPE))
        if self.uses_psi:
            self.psi = nn.Parameter(torch.zeros((in_maps, out_maps, num_nodes), dtype=DTYPE))
        else:
            self.register_parameter('psi', None)
        if use_bias:
            self.bias = nn.Parameter(torch.zeros((out_maps,), dtype=DTYPE))
        else:
            self.register_parameter('bias', None)

    @property
    def kernel_width(self):
        # kernel entries feeding one output entry, per input map
        return self.num_nodes * (2 if self.uses_psi else 1)

    def init_scale(self):
        fan_in = self.in_maps * self.kernel_width
        fan_out = self.out_maps * self.kernel_width
        return math.sqrt(6.0 / (fan_in + fan_out))

    @torch.no_grad()
    def reset_parameters(self, generator):
        scale = self.init_scale()
        self.phi.uniform_(-scale, scale, generator=generator)
        if self.psi is not None:
            self.psi.uniform_(-scale, scale, generator=generator)
        if self.bias is not None:
            self.bias.zero_()

    def kernels(self):
        return LayerKernels(self.phi, self.psi, self.bias, self.activation)

    def forward(self, inputs, residual=None):
        return graph_layer(self.kind, inputs, self.kernels(), residual)

    def extra_repr(self):
        return "kind={}, n={}, maps={}->{}, activation={}".format(
            self.kind, self.num_nodes, self.in_maps, self.out_maps, self.activation)


class EdgeToEdgeConv(GraphKernelLayer):
    kind = E2E_CONV


class EdgeToNodeConv(GraphKernelLayer):
    kind = E2N_CONV


class NodeToEdgeDeconv(GraphKernelLayer):
    kind = N2E_DECONV


class EdgeToEdgeDeconv(GraphKernelLayer):
    kind = E2E_DECONV


class NodeToGraph(GraphKernelLayer):
    """Pools each node map into one value per output map through a length-N kernel."""
    kind = NODE_TO_GRAPH
    uses_psi = False


class Dense(nn.Module):
    kind = DENSE

    def __init__(self, in_features, out_features, activation='relu', use_bias=True):
        super(Dense, self).__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.activation = activation
        self.weight = nn.Parameter(torch.zeros((out_features, in_features), dtype=DTYPE))
        if use_bias:
            self.bias = nn.Parameter(torch.zeros((out_features,), dtype=DTYPE))
        else:
            self.register_parameter('bias', None)

    def init_scale(self):
        return math.sqrt(6.0 / (self.in_features + self.out_features))

    @torch.no_grad()
    def reset_parameters(self, generator):
        scale = self.init_scale()
        self.weight.uniform_(-scale, scale, generator=generator)
        if self.bias is not None:
            self.bias.zero_()

    def kernels(self):
        return LayerKernels(self.weight, None, self.bias, self.activation)

    def forward(self, inputs, residual=None):
        return graph_layer(self.kind, inputs, self.kernels(), residual)

    def extra_repr(self):
        return "in={}, out={}, activation={}".format(self.in_features, self.out_features, self.activation)
