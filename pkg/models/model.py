from dataclasses import asdict, dataclass, fields
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from data.graph import DirectedGraph
from models.layers import (Dense, EdgeToEdgeConv, EdgeToEdgeDeconv, EdgeToNodeConv, NodeToEdgeDeconv,
                           NodeToGraph)
from utils.utils import DTYPE, graphs_to_tensor, tensor_to_graphs, torch_generator

TRANSLATOR = 'translator'
DISCRIMINATOR = 'discriminator'
CLASSIFIER = 'classifier'
ROLES = (TRANSLATOR, DISCRIMINATOR, CLASSIFIER)

SKIP_MODES = ('add', 'none')
OUTPUT_ACTIVATIONS = ('relu', 'sigmoid')


@dataclass(frozen=True)
class ArchSpec:
    n: int
    encoder_channels: Tuple[int, ...] = (1, 5, 10)
    node_channels: int = 10
    decoder_channels: Tuple[int, ...] = (10, 5, 1)
    disc_edge_channels: Tuple[int, ...] = (1, 5, 10)
    disc_node_channels: int = 10
    disc_graph_channels: int = 10
    fc_width: int = 64
    noise_dim: int = 2
    skip_mode: str = 'add'
    output_activation: str = 'relu'
    use_bias: bool = True

    def __post_init__(self):
        for name in ('encoder_channels', 'decoder_channels', 'disc_edge_channels'):
            object.__setattr__(self, name, tuple(int(c) for c in getattr(self, name)))
        self.validate()

    def validate(self):
        if self.n < 1:
            raise ValueError("node count must be positive")
        channels = self.encoder_channels + self.decoder_channels + self.disc_edge_channels
        counts = (self.node_channels, self.disc_node_channels, self.disc_graph_channels, self.fc_width)
        if any(c < 1 for c in channels + counts):
            raise ValueError("every channel count must be positive")
        if self.noise_dim < 0:
            raise ValueError("noise_dim must be nonnegative")
        if len(self.encoder_channels) < 2 or len(self.decoder_channels) < 2:
            raise ValueError("encoder and decoder need at least two channel entries")
        if len(self.disc_edge_channels) < 2:
            raise ValueError("discriminator edge stack needs at least two channel entries")
        if self.encoder_channels[0] != 1 or self.disc_edge_channels[0] != 1:
            raise ValueError("edge stacks start from the single input adjacency map")
        if self.decoder_channels[-1] != 1:
            raise ValueError("decoder must end in a single map")
        if self.skip_mode not in SKIP_MODES:
            raise ValueError("skip_mode must be one of %s" % (SKIP_MODES,))
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError("output_activation must be one of %s" % (OUTPUT_ACTIVATIONS,))
        if self.skip_mode == 'add':
            for k in range(len(self.decoder_channels)):
                source = len(self.encoder_channels) - 1 - k
                if source >= 1 and self.encoder_channels[source] != self.decoder_channels[k]:
                    raise ValueError("skip connection needs decoder map %d (%d channels) to match "
                                     "encoder map %d (%d channels)"
                                     % (k, self.decoder_channels[k], source, self.encoder_channels[source]))

    @classmethod
    def from_hparams(cls, hparams, n):
        names = {f.name for f in fields(cls)} - {'n'}
        return cls(n=n, **{name: getattr(hparams, name) for name in names})

    def to_dict(self):
        record = asdict(self)
        for name in ('encoder_channels', 'decoder_channels', 'disc_edge_channels'):
            record[name] = list(record[name])
        return record


def _pairs(channels):
    return list(zip(channels[:-1], channels[1:]))


class GraphTranslator(nn.Module):
    """
    Encoder: edge-to-edge convolutions, then an edge-to-node convolution into
    node representations. Noise maps are appended at that bottleneck.
    Decoder: node-to-edge deconvolution, then edge-to-edge deconvolutions.
    With skip_mode 'add' each encoder edge tensor is added to the
    pre-activation of the decoder tensor of the same shape.
    """

    def __init__(self, arch):
        super(GraphTranslator, self).__init__()
        self.arch = arch
        n, bias = arch.n, arch.use_bias
        self.encoder = nn.ModuleList([EdgeToEdgeConv(n, a, b, 'relu', bias)
                                      for a, b in _pairs(arch.encoder_channels)])
        self.node_encoder = EdgeToNodeConv(n, arch.encoder_channels[-1], arch.node_channels, 'relu', bias)
        self.node_decoder = NodeToEdgeDeconv(n, arch.node_channels + arch.noise_dim,
                                             arch.decoder_channels[0], 'relu', bias)
        deconv_pairs = _pairs(arch.decoder_channels)
        self.decoder = nn.ModuleList([
            EdgeToEdgeDeconv(n, a, b, arch.output_activation if k == len(deconv_pairs) - 1 else 'relu', bias)
            for k, (a, b) in enumerate(deconv_pairs)])

    def _skip(self, skips, k):
        """Encoder edge tensor feeding decoder output k, if any."""
        index = len(skips) - 1 - k
        if self.arch.skip_mode != 'add' or index < 0:
            return None
        return skips[index]

    def forward(self, inputs, noise=None, trace=None):
        """
        :param inputs: [batch, N, N] input adjacency
        :param noise: [batch, noise_dim, N] node-level noise maps
        :param trace: optional list collecting (layer name, per-sample output shape)
        :return: [batch, N, N] generated adjacency
        """
        arch = self.arch
        if inputs.dim() != 3 or inputs.shape[1:] != (arch.n, arch.n):
            raise ValueError("translator expects [batch, %d, %d] inputs, got %s"
                             % (arch.n, arch.n, tuple(inputs.shape)))
        x = inputs.unsqueeze(1)
        skips = []
        for idx, layer in enumerate(self.encoder):
            x = layer(x)
            skips.append(x)
            _record(trace, 'encoder.%d' % idx, x)

        z = self.node_encoder(x)
        _record(trace, 'node_encoder', z)
        if arch.noise_dim:
            expected = (inputs.shape[0], arch.noise_dim, arch.n)
            if noise is None or tuple(noise.shape) != expected:
                raise ValueError("translator expects noise of shape %s" % (expected,))
            z = torch.cat((z, noise), dim=1)

        y = self.node_decoder(z, residual=self._skip(skips, 0))
        _record(trace, 'node_decoder', y)
        for idx, layer in enumerate(self.decoder, start=1):
            y = layer(y, residual=self._skip(skips, idx))
            _record(trace, 'decoder.%d' % (idx - 1), y)
        assert y.shape[1] == 1, "decoder must end in a single map"
        return y.squeeze(1)


class GraphDiscriminator(nn.Module):
    """
    Conditional discriminator over (target, input) pairs: one edge-to-edge
    stack per channel, concatenated, an edge-to-node convolution, a
    node-to-graph pooling layer, a dense layer and a sigmoid output. With
    conditional=False it is a single-channel graph classifier.
    """

    def __init__(self, arch, conditional=True):
        super(GraphDiscriminator, self).__init__()
        self.arch = arch
        self.conditional = conditional
        n, bias = arch.n, arch.use_bias
        channels = 2 if conditional else 1
        self.branches = nn.ModuleList([
            nn.ModuleList([EdgeToEdgeConv(n, a, b, 'relu', bias) for a, b in _pairs(arch.disc_edge_channels)])
            for _ in range(channels)])
        self.node_layer = EdgeToNodeConv(n, arch.disc_edge_channels[-1] * channels,
                                         arch.disc_node_channels, 'relu', bias)
        self.graph_layer = NodeToGraph(n, arch.disc_node_channels, arch.disc_graph_channels, 'relu', bias)
        self.hidden = Dense(arch.disc_graph_channels, arch.fc_width, 'relu', bias)
        self.output = Dense(arch.fc_width, 1, 'sigmoid', bias)

    def forward(self, targets, inputs=None, trace=None):
        """
        :param targets: [batch, N, N] graphs to judge
        :param inputs: [batch, N, N] conditioning input graphs (conditional only)
        :return: [batch] probabilities of being real
        """
        n = self.arch.n
        channels = [targets]
        if self.conditional:
            if inputs is None:
                raise ValueError("conditional discriminator needs the input graphs")
            channels.append(inputs)
        for c in channels:
            if c.dim() != 3 or c.shape[1:] != (n, n) or c.shape[0] != targets.shape[0]:
                raise ValueError("discriminator expects [batch, %d, %d] graphs, got %s" % (n, n, tuple(c.shape)))

        features = []
        for branch_idx, (branch, channel) in enumerate(zip(self.branches, channels)):
            x = channel.unsqueeze(1)
            for idx, layer in enumerate(branch):
                x = layer(x)
                _record(trace, 'branch%d.%d' % (branch_idx, idx), x)
            features.append(x)
        x = torch.cat(features, dim=1)

        nodes = self.node_layer(x)
        _record(trace, 'node_layer', nodes)
        embedding = self.graph_layer(nodes)
        _record(trace, 'graph_layer', embedding)
        hidden = self.hidden(embedding)
        _record(trace, 'hidden', hidden)
        probs = self.output(hidden)
        _record(trace, 'output', probs)
        return probs.squeeze(1)


def _record(trace, name, tensor):
    if trace is not None:
        trace.append((name, tuple(tensor.shape[1:])))


def build_model(arch, role):
    if role == TRANSLATOR:
        return GraphTranslator(arch)
    if role == DISCRIMINATOR:
        return GraphDiscriminator(arch, conditional=True)
    if role == CLASSIFIER:
        return GraphDiscriminator(arch, conditional=False)
    raise ValueError("unknown role %r (valid: %s)" % (role, ', '.join(ROLES)))


def init_params(arch, role, seed):
    """Builds a network and draws its kernels uniformly in [-s, s], s = sqrt(6 / (fan_in + fan_out))."""
    arch.validate()
    model = build_model(arch, role)
    generator = torch_generator(seed)
    for module in model.modules():
        if hasattr(module, 'reset_parameters'):
            module.reset_parameters(generator)
    return model


def _layer_count(n, m_in, m_out, width, bias):
    return m_in * m_out * width + (m_out if bias else 0)


def param_count(arch, role):
    n, bias = arch.n, arch.use_bias
    total = 0
    if role == TRANSLATOR:
        for a, b in _pairs(arch.encoder_channels):
            total += _layer_count(n, a, b, 2 * n, bias)
        total += _layer_count(n, arch.encoder_channels[-1], arch.node_channels, 2 * n, bias)
        total += _layer_count(n, arch.node_channels + arch.noise_dim, arch.decoder_channels[0], 2 * n, bias)
        for a, b in _pairs(arch.decoder_channels):
            total += _layer_count(n, a, b, 2 * n, bias)
        return total
    if role in (DISCRIMINATOR, CLASSIFIER):
        channels = 2 if role == DISCRIMINATOR else 1
        for a, b in _pairs(arch.disc_edge_channels):
            total += channels * _layer_count(n, a, b, 2 * n, bias)
        total += _layer_count(n, arch.disc_edge_channels[-1] * channels, arch.disc_node_channels, 2 * n, bias)
        total += _layer_count(n, arch.disc_node_channels, arch.disc_graph_channels, n, bias)
        total += _layer_count(n, arch.disc_graph_channels, arch.fc_width, 1, bias)
        total += _layer_count(n, arch.fc_width, 1, 1, bias)
        return total
    raise ValueError("unknown role %r" % (role,))


def _stored_layout(model):
    """(parameter, transposed) in checkpoint order; dense weights are stored [in, out]."""
    dense_weights = {id(m.weight) for m in model.modules() if isinstance(m, Dense)}
    return [(p, id(p) in dense_weights) for p in model.parameters()]


def flat_parameters(model):
    """
    Parameters as one vector in registration order (encoder first; phi, psi,
    bias per layer), every block input-map-major.
    """
    blocks = [(p.t() if transposed else p).reshape(-1) for p, transposed in _stored_layout(model)]
    return torch.cat(blocks).detach().clone()


def load_flat_parameters(model, vector):
    vector = torch.as_tensor(vector, dtype=DTYPE)
    layout = _stored_layout(model)
    expected = sum(p.numel() for p, _ in layout)
    if vector.numel() != expected:
        raise ValueError("expected %d parameters, got %d" % (expected, vector.numel()))
    offset = 0
    with torch.no_grad():
        for p, transposed in layout:
            block = vector[offset:offset + p.numel()]
            if transposed:
                p.copy_(block.view(p.shape[1], p.shape[0]).t())
            else:
                p.copy_(block.view_as(p))
            offset += p.numel()
    return model


def shape_trace(model, role=None):
    """Per-layer output shapes (batch dropped) for one zero-valued sample."""
    arch = model.arch
    graphs = torch.zeros((1, arch.n, arch.n), dtype=DTYPE)
    trace = []
    with torch.no_grad():
        if isinstance(model, GraphTranslator):
            model(graphs, torch.zeros((1, arch.noise_dim, arch.n), dtype=DTYPE), trace=trace)
        elif model.conditional:
            model(graphs, graphs, trace=trace)
        else:
            model(graphs, trace=trace)
    return trace


@dataclass
class ForwardCache:
    """Live output of a forward pass kept for one backward pass."""
    model: nn.Module
    output: torch.Tensor
    consumed: bool = False


def _check_graph(g, n, name):
    if g.n != n:
        raise ValueError("%s has %d nodes but the model is bound to n=%d" % (name, g.n, n))


def translator_forward(model, g_x, noise, cache=False):
    arch = model.arch
    _check_graph(g_x, arch.n, 'input graph')
    noise = torch.as_tensor(np.asarray(noise, dtype=np.float64), dtype=DTYPE).reshape(-1)
    if noise.numel() != arch.noise_dim * arch.n:
        raise ValueError("noise must have noise_dim * n = %d entries, got %d"
                         % (arch.noise_dim * arch.n, noise.numel()))
    inputs = graphs_to_tensor([g_x])
    noise = noise.view(1, arch.noise_dim, arch.n)
    if cache:
        output = model(inputs, noise)
        return tensor_to_graphs(output)[0], ForwardCache(model, output)
    with torch.no_grad():
        output = model(inputs, noise)
    return tensor_to_graphs(output)[0], None


def discriminator_forward(model, g_y, g_x, cache=False):
    arch = model.arch
    _check_graph(g_y, arch.n, 'target graph')
    _check_graph(g_x, arch.n, 'input graph')
    targets, inputs = graphs_to_tensor([g_y]), graphs_to_tensor([g_x])
    if cache:
        output = model(targets, inputs)
        return float(output[0]), ForwardCache(model, output)
    with torch.no_grad():
        output = model(targets, inputs)
    return float(output[0]), None


def network_backward(model, cache, grad_output):
    """
    Gradients of <output, grad_output> for every parameter of `model`,
    chained through the layers' hand-derived backward passes.

    :return: dict parameter name -> gradient tensor
    """
    if cache is None or cache.consumed:
        raise ValueError("backward needs a fresh cache from a forward pass with cache=True")
    if cache.model is not model:
        raise ValueError("cache was produced by a different model")
    grad_output = torch.as_tensor(grad_output, dtype=DTYPE).reshape(cache.output.shape)
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(cache.output, params, grad_outputs=grad_output, allow_unused=True)
    cache.consumed = True
    return {name: torch.zeros_like(p) if g is None else g for name, p, g in zip(names, params, grads)}


def translator_backward(model, cache, grad_output_graph):
    if isinstance(grad_output_graph, DirectedGraph):
        grad_output_graph = grad_output_graph.weights
    grad = torch.as_tensor(np.asarray(grad_output_graph, dtype=np.float64), dtype=DTYPE)
    return network_backward(model, cache, grad.unsqueeze(0))
