"""
ADAM with bias correction, written out so that every update is reproducible
bit for bit on one thread.
"""
from dataclasses import dataclass, field
from typing import List

import torch
from torch.optim import Optimizer


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    m: List[torch.Tensor] = field(default_factory=list)
    v: List[torch.Tensor] = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([torch.zeros_like(p) for p in params], [torch.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state, lr, beta1=0.5, beta2=0.999, epsilon=1e-8):
    """
    One bias-corrected ADAM update.

    :param params: list of tensors
    :param grads: list of tensors, same shapes as params
    :param state: AdamState; empty moments are initialized to zero
    :return: (new params, new state); inputs are left untouched
    """
    if lr < 0:
        raise ValueError("learning rate must be nonnegative, got %r" % lr)
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ValueError("betas must lie in [0, 1)")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if len(params) != len(grads):
        raise ValueError("got %d parameters but %d gradients" % (len(params), len(grads)))
    if not state.m:
        state = AdamState.zeros_like(params)
    if len(state.m) != len(params) or len(state.v) != len(params):
        raise ValueError("ADAM moments do not match the parameter list")

    for idx, (p, g, m) in enumerate(zip(params, grads, state.m)):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError("shape mismatch at parameter %d: %s vs %s"
                             % (idx, tuple(p.shape), tuple(g.shape)))
        if not torch.isfinite(g).all():
            raise NonFiniteGradientError("non-finite gradient at parameter %d" % idx)

    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        new_params.append(p - lr * m_hat / (torch.sqrt(v_hat) + epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


class GraphAdam(Optimizer):
    """torch optimizer front end for `adam_step`, one AdamState per parameter group."""

    def __init__(self, params, lr=1e-3, betas=(0.5, 0.999), eps=1e-8):
        if lr < 0:
            raise ValueError("Invalid learning rate: {}".format(lr))
        defaults = dict(lr=lr, betas=betas, eps=eps)
        super(GraphAdam, self).__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()

        for group_idx, group in enumerate(self.param_groups):
            params = group['params']
            grads = [torch.zeros_like(p) if p.grad is None else p.grad for p in params]
            state = self.state.setdefault('group%d' % group_idx, {}).get('adam', AdamState())
            beta1, beta2 = group['betas']
            updated, state = adam_step([p.detach() for p in params], grads, state,
                                       group['lr'], beta1, beta2, group['eps'])
            for p, new in zip(params, updated):
                p.copy_(new)
            self.state['group%d' % group_idx]['adam'] = state
        return loss

    @property
    def steps_taken(self):
        states = [s['adam'].t for s in self.state.values() if 'adam' in s]
        return max(states) if states else 0
