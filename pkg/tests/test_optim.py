import math

import pytest
import torch

from utils.optim import AdamState, GraphAdam, NonFiniteGradientError, adam_step
from utils.utils import DTYPE


def t(values):
    return torch.tensor(values, dtype=DTYPE)


def test_zero_gradient_leaves_params_and_counts_step():
    params = [t([1.0, -2.0]), t([[0.5]])]
    new, state = adam_step(params, [torch.zeros(2, dtype=DTYPE), torch.zeros((1, 1), dtype=DTYPE)],
                           AdamState(), lr=1e-3)
    assert all(torch.equal(a, b) for a, b in zip(new, params))
    assert state.t == 1


def test_first_step_is_sign_scaled():
    params = [t([1.0, 1.0, 1.0])]
    grads = [t([0.3, -2.0, 1e-3])]
    lr, eps = 1e-2, 1e-8
    new, _ = adam_step(params, grads, AdamState(), lr=lr, epsilon=eps)
    expected = params[0] - lr * grads[0] / (grads[0].abs() + eps)
    assert torch.allclose(new[0], expected, atol=1e-12)


def test_inputs_are_not_mutated():
    params = [t([1.0])]
    grads = [t([0.5])]
    state = AdamState()
    adam_step(params, grads, state, lr=0.1)
    assert params[0].item() == 1.0
    assert state.t == 0 and not state.m


def test_zero_learning_rate_keeps_params():
    params = [t([0.25, -4.0])]
    state = AdamState()
    for step in range(3):
        new, state = adam_step(params, [t([1.0, -3.0 * step])], state, lr=0.0)
        assert torch.equal(new[0], params[0])
    assert state.t == 3


def test_moments_follow_recurrence():
    params, grads = [t([0.0])], [t([2.0])]
    _, state = adam_step(params, grads, AdamState(), lr=0.1, beta1=0.5, beta2=0.999)
    _, state = adam_step(params, grads, state, lr=0.1, beta1=0.5, beta2=0.999)
    assert state.m[0].item() == pytest.approx(0.5 * 1.0 + 0.5 * 2.0)
    assert state.v[0].item() == pytest.approx(0.999 * 0.004 + 0.001 * 4.0)
    assert state.t == 2


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_gradient_is_refused(bad):
    with pytest.raises(NonFiniteGradientError):
        adam_step([t([1.0, 2.0])], [t([0.0, bad])], AdamState(), lr=1e-3)
    assert issubclass(NonFiniteGradientError, FloatingPointError)


def test_shape_and_argument_errors():
    with pytest.raises(ValueError):
        adam_step([t([1.0, 2.0])], [t([1.0])], AdamState(), lr=1e-3)
    with pytest.raises(ValueError):
        adam_step([t([1.0])], [], AdamState(), lr=1e-3)
    with pytest.raises(ValueError):
        adam_step([t([1.0])], [t([1.0])], AdamState(), lr=-1.0)
    with pytest.raises(ValueError):
        adam_step([t([1.0])], [t([1.0])], AdamState(), lr=1e-3, beta1=1.0)


def test_graph_adam_matches_adam_step():
    weight = torch.nn.Parameter(t([[0.5, -1.0], [2.0, 0.0]]))
    bias = torch.nn.Parameter(t([0.1, 0.2]))
    optimizer = GraphAdam([weight, bias], lr=1e-2, betas=(0.5, 0.999), eps=1e-8)

    params, state = [weight.detach().clone(), bias.detach().clone()], AdamState()
    x = t([1.0, 3.0])
    for _ in range(3):
        optimizer.zero_grad()
        ((weight @ x + bias) ** 2).sum().backward()
        grads = [weight.grad.clone(), bias.grad.clone()]
        optimizer.step()
        params, state = adam_step(params, grads, state, lr=1e-2)
        assert torch.equal(weight.detach(), params[0])
        assert torch.equal(bias.detach(), params[1])
    assert optimizer.steps_taken == 3


def test_graph_adam_treats_missing_gradient_as_zero():
    used = torch.nn.Parameter(t([1.0]))
    unused = torch.nn.Parameter(t([5.0]))
    optimizer = GraphAdam([used, unused], lr=0.1)
    (used * 2.0).sum().backward()
    optimizer.step()
    assert unused.item() == 5.0
    assert used.item() < 1.0
