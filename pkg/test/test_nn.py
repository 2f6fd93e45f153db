import pytest

import numpy as np
from scipy.special import ndtr

from flowcritic.critic import MainCritic, distill_loss, quantile_levels
from flowcritic.exceptions import ContractError, NumericError, ShapeError
from flowcritic.flow import VectorFieldNet, fm_loss
from flowcritic.nn import (
  AdamState, MlpParams, Tensor, adam_step, backprop, concat,
  ema_update, gelu, mlp_forward, no_grad,
)

from agent_harness import numerical_gradient, relative_error

def check_gradients(loss_fn, params, eps=1e-5):
  loss = loss_fn()
  grads = backprop(loss, params)

  def value():
    with no_grad():
      return loss_fn().item()

  errors = []
  for tensor, grad in zip(params.tensors(), grads):
    numeric = numerical_gradient(value, tensor.data, eps=eps)
    errors.append(relative_error(grad, numeric).ravel())
  return np.concatenate(errors)

def random_mlp(rng, in_dim, out_dim):
  depth = rng.integers(0, 3)
  hidden = [ int(rng.integers(2, 17)) for _ in range(depth) ]
  return MlpParams.initialize(in_dim, hidden, out_dim, rng)

def test_gelu():
  assert gelu(0.0) == 0.0
  assert abs(gelu(1.0) - ndtr(1.0)) < 1e-15
  x = np.linspace(-3, 3, 7)
  assert np.allclose(gelu(x), x * ndtr(x))
  assert np.allclose(gelu(Tensor(x)).data, x * ndtr(x))

def test_gelu_odd_part_is_identity():
  x = np.linspace(-10.0, 10.0, 2001)
  assert np.max(np.abs(gelu(x) - gelu(-x) - x)) <= 1e-12

def test_elementwise_gradients():
  x = Tensor(np.array([ 1.0, -2.0, 3.0 ]), requires_grad=True)
  y = (x * x).sum() + (x / 2.0).sum() - (x ** 3).mean()
  y.backward()
  expected = 2 * x.data + 0.5 - x.data ** 2
  assert np.allclose(x.grad, expected)

def test_broadcast_gradients():
  a = Tensor(np.ones((3, 2)), requires_grad=True)
  b = Tensor(np.array([ 1.0, 2.0 ]), requires_grad=True)
  ((a + b) * 2.0).sum().backward()
  assert np.allclose(a.grad, 2.0)
  assert np.allclose(b.grad, [ 6.0, 6.0 ])

def test_matmul_concat_and_gather_gradients():
  rng = np.random.default_rng(1)
  w = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
  x = Tensor(rng.standard_normal((2, 3)), requires_grad=True)

  def loss():
    joined = concat([ x @ w, x ], axis=1)
    order = np.argsort(joined.data, axis=1)
    return (joined.take_along_axis(order, axis=1)[:, :3] ** 2).sum()

  out = loss()
  out.backward()

  def value():
    with no_grad():
      return loss().item()

  assert np.all(relative_error(w.grad, numerical_gradient(value, w.data)) < 1e-5)
  assert np.all(relative_error(x.grad, numerical_gradient(value, x.data)) < 1e-5)

def test_backward_needs_scalar():
  x = Tensor(np.ones(3), requires_grad=True)
  with pytest.raises(ContractError):
    (x * 2.0).backward()

def test_no_grad_records_nothing():
  x = Tensor(np.ones(3), requires_grad=True)
  with no_grad():
    y = (x * 2.0).sum()
  assert not y.requires_grad
  z = (x * 2.0).sum()
  assert z.requires_grad

def test_mlp_shapes():
  rng = np.random.default_rng(0)
  net = MlpParams.initialize(3, [ 4, 5 ], 2, rng)
  assert net.in_dim == 3
  assert net.out_dim == 2
  assert net.hidden_dims == [ 4, 5 ]
  assert net.num_params == (3*4 + 4) + (4*5 + 5) + (5*2 + 2)
  assert mlp_forward(net, np.zeros((7, 3))).shape == (7, 2)
  assert net(np.zeros(3)).shape == (2,)

  with pytest.raises(ShapeError):
    net(np.zeros((7, 4)))

  with pytest.raises(ShapeError):
    MlpParams([ (np.zeros((4, 3)), np.zeros(4)), (np.zeros((2, 5)), np.zeros(2)) ])

def test_glorot_bounds():
  rng = np.random.default_rng(0)
  net = MlpParams.initialize(10, [ 30 ], 5, rng)
  for (weight, bias), (fan_in, fan_out) in zip(net.layers, [ (10, 30), (30, 5) ]):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    assert np.all(np.abs(weight.data) <= limit)
    assert np.all(bias.data == 0)

def test_clone_frozen_flat():
  rng = np.random.default_rng(0)
  net = MlpParams.initialize(2, [ 3 ], 1, rng)

  clone = net.clone()
  clone.layers[0][0].data[...] = 0
  assert not np.all(net.layers[0][0].data == 0)

  frozen = net.frozen()
  assert all(not t.requires_grad for t in frozen.tensors())
  net.layers[0][1].data[...] = 7.0
  assert np.all(frozen.layers[0][1].data == 7.0)

  flat = net.flat()
  other = MlpParams.zeros(2, [ 3 ], 1)
  other.load_flat(flat)
  assert np.array_equal(other.flat(), flat)

  with pytest.raises(ShapeError):
    other.load_flat(flat[:-1])

def test_gradients_match_finite_differences():
  rng = np.random.default_rng(42)
  levels = quantile_levels(4)

  all_errors = []
  for trial in range(20):
    in_dim = int(rng.integers(1, 5))

    # mse
    net = random_mlp(rng, in_dim, 2)
    x = rng.standard_normal((6, in_dim))
    y = rng.standard_normal((6, 2))
    all_errors.append(check_gradients(lambda: ((net(x) - y) ** 2).mean(), net))

    # flow matching
    field = VectorFieldNet(random_mlp(rng, 1 + in_dim + 1, 1), 1, in_dim)
    x0 = rng.standard_normal((6, 1))
    x1 = rng.standard_normal((6, 1))
    t = rng.uniform(size=(6, 1))
    all_errors.append(check_gradients(lambda: fm_loss(field, x, x0, x1, t), field.net))

    # quantile distillation
    main = MainCritic(random_mlp(rng, in_dim + 1 + 1, 1))
    actions = rng.uniform(-1, 1, size=(6, 1))
    noise = rng.standard_normal((6, 4))
    targets = rng.standard_normal((6, 4)) * 2.0
    all_errors.append(check_gradients(
      lambda: distill_loss(main, x, actions, targets, levels, 1.0, None, noise=noise),
      main.net
    ))

  errors = np.concatenate(all_errors)
  assert np.mean(errors <= 1e-4) >= 0.99

def test_backprop_rejects_nonfinite_loss():
  net = MlpParams.zeros(1, [], 1)
  with pytest.raises(NumericError):
    backprop(Tensor(np.array(np.nan)), net)
  with pytest.raises(ContractError):
    backprop(Tensor(np.ones(2)), net)

def test_backprop_fills_missing_gradients():
  rng = np.random.default_rng(0)
  used = MlpParams.initialize(2, [], 1, rng)
  unused = MlpParams.initialize(2, [], 1, rng)
  grads = backprop(used(np.ones((3, 2))).sum(), [ used, unused ])
  assert len(grads) == 4
  assert np.all(grads[2] == 0) and np.all(grads[3] == 0)

def test_adam_first_step():
  net = MlpParams([ (np.zeros((1, 2)), np.zeros(1)) ])
  opt = AdamState.for_params(net, lr=0.1)
  grads = [ np.array([[ 2.0, -0.5 ]]), np.array([ 1e-3 ]) ]
  adam_step(opt, net, grads)

  # the first bias-corrected step has magnitude lr * |g| / (|g| + eps)
  assert np.allclose(net.layers[0][0].data, [[ -0.1, 0.1 ]], atol=1e-6)
  assert np.allclose(net.layers[0][1].data, [ -0.1 ], atol=1e-5)
  assert opt.step == 1

def test_adam_rejects_bad_gradients_without_mutating():
  net = MlpParams([ (np.ones((1, 2)), np.ones(1)) ])
  opt = AdamState.for_params(net, lr=0.1)
  with pytest.raises(NumericError):
    adam_step(opt, net, [ np.array([[ np.nan, 0.0 ]]), np.zeros(1) ])
  with pytest.raises(ShapeError):
    adam_step(opt, net, [ np.zeros((2, 1)), np.zeros(1) ])
  assert np.all(net.flat() == 1.0)
  assert opt.step == 0

def test_adam_minimizes_quadratic():
  rng = np.random.default_rng(0)
  net = MlpParams.initialize(1, [], 1, rng)
  opt = AdamState.for_params(net, lr=0.05)
  x = np.linspace(-1, 1, 20).reshape(-1, 1)
  y = 3.0 * x - 1.0
  for _ in range(2000):
    backprop(((net(x) - y) ** 2).mean(), net)
    adam_step(opt, net)
  assert abs(net.layers[0][0].data[0, 0] - 3.0) < 5e-2
  assert abs(net.layers[0][1].data[0] + 1.0) < 5e-2

def test_ema_update():
  target = MlpParams([ (np.zeros((1, 2)), np.zeros(1)) ])
  online = MlpParams([ (np.ones((1, 2)) * 4.0, np.ones(1) * 4.0) ])

  ema_update(target, online, 0.25)
  assert np.allclose(target.flat(), 1.0)

  ema_update(target, online, 1.0)
  assert np.array_equal(target.flat(), online.flat())

  with pytest.raises(ContractError):
    ema_update(target, online, 0.0)
  with pytest.raises(ContractError):
    ema_update(target, online, 1.5)
  with pytest.raises(ShapeError):
    ema_update(target, MlpParams.zeros(2, [ 3 ], 1), 0.5)

def test_ema_stays_between_endpoints():
  rng = np.random.default_rng(3)
  target = MlpParams.initialize(4, [ 8 ], 2, rng)
  online = MlpParams.initialize(4, [ 8 ], 2, rng)
  before = target.flat()
  ema_update(target, online, 0.005)
  after = target.flat()
  low = np.minimum(before, online.flat())
  high = np.maximum(before, online.flat())
  assert np.all(after >= low) and np.all(after <= high)
