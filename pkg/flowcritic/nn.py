"""
Dense network substrate for flowcritic.

Everything is float64 numpy. A Tensor records the closure that
maps its output gradient to gradients of its parents, so calling
backward() on a scalar loss walks the recorded graph once in
reverse topological order and deposits gradients on the leaves
(the parameter tensors inside MlpParams).

  from flowcritic.nn import MlpParams, AdamState, backprop, adam_step

  net = MlpParams.initialize(3, [64, 64], 1, rng)
  opt = AdamState.for_params(net, lr=3e-4)
  loss = ((net(x) - y) ** 2).mean()
  backprop(loss, net)
  adam_step(opt, net)

Wrap forward passes through parameters that must not train
(bootstrap targets, evaluation) in `with no_grad():` so that no
graph is recorded at all.
"""
from __future__ import print_function

import contextlib
import math
import threading

import numpy as np
from scipy.special import ndtr

from .exceptions import ContractError, NumericError, ShapeError

_tape = threading.local()

def grad_enabled():
  return getattr(_tape, 'enabled', True)

@contextlib.contextmanager
def no_grad():
  """Disable graph recording on this thread for the enclosed block."""
  previous = grad_enabled()
  _tape.enabled = False
  try:
    yield
  finally:
    _tape.enabled = previous

def _unbroadcast(grad, shape):
  """Sum a broadcast gradient back down to the parent's shape."""
  while grad.ndim > len(shape):
    grad = grad.sum(axis=0)
  for axis, size in enumerate(shape):
    if size == 1 and grad.shape[axis] != 1:
      grad = grad.sum(axis=axis, keepdims=True)
  return grad

def as_tensor(value):
  if isinstance(value, Tensor):
    return value
  return Tensor(value)

class Tensor(object):
  """
  A float64 array plus the bookkeeping needed for reverse mode
  differentiation.

  data: numpy array holding the values
  grad: accumulated gradient (leaves only), same shape as data
  requires_grad: whether gradients should flow into this tensor
  """
  __slots__ = ('data', 'grad', 'requires_grad', '_parents', '_backward')
  __array_ufunc__ = None # make ndarray (op) Tensor defer to Tensor

  def __init__(self, data, requires_grad=False):
    self.data = np.asarray(data, dtype=np.float64)
    self.grad = None
    self.requires_grad = bool(requires_grad)
    self._parents = ()
    self._backward = None

  @staticmethod
  def _result(data, parents, backward):
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
      out.requires_grad = True
      out._parents = parents
      out._backward = backward
    return out

  @property
  def shape(self):
    return self.data.shape

  @property
  def ndim(self):
    return self.data.ndim

  @property
  def size(self):
    return self.data.size

  @property
  def T(self):
    a = self
    def backward(g):
      return (g.T,)
    return Tensor._result(a.data.T, (a,), backward)

  def item(self):
    return float(self.data.reshape(-1)[0])

  def numpy(self):
    return self.data

  def detach(self):
    return Tensor(self.data)

  def __len__(self):
    return len(self.data)

  def __repr__(self):
    return "Tensor({}, requires_grad={})".format(
      np.array2string(self.data, precision=4, threshold=8), self.requires_grad
    )

  def __add__(self, other):
    a, b = self, as_tensor(other)
    def backward(g):
      return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    return Tensor._result(a.data + b.data, (a, b), backward)

  def __radd__(self, other):
    return as_tensor(other) + self

  def __sub__(self, other):
    a, b = self, as_tensor(other)
    def backward(g):
      return (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))
    return Tensor._result(a.data - b.data, (a, b), backward)

  def __rsub__(self, other):
    return as_tensor(other) - self

  def __neg__(self):
    a = self
    def backward(g):
      return (-g,)
    return Tensor._result(-a.data, (a,), backward)

  def __mul__(self, other):
    a, b = self, as_tensor(other)
    def backward(g):
      return (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))
    return Tensor._result(a.data * b.data, (a, b), backward)

  def __rmul__(self, other):
    return as_tensor(other) * self

  def __truediv__(self, other):
    a, b = self, as_tensor(other)
    def backward(g):
      return (
        _unbroadcast(g / b.data, a.shape),
        _unbroadcast(-g * a.data / (b.data ** 2), b.shape),
      )
    return Tensor._result(a.data / b.data, (a, b), backward)

  def __rtruediv__(self, other):
    return as_tensor(other) / self

  def __pow__(self, exponent):
    if isinstance(exponent, Tensor):
      raise ContractError("Only scalar exponents are supported.")
    a, k = self, float(exponent)
    def backward(g):
      return (g * k * a.data ** (k - 1.0),)
    return Tensor._result(a.data ** k, (a,), backward)

  def __matmul__(self, other):
    a, b = self, as_tensor(other)
    if a.ndim > 2 or b.ndim > 2:
      raise ShapeError("matmul supports 1-D and 2-D operands, got {} @ {}".format(a.shape, b.shape))
    def backward(g):
      x, y = a.data, b.data
      if x.ndim == 1 and y.ndim == 1:
        return (g * y, g * x)
      if y.ndim == 1:
        return (np.outer(g, y), x.T @ g)
      if x.ndim == 1:
        return (y @ g, np.outer(x, g))
      return (g @ y.T, x.T @ g)
    try:
      out = a.data @ b.data
    except ValueError as err:
      raise ShapeError(str(err))
    return Tensor._result(out, (a, b), backward)

  def __rmatmul__(self, other):
    return as_tensor(other) @ self

  def __getitem__(self, index):
    a = self
    def backward(g):
      full = np.zeros_like(a.data)
      np.add.at(full, index, g)
      return (full,)
    return Tensor._result(a.data[index], (a,), backward)

  def sum(self, axis=None, keepdims=False):
    a = self
    def backward(g):
      if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
      return (np.broadcast_to(g, a.shape),)
    return Tensor._result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)

  def mean(self, axis=None, keepdims=False):
    if axis is None:
      count = self.data.size
    else:
      count = self.data.shape[axis]
    return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

  def reshape(self, *shape):
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
      shape = tuple(shape[0])
    a = self
    def backward(g):
      return (g.reshape(a.shape),)
    return Tensor._result(a.data.reshape(shape), (a,), backward)

  def expand(self, shape):
    """Broadcast to shape without copying; gradients are summed back."""
    a = self
    def backward(g):
      return (_unbroadcast(g, a.shape),)
    return Tensor._result(np.broadcast_to(a.data, shape), (a,), backward)

  def take_along_axis(self, indices, axis):
    """
    Gather along axis with per-row indices. Indices must be a
    permutation along that axis (e.g. an argsort), which keeps
    the scatter in the backward pass collision free.
    """
    a = self
    indices = np.asarray(indices)
    def backward(g):
      full = np.zeros_like(a.data)
      np.put_along_axis(full, indices, g, axis=axis)
      return (full,)
    return Tensor._result(np.take_along_axis(a.data, indices, axis=axis), (a,), backward)

  def clip(self, low, high):
    a = self
    def backward(g):
      inside = (a.data >= low) & (a.data <= high)
      return (g * inside,)
    return Tensor._result(np.clip(a.data, low, high), (a,), backward)

  def gelu(self):
    a = self
    cdf = ndtr(a.data)
    def backward(g):
      pdf = np.exp(-0.5 * a.data ** 2) / math.sqrt(2.0 * math.pi)
      return (g * (cdf + a.data * pdf),)
    return Tensor._result(a.data * cdf, (a,), backward)

  def backward(self, grad=None):
    """
    Accumulate d(self)/d(leaf) into every leaf that requires
    gradients. Without an explicit seed gradient, self must be
    a scalar.
    """
    if grad is None:
      if self.data.size != 1:
        raise ContractError(
          "backward() needs a scalar loss. Got shape {}.".format(self.shape)
        )
      grad = np.ones_like(self.data)

    pending = { id(self): np.asarray(grad, dtype=np.float64) }
    for node in reversed(_topological_order(self)):
      g = pending.pop(id(node), None)
      if g is None:
        continue
      if node._backward is None:
        node.grad = g if node.grad is None else node.grad + g
        continue
      for parent, pg in zip(node._parents, node._backward(g)):
        if pg is None or not parent.requires_grad:
          continue
        key = id(parent)
        pending[key] = pg if key not in pending else pending[key] + pg

def _topological_order(root):
  order = []
  seen = set()
  stack = [ (root, False) ]
  while stack:
    node, expanded = stack.pop()
    if expanded:
      order.append(node)
      continue
    if id(node) in seen:
      continue
    seen.add(id(node))
    stack.append((node, True))
    for parent in node._parents:
      if parent.requires_grad and id(parent) not in seen:
        stack.append((parent, False))
  return order

def concat(tensors, axis=-1):
  tensors = [ as_tensor(t) for t in tensors ]
  sizes = [ t.shape[axis] for t in tensors ]
  splits = np.cumsum(sizes)[:-1]
  def backward(g):
    return tuple(np.split(g, splits, axis=axis))
  try:
    out = np.concatenate([ t.data for t in tensors ], axis=axis)
  except ValueError as err:
    raise ShapeError(str(err))
  return Tensor._result(out, tuple(tensors), backward)

def gelu(x):
  """GELU with the exact Gaussian CDF: x * Phi(x)."""
  if isinstance(x, Tensor):
    return x.gelu()
  out = np.asarray(x, dtype=np.float64) * ndtr(x)
  if np.ndim(out) == 0:
    return float(out)
  return out

def linear(x, weight, bias):
  """x @ weight.T + bias for 1-D or batched x."""
  x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
  def backward(g):
    rows = g.reshape(-1, g.shape[-1])
    inputs = x.data.reshape(-1, x.shape[-1])
    return (g @ weight.data, rows.T @ inputs, rows.sum(axis=0))
  return Tensor._result(x.data @ weight.data.T + bias.data, (x, weight, bias), backward)

class MlpParams(object):
  """
  Stack of dense layers. Hidden layers apply GELU, the output
  layer is linear.

  layers: list of (weight: out x in, bias: out) Tensors
  """
  def __init__(self, layers, requires_grad=True):
    self.layers = []
    for weight, bias in layers:
      weight = weight.data if isinstance(weight, Tensor) else weight
      bias = bias.data if isinstance(bias, Tensor) else bias
      self.layers.append((
        Tensor(weight, requires_grad=requires_grad),
        Tensor(bias, requires_grad=requires_grad),
      ))

    if len(self.layers) == 0:
      raise ShapeError("An MLP needs at least one layer.")

    for weight, bias in self.layers:
      if weight.ndim != 2 or bias.shape != (weight.shape[0],):
        raise ShapeError("Layer weight {} and bias {} do not match.".format(weight.shape, bias.shape))

    for (w1, _), (w2, _) in zip(self.layers[:-1], self.layers[1:]):
      if w1.shape[0] != w2.shape[1]:
        raise ShapeError("Layer dimensions do not chain: {} -> {}".format(w1.shape, w2.shape))

  @classmethod
  def initialize(cls, in_dim, hidden_dims, out_dim, rng):
    """Glorot-uniform weights in +/- sqrt(6 / (fan_in + fan_out)), zero biases."""
    dims = [ int(in_dim) ] + [ int(h) for h in hidden_dims ] + [ int(out_dim) ]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
      limit = math.sqrt(6.0 / (fan_in + fan_out))
      weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
      layers.append((weight, np.zeros(fan_out)))
    return cls(layers)

  @classmethod
  def zeros(cls, in_dim, hidden_dims, out_dim):
    dims = [ int(in_dim) ] + [ int(h) for h in hidden_dims ] + [ int(out_dim) ]
    return cls([
      (np.zeros((fan_out, fan_in)), np.zeros(fan_out))
      for fan_in, fan_out in zip(dims[:-1], dims[1:])
    ])

  @property
  def in_dim(self):
    return self.layers[0][0].shape[1]

  @property
  def out_dim(self):
    return self.layers[-1][0].shape[0]

  @property
  def hidden_dims(self):
    return [ weight.shape[0] for weight, _ in self.layers[:-1] ]

  @property
  def num_params(self):
    return sum(t.size for t in self.tensors())

  def tensors(self):
    out = []
    for weight, bias in self.layers:
      out.extend((weight, bias))
    return out

  def __call__(self, x):
    return mlp_forward(self, x)

  def clone(self):
    return MlpParams([ (w.data.copy(), b.data.copy()) for w, b in self.layers ])

  def frozen(self):
    """Shares storage with self but never receives gradients."""
    frozen = MlpParams.__new__(MlpParams)
    frozen.layers = [ (Tensor(w.data), Tensor(b.data)) for w, b in self.layers ]
    return frozen

  def zero_grad(self):
    for t in self.tensors():
      t.grad = None

  def flat(self):
    return np.concatenate([ t.data.ravel() for t in self.tensors() ])

  def load_flat(self, values):
    values = np.asarray(values, dtype=np.float64)
    if values.size != self.num_params:
      raise ShapeError("Expected {} values, got {}.".format(self.num_params, values.size))
    offset = 0
    for t in self.tensors():
      t.data[...] = values[offset:offset+t.size].reshape(t.shape)
      offset += t.size
    return self

  def same_shape(self, other):
    return [ t.shape for t in self.tensors() ] == [ t.shape for t in other.tensors() ]

  def __repr__(self):
    dims = [ self.in_dim ] + self.hidden_dims + [ self.out_dim ]
    return "MlpParams({})".format(dims)

def mlp_forward(params, input):
  x = as_tensor(input)
  if x.ndim == 0 or x.shape[-1] != params.in_dim:
    raise ShapeError("Network expects inputs of width {}, got shape {}.".format(params.in_dim, x.shape))

  last = len(params.layers) - 1
  for k, (weight, bias) in enumerate(params.layers):
    x = linear(x, weight, bias)
    if k < last:
      x = x.gelu()
  return x

def _param_sets(params):
  if isinstance(params, MlpParams):
    return [ params ]
  return list(params)

def backprop(loss, params):
  """
  Zero the gradients of params (an MlpParams or a list of them),
  backpropagate the scalar loss, and return one gradient array per
  parameter tensor in MlpParams.tensors() order.
  """
  params = _param_sets(params)
  if loss.size != 1:
    raise ContractError("Loss must be a scalar. Got shape {}.".format(loss.shape))
  if not np.all(np.isfinite(loss.data)):
    raise NumericError("Loss is not finite: {}".format(loss.data))

  for p in params:
    p.zero_grad()

  loss.backward()

  grads = []
  for p in params:
    for t in p.tensors():
      if t.grad is None:
        t.grad = np.zeros_like(t.data)
      if not np.all(np.isfinite(t.grad)):
        raise NumericError("Gradient for a {} parameter is not finite.".format(t.shape))
      grads.append(t.grad)
  return grads

def grad_norm(params):
  total = 0.0
  for p in _param_sets(params):
    for t in p.tensors():
      if t.grad is not None:
        total += float(np.sum(t.grad ** 2))
  return math.sqrt(total)

class AdamState(object):
  def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    self.step = 0
    self.lr = float(lr)
    self.beta1 = float(beta1)
    self.beta2 = float(beta2)
    self.eps = float(eps)
    self.m = [ np.zeros(shape) for shape in shapes ]
    self.v = [ np.zeros(shape) for shape in shapes ]

  @classmethod
  def for_params(cls, params, lr, **kwargs):
    return cls([ t.shape for t in params.tensors() ], lr, **kwargs)

  @property
  def num_params(self):
    return sum(m.size for m in self.m)

def adam_step(state, params, grads=None):
  """
  Bias-corrected Adam update applied in place. grads defaults to
  the gradients deposited on params by backprop. A non-finite
  gradient raises NumericError before anything is modified.
  """
  tensors = params.tensors()
  if grads is None:
    grads = [ t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors ]

  if len(grads) != len(tensors) or len(grads) != len(state.m):
    raise ShapeError("Got {} gradients for {} parameter tensors.".format(len(grads), len(tensors)))

  grads = [ np.asarray(g, dtype=np.float64) for g in grads ]
  for t, g in zip(tensors, grads):
    if g.shape != t.shape:
      raise ShapeError("Gradient shape {} != parameter shape {}.".format(g.shape, t.shape))
    if not np.all(np.isfinite(g)):
      raise NumericError("Refusing an Adam step with a non-finite gradient.")

  state.step += 1
  correction1 = 1.0 - state.beta1 ** state.step
  correction2 = 1.0 - state.beta2 ** state.step

  for t, g, m, v in zip(tensors, grads, state.m, state.v):
    m *= state.beta1
    m += (1.0 - state.beta1) * g
    v *= state.beta2
    v += (1.0 - state.beta2) * (g * g)
    m_hat = m / correction1
    v_hat = v / correction2
    t.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)

  return params, state

def ema_update(target, online, coeff):
  """target <- (1 - coeff) * target + coeff * online, in place."""
  if not (0.0 < coeff <= 1.0):
    raise ContractError("EMA coefficient must lie in (0, 1]. Got {}.".format(coeff))
  if not target.same_shape(online):
    raise ShapeError("EMA target {} and online {} differ in shape.".format(target, online))

  for t, o in zip(target.tensors(), online.tensors()):
    if coeff == 1.0:
      t.data[...] = o.data
      continue
    mixed = t.data + coeff * (o.data - t.data)
    # rounding may not leave the segment between the two endpoints
    t.data[...] = np.clip(mixed, np.minimum(t.data, o.data), np.maximum(t.data, o.data))
  return target
