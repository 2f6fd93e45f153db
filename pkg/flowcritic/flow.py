"""
Conditional flow matching on straight-line paths.

A VectorFieldNet v(t, condition, x) is trained to regress the
displacement x1 - x0 at the interpolated point
xt = (1 - t) x0 + t x1. Integrating the field from t=0 to t=1 with
fixed-step forward Euler then transports base noise x0 ~ N(0, I)
to the data distribution. The same machinery serves the action
space (behavior cloning flow) and the one dimensional return space
(target flow critic).

All functions are batched along the leading axis. Time may be a
scalar shared by every row or one value per row.
"""
import numpy as np

from .exceptions import ContractError, ShapeError
from .nn import MlpParams, Tensor, as_tensor, concat

def _time_column(t, rows):
  t = np.asarray(t, dtype=np.float64)
  if t.ndim == 0:
    t = np.full((rows, 1), float(t))
  else:
    t = t.reshape(-1, 1)
    if t.shape[0] != rows:
      raise ShapeError("Got {} time values for {} rows.".format(t.shape[0], rows))
  return np.clip(t, 0.0, 1.0)

class VectorFieldNet(object):
  """
  Velocity field over `point_dim` dimensional points conditioned
  on a `condition_dim` dimensional vector. The network consumes
  the concatenation (time, condition, point).
  """
  def __init__(self, net, point_dim, condition_dim):
    self.net = net
    self.point_dim = int(point_dim)
    self.condition_dim = int(condition_dim)

    if net.in_dim != 1 + self.condition_dim + self.point_dim:
      raise ShapeError("Field network input width {} != 1 + {} + {}".format(
        net.in_dim, self.condition_dim, self.point_dim
      ))
    if net.out_dim != self.point_dim:
      raise ShapeError("Field network output width {} != point dimension {}".format(
        net.out_dim, self.point_dim
      ))

  @classmethod
  def create(cls, point_dim, condition_dim, hidden_dims, rng):
    net = MlpParams.initialize(1 + condition_dim + point_dim, hidden_dims, point_dim, rng)
    return cls(net, point_dim, condition_dim)

  def __call__(self, t, condition, x):
    x = as_tensor(x)
    vector = (x.ndim == 1)
    if vector:
      x = x.reshape(1, -1)
    if x.shape[1] != self.point_dim:
      raise ShapeError("Expected points of width {}, got {}.".format(self.point_dim, x.shape))

    rows = x.shape[0]
    condition = self._condition_rows(condition, rows)
    inputs = concat([ Tensor(_time_column(t, rows)), condition, x ], axis=1)
    velocity = self.net(inputs)

    if vector:
      velocity = velocity.reshape(-1)
    return velocity

  def _condition_rows(self, condition, rows):
    if condition is None:
      condition = np.zeros((rows, 0))
    condition = as_tensor(condition)
    if condition.ndim == 1:
      condition = condition.reshape(1, -1)
      if rows != 1:
        condition = condition.expand((rows, condition.shape[1]))
    if condition.shape != (rows, self.condition_dim):
      raise ShapeError("Expected a condition of shape {}, got {}.".format(
        (rows, self.condition_dim), condition.shape
      ))
    return condition

  def clone(self):
    return VectorFieldNet(self.net.clone(), self.point_dim, self.condition_dim)

  def frozen(self):
    return VectorFieldNet(self.net.frozen(), self.point_dim, self.condition_dim)

class FlowPath(object):
  """A point on the straight path from base noise x0 to data x1."""
  def __init__(self, x0, x1, t):
    self.x0 = np.asarray(x0, dtype=np.float64)
    self.x1 = np.asarray(x1, dtype=np.float64)
    self.t = np.asarray(t, dtype=np.float64)
    self.xt = interpolate(self.x0, self.x1, self.t)

  @classmethod
  def sample(cls, x1, rng):
    """x0 ~ N(0, I) and t ~ U[0, 1] drawn independently per row."""
    x1 = np.asarray(x1, dtype=np.float64)
    x0 = rng.standard_normal(x1.shape)
    if x1.ndim == 1:
      t = rng.uniform(0.0, 1.0)
    else:
      t = rng.uniform(0.0, 1.0, size=(x1.shape[0], 1))
    return cls(x0, x1, t)

  @property
  def velocity(self):
    return self.x1 - self.x0

def interpolate(x0, x1, t):
  x0 = np.asarray(x0, dtype=np.float64)
  x1 = np.asarray(x1, dtype=np.float64)
  t = np.asarray(t, dtype=np.float64)

  if x0.shape != x1.shape:
    raise ShapeError("Endpoints differ in shape: {} vs {}".format(x0.shape, x1.shape))
  if np.any(t < 0.0) or np.any(t > 1.0) or not np.all(np.isfinite(t)):
    raise ContractError("Interpolation time must lie in [0, 1]. Got {}.".format(t))

  if t.ndim == 1 and x0.ndim == 2:
    t = t.reshape(-1, 1)
  return (1.0 - t) * x0 + t * x1

def fm_loss(field, condition, x0, x1, t):
  """
  Squared norm of field(t, condition, xt) - (x1 - x0), averaged
  over rows. Differentiable with respect to the field parameters.
  """
  x0 = np.asarray(x0, dtype=np.float64)
  x1 = np.asarray(x1, dtype=np.float64)
  xt = interpolate(x0, x1, t)
  residual = field(t, condition, xt) - (x1 - x0)
  return (residual ** 2).sum(axis=-1).mean()

def euler_sample(field, condition, x0, n_steps):
  """
  Forward Euler from t=0 to t=1 in n_steps uniform steps.

  Returns a Tensor. Gradients flow through every step when a
  graph is being recorded; wrap in no_grad() for frozen sampling.
  """
  n_steps = int(n_steps)
  if n_steps < 1:
    raise ContractError("euler_sample needs at least one step. Got {}.".format(n_steps))

  x = as_tensor(x0)
  dt = 1.0 / n_steps
  for k in range(n_steps):
    x = x + field(k / float(n_steps), condition, x) * dt
  return x
