"""
Distributional critics over scalar returns.

TargetFlowCritic
  A conditional flow over the 1-D return space. Its EMA copy
  generates bootstrap samples z' so that
  z~_j = r + gamma * Z_ema(s', pi(s'), xi~_j) form the Bellman
  target set, and the trained field regresses those targets by
  flow matching.

MainCritic
  A one-step network z = Z(s, a, xi) distilled from the target
  set with the quantile Huber loss. The actor reads Q(s, a) as
  the mean of M of its samples.

ScalarCritic
  Plain Q(s, a) regression with an MSE Bellman loss.

Every function is batched: states (B, ds), actions (B, da), and
return sample sets (B, M).
"""
import numpy as np
from scipy.special import ndtri

from .exceptions import ContractError, ShapeError
from .flow import VectorFieldNet, euler_sample, fm_loss
from .lib import as_rows, require_finite
from .nn import MlpParams, Tensor, as_tensor, concat, ema_update, no_grad

class QuantileLevels(object):
  """Midpoint quantile levels tau_i = (2i - 1) / 2M, i = 1..M."""
  def __init__(self, levels):
    self.levels = np.asarray(levels, dtype=np.float64)

  def __len__(self):
    return len(self.levels)

  def __iter__(self):
    return iter(self.levels)

  def __getitem__(self, i):
    return self.levels[i]

  def __array__(self, dtype=None, copy=None):
    return np.asarray(self.levels, dtype=dtype)

  def normal_grid(self):
    """Inverse normal CDF of each level, the deterministic noise grid."""
    return ndtri(self.levels)

  def __repr__(self):
    return "QuantileLevels(M={})".format(len(self))

def quantile_levels(M):
  M = int(M)
  if M < 1:
    raise ContractError("Need at least one quantile level. Got M={}.".format(M))
  i = np.arange(1, M + 1, dtype=np.float64)
  return QuantileLevels((2.0 * i - 1.0) / (2.0 * M))

class ReturnSampleSet(object):
  """
  M scalar return samples per (state, action) row.

  values: (B, M) array, or (M,) for a single pair
  sorted: whether each row is non-decreasing
  """
  def __init__(self, values, sorted=False):
    self.values = np.asarray(values, dtype=np.float64)
    self.sorted = bool(sorted)
    if self.values.ndim not in (1, 2):
      raise ShapeError("Return samples must be (M,) or (B, M). Got {}.".format(self.values.shape))
    if self.sorted and np.any(np.diff(self.values, axis=-1) < 0):
      raise ContractError("Return samples flagged sorted are not non-decreasing.")

  @classmethod
  def from_unsorted(cls, values):
    return cls(np.sort(values, axis=-1), sorted=True)

  @property
  def M(self):
    return self.values.shape[-1]

  def __len__(self):
    return self.M

  def rows(self):
    return as_rows(self.values)

  def mean(self):
    return self.values.mean(axis=-1)

def quantile_huber(u, tau_hat, kappa):
  """|tau_hat - 1(u < 0)| * L_kappa(u), elementwise."""
  u = np.asarray(u, dtype=np.float64)
  abs_u = np.abs(u)
  huber = np.where(abs_u <= kappa, 0.5 * u * u, kappa * (abs_u - 0.5 * kappa))
  out = np.abs(tau_hat - (u < 0.0)) * huber
  if out.ndim == 0:
    return float(out)
  return out

def quantile_huber_loss(z, targets, levels, kappa):
  """
  Mean over rows of (1 / M M') sum_i sum_j rho_tau_i(z~_j - z_i)
  where z is a (B, M) Tensor paired index-wise with levels and
  targets is a constant (B, M') array.
  """
  z = as_tensor(z)
  targets = as_rows(targets)
  taus = np.asarray(levels, dtype=np.float64).reshape(1, -1, 1)

  if z.ndim != 2 or z.shape[1] != taus.shape[1]:
    raise ShapeError("Got {} predictions per row for {} quantile levels.".format(z.shape, taus.shape[1]))
  if targets.shape[0] != z.shape[0]:
    raise ShapeError("Got {} target rows for {} prediction rows.".format(targets.shape[0], z.shape[0]))

  rows, M = z.shape
  scale = 1.0 / (rows * M * targets.shape[1])

  u = targets[:, None, :] - z.data[:, :, None]
  weight = np.abs(taus - (u < 0.0))
  abs_u = np.abs(u)
  huber = np.where(abs_u <= kappa, 0.5 * u * u, kappa * (abs_u - 0.5 * kappa))
  value = scale * np.sum(weight * huber)

  def backward(g):
    slope = np.where(abs_u <= kappa, u, kappa * np.sign(u))
    return (-g * scale * np.sum(weight * slope, axis=2),)

  return Tensor._result(np.asarray(value), (z,), backward)

def quantile_distill_loss(z, targets, levels, kappa=1.0, sort=True):
  """Quantile Huber loss after optionally sorting each row of z ascending."""
  z = as_tensor(z)
  if z.ndim == 1:
    z = z.reshape(1, -1)
  if sort:
    order = np.argsort(z.data, axis=1, kind='stable')
    z = z.take_along_axis(order, axis=1)
  return quantile_huber_loss(z, targets, levels, kappa)

def _pair_condition(states, actions, M):
  """
  (state, action) rows repeated M times each, row b*M + j holding
  pair b. Gradients through actions are kept.
  """
  states = as_rows(states)
  actions = as_tensor(actions)
  if actions.ndim == 1:
    actions = actions.reshape(1, -1)
  rows, action_dim = actions.shape
  if states.shape[0] != rows:
    raise ShapeError("Got {} states for {} actions.".format(states.shape[0], rows))

  repeated_states = np.repeat(states, M, axis=0)
  if actions.requires_grad:
    repeated_actions = actions.reshape(rows, 1, action_dim).expand((rows, M, action_dim)).reshape(rows * M, action_dim)
  else:
    repeated_actions = Tensor(np.repeat(actions.data, M, axis=0))
  return concat([ Tensor(repeated_states), repeated_actions ], axis=1)

class TargetFlowCritic(object):
  """Flow over returns conditioned on (state, action), with an EMA twin."""
  def __init__(self, field, ema_field=None, n_steps=10):
    self.field = field
    self.ema_field = ema_field if ema_field is not None else field.clone()
    self.n_steps = int(n_steps)

    if field.point_dim != 1:
      raise ShapeError("The return space is one dimensional. Got {}.".format(field.point_dim))
    if not field.net.same_shape(self.ema_field.net):
      raise ShapeError("Field and EMA field differ in shape.")

  @classmethod
  def create(cls, state_dim, action_dim, hidden_dims, rng, n_steps=10):
    field = VectorFieldNet.create(1, state_dim + action_dim, hidden_dims, rng)
    return cls(field, field.clone(), n_steps)

  def sample(self, states, actions, noise, use_ema=False):
    """Integrate base noise (B, M) into return samples (B, M)."""
    noise = as_rows(noise)
    rows, M = noise.shape
    field = self.ema_field if use_ema else self.field
    condition = _pair_condition(states, actions, M)
    z = euler_sample(field, condition, noise.reshape(-1, 1), self.n_steps)
    return z.reshape(rows, M)

  def target_samples(self, states, actions, noise):
    with no_grad():
      return self.sample(states, actions, noise, use_ema=True).data

  def return_samples(self, states, actions, n, rng):
    states = as_rows(states)
    noise = rng.standard_normal((states.shape[0], n))
    with no_grad():
      return self.sample(states, actions, noise).data

  def q_value(self, states, actions, M, rng):
    """Mean of M Euler samples, differentiable through all steps."""
    states = as_rows(states)
    noise = rng.standard_normal((states.shape[0], M))
    return self.sample(states, actions, noise).mean(axis=1)

  def trainable(self):
    return self.field.net

  def target_pairs(self):
    return [ (self.ema_field.net, self.field.net) ]

  def frozen(self):
    return TargetFlowCritic(self.field.frozen(), self.ema_field.frozen(), self.n_steps)

class MainCritic(object):
  """
  One-step return sampler z = net(state, action, xi). ema_net is
  only allocated when the critic bootstraps from itself.
  """
  def __init__(self, net, ema_net=None):
    self.net = net
    self.ema_net = ema_net
    if net.out_dim != 1:
      raise ShapeError("Main critic emits one return per noise sample. Got width {}.".format(net.out_dim))

  @classmethod
  def create(cls, state_dim, action_dim, hidden_dims, rng, with_target=False):
    net = MlpParams.initialize(state_dim + action_dim + 1, hidden_dims, 1, rng)
    return cls(net, net.clone() if with_target else None)

  def __call__(self, states, actions, noise, net=None):
    noise = as_rows(noise)
    rows, M = noise.shape
    condition = _pair_condition(states, actions, M)
    inputs = concat([ condition, Tensor(noise.reshape(-1, 1)) ], axis=1)
    return (net or self.net)(inputs).reshape(rows, M)

  def target_samples(self, states, actions, noise):
    if self.ema_net is None:
      raise ContractError("This main critic has no EMA copy to bootstrap from.")
    with no_grad():
      return self(states, actions, noise, net=self.ema_net).data

  def return_samples(self, states, actions, n, rng):
    states = as_rows(states)
    noise = rng.standard_normal((states.shape[0], n))
    with no_grad():
      return self(states, actions, noise).data

  def q_value(self, states, actions, M, rng):
    return q_estimate(self, states, actions, M, rng)

  def trainable(self):
    return self.net

  def target_pairs(self):
    if self.ema_net is None:
      return []
    return [ (self.ema_net, self.net) ]

  def frozen(self):
    ema = self.ema_net.frozen() if self.ema_net is not None else None
    return MainCritic(self.net.frozen(), ema)

class ScalarCritic(object):
  """Q(s, a) -> scalar with an EMA target copy."""
  def __init__(self, net, ema_net=None):
    self.net = net
    self.ema_net = ema_net if ema_net is not None else net.clone()

  @classmethod
  def create(cls, state_dim, action_dim, hidden_dims, rng):
    return cls(MlpParams.initialize(state_dim + action_dim, hidden_dims, 1, rng))

  def __call__(self, states, actions, net=None):
    actions = as_tensor(actions)
    if actions.ndim == 1:
      actions = actions.reshape(1, -1)
    inputs = concat([ Tensor(as_rows(states)), actions ], axis=1)
    return (net or self.net)(inputs).reshape(-1)

  def target_values(self, states, actions):
    with no_grad():
      return self(states, actions, net=self.ema_net).data

  def q_value(self, states, actions, M=None, rng=None):
    return self(states, actions)

  def return_samples(self, states, actions, n, rng):
    return None

  def trainable(self):
    return self.net

  def target_pairs(self):
    return [ (self.ema_net, self.net) ]

  def frozen(self):
    return ScalarCritic(self.net.frozen(), self.ema_net.frozen())

def bellman_targets(batch, policy, critic, M, gamma, rng):
  """
  Distributional Bellman target set for every transition.

  Returns (ReturnSampleSet of shape (B, M), base noise xi~ (B, M)).
  Terminal rows hold r in every slot. No graph is recorded.
  """
  if not (0.0 <= gamma < 1.0):
    raise ContractError("Discount must lie in [0, 1). Got {}.".format(gamma))
  if M < 1:
    raise ContractError("Need at least one target sample. Got M={}.".format(M))

  rows = batch.rewards.shape[0]
  with no_grad():
    next_actions = policy.act(batch.next_states, rng)
  noise = rng.standard_normal((rows, M))
  bootstrap = critic.target_samples(batch.next_states, next_actions, noise)
  require_finite(bootstrap, "Bootstrapped return samples")

  rewards = batch.rewards.reshape(-1, 1)
  terminal = batch.dones.reshape(-1, 1) > 0.5
  targets = np.where(terminal, rewards, rewards + gamma * bootstrap)
  return ReturnSampleSet(targets), noise

def flow_critic_loss(critic, states, actions, targets, rng, noise=None):
  """
  Flow matching from base noise xi~_j to target z~_j. One time
  tau ~ U(0, 1) per batch row is shared by that row's M pairs.
  noise defaults to fresh N(0, 1) draws; pass the noise returned
  by bellman_targets to pair each target with the sample it grew
  from.
  """
  z = as_rows(targets.values if isinstance(targets, ReturnSampleSet) else targets)
  require_finite(z, "Flow critic targets")
  rows, M = z.shape

  if noise is None:
    noise = rng.standard_normal((rows, M))
  noise = as_rows(noise)
  if noise.shape != z.shape:
    raise ShapeError("Noise {} and targets {} differ in shape.".format(noise.shape, z.shape))

  tau = rng.uniform(0.0, 1.0, size=(rows, 1))
  t = np.repeat(tau, M, axis=0)
  condition = _pair_condition(states, as_rows(actions), M)
  return fm_loss(critic.field, condition, noise.reshape(-1, 1), z.reshape(-1, 1), t)

def distill_loss(
  main, states, actions, targets, levels, kappa, rng,
  sort=True, noise_grid=False, noise=None
):
  """
  Quantile distillation of the target set into the main critic.

  Draws xi_i ~ N(0, 1), evaluates z_i = main(s, a, xi_i), sorts
  each row ascending and pairs z_(i) with level tau_i. With
  noise_grid=True the noise is the fixed grid Phi^-1(tau_i) and
  no sorting happens.
  """
  z_targets = as_rows(targets.values if isinstance(targets, ReturnSampleSet) else targets)
  rows, M = z_targets.shape
  if len(levels) != M:
    raise ShapeError("Got {} targets per row for {} quantile levels.".format(M, len(levels)))

  if noise_grid:
    noise = np.broadcast_to(levels.normal_grid(), (rows, M))
    sort = False
  elif noise is None:
    noise = rng.standard_normal((rows, M))

  z = main(states, actions, noise)
  return quantile_distill_loss(z, z_targets, levels.levels, kappa, sort=sort)

def q_estimate(main, states, actions, M, rng):
  """
  Mean of M main critic samples per row with fresh noise.
  Differentiable through the actions.
  """
  M = int(M)
  if M < 1:
    raise ContractError("q_estimate needs at least one sample. Got M={}.".format(M))

  single = np.ndim(states) == 1
  states = as_rows(states)
  noise = rng.standard_normal((states.shape[0], M))
  q = main(states, actions, noise).mean(axis=1)
  if single:
    q = q.reshape(())
  return q

def update_target_ema(critic, coeff):
  """Move every EMA copy held by critic toward its trained network."""
  if coeff == 0:
    return critic
  for target, online in critic.target_pairs():
    ema_update(target, online, coeff)
  return critic

def scalar_critic_loss(critic, batch, policy, gamma, rng):
  """MSE between Q(s, a) and r + gamma (1 - done) Q_ema(s', pi(s'))."""
  if not (0.0 <= gamma < 1.0):
    raise ContractError("Discount must lie in [0, 1). Got {}.".format(gamma))
  with no_grad():
    next_actions = policy.act(batch.next_states, rng)
  next_q = critic.target_values(batch.next_states, next_actions)
  require_finite(next_q, "Bootstrapped Q values")
  targets = batch.rewards + gamma * (1.0 - batch.dones) * next_q
  residual = critic(batch.states, batch.actions) - targets
  return (residual ** 2).mean()
