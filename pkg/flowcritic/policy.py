"""
Dual policy actor.

BcFlowPolicy (mu_theta) imitates dataset actions with a flow over
the action space. OneStepPolicy (pi_omega) maps (state, noise) to
an action in a single forward pass; it is pushed toward high
critic values while a distillation term keeps it near the flow
policy evaluated on the same noise.

Actions live in the box [-1, 1]^action_dim.
"""
import numpy as np

from .exceptions import ContractError, ShapeError
from .flow import FlowPath, VectorFieldNet, euler_sample, fm_loss
from .lib import as_rows
from .nn import MlpParams, Tensor, concat, no_grad

ACTION_LOW = -1.0
ACTION_HIGH = 1.0

def clip_action(action):
  return np.clip(action, ACTION_LOW, ACTION_HIGH)

def _box_check(actions, tolerance=1e-9):
  if np.any(actions < ACTION_LOW - tolerance) or np.any(actions > ACTION_HIGH + tolerance):
    raise ContractError("Actions must lie inside [{}, {}].".format(ACTION_LOW, ACTION_HIGH))

class BcFlowPolicy(object):
  def __init__(self, field, n_steps=10):
    self.field = field
    self.n_steps = int(n_steps)

  @classmethod
  def create(cls, state_dim, action_dim, hidden_dims, rng, n_steps=10):
    return cls(VectorFieldNet.create(action_dim, state_dim, hidden_dims, rng), n_steps)

  @property
  def action_dim(self):
    return self.field.point_dim

  def act(self, states, rng):
    single = np.ndim(states) == 1
    states = as_rows(states)
    epsilon = rng.standard_normal((states.shape[0], self.action_dim))
    actions = bc_flow_sample(self, states, epsilon)
    return actions[0] if single else actions

  def trainable(self):
    return self.field.net

def bc_flow_loss(policy, states, actions, rng):
  """Flow matching from x0 ~ N(0, I) to the dataset action, t ~ U[0, 1] per row."""
  actions = as_rows(actions)
  _box_check(actions)
  path = FlowPath.sample(actions, rng)
  return fm_loss(policy.field, as_rows(states), path.x0, path.x1, path.t)

def bc_flow_sample(policy, states, epsilon):
  """Integrate epsilon through the action field and clip. No graph is recorded."""
  single = np.ndim(epsilon) == 1
  states = as_rows(states)
  epsilon = as_rows(epsilon)
  if epsilon.shape != (states.shape[0], policy.action_dim):
    raise ShapeError("Expected noise of shape {}, got {}.".format(
      (states.shape[0], policy.action_dim), epsilon.shape
    ))
  with no_grad():
    actions = euler_sample(policy.field, states, epsilon, policy.n_steps).data
  actions = clip_action(actions)
  return actions[0] if single else actions

class OneStepPolicy(object):
  def __init__(self, net, action_dim):
    self.net = net
    self.action_dim = int(action_dim)
    if net.out_dim != self.action_dim:
      raise ShapeError("One-step policy emits {} values for a {}-D action.".format(net.out_dim, action_dim))

  @classmethod
  def create(cls, state_dim, action_dim, hidden_dims, rng):
    return cls(MlpParams.initialize(state_dim + action_dim, hidden_dims, action_dim, rng), action_dim)

  def __call__(self, states, epsilon, clip=True):
    states = as_rows(states)
    epsilon = as_rows(epsilon)
    actions = self.net(concat([ Tensor(states), Tensor(epsilon) ], axis=1))
    if clip:
      actions = actions.clip(ACTION_LOW, ACTION_HIGH)
    return actions

  def act(self, states, rng):
    """Deployment sampling: fresh epsilon, no exploration noise."""
    single = np.ndim(states) == 1
    states = as_rows(states)
    epsilon = rng.standard_normal((states.shape[0], self.action_dim))
    with no_grad():
      actions = self(states, epsilon).data
    return actions[0] if single else actions

  def trainable(self):
    return self.net

  def frozen(self):
    return OneStepPolicy(self.net.frozen(), self.action_dim)

def distill_reg(onestep, bc, states, epsilon):
  """
  Mean over rows of ||pi(s, eps) - mu(s, eps)||^2 with a shared
  eps. The flow policy is a constant here; the one-step output
  is taken before clipping.
  """
  states = as_rows(states)
  epsilon = as_rows(epsilon)
  target = bc_flow_sample(bc, states, epsilon)
  residual = onestep(states, epsilon, clip=False) - target
  return (residual ** 2).sum(axis=-1).mean()

def actor_loss(onestep, bc, critic, states, alpha, M, rng, return_terms=False):
  """
  -mean Q(s, pi(s, eps)) + alpha * distill_reg with one fresh eps
  per state. Only the one-step policy receives gradients.

  critic: anything with q_value(states, actions, M, rng) that is
    differentiable in actions.
  """
  if alpha < 0:
    raise ContractError("alpha must be non-negative. Got {}.".format(alpha))

  if hasattr(critic, 'frozen'):
    critic = critic.frozen()

  states = as_rows(states)
  epsilon = rng.standard_normal((states.shape[0], onestep.action_dim))

  raw = onestep(states, epsilon, clip=False)
  target = bc_flow_sample(bc, states, epsilon)
  distill = ((raw - target) ** 2).sum(axis=-1).mean()

  q = critic.q_value(states, raw.clip(ACTION_LOW, ACTION_HIGH), M, rng)
  q_term = -q.mean()
  loss = q_term + distill * float(alpha)

  if return_terms:
    return loss, q, distill
  return loss

def explore_action(onestep, states, delta, rng):
  """clip(pi(s, eps) + delta * eta) with eps, eta ~ N(0, I)."""
  if delta < 0:
    raise ContractError("Exploration scale must be non-negative. Got {}.".format(delta))
  actions = onestep.act(states, rng)
  if delta > 0:
    actions = actions + delta * rng.standard_normal(np.shape(actions))
  return clip_action(actions)
