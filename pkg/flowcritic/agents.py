"""
Agent assemblies. Every variant shares the dual policy actor
(BC flow policy plus one-step policy) and differs in its critic:

  DFC  target flow critic + main quantile critic distilled from it
  FC   target flow critic only; the actor differentiates through
       every Euler step of the flow critic
  DC   main quantile critic bootstrapping from its own EMA copy
  FQL  scalar critic with an MSE Bellman loss

One call to update() performs, in order: the critic blocks, the
BC flow policy step, the one-step policy step and the EMA update.
"""
from collections import OrderedDict

import numpy as np

from .critic import (
  MainCritic, ReturnSampleSet, ScalarCritic, TargetFlowCritic,
  bellman_targets, distill_loss, flow_critic_loss, quantile_levels,
  scalar_critic_loss, update_target_ema,
)
from .exceptions import ConfigError, ShapeError
from .nn import AdamState, adam_step, backprop, grad_norm, no_grad
from .policy import BcFlowPolicy, OneStepPolicy, actor_loss, bc_flow_loss

REGISTERED_VARIANTS = {}

def register_variant(key, creation_function):
  REGISTERED_VARIANTS[key] = creation_function

def make_variant(config, observation_dim, action_dim, rng, target_policy=None, trace=False):
  """
  Build the agent named by config.variant.

  target_policy: policy used for next actions in the Bellman
    targets. Defaults to the agent's own one-step policy.
  trace: record the name of every update block in agent.trace
  """
  variant = config.variant
  if variant not in REGISTERED_VARIANTS:
    raise ConfigError("Unknown variant {}. Registered: {}".format(
      variant, ", ".join(sorted(REGISTERED_VARIANTS))
    ))
  return REGISTERED_VARIANTS[variant](
    config, observation_dim, action_dim, rng,
    target_policy=target_policy, trace=trace,
  )

class Agent(object):
  critic_groups = ()

  def __init__(self, config, observation_dim, action_dim, rng, target_policy=None, trace=False):
    self.config = config
    self.observation_dim = int(observation_dim)
    self.action_dim = int(action_dim)
    self.alpha = config.resolved_alpha
    self.M = int(config.num_samples)
    self.gamma = float(config.gamma)
    self.trace = [] if trace else None
    self._target_policy = target_policy

    hidden = config.hidden_dims
    self.bc = BcFlowPolicy.create(observation_dim, action_dim, hidden, rng, n_steps=config.flow_steps)
    self.onestep = OneStepPolicy.create(observation_dim, action_dim, hidden, rng)
    self.bc_opt = AdamState.for_params(self.bc.trainable(), config.lr_actor)
    self.actor_opt = AdamState.for_params(self.onestep.trainable(), config.lr_actor)

  @property
  def policy(self):
    """The deployed artifact."""
    return self.onestep

  @property
  def target_policy(self):
    return self._target_policy if self._target_policy is not None else self.onestep

  @property
  def actor_critic(self):
    raise NotImplementedError()

  def _record(self, name):
    if self.trace is not None:
      self.trace.append(name)

  def _apply(self, name, loss, params, opt):
    backprop(loss, params)
    norm = grad_norm(params)
    adam_step(opt, params)
    self._record(name)
    return float(loss.item()), norm

  def update(self, batch, rng):
    info = OrderedDict()
    self.update_critic(batch, rng, info)

    loss = bc_flow_loss(self.bc, batch.states, batch.actions, rng)
    info['bc_flow_loss'], _ = self._apply('bc_flow', loss, self.bc.trainable(), self.bc_opt)

    loss, q, distill = actor_loss(
      self.onestep, self.bc, self.actor_critic, batch.states,
      self.alpha, self.M, rng, return_terms=True
    )
    info['actor_loss'], info['actor_grad_norm'] = self._apply(
      'actor', loss, self.onestep.trainable(), self.actor_opt
    )
    info['distill_loss'] = float(distill.item())
    info['q_mean'] = float(np.mean(q.data))

    self.update_targets()
    self._record('ema')
    return info

  def update_critic(self, batch, rng, info):
    raise NotImplementedError()

  def update_targets(self):
    raise NotImplementedError()

  def return_samples(self, states, actions, n, rng):
    """n return samples per row from the critic the actor reads, or None."""
    with no_grad():
      return self.actor_critic.return_samples(states, actions, n, rng)

  def named_params(self):
    named = OrderedDict()
    named['bc_flow'] = self.bc.field.net
    named['actor'] = self.onestep.net
    named.update(self.critic_params())
    return named

  def critic_params(self):
    raise NotImplementedError()

  def load_params(self, named):
    mine = self.named_params()
    if list(mine.keys()) != list(named.keys()):
      raise ShapeError("Checkpoint groups {} do not match the {} agent's {}.".format(
        list(named.keys()), self.config.variant, list(mine.keys())
      ))
    for key, params in named.items():
      mine[key].load_flat(params.flat())
    return self

class DfcAgent(Agent):
  def __init__(self, config, observation_dim, action_dim, rng, target_policy=None, trace=False):
    super(DfcAgent, self).__init__(config, observation_dim, action_dim, rng, target_policy, trace)
    hidden = config.hidden_dims
    self.flow_critic = TargetFlowCritic.create(
      observation_dim, action_dim, hidden, rng, n_steps=config.critic_flow_steps
    )
    self.main_critic = MainCritic.create(observation_dim, action_dim, hidden, rng)
    self.levels = quantile_levels(self.M)
    self.flow_opt = AdamState.for_params(self.flow_critic.trainable(), config.lr_flow_critic)
    self.main_opt = AdamState.for_params(self.main_critic.trainable(), config.lr_main_critic)

  @property
  def actor_critic(self):
    return self.main_critic

  def update_critic(self, batch, rng, info):
    targets, noise = bellman_targets(batch, self.target_policy, self.flow_critic, self.M, self.gamma, rng)

    loss = flow_critic_loss(self.flow_critic, batch.states, batch.actions, targets, rng, noise=noise)
    info['flow_critic_loss'], _ = self._apply(
      'flow_critic', loss, self.flow_critic.trainable(), self.flow_opt
    )

    if self.config.distill_source == 'flow':
      targets = ReturnSampleSet(
        self.flow_critic.return_samples(batch.states, batch.actions, self.M, rng)
      )

    loss = distill_loss(
      self.main_critic, batch.states, batch.actions, targets, self.levels,
      self.config.kappa, rng, sort=self.config.sort_samples, noise_grid=self.config.noise_grid,
    )
    info['main_critic_loss'], _ = self._apply(
      'main_critic', loss, self.main_critic.trainable(), self.main_opt
    )

  def update_targets(self):
    update_target_ema(self.flow_critic, self.config.ema_coeff)

  def critic_params(self):
    return OrderedDict([
      ('flow_critic', self.flow_critic.field.net),
      ('flow_critic_ema', self.flow_critic.ema_field.net),
      ('main_critic', self.main_critic.net),
    ])

class FcAgent(Agent):
  def __init__(self, config, observation_dim, action_dim, rng, target_policy=None, trace=False):
    super(FcAgent, self).__init__(config, observation_dim, action_dim, rng, target_policy, trace)
    self.flow_critic = TargetFlowCritic.create(
      observation_dim, action_dim, config.hidden_dims, rng, n_steps=config.critic_flow_steps
    )
    self.flow_opt = AdamState.for_params(self.flow_critic.trainable(), config.lr_flow_critic)

  @property
  def actor_critic(self):
    return self.flow_critic

  def update_critic(self, batch, rng, info):
    targets, noise = bellman_targets(batch, self.target_policy, self.flow_critic, self.M, self.gamma, rng)
    loss = flow_critic_loss(self.flow_critic, batch.states, batch.actions, targets, rng, noise=noise)
    info['flow_critic_loss'], _ = self._apply(
      'flow_critic', loss, self.flow_critic.trainable(), self.flow_opt
    )

  def update_targets(self):
    update_target_ema(self.flow_critic, self.config.ema_coeff)

  def critic_params(self):
    return OrderedDict([
      ('flow_critic', self.flow_critic.field.net),
      ('flow_critic_ema', self.flow_critic.ema_field.net),
    ])

class DcAgent(Agent):
  def __init__(self, config, observation_dim, action_dim, rng, target_policy=None, trace=False):
    super(DcAgent, self).__init__(config, observation_dim, action_dim, rng, target_policy, trace)
    self.main_critic = MainCritic.create(observation_dim, action_dim, config.hidden_dims, rng, with_target=True)
    self.levels = quantile_levels(self.M)
    self.main_opt = AdamState.for_params(self.main_critic.trainable(), config.lr_main_critic)

  @property
  def actor_critic(self):
    return self.main_critic

  def update_critic(self, batch, rng, info):
    targets, _ = bellman_targets(batch, self.target_policy, self.main_critic, self.M, self.gamma, rng)
    loss = distill_loss(
      self.main_critic, batch.states, batch.actions, targets, self.levels,
      self.config.kappa, rng, sort=self.config.sort_samples, noise_grid=self.config.noise_grid,
    )
    info['main_critic_loss'], _ = self._apply(
      'main_critic', loss, self.main_critic.trainable(), self.main_opt
    )

  def update_targets(self):
    update_target_ema(self.main_critic, self.config.ema_coeff)

  def critic_params(self):
    return OrderedDict([
      ('main_critic', self.main_critic.net),
      ('main_critic_ema', self.main_critic.ema_net),
    ])

class FqlAgent(Agent):
  def __init__(self, config, observation_dim, action_dim, rng, target_policy=None, trace=False):
    super(FqlAgent, self).__init__(config, observation_dim, action_dim, rng, target_policy, trace)
    self.critic = ScalarCritic.create(observation_dim, action_dim, config.hidden_dims, rng)
    self.critic_opt = AdamState.for_params(self.critic.trainable(), config.lr_main_critic)

  @property
  def actor_critic(self):
    return self.critic

  def update_critic(self, batch, rng, info):
    loss = scalar_critic_loss(self.critic, batch, self.target_policy, self.gamma, rng)
    info['critic_loss'], _ = self._apply('critic', loss, self.critic.trainable(), self.critic_opt)

  def update_targets(self):
    update_target_ema(self.critic, self.config.ema_coeff)

  def critic_params(self):
    return OrderedDict([
      ('critic', self.critic.net),
      ('critic_ema', self.critic.ema_net),
    ])

register_variant('DFC', DfcAgent)
register_variant('FC', FcAgent)
register_variant('DC', DcAgent)
register_variant('FQL', FqlAgent)
