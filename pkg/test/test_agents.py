from types import SimpleNamespace

import pytest

import numpy as np

from flowcritic.agents import DcAgent, DfcAgent, FcAgent, FqlAgent, make_variant
from flowcritic.checkpoint import decode_checkpoint, encode_checkpoint
from flowcritic.critic import MainCritic, ScalarCritic
from flowcritic.envs import ChainMdp
from flowcritic.exceptions import ConfigError, ShapeError
from flowcritic.replay import batch_from_transitions

from agent_harness import tiny_config, tiny_dataset

TRACES = {
  'DFC': [ 'flow_critic', 'main_critic', 'bc_flow', 'actor', 'ema' ],
  'FC': [ 'flow_critic', 'bc_flow', 'actor', 'ema' ],
  'DC': [ 'main_critic', 'bc_flow', 'actor', 'ema' ],
  'FQL': [ 'critic', 'bc_flow', 'actor', 'ema' ],
}

GROUPS = {
  'DFC': [ 'bc_flow', 'actor', 'flow_critic', 'flow_critic_ema', 'main_critic' ],
  'FC': [ 'bc_flow', 'actor', 'flow_critic', 'flow_critic_ema' ],
  'DC': [ 'bc_flow', 'actor', 'main_critic', 'main_critic_ema' ],
  'FQL': [ 'bc_flow', 'actor', 'critic', 'critic_ema' ],
}

def build(variant, **overrides):
  config = tiny_config(variant=variant, **overrides)
  agent = make_variant(config, 3, 1, np.random.default_rng(0), trace=True)
  batch = batch_from_transitions(tiny_dataset(config)[:8])
  return agent, batch

def test_unknown_variant():
  with pytest.raises(ConfigError):
    make_variant(SimpleNamespace(variant='SAC'), 3, 1, np.random.default_rng(0))

def test_variant_classes():
  classes = { 'DFC': DfcAgent, 'FC': FcAgent, 'DC': DcAgent, 'FQL': FqlAgent }
  for variant, cls in classes.items():
    agent, _ = build(variant)
    assert type(agent) is cls
    assert agent.policy is agent.onestep
    assert agent.target_policy is agent.onestep

  dc, _ = build('DC')
  assert isinstance(dc.actor_critic, MainCritic)
  assert dc.main_critic.ema_net is not None

  fql, _ = build('FQL')
  assert isinstance(fql.actor_critic, ScalarCritic)

@pytest.mark.parametrize('variant', [ 'DFC', 'FC', 'DC', 'FQL' ])
def test_update_order_and_info(variant):
  agent, batch = build(variant)
  info = agent.update(batch, np.random.default_rng(1))
  assert agent.trace == TRACES[variant]

  for key in ('bc_flow_loss', 'actor_loss', 'actor_grad_norm', 'distill_loss', 'q_mean'):
    assert np.isfinite(info[key])
  assert info['actor_grad_norm'] >= 0

  agent.update(batch, np.random.default_rng(2))
  assert agent.trace == TRACES[variant] * 2

@pytest.mark.parametrize('variant', [ 'DFC', 'FC', 'DC', 'FQL' ])
def test_checkpoint_groups(variant):
  agent, batch = build(variant)
  named = agent.named_params()
  assert list(named.keys()) == GROUPS[variant]

  agent.update(batch, np.random.default_rng(1))
  restored, _ = build(variant)
  restored.load_params(decode_checkpoint(encode_checkpoint(agent.named_params())))
  for key, params in restored.named_params().items():
    assert np.array_equal(params.flat(), agent.named_params()[key].flat())

  states = np.eye(3)
  a = agent.policy.act(states, np.random.default_rng(5))
  b = restored.policy.act(states, np.random.default_rng(5))
  assert np.array_equal(a, b)

def test_load_params_rejects_other_variant():
  dfc, _ = build('DFC')
  fql, _ = build('FQL')
  with pytest.raises(ShapeError):
    dfc.load_params(fql.named_params())

def test_ema_moves_only_through_update():
  agent, batch = build('DFC', ema_coeff=0.5)
  before = agent.flow_critic.ema_field.net.flat()
  agent.update(batch, np.random.default_rng(1))
  after = agent.flow_critic.ema_field.net.flat()
  online = agent.flow_critic.field.net.flat()
  assert not np.array_equal(before, after)
  assert np.all(np.abs(after - online) <= np.abs(before - online) + 1e-12)

def test_return_samples():
  for variant in ('DFC', 'FC', 'DC'):
    agent, batch = build(variant)
    samples = agent.return_samples(batch.states, batch.actions, 7, np.random.default_rng(0))
    assert samples.shape == (8, 7)

  fql, batch = build('FQL')
  assert fql.return_samples(batch.states, batch.actions, 7, np.random.default_rng(0)) is None

def test_distill_from_flow_samples():
  agent, batch = build('DFC', distill_source='flow')
  info = agent.update(batch, np.random.default_rng(1))
  assert np.isfinite(info['main_critic_loss'])
  assert agent.trace == TRACES['DFC']

def test_noise_grid_and_unsorted():
  for overrides in ({ 'noise_grid': True }, { 'sort_samples': False }):
    agent, batch = build('DFC', **overrides)
    info = agent.update(batch, np.random.default_rng(1))
    assert np.isfinite(info['main_critic_loss'])

def test_fixed_target_policy():
  env = ChainMdp()
  config = tiny_config()
  agent = make_variant(config, 3, 1, np.random.default_rng(0), target_policy=env.scripted_policy())
  assert agent.target_policy is not agent.onestep
  batch = batch_from_transitions(tiny_dataset(config)[:8])
  info = agent.update(batch, np.random.default_rng(1))
  assert np.isfinite(info['flow_critic_loss'])
