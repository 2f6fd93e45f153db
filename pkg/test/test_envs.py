import pytest

import numpy as np

from flowcritic.envs import (
  ChainEdge, ChainMdp, ConstantPolicy, DiscreteChoicePolicy,
  TwoGoalMaze, UniformPolicy, env_step, make_env,
)
from flowcritic.exceptions import ConfigError, ContractError

def run_policy(env, policy, seed=0, limit=200):
  rng = np.random.default_rng(seed)
  state = env.reset(seed=seed)
  for _ in range(limit):
    state, reward, done = env_step(env, policy.act(state, rng))
    if done:
      break
  return env

def test_make_env():
  assert isinstance(make_env('chain'), ChainMdp)
  assert isinstance(make_env('maze', max_steps=10), TwoGoalMaze)
  with pytest.raises(ConfigError):
    make_env('cartpole')

def test_maze_zero_action():
  env = TwoGoalMaze()
  start = env.reset(seed=0)
  assert np.all(np.abs(start - env.start) <= env.start_noise)

  for step in range(1, 101):
    state, reward, done = env.step(np.zeros(2))
    assert np.array_equal(state, start)
    assert reward == -1.0
    assert done == (step == 100)
  assert env.truncated and not env.terminated and not env.success

  with pytest.raises(ContractError):
    env.step(np.zeros(2))

def test_maze_rejects_bad_actions():
  env = TwoGoalMaze()
  env.reset(seed=0)
  with pytest.raises(ContractError):
    env.step(np.array([ 1.5, 0.0 ]))
  with pytest.raises(ContractError):
    env.step(np.zeros(3))
  with pytest.raises(ContractError):
    env.step(np.array([ np.nan, 0.0 ]))

def test_maze_obstacle_blocks():
  env = TwoGoalMaze()
  env.reset(state=[ 0.0, -0.3 ])
  state, _, _ = env.step(np.array([ 0.0, 1.0 ]))
  assert np.allclose(state, [ 0.0, -0.3 ])
  state, _, _ = env.step(np.array([ 1.0, 0.0 ]))
  assert np.allclose(state, [ 0.2, -0.3 ])

def test_maze_scripted_policies_reach_goals():
  env = TwoGoalMaze()
  run_policy(env, env.scripted_policy(), limit=30)
  assert env.success and env.steps <= 30
  assert np.linalg.norm(env.position - env.goals[1]) <= env.goal_radius

  left, right = env.mode_policies(noise=0.0)
  for policy, goal in ((left, 0), (right, 1)):
    run_policy(env, policy, limit=100)
    assert env.success
    assert np.linalg.norm(env.position - env.goals[goal]) <= env.goal_radius

def test_maze_reward_on_reaching_goal():
  env = TwoGoalMaze()
  env.reset(state=[ 0.7, 0.5 ])
  state, reward, done = env.step(np.array([ 0.0, 1.0 ]))
  assert reward == 0.0 and done and env.terminated

def test_chain_bernoulli_mean():
  env = ChainMdp()
  rewards = []
  for i in range(10000):
    env.reset(seed=i)
    _, reward, _ = env.step(np.array([ -0.5 ]))
    rewards.append(reward)
  assert set(rewards) <= { 0.0, 1.0 }
  assert 0.48 <= np.mean(rewards) <= 0.52

def test_chain_transitions():
  env = ChainMdp()
  assert np.array_equal(env.reset(seed=0), [ 1.0, 0.0, 0.0 ])
  state, reward, done = env.step(np.array([ 0.5 ]))
  assert np.array_equal(state, [ 0.0, 0.0, 1.0 ])
  assert reward == 0.5 and not done

  state, reward, done = env.step(np.array([ 0.5 ]))
  assert np.array_equal(state, [ 0.0, 0.0, 0.0 ])
  assert reward in (0.0, 2.0) and done and env.success

  assert np.array_equal(env.reset(state=[ 0.0, 1.0, 0.0 ]), [ 0.0, 1.0, 0.0 ])
  assert env.state_id == 1

def test_chain_truncates():
  edges = { 0: ChainEdge([ 1.0, 0.0 ], [ 1.0 ], [ 1.0 ]) }
  env = ChainMdp(n_states=1, edges=edges, max_steps=3)
  env.reset(seed=0)
  dones = [ env.step(np.array([ 0.0 ]))[2] for _ in range(3) ]
  assert dones == [ False, False, True ]
  assert env.truncated and not env.terminated

def test_chain_rejects_bad_edges():
  with pytest.raises(ContractError):
    ChainMdp(n_states=1, edges={ 0: ChainEdge([ 0.5, 0.4 ], [ 0.0 ], [ 1.0 ]) })
  with pytest.raises(ContractError):
    ChainMdp(n_states=1, edges={ 0: ChainEdge([ 0.0, 1.0 ], [ 0.0, 1.0 ], [ 1.0 ]) })
  with pytest.raises(ContractError):
    ChainMdp(n_states=1, edges={ (0, 0): ChainEdge([ 0.0, 1.0 ], [ 0.0 ], [ 1.0 ]) })

def test_chain_probe_pairs():
  env = ChainMdp()
  pairs = env.probe_pairs()
  assert len(pairs) == 6
  assert [ (s, k) for _, _, s, k in pairs ] == [ (s, k) for s in range(3) for k in range(2) ]
  for state, action, s, k in pairs:
    assert env.decode(state) == s
    assert env.action_id(action) == k
  assert env.reward_bound == 2.0

def test_clone_is_independent():
  env = TwoGoalMaze()
  env.reset(seed=0)
  twin = env.clone()
  env.step(np.array([ 1.0, 0.0 ]))
  assert twin.steps == 0
  assert not np.array_equal(twin.position, env.position)

def test_simple_policies():
  rng = np.random.default_rng(0)
  states = np.zeros((10, 2))
  assert ConstantPolicy([ 0.5, -0.5 ]).act(states, rng).shape == (10, 2)
  assert ConstantPolicy([ 0.5 ]).act(np.zeros(2), rng).shape == (1,)

  uniform = UniformPolicy(2).act(states, rng)
  assert uniform.shape == (10, 2) and np.all(np.abs(uniform) <= 1.0)

  choice = DiscreteChoicePolicy([ [ -0.5 ], [ 0.5 ] ], [ 0.5, 0.5 ]).act(np.zeros((1000, 3)), rng)
  assert set(choice.ravel()) == { -0.5, 0.5 }
