"""
Desk-scale environments and the scripted policies that generate
their datasets.

ChainMdp
  A handful of states with a declared transition kernel and a
  discrete reward law per (state, action id). Return distributions
  under any fixed policy are cheap to estimate by rollout, which
  makes it the testbed for the distributional critic.

TwoGoalMaze
  A point in [-1, 1]^2 that must reach one of two symmetric goal
  discs around a central obstacle. Reward is 0 on the step that
  reaches a goal and -1 otherwise. Scripted data passes the
  obstacle on either side, so the action law at the start is
  bimodal.

Both environments take actions in [-1, 1]^action_dim and are
single-owner objects: use clone() to hand a copy to a worker.
"""
from collections import namedtuple
import copy

import numpy as np

from .exceptions import ConfigError, ContractError
from .lib import as_rows

REGISTERED_ENVS = {}

def register_env(key, creation_function):
  REGISTERED_ENVS[key] = creation_function

def make_env(name, **layout):
  if name not in REGISTERED_ENVS:
    raise ConfigError("Unknown environment {}. Registered: {}".format(
      name, ", ".join(sorted(REGISTERED_ENVS))
    ))
  return REGISTERED_ENVS[name](**layout)

class Environment(object):
  observation_dim = None
  action_dim = None

  def __init__(self, max_steps):
    self.max_steps = int(max_steps)
    self.rng = np.random.default_rng(0)
    self.steps = 0
    self.terminated = False
    self.truncated = False
    self.success = False

  @property
  def done(self):
    return self.terminated or self.truncated

  def _begin(self, seed):
    if seed is not None:
      self.rng = np.random.default_rng(seed)
    self.steps = 0
    self.terminated = False
    self.truncated = False
    self.success = False

  def _check_action(self, action):
    action = np.asarray(action, dtype=np.float64).reshape(-1)
    if action.shape != (self.action_dim,):
      raise ContractError("Expected a {}-D action, got shape {}.".format(self.action_dim, action.shape))
    if np.any(np.abs(action) > 1.0 + 1e-9) or not np.all(np.isfinite(action)):
      raise ContractError("Action {} is outside of the box [-1, 1]^{}.".format(action, self.action_dim))
    if self.done:
      raise ContractError("The episode is over. Call reset() first.")
    return action

  def clone(self):
    return copy.deepcopy(self)

def env_step(env, action):
  """Advance env by one action. Returns (next_state, reward, done)."""
  return env.step(action)

ChainEdge = namedtuple('ChainEdge', [ 'next_probs', 'reward_values', 'reward_probs' ])

class ChainMdp(Environment):
  """
  n_states states plus an absorbing terminal. The continuous
  action is reduced to an action id: 0 if action[0] < 0 else 1.

  edges: {(state, action_id) or state: ChainEdge}
    next_probs: n_states + 1 probabilities, the last one for
      the terminal
    reward_values, reward_probs: discrete reward law
  """
  action_dim = 1
  ACTION_VALUES = (-0.5, 0.5)

  def __init__(self, n_states=3, edges=None, start_state=0, max_steps=200):
    super(ChainMdp, self).__init__(max_steps)
    self.n_states = int(n_states)
    self.observation_dim = self.n_states
    self.start_state = int(start_state)
    self.edges = {}
    self.state_id = self.start_state

    if edges is None:
      edges = default_chain_edges()

    for key, edge in edges.items():
      keys = [ key ] if isinstance(key, tuple) else [ (key, 0), (key, 1) ]
      for k in keys:
        self.edges[k] = self._validate_edge(k, ChainEdge(*edge))

    for s in range(self.n_states):
      for k in (0, 1):
        if (s, k) not in self.edges:
          raise ContractError("No transition declared for state {} action id {}.".format(s, k))

  def _validate_edge(self, key, edge):
    next_probs = np.asarray(edge.next_probs, dtype=np.float64)
    values = np.asarray(edge.reward_values, dtype=np.float64).reshape(-1)
    probs = np.asarray(edge.reward_probs, dtype=np.float64).reshape(-1)
    if next_probs.shape != (self.n_states + 1,):
      raise ContractError("Edge {} needs {} next-state probabilities.".format(key, self.n_states + 1))
    if abs(next_probs.sum() - 1.0) > 1e-9 or np.any(next_probs < 0):
      raise ContractError("Transition kernel row {} does not sum to 1.".format(key))
    if values.shape != probs.shape or abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < 0):
      raise ContractError("Reward law for {} is not a distribution.".format(key))
    if not np.all(np.isfinite(values)):
      raise ContractError("Reward values for {} must be finite.".format(key))
    return ChainEdge(next_probs, values, probs)

  @property
  def reward_bound(self):
    return max(float(np.max(np.abs(edge.reward_values))) for edge in self.edges.values())

  @staticmethod
  def action_id(action):
    return 0 if float(np.asarray(action).reshape(-1)[0]) < 0 else 1

  def encode(self, state_id):
    vec = np.zeros(self.n_states)
    if state_id < self.n_states:
      vec[state_id] = 1.0
    return vec

  def decode(self, state):
    state = np.asarray(state, dtype=np.float64).reshape(-1)
    if state.shape == (self.n_states,):
      return int(np.argmax(state))
    return int(state[0])

  def reset(self, seed=None, state=None):
    self._begin(seed)
    self.state_id = self.start_state if state is None else self.decode(state)
    return self.encode(self.state_id)

  def step(self, action):
    action = self._check_action(action)
    edge = self.edges[(self.state_id, self.action_id(action))]
    reward = float(self.rng.choice(edge.reward_values, p=edge.reward_probs))
    self.state_id = int(self.rng.choice(self.n_states + 1, p=edge.next_probs))
    self.steps += 1

    self.terminated = self.state_id == self.n_states
    self.success = self.terminated
    self.truncated = (not self.terminated) and self.steps >= self.max_steps
    return self.encode(self.state_id), reward, self.done

  def probe_pairs(self):
    """Every (state, representative action) pair, with their ids."""
    pairs = []
    for s in range(self.n_states):
      for k, value in enumerate(self.ACTION_VALUES):
        pairs.append((self.encode(s), np.array([ value ]), s, k))
    return pairs

  def scripted_policy(self):
    return DiscreteChoicePolicy([ [ v ] for v in self.ACTION_VALUES ], [ 0.5, 0.5 ])

  def default_behavior_mix(self):
    return [
      (ConstantPolicy([ self.ACTION_VALUES[0] ]), 0.5),
      (ConstantPolicy([ self.ACTION_VALUES[1] ]), 0.5),
    ]

def default_chain_edges():
  """
  s0 -(0)-> s1, reward Bernoulli(0.5)     s0 -(1)-> s2, reward 0.5
  s1 -(0)-> end, reward 0 or 1            s1 -(1)-> s2 or end, reward 0
  s2 -(0)-> end, reward -1 or 1           s2 -(1)-> end, reward 0 or 2
  """
  return {
    (0, 0): ChainEdge([ 0, 1, 0, 0 ], [ 0.0, 1.0 ], [ 0.5, 0.5 ]),
    (0, 1): ChainEdge([ 0, 0, 1, 0 ], [ 0.5 ], [ 1.0 ]),
    (1, 0): ChainEdge([ 0, 0, 0, 1 ], [ 0.0, 1.0 ], [ 0.5, 0.5 ]),
    (1, 1): ChainEdge([ 0, 0, 0.5, 0.5 ], [ 0.0 ], [ 1.0 ]),
    (2, 0): ChainEdge([ 0, 0, 0, 1 ], [ -1.0, 1.0 ], [ 0.5, 0.5 ]),
    (2, 1): ChainEdge([ 0, 0, 0, 1 ], [ 0.0, 2.0 ], [ 0.75, 0.25 ]),
  }

class TwoGoalMaze(Environment):
  """
  start: nominal start position, jittered by +/- start_noise per axis
  goals: centers of the two goal discs of radius goal_radius
  obstacle: ((xmin, ymin), (xmax, ymax)) blocked rectangle
  max_step: displacement per unit action per axis
  """
  observation_dim = 2
  action_dim = 2

  def __init__(
    self, start=(0.0, -0.8), goals=((-0.7, 0.7), (0.7, 0.7)),
    goal_radius=0.15, obstacle=((-0.25, -0.15), (0.25, 0.15)),
    max_step=0.2, max_steps=100, start_noise=0.05
  ):
    super(TwoGoalMaze, self).__init__(max_steps)
    self.start = np.asarray(start, dtype=np.float64)
    self.goals = np.asarray(goals, dtype=np.float64)
    self.goal_radius = float(goal_radius)
    self.obstacle = np.asarray(obstacle, dtype=np.float64)
    self.max_step = float(max_step)
    self.start_noise = float(start_noise)
    self.position = self.start.copy()

  @property
  def reward_bound(self):
    return 1.0

  def in_obstacle(self, position):
    low, high = self.obstacle
    return bool(np.all(position >= low) and np.all(position <= high))

  def in_goal(self, position):
    return bool(np.any(np.linalg.norm(self.goals - position, axis=1) <= self.goal_radius))

  def reset(self, seed=None, state=None):
    self._begin(seed)
    if state is not None:
      self.position = np.asarray(state, dtype=np.float64).reshape(2).copy()
    else:
      jitter = self.rng.uniform(-self.start_noise, self.start_noise, size=2)
      self.position = self.start + jitter
    return self.position.copy()

  def step(self, action):
    action = self._check_action(action)
    candidate = np.clip(self.position + self.max_step * action, -1.0, 1.0)
    if not self.in_obstacle(candidate):
      self.position = candidate
    self.steps += 1

    self.success = self.in_goal(self.position)
    self.terminated = self.success
    self.truncated = (not self.terminated) and self.steps >= self.max_steps
    reward = 0.0 if self.success else -1.0
    return self.position.copy(), reward, self.done

  def mode_policies(self, noise=0.05):
    """The go-left and go-right scripted drivers, in that order."""
    waypoint_y = self.obstacle[1][1] - 0.15
    half_width = max(abs(self.obstacle[0][0]), abs(self.obstacle[1][0])) + 0.25
    left = GoalSeekingPolicy(self.goals[0], self.max_step, waypoint=(-half_width, waypoint_y), noise=noise)
    right = GoalSeekingPolicy(self.goals[1], self.max_step, waypoint=(half_width, waypoint_y), noise=noise)
    return left, right

  def scripted_policy(self, goal=1):
    return GoalSeekingPolicy(self.goals[goal], self.max_step)

  def default_behavior_mix(self):
    left, right = self.mode_policies()
    return [ (left, 0.45), (right, 0.45), (UniformPolicy(self.action_dim), 0.10) ]

class ConstantPolicy(object):
  def __init__(self, action):
    self.action = np.asarray(action, dtype=np.float64).reshape(-1)

  def act(self, states, rng):
    if np.ndim(states) == 1:
      return self.action.copy()
    return np.tile(self.action, (len(states), 1))

class DiscreteChoicePolicy(object):
  """Picks one of a fixed set of actions with fixed probabilities."""
  def __init__(self, actions, probs):
    self.actions = np.asarray(actions, dtype=np.float64)
    self.probs = np.asarray(probs, dtype=np.float64)

  def act(self, states, rng):
    rows = as_rows(states).shape[0]
    choice = rng.choice(len(self.actions), size=rows, p=self.probs)
    actions = self.actions[choice]
    return actions[0] if np.ndim(states) == 1 else actions

class UniformPolicy(object):
  def __init__(self, action_dim):
    self.action_dim = int(action_dim)

  def act(self, states, rng):
    rows = as_rows(states).shape[0]
    actions = rng.uniform(-1.0, 1.0, size=(rows, self.action_dim))
    return actions[0] if np.ndim(states) == 1 else actions

class GoalSeekingPolicy(object):
  """
  Heads in a straight line for the waypoint while clearly below its
  height, then for the goal. Steps shrink near the target so it
  lands instead of overshooting. Optional Gaussian action noise.
  """
  def __init__(self, goal, max_step, waypoint=None, noise=0.0):
    self.goal = np.asarray(goal, dtype=np.float64)
    self.max_step = float(max_step)
    self.waypoint = None if waypoint is None else np.asarray(waypoint, dtype=np.float64)
    self.noise = float(noise)

  def act(self, states, rng):
    positions = as_rows(states)
    targets = np.tile(self.goal, (positions.shape[0], 1))
    if self.waypoint is not None:
      below = positions[:, 1] < self.waypoint[1] - 0.05
      targets[below] = self.waypoint

    steps = (targets - positions) / self.max_step
    scale = np.maximum(1.0, np.max(np.abs(steps), axis=1, keepdims=True))
    actions = steps / scale
    if self.noise > 0:
      actions = actions + self.noise * rng.standard_normal(actions.shape)
    actions = np.clip(actions, -1.0, 1.0)
    return actions[0] if np.ndim(states) == 1 else actions

register_env('chain', ChainMdp)
register_env('maze', TwoGoalMaze)
