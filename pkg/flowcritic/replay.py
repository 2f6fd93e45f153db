from collections import namedtuple

import numpy as np

from .datasets import Transition
from .exceptions import BufferEmptyError, ShapeError

Batch = namedtuple('Batch', [ 'states', 'actions', 'rewards', 'next_states', 'dones' ])

class ReplayBuffer(object):
  """
  Fixed capacity ring of transitions. Offline data is preloaded
  and online transitions are appended; once full, the oldest
  transition is overwritten regardless of where it came from.

  offline_count: number of transitions that were preloaded
  """
  def __init__(self, capacity, observation_dim, action_dim):
    self.capacity = int(capacity)
    if self.capacity < 1:
      raise ValueError("Replay buffer capacity must be positive. Got {}.".format(capacity))

    self.observation_dim = int(observation_dim)
    self.action_dim = int(action_dim)
    self.states = np.zeros((self.capacity, self.observation_dim))
    self.actions = np.zeros((self.capacity, self.action_dim))
    self.rewards = np.zeros(self.capacity)
    self.next_states = np.zeros((self.capacity, self.observation_dim))
    self.dones = np.zeros(self.capacity)

    self.ptr = 0
    self.size = 0
    self.offline_count = 0

  def __len__(self):
    return self.size

  def append(self, transition):
    state = np.asarray(transition.state, dtype=np.float64).reshape(-1)
    action = np.asarray(transition.action, dtype=np.float64).reshape(-1)
    if state.shape != (self.observation_dim,) or action.shape != (self.action_dim,):
      raise ShapeError("Transition of shape {} / {} does not fit a {} / {} buffer.".format(
        state.shape, action.shape, self.observation_dim, self.action_dim
      ))

    self.states[self.ptr] = state
    self.actions[self.ptr] = action
    self.rewards[self.ptr] = transition.reward
    self.next_states[self.ptr] = transition.next_state
    self.dones[self.ptr] = float(transition.done)

    self.ptr = (self.ptr + 1) % self.capacity
    self.size = min(self.size + 1, self.capacity)
    return self

  def preload(self, transitions):
    for transition in transitions:
      self.append(transition)
    self.offline_count += len(transitions)
    return self

  def _slot(self, i):
    """Storage slot of the i-th oldest transition."""
    if i < 0 or i >= self.size:
      raise IndexError("Transition {} is out of range for a buffer of {}.".format(i, self.size))
    start = self.ptr if self.size == self.capacity else 0
    return (start + i) % self.capacity

  def __getitem__(self, i):
    slot = self._slot(i)
    return Transition(
      self.states[slot].copy(), self.actions[slot].copy(), float(self.rewards[slot]),
      self.next_states[slot].copy(), bool(self.dones[slot] > 0.5)
    )

  def sample(self, batch_size, rng):
    """Uniform with replacement over the stored transitions."""
    if self.size == 0:
      raise BufferEmptyError("Cannot sample from an empty replay buffer.")
    idx = rng.integers(0, self.size, size=int(batch_size))
    return Batch(
      self.states[idx], self.actions[idx], self.rewards[idx],
      self.next_states[idx], self.dones[idx]
    )

def buffer_sample(buffer, batch_size, rng):
  return buffer.sample(batch_size, rng)

def buffer_append(buffer, transition):
  return buffer.append(transition)

def batch_from_transitions(transitions):
  """Stack a list of transitions into a Batch, in order."""
  return Batch(
    np.asarray([ t.state for t in transitions ], dtype=np.float64),
    np.asarray([ t.action for t in transitions ], dtype=np.float64),
    np.asarray([ t.reward for t in transitions ], dtype=np.float64),
    np.asarray([ t.next_state for t in transitions ], dtype=np.float64),
    np.asarray([ t.done for t in transitions ], dtype=np.float64),
  )
