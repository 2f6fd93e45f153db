"""
Offline datasets: scripted generation and a flat binary format.

File layout (all header lines are ASCII):

  flowcritic-dataset 1
  fields state:<ds> action:<da> reward:1 next_state:<ds> done:1
  count <N>
  end
  <N records of ds + da + 1 + ds + 1 little-endian float64>

A sidecar JSON file next to the dataset (<path>.json) records the
environment, the behavior mix and the seed that produced it.
"""
from collections import namedtuple
import os

import json5
import numpy as np
from tqdm import tqdm

from .exceptions import DatasetFormatError, DatasetMissingError
from .lib import jsonify, mkdir, spawn_rngs, toabs
from .scheduler import schedule_jobs

MAGIC = b'flowcritic-dataset 1'

Transition = namedtuple('Transition', [ 'state', 'action', 'reward', 'next_state', 'done' ])
Transition.__doc__ = """
One environment step. done marks true termination (the bootstrap
mask); an episode cut off by the step limit stores done=False.
"""

def _normalize_mix(behavior_mix):
  policies = [ policy for policy, _ in behavior_mix ]
  weights = np.asarray([ weight for _, weight in behavior_mix ], dtype=np.float64)
  if len(policies) == 0 or np.any(weights < 0) or weights.sum() <= 0:
    raise ValueError("A behavior mix needs at least one policy with positive weight.")
  return policies, weights / weights.sum()

def _generate_shard(env, behavior_mix, n_transitions, rng, progress=False):
  env = env.clone()
  policies, weights = _normalize_mix(behavior_mix)

  transitions = []
  pbar = tqdm(total=n_transitions, desc="Generating Transitions", disable=(not progress))
  while len(transitions) < n_transitions:
    policy = policies[rng.choice(len(policies), p=weights)]
    state = env.reset(seed=int(rng.integers(2**31)))
    while not env.done and len(transitions) < n_transitions:
      action = np.asarray(policy.act(state, rng), dtype=np.float64).reshape(-1)
      next_state, reward, _ = env.step(action)
      transitions.append(Transition(state, action, float(reward), next_state, bool(env.terminated)))
      state = next_state
      pbar.update(1)
  pbar.close()
  return transitions

def generate_dataset(env, behavior_mix, n_transitions, seed, shards=1, parallel=1, progress=False):
  """
  Roll out scripted policies drawn per episode from behavior_mix.

  env: environment to copy (never stepped itself)
  behavior_mix: list of (policy, weight)
  n_transitions: dataset size
  seed: root seed; shard k uses the k-th child of SeedSequence(seed)
  shards: split the work into this many independent shards, which
    are concatenated in shard order
  parallel: number of threads for shard generation

  Return: list of Transition
  """
  n_transitions = int(n_transitions)
  shards = max(1, int(shards))
  sizes = [ n_transitions // shards + (1 if k < n_transitions % shards else 0) for k in range(shards) ]
  rngs = spawn_rngs(seed, shards)

  def job(size, rng):
    return lambda: _generate_shard(env, behavior_mix, size, rng, progress=(progress and shards == 1))

  parts = schedule_jobs(
    [ job(size, rng) for size, rng in zip(sizes, rngs) ],
    concurrency=parallel,
    progress=("Generating Shards" if progress and shards > 1 else None),
  )

  transitions = []
  for part in parts:
    transitions.extend(part)
  return transitions

def transitions_to_arrays(transitions):
  return (
    np.asarray([ t.state for t in transitions ], dtype=np.float64),
    np.asarray([ t.action for t in transitions ], dtype=np.float64),
    np.asarray([ t.reward for t in transitions ], dtype=np.float64),
    np.asarray([ t.next_state for t in transitions ], dtype=np.float64),
    np.asarray([ t.done for t in transitions ], dtype=np.float64),
  )

def encode_dataset(transitions):
  if len(transitions) == 0:
    raise DatasetFormatError("Refusing to encode an empty dataset.")

  states, actions, rewards, next_states, dones = transitions_to_arrays(transitions)
  state_dim, action_dim = states.shape[1], actions.shape[1]
  records = np.concatenate([
    states, actions, rewards[:, None], next_states, dones[:, None]
  ], axis=1)

  header = [
    MAGIC,
    'fields state:{0} action:{1} reward:1 next_state:{0} done:1'.format(state_dim, action_dim).encode('utf8'),
    'count {}'.format(len(transitions)).encode('utf8'),
    b'end',
  ]
  return b'\n'.join(header) + b'\n' + records.astype('<f8').tobytes('C')

def decode_dataset(buf):
  lines = buf.split(b'\n', 4)
  if len(lines) < 5 or lines[0] != MAGIC or lines[3] != b'end':
    raise DatasetFormatError("Not a flowcritic dataset (bad header).")

  try:
    fields = []
    for token in lines[1].decode('utf8').split()[1:]:
      name, width = token.split(':')
      fields.append((name, int(width)))
    count = int(lines[2].decode('utf8').split()[1])
  except (ValueError, IndexError, UnicodeDecodeError):
    raise DatasetFormatError("Unreadable dataset header: {} / {}".format(lines[1], lines[2]))

  if [ name for name, _ in fields ] != [ 'state', 'action', 'reward', 'next_state', 'done' ]:
    raise DatasetFormatError("Unexpected field order: {}".format(lines[1]))

  width = sum(w for _, w in fields)
  payload = lines[4]
  if len(payload) != count * width * 8:
    raise DatasetFormatError("The payload was {} bytes but the header requires {} bytes.".format(
      len(payload), count * width * 8
    ))

  records = np.frombuffer(payload, dtype='<f8').reshape(count, width).astype(np.float64)
  offsets = np.cumsum([ 0 ] + [ w for _, w in fields ])
  columns = [ records[:, offsets[k]:offsets[k+1]] for k in range(len(fields)) ]
  states, actions, rewards, next_states, dones = columns
  return [
    Transition(states[i], actions[i], float(rewards[i, 0]), next_states[i], bool(dones[i, 0] > 0.5))
    for i in range(count)
  ]

def metadata_path(path):
  return toabs(path) + '.json'

def save_dataset(path, transitions, metadata=None):
  path = toabs(path)
  mkdir(os.path.dirname(path))
  with open(path, 'wb') as f:
    f.write(encode_dataset(transitions))

  metadata = dict(metadata or {})
  metadata['count'] = len(transitions)
  with open(metadata_path(path), 'wt') as f:
    f.write(jsonify(metadata, indent=2, sort_keys=True))
  return path

def load_dataset(path):
  path = toabs(path)
  if not os.path.exists(path):
    raise DatasetMissingError("No dataset at {}. Run `flowcritic gen-data` first.".format(path))
  with open(path, 'rb') as f:
    return decode_dataset(f.read())

def load_metadata(path):
  with open(metadata_path(path), 'rt') as f:
    return json5.loads(f.read())
