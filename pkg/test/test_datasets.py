import os

import pytest

import numpy as np

from flowcritic.datasets import (
  Transition, decode_dataset, encode_dataset, generate_dataset,
  load_dataset, load_metadata, metadata_path, save_dataset,
)
from flowcritic.envs import ChainMdp, ConstantPolicy, TwoGoalMaze
from flowcritic.exceptions import DatasetFormatError, DatasetMissingError

def chain_data(n=50, seed=0, **kwargs):
  env = ChainMdp()
  return generate_dataset(env, env.default_behavior_mix(), n, seed, **kwargs)

def test_single_policy_mix():
  env = ChainMdp()
  data = generate_dataset(env, [ (ConstantPolicy([ 0.5 ]), 1.0) ], 40, seed=0)
  assert len(data) == 40
  assert all(np.array_equal(t.action, [ 0.5 ]) for t in data)
  # right from s0 always lands in s2, and s2 always terminates
  for t in data:
    if np.array_equal(t.state, [ 1.0, 0.0, 0.0 ]):
      assert t.reward == 0.5 and not t.done
    else:
      assert t.done
      assert np.array_equal(t.next_state, [ 0.0, 0.0, 0.0 ])

def test_generation_is_deterministic():
  assert encode_dataset(chain_data(seed=3)) == encode_dataset(chain_data(seed=3))
  assert encode_dataset(chain_data(seed=3)) != encode_dataset(chain_data(seed=4))

def test_shards_do_not_depend_on_threads():
  serial = chain_data(n=101, shards=4, parallel=1)
  threaded = chain_data(n=101, shards=4, parallel=4)
  assert len(serial) == 101
  assert encode_dataset(serial) == encode_dataset(threaded)

def test_generation_leaves_env_alone():
  env = TwoGoalMaze()
  env.reset(seed=0)
  generate_dataset(env, env.default_behavior_mix(), 20, seed=0)
  assert env.steps == 0

def test_maze_start_actions_are_bimodal():
  env = TwoGoalMaze()
  data = generate_dataset(env, env.default_behavior_mix(), 10000, seed=0)
  starts = [ t for t in data if t.state[1] < -0.7 ]
  assert len(starts) > 100
  horizontal = np.array([ t.action[0] for t in starts ])
  assert np.mean(horizontal < -0.1) >= 0.35
  assert np.mean(horizontal > 0.1) >= 0.35

  for t in data:
    assert np.all(np.abs(t.action) <= 1.0)

def test_episode_limit_is_not_termination():
  env = TwoGoalMaze(max_steps=5)
  data = generate_dataset(env, [ (ConstantPolicy([ 0.0, 0.0 ]), 1.0) ], 10, seed=0)
  assert not any(t.done for t in data)

def test_codec():
  data = chain_data()
  decoded = decode_dataset(encode_dataset(data))
  assert len(decoded) == len(data)
  for a, b in zip(data, decoded):
    assert np.array_equal(a.state, b.state)
    assert np.array_equal(a.action, b.action)
    assert a.reward == b.reward
    assert np.array_equal(a.next_state, b.next_state)
    assert a.done == b.done

def test_codec_header():
  buf = encode_dataset(chain_data(n=3))
  lines = buf.split(b'\n', 4)
  assert lines[0] == b'flowcritic-dataset 1'
  assert lines[1] == b'fields state:3 action:1 reward:1 next_state:3 done:1'
  assert lines[2] == b'count 3'
  assert lines[3] == b'end'
  assert len(lines[4]) == 3 * 9 * 8

def test_codec_rejects_malformed():
  buf = encode_dataset(chain_data(n=3))
  with pytest.raises(DatasetFormatError):
    decode_dataset(buf[:-1])
  with pytest.raises(DatasetFormatError):
    decode_dataset(b'flowcritic-dataset 2' + buf[len(b'flowcritic-dataset 1'):])
  with pytest.raises(DatasetFormatError):
    decode_dataset(buf.replace(b'count 3', b'count x'))
  with pytest.raises(DatasetFormatError):
    decode_dataset(buf.replace(b'reward:1 next_state:3', b'next_state:3 reward:1'))
  with pytest.raises(DatasetFormatError):
    encode_dataset([])

def test_save_and_load(tmp_path):
  data = chain_data(n=10)
  path = save_dataset(str(tmp_path / 'datasets' / 'chain-0.dat'), data, { 'env': 'chain', 'seed': 0 })
  assert os.path.exists(path)
  assert metadata_path(path) == path + '.json'

  loaded = load_dataset(path)
  assert encode_dataset(loaded) == encode_dataset(data)
  assert isinstance(loaded[0], Transition)

  meta = load_metadata(path)
  assert meta == { 'env': 'chain', 'seed': 0, 'count': 10 }

def test_load_missing(tmp_path):
  with pytest.raises(DatasetMissingError):
    load_dataset(str(tmp_path / 'nope.dat'))
