import pytest

import numpy as np
from scipy.stats import wasserstein_distance

from flowcritic.envs import ChainMdp, ConstantPolicy
from flowcritic.exceptions import ContractError
from flowcritic.oracles import (
  EmpiricalDistribution, empirical_quantiles, mc_return_distribution,
  resample_to_match, w1_distance,
)

from agent_harness import TwoStepEnv, bernoulli_step_env

def test_deterministic_returns():
  dist = mc_return_distribution(TwoStepEnv(), ConstantPolicy([ 0.0 ]), np.zeros(1), [ 0.0 ], 25, 0.99)
  assert len(dist) == 25
  assert np.allclose(dist.samples, 1.99)
  assert abs(dist.mean() - 1.99) < 1e-12

def test_bernoulli_returns():
  env = bernoulli_step_env()
  dist = mc_return_distribution(env, ConstantPolicy([ 0.0 ]), env.encode(0), [ 0.0 ], 10000, 0.9, seed=1)
  assert set(np.unique(dist.samples)) == { 0.0, 1.0 }
  assert 0.48 <= dist.mean() <= 0.52
  assert dist.truncation_bound == pytest.approx(0.9 ** 200)

def test_rollouts_do_not_depend_on_threads():
  env = ChainMdp()
  policy = env.scripted_policy()
  state, action, _, _ = env.probe_pairs()[0]
  serial = mc_return_distribution(env, policy, state, action, 300, 0.99, seed=(4, 2), parallel=1)
  threaded = mc_return_distribution(env, policy, state, action, 300, 0.99, seed=(4, 2), parallel=3)
  assert np.array_equal(serial.samples, threaded.samples)

  other = mc_return_distribution(env, policy, state, action, 300, 0.99, seed=(4, 3))
  assert not np.array_equal(serial.samples, other.samples)

def test_more_rollouts_get_closer_to_the_law():
  # exact law: Bernoulli(0.5) returns
  env = bernoulli_step_env()
  state = env.encode(0)

  def gap(n, seed):
    dist = mc_return_distribution(env, ConstantPolicy([ 0.0 ]), state, [ 0.0 ], n, 0.9, seed=(seed,))
    exact = np.repeat([ 0.0, 1.0 ], n // 2)
    return w1_distance(dist, exact)

  seeds = range(40)
  small = np.mean([ gap(500, seed) for seed in seeds ])
  large = np.mean([ gap(2000, seed) for seed in seeds ])
  assert large <= small

def test_mc_rejects_bad_arguments():
  env = TwoStepEnv()
  with pytest.raises(ContractError):
    mc_return_distribution(env, ConstantPolicy([ 0.0 ]), np.zeros(1), [ 0.0 ], 0, 0.9)
  with pytest.raises(ContractError):
    mc_return_distribution(env, ConstantPolicy([ 0.0 ]), np.zeros(1), [ 0.0 ], 5, 1.5)

def test_empirical_quantiles():
  dist = EmpiricalDistribution([ 4.0, 1.0, 3.0, 2.0 ])
  assert np.array_equal(dist.samples, [ 1.0, 2.0, 3.0, 4.0 ])
  assert np.array_equal(empirical_quantiles(dist, [ 0.0, 0.25, 0.5, 0.75, 1.0 ]), [ 1.0, 1.0, 2.0, 3.0, 4.0 ])
  assert np.array_equal(empirical_quantiles(dist, [ 0.26, 0.51 ]), [ 2.0, 3.0 ])

  levels = np.linspace(0, 1, 101)
  values = empirical_quantiles(np.random.default_rng(0).standard_normal(500), levels)
  assert np.all(np.diff(values) >= 0)

  with pytest.raises(ContractError):
    empirical_quantiles([], [ 0.5 ])
  with pytest.raises(ContractError):
    empirical_quantiles(dist, [ 1.5 ])
  with pytest.raises(ContractError):
    EmpiricalDistribution([ 1.0, np.nan ])

def test_w1_distance():
  assert w1_distance([ 0.0, 1.0 ], [ 1.0, 0.0 ]) == 0.0
  assert w1_distance([ 0.0, 0.0 ], [ 1.0, 3.0 ]) == 2.0
  assert w1_distance([ 3.0, 1.0, 2.0 ], [ 2.0, 3.0, 4.0 ]) == 1.0

  with pytest.raises(ContractError):
    w1_distance([ 0.0 ], [ 0.0, 1.0 ])
  with pytest.raises(ContractError):
    w1_distance([], [])

def test_w1_is_a_metric_on_samples():
  rng = np.random.default_rng(0)
  for _ in range(100):
    a, b, c = rng.standard_normal((3, 20)) * rng.uniform(0.1, 3.0, size=(3, 1))
    assert w1_distance(a, a) == 0.0
    assert abs(w1_distance(a, b) - w1_distance(b, a)) < 1e-12
    assert w1_distance(a, c) <= w1_distance(a, b) + w1_distance(b, c) + 1e-12

  a = rng.standard_normal(50)
  assert abs(w1_distance(a, a + 2.5) - 2.5) < 1e-12

  b = rng.exponential(size=50)
  assert abs(w1_distance(a, b) - wasserstein_distance(a, b)) < 1e-12

def test_resample_to_match():
  dist = EmpiricalDistribution(np.arange(1.0, 101.0), truncation_bound=0.5)
  small = resample_to_match(dist, 4)
  assert len(small) == 4
  assert np.array_equal(small.samples, [ 13.0, 38.0, 63.0, 88.0 ])
  assert small.truncation_bound == 0.5

  with pytest.raises(ContractError):
    resample_to_match(dist, 0)
