"""
Ground truth for the critics: Monte-Carlo return distributions
and the sorted-sample Wasserstein-1 estimator.

Empirical quantiles follow the lower convention, the
ceil(tau * N)-th order statistic.
"""
import math

import numpy as np

from .exceptions import ContractError
from .lib import make_rng, toiter
from .scheduler import schedule_jobs

class EmpiricalDistribution(object):
  """
  Scalar samples held in ascending order.

  truncation_bound: bound on the return mass cut off by a finite
    rollout horizon, gamma^horizon * r_max (0 when exact)
  """
  def __init__(self, samples, truncation_bound=0.0):
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(samples)):
      raise ContractError("Empirical distributions hold finite values only.")
    self.samples = np.sort(samples, kind='stable')
    self.truncation_bound = float(truncation_bound)

  def __len__(self):
    return self.samples.size

  def __iter__(self):
    return iter(self.samples)

  def mean(self):
    if len(self) == 0:
      raise ContractError("The mean of an empty distribution is undefined.")
    return float(self.samples.mean())

  def __repr__(self):
    return "EmpiricalDistribution(n={}, truncation_bound={})".format(len(self), self.truncation_bound)

def as_distribution(samples):
  if isinstance(samples, EmpiricalDistribution):
    return samples
  return EmpiricalDistribution(samples)

def _discounted_rollout(env, policy, state, action, gamma, horizon, rng):
  env.reset(seed=int(rng.integers(2**31)), state=state)
  total = 0.0
  discount = 1.0
  next_state, reward, done = env.step(np.asarray(action, dtype=np.float64).reshape(-1))
  total += reward
  for _ in range(1, horizon):
    if done:
      break
    discount *= gamma
    next_state, reward, done = env.step(policy.act(next_state, rng))
    total += discount * reward
  return total

def mc_return_distribution(
  env, policy, state, action, n_rollouts, gamma,
  horizon=200, seed=0, parallel=1, progress=False
):
  """
  Sample sum_t gamma^t r_t from n_rollouts seeded rollouts that take
  `action` in `state` and then follow `policy`.

  Rollout i draws from make_rng(*seed, i) on its own copy of env, so
  the samples are the same whatever `parallel` is. seed is an int or
  a tuple of ints.

  Return: EmpiricalDistribution
  """
  n_rollouts = int(n_rollouts)
  if n_rollouts < 1:
    raise ContractError("Need at least one rollout. Got {}.".format(n_rollouts))
  if not (0.0 <= gamma <= 1.0):
    raise ContractError("Discount must lie in [0, 1]. Got {}.".format(gamma))

  keys = tuple(toiter(seed))
  horizon = int(horizon)
  parallel = max(1, int(parallel))
  n_chunks = 1 if parallel == 1 else min(n_rollouts, parallel * 4)
  bounds = np.linspace(0, n_rollouts, n_chunks + 1).astype(int)

  def chunk(start, stop):
    def run():
      local_env = env.clone()
      return [
        _discounted_rollout(local_env, policy, state, action, gamma, horizon, make_rng(*(keys + (i,))))
        for i in range(start, stop)
      ]
    return run

  parts = schedule_jobs(
    [ chunk(bounds[k], bounds[k+1]) for k in range(n_chunks) ],
    concurrency=parallel,
    progress=("Rollouts" if progress else None),
  )
  samples = [ value for part in parts for value in part ]
  return EmpiricalDistribution(samples, truncation_bound=(gamma ** horizon) * env.reward_bound)

def empirical_quantiles(dist, levels):
  """Lower empirical quantile at each level: the ceil(tau N)-th order statistic."""
  dist = as_distribution(dist)
  n = len(dist)
  if n == 0:
    raise ContractError("Quantiles of an empty distribution are undefined.")

  levels = np.asarray(levels, dtype=np.float64).reshape(-1)
  if np.any(levels < 0) or np.any(levels > 1):
    raise ContractError("Quantile levels must lie in [0, 1].")

  ranks = np.array([ max(1, int(math.ceil(tau * n - 1e-12))) for tau in levels ], dtype=int)
  return dist.samples[np.minimum(ranks, n) - 1]

def w1_distance(a, b):
  """Mean absolute difference of aligned order statistics."""
  a = as_distribution(a)
  b = as_distribution(b)
  if len(a) != len(b):
    raise ContractError(
      "W1 by sorted pairing needs equal sizes. Got {} and {}. See resample_to_match.".format(len(a), len(b))
    )
  if len(a) == 0:
    raise ContractError("W1 between empty distributions is undefined.")
  return float(np.mean(np.abs(a.samples - b.samples)))

def resample_to_match(dist, n):
  """Midpoint-level quantiles of dist, giving n sorted values."""
  n = int(n)
  if n < 1:
    raise ContractError("Cannot resample to {} values.".format(n))
  dist = as_distribution(dist)
  levels = (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)
  return EmpiricalDistribution(empirical_quantiles(dist, levels), truncation_bound=dist.truncation_bound)
