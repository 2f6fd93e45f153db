"""
A desk-scale laboratory for distributional flow critics in
offline and offline-to-online reinforcement learning.

A target flow critic learns the full law of discounted returns by
flow matching on distributional Bellman targets. A one-step main
critic is distilled from it with the quantile Huber loss and
supplies the gradient that trains a one-step policy, which is
kept close to a behavior cloning flow policy.

Everything runs on numpy with a small reverse-mode autodiff
engine. Two toy environments with verifiable ground truth are
included: a stochastic chain MDP whose return laws can be
estimated by Monte-Carlo rollouts and a two-goal point maze whose
scripted dataset is bimodal at the start.

Example:

  from flowcritic import AgentConfig, build_dataset, train

  config = AgentConfig(env='maze', variant='DFC', seed=0)
  dataset = build_dataset(config)
  result = train(config, './runs/dfc-maze', dataset=dataset, progress=True)
  print(result.offline_score, result.online_score)
"""

from .agents import make_variant, register_variant
from .checkpoint import load_checkpoint, save_checkpoint
from .config import AgentConfig
from .critic import (
  MainCritic, QuantileLevels, ReturnSampleSet, ScalarCritic, TargetFlowCritic,
  quantile_levels,
)
from .datasets import Transition, generate_dataset, load_dataset, save_dataset
from .envs import ChainMdp, TwoGoalMaze, env_step, make_env, register_env
from .flow import VectorFieldNet, euler_sample, fm_loss
from .harness import build_dataset, evaluate, final_score, read_metrics, summarize_runs, train
from .nn import MlpParams, Tensor, no_grad
from .oracles import EmpiricalDistribution, empirical_quantiles, mc_return_distribution, w1_distance
from .policy import BcFlowPolicy, OneStepPolicy
from .replay import ReplayBuffer

from . import exceptions

__version__ = '0.1.0'
