"""
Training loop, evaluation protocol and metrics files.

A run directory holds:

  config.txt           the resolved AgentConfig
  metrics.csv          one row per evaluation epoch
  checkpoint.bin       parameters of every network after the last step
  critic_samples.csv   sorted critic samples at each probed (s, a)
                       (chain only, distributional variants)
"""
from collections import OrderedDict, namedtuple
import csv
import io
import os

import numpy as np
from tqdm import tqdm

from .agents import make_variant
from .checkpoint import load_checkpoint, save_checkpoint
from .config import AgentConfig, output_root
from .datasets import Transition, generate_dataset, load_dataset
from .envs import make_env
from .exceptions import ContractError, MetricsParseError, NumericError, TrainingAborted
from .lib import green, make_rng, mkdir, toabs, warn
from .oracles import EmpiricalDistribution, mc_return_distribution, resample_to_match, w1_distance
from .policy import explore_action
from .replay import ReplayBuffer
from .scheduler import schedule_jobs

METRICS_FIELDS = [
  'step', 'phase', 'eval_success_rate', 'eval_mean_return',
  'flow_critic_loss', 'main_critic_loss', 'critic_loss', 'bc_flow_loss',
  'actor_loss', 'distill_loss', 'q_mean', 'actor_grad_norm', 'w1_to_oracle',
]
LOSS_FIELDS = METRICS_FIELDS[4:12]
PHASES = ( 'offline', 'online' )

CONFIG_FILE = 'config.txt'
METRICS_FILE = 'metrics.csv'
CHECKPOINT_FILE = 'checkpoint.bin'
CRITIC_SAMPLES_FILE = 'critic_samples.csv'
ORACLE_HORIZON = 200

MetricsRow = namedtuple('MetricsRow', METRICS_FIELDS)
MetricsRow.__new__.__defaults__ = (None,) * (len(METRICS_FIELDS) - 2)

EvalResult = namedtuple('EvalResult', [ 'success_rate', 'mean_return', 'returns', 'successes' ])
TrainResult = namedtuple('TrainResult', [
  'checkpoint_path', 'metrics_path', 'rows', 'agent', 'offline_score', 'online_score'
])

def config_env(config):
  layout = {}
  if config.max_steps > 0:
    layout['max_steps'] = config.max_steps
  return make_env(config.env, **layout)

def default_dataset_path(config, root):
  return os.path.join(toabs(root), 'datasets', '{}-{}.dat'.format(config.env, config.seed))

def build_dataset(config, env=None, progress=False):
  env = env or config_env(config)
  return generate_dataset(
    env, env.default_behavior_mix(), config.dataset_size, config.seed,
    shards=config.dataset_shards, parallel=config.eval_parallel, progress=progress,
  )

## Evaluation

def _run_episode(env, policy, seed, index):
  rng = make_rng(seed, index)
  state = env.reset(seed=int(rng.integers(2**31)))
  total = 0.0
  while not env.done:
    state, reward, _ = env.step(policy.act(state, rng))
    total += reward
  return total, bool(env.success)

def evaluate(policy, env, n_episodes, seed, parallel=1, progress=False):
  """
  Run n_episodes seeded episodes without exploration noise.
  Episode i draws everything from make_rng(seed, i), so results do
  not depend on `parallel`.

  Return: EvalResult(success_rate, mean_return, returns, successes)
  """
  n_episodes = int(n_episodes)
  if n_episodes < 1:
    raise ContractError("Evaluation needs at least one episode. Got {}.".format(n_episodes))

  def job(i):
    return lambda: _run_episode(env.clone(), policy, seed, i)

  outcomes = schedule_jobs(
    [ job(i) for i in range(n_episodes) ],
    concurrency=parallel,
    progress=("Evaluating" if progress else None),
  )
  returns = np.array([ ret for ret, _ in outcomes ])
  successes = np.array([ ok for _, ok in outcomes ])
  return EvalResult(float(successes.mean()), float(returns.mean()), returns, successes)

## Metrics files

def _format_cell(value):
  if value is None:
    return ''
  if isinstance(value, str):
    return value
  if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
    return str(int(value))
  return repr(float(value))

def format_metrics(rows):
  buf = io.StringIO()
  writer = csv.writer(buf, lineterminator='\n')
  writer.writerow(METRICS_FIELDS)
  for row in rows:
    writer.writerow([ _format_cell(value) for value in row ])
  return buf.getvalue()

def write_metrics(path, rows):
  path = toabs(path)
  mkdir(os.path.dirname(path))
  with open(path, 'wt') as f:
    f.write(format_metrics(rows))
  return path

def parse_metrics(text):
  """Parse metrics CSV text. Malformed input raises MetricsParseError naming the line."""
  lines = text.splitlines()
  if not lines or not lines[0].strip():
    return []

  header = lines[0].strip().split(',')
  if header != METRICS_FIELDS:
    raise MetricsParseError(1, "Unexpected header: {}".format(lines[0]))

  rows = []
  last_step = None
  for lineno, line in enumerate(lines[1:], start=2):
    if not line.strip():
      continue
    cells = line.split(',')
    if len(cells) != len(METRICS_FIELDS):
      raise MetricsParseError(lineno, "Expected {} cells, got {}.".format(len(METRICS_FIELDS), len(cells)))

    try:
      step = int(cells[0])
    except ValueError:
      raise MetricsParseError(lineno, "Step is not an integer: {}".format(cells[0]))
    if last_step is not None and step <= last_step:
      raise MetricsParseError(lineno, "Step {} does not increase on {}.".format(step, last_step))
    last_step = step

    phase = cells[1]
    if phase not in PHASES:
      raise MetricsParseError(lineno, "Unknown phase: {}".format(phase))

    values = []
    for name, cell in zip(METRICS_FIELDS[2:], cells[2:]):
      if cell == '':
        values.append(None)
        continue
      try:
        values.append(float(cell))
      except ValueError:
        raise MetricsParseError(lineno, "{} is not a number: {}".format(name, cell))

    rows.append(MetricsRow(step, phase, *values))
  return rows

def read_metrics(path):
  with open(toabs(path), 'rt') as f:
    return parse_metrics(f.read())

def final_score(rows, phase=None, field='eval_success_rate', last=3):
  """Mean of `field` over the last three evaluation epochs, optionally within one phase."""
  if phase is not None:
    rows = [ row for row in rows if row.phase == phase ]
  values = [ getattr(row, field) for row in rows if getattr(row, field) is not None ]
  if not values:
    return None
  return float(np.mean(values[-last:]))

## Chain oracle probes

class ChainProbe(object):
  """
  Compares the critic's return samples with Monte-Carlo oracles at
  every (state, action) pair of a ChainMdp. Oracles for a fixed
  target policy are computed once; otherwise they follow the
  current deployed policy at each evaluation.
  """
  def __init__(self, env, config, fixed_policy=None):
    self.env = env
    self.config = config
    self.pairs = env.probe_pairs()
    self.fixed_policy = fixed_policy
    self._oracles = None
    self.dump = []

  def oracles(self, policy, step):
    if self.fixed_policy is not None and self._oracles is not None:
      return self._oracles

    oracles = [
      mc_return_distribution(
        self.env, self.fixed_policy or policy, state, action,
        self.config.oracle_rollouts, self.config.gamma, horizon=ORACLE_HORIZON,
        seed=(self.config.seed, 5, k, 0 if self.fixed_policy else step),
        parallel=self.config.eval_parallel,
      )
      for k, (state, action, _, _) in enumerate(self.pairs)
    ]
    if self.fixed_policy is not None:
      self._oracles = oracles
    return oracles

  def measure(self, agent, step):
    """Largest W1 over the probed pairs, or None for critics without samples."""
    rng = make_rng(self.config.seed, 4, step)
    oracles = self.oracles(agent.policy, step)

    worst = None
    for (state, action, s, k), oracle in zip(self.pairs, oracles):
      samples = agent.return_samples(state[None, :], action[None, :], len(oracle), rng)
      if samples is None:
        return None
      scored = EmpiricalDistribution(samples[0])
      distance = w1_distance(scored, oracle)
      worst = distance if worst is None else max(worst, distance)

      # dumped values are order statistics of the scored draw
      shown = resample_to_match(scored, self.config.num_samples)
      self.dump.append([ step, s, k ] + list(shown.samples))
    return worst

  def write(self, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow([ 'step', 'state', 'action' ] + [ 'z{}'.format(i) for i in range(1, self.config.num_samples + 1) ])
    for row in self.dump:
      writer.writerow([ _format_cell(value) for value in row ])
    with open(path, 'wt') as f:
      f.write(buf.getvalue())
    return path

## Training

def _dump_batch(out_dir, step, batch, err):
  path = os.path.join(out_dir, 'nonfinite-step{}.npz'.format(step))
  np.savez(
    path, states=batch.states, actions=batch.actions, rewards=batch.rewards,
    next_states=batch.next_states, dones=batch.dones, error=np.array(str(err)),
  )
  return path

def _resolve_dataset(config, dataset):
  if dataset is not None:
    return dataset
  path = config.dataset_path
  if path is None:
    path = default_dataset_path(config, output_root())
  return load_dataset(path)

def train(config, out_dir, dataset=None, progress=False, trace=False):
  """
  Run the offline phase then the online phase and evaluate every
  eval_interval steps, at the end of the offline phase and at the
  final step.

  config: AgentConfig
  out_dir: run directory, created if missing
  dataset: list of Transition; defaults to config.dataset_path, then
    the default dataset location for the env and seed
  trace: record the update block order in result.agent.trace

  Return: TrainResult
  """
  config = AgentConfig(config)
  out_dir = mkdir(out_dir)
  with open(os.path.join(out_dir, CONFIG_FILE), 'wt') as f:
    f.write(config.serialize())

  env = config_env(config)
  transitions = _resolve_dataset(config, dataset)

  buffer = ReplayBuffer(config.buffer_capacity, env.observation_dim, env.action_dim)
  buffer.preload(transitions)

  fixed_policy = env.scripted_policy() if config.critic_policy == 'scripted' else None
  agent = make_variant(
    config, env.observation_dim, env.action_dim, make_rng(config.seed, 0),
    target_policy=fixed_policy, trace=trace,
  )
  update_rng = make_rng(config.seed, 1)
  collect_rng = make_rng(config.seed, 2)
  probe = ChainProbe(env, config, fixed_policy) if config.env == 'chain' else None

  total = config.offline_steps + config.online_steps
  if total > 0 and config.eval_interval > total:
    warn("eval_interval {} exceeds the {} step run; only the phase end evaluations will run.".format(
      config.eval_interval, total
    ))

  rows = []
  sums = OrderedDict((name, 0.0) for name in LOSS_FIELDS)
  counts = OrderedDict((name, 0) for name in LOSS_FIELDS)
  collect_env = env.clone()
  state = None

  pbar = tqdm(total=total, desc="Training {}".format(config.variant), disable=(not progress))
  for step in range(1, total + 1):
    phase = 'offline' if step <= config.offline_steps else 'online'

    if phase == 'online':
      if state is None or collect_env.done:
        state = collect_env.reset(seed=int(collect_rng.integers(2**31)))
      action = explore_action(agent.policy, state, config.delta, collect_rng)
      next_state, reward, _ = collect_env.step(action)
      buffer.append(Transition(state, action, reward, next_state, collect_env.terminated))
      state = next_state

    batch = buffer.sample(config.batch_size, update_rng)
    try:
      info = agent.update(batch, update_rng)
      for name, value in info.items():
        if not np.isfinite(value):
          raise NumericError("{} is not finite: {}".format(name, value))
    except NumericError as err:
      pbar.close()
      dump_path = _dump_batch(out_dir, step, batch, err)
      raise TrainingAborted(
        "Non-finite value at step {} ({}). Batch written to {}".format(step, err, dump_path),
        dump_path=dump_path,
      )

    for name, value in info.items():
      sums[name] += value
      counts[name] += 1
    pbar.update(1)

    if step % config.eval_interval == 0 or step == config.offline_steps or step == total:
      result = evaluate(
        agent.policy, env, config.eval_episodes, seed=int(make_rng(config.seed, 3, step).integers(2**31)),
        parallel=config.eval_parallel,
      )
      losses = [ (sums[name] / counts[name]) if counts[name] else None for name in LOSS_FIELDS ]
      w1 = probe.measure(agent, step) if probe is not None else None
      rows.append(MetricsRow(step, phase, result.success_rate, result.mean_return, *(losses + [ w1 ])))
      for name in LOSS_FIELDS:
        sums[name] = 0.0
        counts[name] = 0

      if progress:
        tqdm.write("step {} ({}): success {:.3f} return {:.2f}".format(
          step, phase, result.success_rate, result.mean_return
        ))
  pbar.close()

  metrics_path = write_metrics(os.path.join(out_dir, METRICS_FILE), rows)
  checkpoint_path = save_checkpoint(os.path.join(out_dir, CHECKPOINT_FILE), agent.named_params())
  if probe is not None and probe.dump:
    probe.write(os.path.join(out_dir, CRITIC_SAMPLES_FILE))

  offline_score = final_score(rows, 'offline')
  online_score = final_score(rows, 'online')
  if progress:
    print(green("{} finished: offline score {} online score {}".format(config.variant, offline_score, online_score)))

  return TrainResult(checkpoint_path, metrics_path, rows, agent, offline_score, online_score)

def load_agent(run_dir, config=None):
  """Rebuild the agent archived in run_dir."""
  run_dir = toabs(run_dir)
  config = config or AgentConfig.from_file(os.path.join(run_dir, CONFIG_FILE))
  env = config_env(config)
  agent = make_variant(config, env.observation_dim, env.action_dim, make_rng(config.seed, 0))
  agent.load_params(load_checkpoint(os.path.join(run_dir, CHECKPOINT_FILE)))
  return agent, env, config

## Run comparison

def summarize_runs(run_dirs):
  """
  Final scores per variant across run directories.

  Return: OrderedDict variant -> {
      'scores': {seed: final score}, 'mean', 'std',
      'offline_mean', 'online_mean', 'actor_grad_norm_var'
    }
    plus 'dfc_minus_fql' when both variants are present.
  """
  runs = OrderedDict()
  for run_dir in run_dirs:
    run_dir = toabs(run_dir)
    config = AgentConfig.from_file(os.path.join(run_dir, CONFIG_FILE))
    rows = read_metrics(os.path.join(run_dir, METRICS_FILE))
    runs.setdefault(config.variant, []).append((config.seed, rows))

  summary = OrderedDict()
  for variant in sorted(runs):
    scores = OrderedDict()
    offline, online, grad_norms = [], [], []
    for seed, rows in sorted(runs[variant], key=lambda run: run[0]):
      scores[seed] = final_score(rows)
      offline.append(final_score(rows, 'offline'))
      online.append(final_score(rows, 'online'))
      norms = [ row.actor_grad_norm for row in rows if row.actor_grad_norm is not None ]
      if norms:
        grad_norms.append(float(np.mean(norms)))

    values = [ v for v in scores.values() if v is not None ]
    summary[variant] = {
      'scores': scores,
      'mean': float(np.mean(values)) if values else None,
      'std': float(np.std(values)) if values else None,
      'offline_mean': _mean_of_present(offline),
      'online_mean': _mean_of_present(online),
      'actor_grad_norm_var': float(np.var(grad_norms)) if grad_norms else None,
    }

  if 'DFC' in summary and 'FQL' in summary and None not in (summary['DFC']['mean'], summary['FQL']['mean']):
    summary['dfc_minus_fql'] = summary['DFC']['mean'] - summary['FQL']['mean']
  return summary

def _mean_of_present(values):
  values = [ v for v in values if v is not None ]
  return float(np.mean(values)) if values else None
