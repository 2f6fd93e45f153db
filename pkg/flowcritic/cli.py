"""
flowcritic command line.

  flowcritic gen-data     generate and save an offline dataset
  flowcritic train        train one variant, write a run directory
  flowcritic eval         evaluate the deployed policy of a run
  flowcritic plot         render learning curves from metrics.csv
  flowcritic oracle-check Monte-Carlo return laws on the chain
  flowcritic compare      final scores per variant across runs
"""
from __future__ import print_function

import argparse
import os
import sys

import numpy as np

from .config import AgentConfig, output_root, parse_assignment
from .critic import quantile_levels
from .datasets import save_dataset
from .exceptions import FlowCriticError
from .harness import (
  METRICS_FILE, build_dataset, config_env, default_dataset_path,
  evaluate, load_agent, summarize_runs, train,
)
from .lib import green, jsonify, make_rng, red, toabs
from .oracles import empirical_quantiles, mc_return_distribution, resample_to_match, w1_distance

def load_config(args):
  overrides = {}
  for assignment in (args.set or []):
    key, value = parse_assignment(assignment)
    overrides[key] = value
  if getattr(args, 'seed', None) is not None:
    overrides['seed'] = args.seed
  if getattr(args, 'variant', None) is not None:
    overrides['variant'] = args.variant
  if getattr(args, 'env', None) is not None:
    overrides['env'] = args.env

  if args.config:
    return AgentConfig.from_file(args.config, **overrides)
  return AgentConfig(overrides)

def run_name(config):
  return '{}-{}-seed{}'.format(config.variant, config.env, config.seed)

def cmd_gen_data(args):
  config = load_config(args)
  env = config_env(config)
  transitions = build_dataset(config, env, progress=args.progress)
  path = config.dataset_path or default_dataset_path(config, output_root(args.out_dir))
  save_dataset(path, transitions, metadata={
    'env': config.env,
    'seed': config.seed,
    'behavior_mix': [ [ type(policy).__name__, weight ] for policy, weight in env.default_behavior_mix() ],
    'shards': config.dataset_shards,
  })
  print(green("Wrote {} transitions to {}".format(len(transitions), path)))

def cmd_train(args):
  config = load_config(args)
  root = output_root(args.out_dir)
  if config.dataset_path is None:
    config = config.with_overrides(dataset_path=default_dataset_path(config, root))
  out_dir = os.path.join(root, run_name(config))
  result = train(config, out_dir, progress=(args.progress or config.progress))
  print(green("Metrics: {}".format(result.metrics_path)))
  print(green("Checkpoint: {}".format(result.checkpoint_path)))
  print("offline score: {}  online score: {}".format(result.offline_score, result.online_score))

def cmd_eval(args):
  agent, env, config = load_agent(args.run)
  episodes = args.episodes or config.eval_episodes
  result = evaluate(agent.policy, env, episodes, seed=args.eval_seed, parallel=config.eval_parallel, progress=args.progress)
  print(jsonify({
    'success_rate': result.success_rate,
    'mean_return': result.mean_return,
    'episodes': episodes,
  }, sort_keys=True))

def cmd_plot(args):
  from .plotting import emit_plots
  metrics = args.metrics
  if os.path.isdir(metrics):
    metrics = os.path.join(metrics, METRICS_FILE)
  out_dir = args.plot_dir or os.path.dirname(toabs(metrics))
  for path in emit_plots(metrics, out_dir):
    print(path)

def cmd_oracle_check(args):
  config = load_config(args).with_overrides(env='chain')
  env = config_env(config)
  policy = env.scripted_policy()
  levels = quantile_levels(args.quantiles)

  agent = None
  if args.checkpoint:
    agent, _, _ = load_agent(args.checkpoint)

  for k, (state, action, s, a) in enumerate(env.probe_pairs()):
    first = mc_return_distribution(
      env, policy, state, action, args.rollouts, config.gamma,
      seed=(config.seed, k, 0), parallel=config.eval_parallel, progress=args.progress,
    )
    second = mc_return_distribution(
      env, policy, state, action, args.rollouts, config.gamma,
      seed=(config.seed, k, 1), parallel=config.eval_parallel,
    )
    line = "s={} a={} mean={:.4f} self_w1={:.4f} quantiles={}".format(
      s, a, first.mean(), w1_distance(first, second),
      np.array2string(empirical_quantiles(first, levels), precision=3),
    )
    if agent is not None:
      samples = agent.return_samples(state[None, :], action[None, :], args.quantiles, make_rng(config.seed, k))
      if samples is not None:
        line += " critic_w1={:.4f}".format(w1_distance(samples[0], resample_to_match(first, args.quantiles)))
    print(line)

def cmd_compare(args):
  summary = summarize_runs(args.runs)
  print(jsonify(summary, indent=2))
  if args.plot:
    from .plotting import emit_comparison_plot
    print(emit_comparison_plot(summary, args.plot))

def add_config_flags(parser):
  parser.add_argument('--config', help="key = value text file, or a .json / .json5 object")
  parser.add_argument('--seed', type=int)
  parser.add_argument('--variant', choices=[ 'DFC', 'FC', 'DC', 'FQL' ])
  parser.add_argument('--env', choices=[ 'maze', 'chain' ])
  parser.add_argument('--set', action='append', metavar='KEY=VALUE', help="override one config value")

def build_parser():
  parser = argparse.ArgumentParser(prog='flowcritic', description="Distributional flow critic lab.")
  parser.add_argument('--out-dir', help="output root (default: $FLOWCRITIC_OUTPUT_DIR or ./runs)")
  parser.add_argument('--progress', action='store_true', help="show progress bars")
  sub = parser.add_subparsers(dest='command')
  sub.required = True

  gen = sub.add_parser('gen-data', help="generate an offline dataset")
  add_config_flags(gen)
  gen.set_defaults(func=cmd_gen_data)

  trn = sub.add_parser('train', help="train one variant")
  add_config_flags(trn)
  trn.set_defaults(func=cmd_train)

  ev = sub.add_parser('eval', help="evaluate a trained run")
  ev.add_argument('run', help="run directory")
  ev.add_argument('--episodes', type=int)
  ev.add_argument('--eval-seed', type=int, default=0)
  ev.set_defaults(func=cmd_eval)

  plot = sub.add_parser('plot', help="plot learning curves")
  plot.add_argument('metrics', help="metrics.csv or a run directory")
  plot.add_argument('--plot-dir', help="where to write the SVGs (default: next to the metrics)")
  plot.set_defaults(func=cmd_plot)

  oracle = sub.add_parser('oracle-check', help="Monte-Carlo return laws on the chain")
  add_config_flags(oracle)
  oracle.add_argument('--rollouts', type=int, default=10000)
  oracle.add_argument('--quantiles', type=int, default=11)
  oracle.add_argument('--checkpoint', help="run directory whose critic is compared against the oracle")
  oracle.set_defaults(func=cmd_oracle_check)

  cmp = sub.add_parser('compare', help="compare final scores across runs")
  cmp.add_argument('runs', nargs='+', help="run directories")
  cmp.add_argument('--plot', help="write a bar chart SVG to this path")
  cmp.set_defaults(func=cmd_compare)

  return parser

def main(argv=None):
  args = build_parser().parse_args(argv)
  try:
    args.func(args)
  except FlowCriticError as err:
    print(red("{}: {}".format(type(err).__name__, err)), file=sys.stderr)
    return 1
  return 0

if __name__ == '__main__':
  sys.exit(main())
