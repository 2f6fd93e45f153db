"""
Desk-scale acceptance runs. Each criterion logs one line to
./acceptance.tsv. Select criteria by name on the command line,
e.g. python acceptance.py flow_bimodal chain_fixed_point
"""
import argparse
import socket
import tempfile
import time

import numpy as np
from scipy.special import ndtri

from flowcritic import AgentConfig
from flowcritic.critic import MainCritic, distill_loss, quantile_levels
from flowcritic.envs import ChainMdp, TwoGoalMaze
from flowcritic.flow import FlowPath, VectorFieldNet, euler_sample, fm_loss
from flowcritic.harness import build_dataset, final_score, train
from flowcritic.nn import AdamState, adam_step, backprop, no_grad
from flowcritic.oracles import empirical_quantiles, mc_return_distribution, w1_distance
from flowcritic.policy import BcFlowPolicy, bc_flow_loss, bc_flow_sample
from flowcritic.replay import batch_from_transitions

SEEDS = ( 0, 1, 2, 3 )

logfile = open('./acceptance.tsv', 'wt')
logfile.write("hostname\tcriterion\tmeasured\tthreshold\tpassed\tseconds\n")
logfile.flush()

def stopwatch(fn):
	start = time.time()
	result = fn()
	return result, time.time() - start

def log(criterion, measured, threshold, passed, seconds):
	line = "%s\t%s\t%s\t%s\t%s\t%.1f\n" % (socket.gethostname(), criterion, measured, threshold, passed, seconds)
	logfile.write(line)
	logfile.flush()
	print(line.strip())

def fit(params, loss_fn, lr, steps):
	opt = AdamState.for_params(params, lr=lr)
	for _ in range(steps):
		backprop(loss_fn(), params)
		adam_step(opt, params)

def bimodal(rng, n):
	centers = np.where(rng.uniform(size=n) < 0.5, -2.0, 2.0)
	return centers + 0.5 * rng.standard_normal(n)

def flow_bimodal():
	rng = np.random.default_rng(0)
	field = VectorFieldNet.create(1, 1, [ 64, 64 ], rng)
	condition = np.ones(1)

	def loss():
		path = FlowPath.sample(bimodal(rng, 256).reshape(-1, 1), rng)
		return fm_loss(field, condition, path.x0, path.x1, path.t)

	fit(field.net, loss, 1e-3, 4000)
	with no_grad():
		generated = euler_sample(field, condition, rng.standard_normal((10000, 1)), 10).data.ravel()
	distance = w1_distance(generated, bimodal(rng, 10000))
	return distance, 0.15, distance <= 0.15

def quantile_distillation():
	rng = np.random.default_rng(0)
	M = 51
	levels = quantile_levels(M)
	pool = rng.standard_normal(10000)
	main = MainCritic.create(1, 1, [ 64, 64 ], rng)
	states = np.zeros((64, 1))
	actions = np.zeros((64, 1))

	def loss():
		targets = rng.choice(pool, size=(64, M))
		return distill_loss(main, states, actions, targets, levels, 1.0, rng)

	fit(main.net, loss, 1e-3, 3000)
	with no_grad():
		z = main(states[:1], actions[:1], rng.standard_normal((1, 20000))).data[0]

	inner = (levels.levels >= 0.1) & (levels.levels <= 0.9)
	taus = levels.levels[inner]
	error = float(np.max(np.abs(empirical_quantiles(z, taus) - ndtri(taus))))
	return error, 0.1, error <= 0.1

def chain_run(variant, threshold, steps=10000):
	config = AgentConfig(
		env='chain', variant=variant, seed=0, critic_policy='scripted',
		offline_steps=steps, online_steps=0, eval_interval=steps // 10,
		eval_episodes=10, oracle_rollouts=10000, dataset_size=10000,
	)
	out_dir = tempfile.mkdtemp(prefix='acceptance-{}-'.format(variant))
	result = train(config, out_dir, dataset=build_dataset(config))
	gaps = [ row.w1_to_oracle for row in result.rows ]
	last = gaps[-3:]
	steady = all(b <= a + 1e-3 for a, b in zip(last, last[1:]))
	return gaps[-1], threshold, gaps[-1] <= threshold and steady

def chain_fixed_point():
	return chain_run('DFC', 0.1)

def chain_self_w1():
	env = ChainMdp()
	policy = env.scripted_policy()
	worst = 0.0
	for k, (state, action, _, _) in enumerate(env.probe_pairs()):
		first = mc_return_distribution(env, policy, state, action, 10000, 0.99, seed=(0, k, 0), parallel=4)
		second = mc_return_distribution(env, policy, state, action, 10000, 0.99, seed=(0, k, 1), parallel=4)
		worst = max(worst, w1_distance(first, second))
	return worst, 0.02, worst <= 0.02

def bc_multimodality():
	rng = np.random.default_rng(0)
	env = TwoGoalMaze()
	config = AgentConfig(env='maze', seed=0)
	batch = batch_from_transitions(build_dataset(config, env))
	bc = BcFlowPolicy.create(2, 2, [ 64, 64 ], rng)

	def loss():
		idx = rng.integers(0, len(batch.states), size=256)
		return bc_flow_loss(bc, batch.states[idx], batch.actions[idx], rng)

	fit(bc.trainable(), loss, 3e-4, 20000)

	start = np.tile(env.start, (1000, 1))
	samples = bc_flow_sample(bc, start, rng.standard_normal((1000, 2)))
	left, right = env.mode_policies()
	targets = [ left.act(start, rng).mean(axis=0), right.act(start, rng).mean(axis=0) ]

	clusters = [ samples[:, 0] < 0, samples[:, 0] >= 0 ]
	shares, offsets = [], []
	for members, target in zip(clusters, targets):
		shares.append(float(np.mean(members)))
		center = samples[members].mean(axis=0) if np.any(members) else np.full(2, np.inf)
		offsets.append(float(np.max(np.abs(center - target))))
	passed = min(shares) >= 0.3 and max(offsets) <= 0.1
	return "shares=%s offsets=%s" % (shares, offsets), "0.3/0.1", passed

def maze_runs(variant, online_steps):
	scores = []
	for seed in SEEDS:
		config = AgentConfig(
			env='maze', variant=variant, seed=seed,
			offline_steps=50000, online_steps=online_steps, eval_interval=5000,
		)
		out_dir = tempfile.mkdtemp(prefix='acceptance-{}-{}-'.format(variant, seed))
		result = train(config, out_dir, dataset=build_dataset(config))
		scores.append((final_score(result.rows, 'offline'), final_score(result.rows, 'online')))
	return scores

def offline_maze():
	dfc = maze_runs('DFC', 0)
	fql = maze_runs('FQL', 0)
	dfc_mean = float(np.mean([ offline for offline, _ in dfc ]))
	fql_mean = float(np.mean([ offline for offline, _ in fql ]))
	passed = dfc_mean >= 0.8 and dfc_mean >= fql_mean - 0.05
	return "DFC=%.3f FQL=%.3f" % (dfc_mean, fql_mean), "0.8", passed

def offline_to_online():
	scores = maze_runs('DFC', 50000)
	drops = [ offline - online for offline, online in scores ]
	return "drops=%s" % drops, "0.05", max(drops) <= 0.05

def ablations():
	dc_gap, _, dc_passed = chain_run('DC', 0.15)

	config = AgentConfig(env='chain', variant='FC', seed=0, offline_steps=5000, online_steps=0, eval_interval=500, eval_episodes=10)
	result = train(config, tempfile.mkdtemp(prefix='acceptance-FC-'), dataset=build_dataset(config))
	norms = [ row.actor_grad_norm for row in result.rows ]
	fc_passed = len(norms) > 0 and all(n is not None for n in norms)
	return "DC=%.4f FC_grad_norm_var=%.4g" % (dc_gap, np.var(norms)), "0.15", dc_passed and fc_passed

def determinism():
	config = AgentConfig(env='chain', seed=0, offline_steps=500, online_steps=500, eval_interval=250, eval_episodes=5)
	dataset = build_dataset(config)
	contents = []
	for _ in range(2):
		result = train(config, tempfile.mkdtemp(prefix='acceptance-det-'), dataset=dataset)
		with open(result.metrics_path, 'rb') as f:
			contents.append(f.read())
	same = contents[0] == contents[1]
	return same, True, same

CRITERIA = [
	('flow_bimodal', flow_bimodal),
	('quantile_distillation', quantile_distillation),
	('chain_fixed_point', chain_fixed_point),
	('chain_self_w1', chain_self_w1),
	('bc_multimodality', bc_multimodality),
	('offline_maze', offline_maze),
	('offline_to_online', offline_to_online),
	('ablations', ablations),
	('determinism', determinism),
]

parser = argparse.ArgumentParser(description="Desk-scale acceptance runs.")
parser.add_argument('criteria', nargs='*', help="criteria to run (default: all)")
args = parser.parse_args()

selected = args.criteria or [ name for name, _ in CRITERIA ]
for name, fn in CRITERIA:
	if name not in selected:
		continue
	(measured, threshold, passed), seconds = stopwatch(fn)
	log(name, measured, threshold, passed, seconds)

logfile.close()
