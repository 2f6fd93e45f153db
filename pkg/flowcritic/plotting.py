"""
Static SVG learning curves.

Every image is a pure function of its input: the SVG hash salt is
fixed and no creation date is written.
"""
import os

import numpy as np

from .harness import METRICS_FIELDS, read_metrics
from .lib import mkdir, toabs, warn

PLOTTED_FIELDS = METRICS_FIELDS[2:]
OFFLINE_SHADE = '0.85'

def _pyplot():
  try:
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt
  except ImportError:
    warn("Plotting requires matplotlib. Try: pip install matplotlib")
    raise
  plt.rcParams['svg.hashsalt'] = 'flowcritic'
  return plt

def _save(fig, path):
  fig.savefig(path, format='svg', metadata={ 'Date': None })

def offline_boundary(rows):
  """Step of the last offline evaluation, or None if the run has none."""
  steps = [ row.step for row in rows if row.phase == 'offline' ]
  return max(steps) if steps else None

def emit_plots(metrics_file, out_dir):
  """
  One learning curve per metric column, with the offline phase
  shaded from step 0 to the last offline evaluation.

  Return: list of written SVG paths
  """
  plt = _pyplot()
  rows = read_metrics(metrics_file)
  out_dir = mkdir(out_dir)
  boundary = offline_boundary(rows)

  paths = []
  for field in PLOTTED_FIELDS:
    points = [ (row.step, getattr(row, field)) for row in rows if getattr(row, field) is not None ]

    fig, ax = plt.subplots(figsize=(6, 4))
    if boundary is not None:
      ax.axvspan(0, boundary, color=OFFLINE_SHADE, zorder=0, label='offline')
    if points:
      steps, values = zip(*points)
      ax.plot(steps, values, marker='o', linewidth=1.5)
    ax.set_xlabel('step')
    ax.set_ylabel(field)
    ax.set_title(field)

    path = os.path.join(out_dir, '{}.svg'.format(field))
    _save(fig, path)
    plt.close(fig)
    paths.append(path)

  return paths

def emit_comparison_plot(summary, path):
  """Bar chart of the mean final score per variant, one dot per seed."""
  plt = _pyplot()
  path = toabs(path)
  mkdir(os.path.dirname(path))

  variants = [ key for key, value in summary.items() if isinstance(value, dict) ]
  means = [ summary[v]['mean'] if summary[v]['mean'] is not None else 0.0 for v in variants ]
  stds = [ summary[v]['std'] if summary[v]['std'] is not None else 0.0 for v in variants ]

  fig, ax = plt.subplots(figsize=(6, 4))
  positions = np.arange(len(variants))
  ax.bar(positions, means, yerr=stds, color='0.7', capsize=4)
  for x, variant in zip(positions, variants):
    scores = [ s for s in summary[variant]['scores'].values() if s is not None ]
    ax.scatter([ x ] * len(scores), scores, color='k', s=12, zorder=3)
  ax.set_xticks(positions)
  ax.set_xticklabels(variants)
  ax.set_ylabel('final success rate')

  _save(fig, path)
  plt.close(fig)
  return path
