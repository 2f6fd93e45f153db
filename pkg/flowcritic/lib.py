from __future__ import print_function

import json
import os

import numpy as np

from .exceptions import NumericError

COLORS = {
  'RESET': "\033[m",
  'YELLOW': "\033[1;93m",
  'RED': '\033[1;91m',
  'GREEN': '\033[1;92m',
}

class NumpyEncoder(json.JSONEncoder):
  def default(self, obj):
    if isinstance(obj, np.ndarray):
      return obj.tolist()
    if isinstance(obj, np.integer):
      return int(obj)
    if isinstance(obj, np.floating):
      return float(obj)
    return json.JSONEncoder.default(self, obj)

def jsonify(obj, **kwargs):
  return json.dumps(obj, cls=NumpyEncoder, **kwargs)

def toiter(obj):
  try:
    iter(obj)
    return obj
  except TypeError:
    return [ obj ]

def green(text):
  return colorize('green', text)

def yellow(text):
  return colorize('yellow', text)

def red(text):
  return colorize('red', text)

def colorize(color, text):
  color = color.upper()
  return COLORS[color] + text + COLORS['RESET']

def warn(text):
  print(yellow(text))

def toabs(path):
  path = os.path.expanduser(path)
  return os.path.abspath(path)

def mkdir(path):
  """Create path and any missing parents. Existing directories are fine."""
  path = toabs(path)
  if path != '':
    os.makedirs(path, exist_ok=True)
  return path

def require_finite(arr, what):
  """Raise NumericError naming `what` if arr holds a NaN or Inf."""
  arr = np.asarray(arr)
  if not np.all(np.isfinite(arr)):
    bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
    raise NumericError("{} contains {} non-finite value(s).".format(what, bad))
  return arr

def make_rng(*keys):
  """
  Deterministic numpy Generator from a tuple of non-negative
  integers, e.g. make_rng(seed, episode). Counter-style keys
  give independent streams whose values do not depend on the
  order in which they are consumed.
  """
  return np.random.default_rng([ int(k) for k in keys ])

def spawn_rngs(seed, n):
  """n independent child Generators derived from a root seed."""
  children = np.random.SeedSequence(int(seed)).spawn(n)
  return [ np.random.default_rng(child) for child in children ]

def as_rows(arr):
  """
  Promote a vector to a single-row matrix so single states and
  batches of states go through the same code path.
  """
  arr = np.asarray(arr, dtype=np.float64)
  if arr.ndim == 0:
    return arr.reshape(1, 1)
  if arr.ndim == 1:
    return arr.reshape(1, -1)
  return arr
