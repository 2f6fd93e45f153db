"""
Run configuration.

AgentConfig is a plain dict of hyperparameters with attribute
access. Values come from, in increasing precedence, the built-in
desk defaults, a preset, a config file and explicit overrides.
Config files are flat `key = value` text (values parsed as JSON5
literals, bare words as strings, `#` starts a comment) or a
.json / .json5 object.
"""
import json
import os

import json5
import python_jsonschema_objects as pjs
from python_jsonschema_objects.validators import ValidationError

from .exceptions import ConfigError
from .lib import toabs

__all__ = [ 'AgentConfig', 'output_root', 'DEFAULT_OUTPUT_DIR' ]

OUTPUT_DIR_ENV = 'FLOWCRITIC_OUTPUT_DIR'
DEFAULT_OUTPUT_DIR = './runs'

VARIANTS = [ 'DFC', 'FC', 'DC', 'FQL' ]
ENVS = [ 'maze', 'chain' ]

ENV_ALPHA = {
  'maze': 10.0,
  'chain': 1.0,
}

DEFAULTS = {
  'variant': 'DFC',
  'env': 'maze',
  'seed': 0,
  'preset': 'desk',

  'num_samples': 51,
  'kappa': 1.0,
  'gamma': 0.99,
  'alpha': None,
  'delta': 0.3,
  'lr_flow_critic': 1e-4,
  'lr_main_critic': 3e-4,
  'lr_actor': 3e-4,
  'ema_coeff': 0.005,
  'batch_size': 256,
  'flow_steps': 10,
  'critic_flow_steps': 10,
  'hidden_dims': [ 64, 64 ],
  'sort_samples': True,
  'noise_grid': False,
  'distill_source': 'bellman',
  'critic_policy': 'actor',

  'offline_steps': 50000,
  'online_steps': 50000,
  'eval_interval': 5000,
  'eval_episodes': 50,
  'eval_parallel': 1,
  'buffer_capacity': 1000000,
  'max_steps': 0,

  'dataset_path': None,
  'dataset_size': 10000,
  'dataset_shards': 1,
  'oracle_rollouts': 2000,
  'progress': False,
}

PRESETS = {
  'desk': {},
  'full': {
    'hidden_dims': [ 512, 512, 512, 512 ],
    'offline_steps': 1000000,
    'online_steps': 1000000,
    'eval_interval': 100000,
    'dataset_size': 1000000,
  },
}

def _integer(minimum):
  return { 'type': 'integer', 'minimum': minimum }

def _number(minimum=None, maximum=None):
  prop = { 'type': 'number' }
  if minimum is not None:
    prop['minimum'] = minimum
  if maximum is not None:
    prop['maximum'] = maximum
  return prop

agent_config_schema = {
  "$schema": "http://json-schema.org/draft-04/schema#",
  "title": "Agent Config",
  "description": "Hyperparameters and run layout for one training run.",
  "required": [ "variant", "env", "seed" ],
  "properties": {
    'variant': { 'type': 'string', 'enum': VARIANTS },
    'env': { 'type': 'string', 'enum': ENVS },
    'seed': _integer(0),
    'preset': { 'type': 'string', 'enum': sorted(PRESETS.keys()) },

    'num_samples': _integer(1),
    'kappa': _number(0),
    'gamma': _number(0, 1),
    'alpha': _number(0),
    'delta': _number(0),
    'lr_flow_critic': _number(0),
    'lr_main_critic': _number(0),
    'lr_actor': _number(0),
    'ema_coeff': _number(0, 1),
    'batch_size': _integer(1),
    'flow_steps': _integer(1),
    'critic_flow_steps': _integer(1),
    'hidden_dims': {
      'type': 'array',
      'items': _integer(1),
      'minItems': 1,
    },
    'sort_samples': { 'type': 'boolean' },
    'noise_grid': { 'type': 'boolean' },
    'distill_source': { 'type': 'string', 'enum': [ 'bellman', 'flow' ] },
    'critic_policy': { 'type': 'string', 'enum': [ 'actor', 'scripted' ] },

    'offline_steps': _integer(0),
    'online_steps': _integer(0),
    'eval_interval': _integer(1),
    'eval_episodes': _integer(1),
    'eval_parallel': _integer(1),
    'buffer_capacity': _integer(1),
    'max_steps': _integer(0),

    'dataset_path': { 'type': 'string' },
    'dataset_size': _integer(1),
    'dataset_shards': _integer(1),
    'oracle_rollouts': _integer(1),
    'progress': { 'type': 'boolean' },
  },
  "additionalProperties": False,
}

builder = pjs.ObjectBuilder(agent_config_schema)
classes = builder.build_classes()
AgentConfigValidation = classes.AgentConfig

INTEGER_KEYS = set(
  key for key, prop in agent_config_schema['properties'].items() if prop.get('type') == 'integer'
)
NUMBER_KEYS = set(
  key for key, prop in agent_config_schema['properties'].items() if prop.get('type') == 'number'
)

# schema minimums are inclusive; these must be strictly positive
POSITIVE_KEYS = ( 'kappa', 'lr_flow_critic', 'lr_main_critic', 'lr_actor', 'ema_coeff' )

def _coerce(key, value):
  if isinstance(value, bool) or value is None:
    return value
  if key in INTEGER_KEYS and isinstance(value, float) and value.is_integer():
    return int(value)
  if key in NUMBER_KEYS and isinstance(value, int):
    return float(value)
  if key == 'hidden_dims' and isinstance(value, (list, tuple)):
    return [ _coerce('seed', v) for v in value ]
  return value

def parse_value(text):
  text = text.strip()
  try:
    return json5.loads(text)
  except ValueError:
    return text

def parse_assignment(line):
  """`key = value` or `key=value` -> (key, parsed value)"""
  if '=' not in line:
    raise ConfigError("Expected `key = value`, got: {}".format(line))
  key, text = line.split('=', 1)
  return key.strip(), parse_value(text)

class AgentConfig(dict):
  def __init__(self, *args, **kwargs):
    dict.__init__(self)
    self.update(DEFAULTS)
    overrides = dict(*args, **kwargs)
    preset = overrides.get('preset', DEFAULTS['preset'])
    if preset not in PRESETS:
      raise ConfigError("Unknown preset {}. Choose from: {}".format(preset, ", ".join(sorted(PRESETS))))
    self.update(PRESETS[preset])
    self.set(**overrides)

  def __getattr__(self, key):
    try:
      return self[key]
    except KeyError:
      raise AttributeError(key)

  def set(self, **overrides):
    for key, value in overrides.items():
      if key not in DEFAULTS:
        raise ConfigError("Unknown config key: {}".format(key))
      self[key] = _coerce(key, value)
    self.validate()
    return self

  def with_overrides(self, **overrides):
    config = AgentConfig(self)
    config.set(**overrides)
    return config

  def validate(self):
    present = { key: value for key, value in self.items() if value is not None }
    try:
      AgentConfigValidation(**present).validate()
    except (ValidationError, TypeError, ValueError) as err:
      raise ConfigError("Invalid config: {}".format(err))

    for key in POSITIVE_KEYS:
      if not self[key] > 0:
        raise ConfigError("{} must be strictly positive. Got {}.".format(key, self[key]))
    if len(self['hidden_dims']) == 0:
      raise ConfigError("hidden_dims needs at least one layer width.")
    if not self['gamma'] < 1.0:
      raise ConfigError("gamma must be less than 1. Got {}.".format(self['gamma']))
    if self['noise_grid'] and self['variant'] == 'FC':
      raise ConfigError("noise_grid configures the main critic, which the FC variant does not have.")
    return self

  @property
  def resolved_alpha(self):
    if self['alpha'] is not None:
      return float(self['alpha'])
    return ENV_ALPHA[self['env']]

  def serialize(self):
    lines = []
    for key in sorted(self.keys()):
      lines.append("{} = {}".format(key, json.dumps(self[key])))
    return "\n".join(lines) + "\n"

  @classmethod
  def from_text(cls, text, **overrides):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
      line = line.split('#', 1)[0].strip()
      if not line:
        continue
      try:
        key, value = parse_assignment(line)
      except ConfigError as err:
        raise ConfigError("line {}: {}".format(lineno, err))
      values[key] = value
    values.update(overrides)
    return cls(values)

  @classmethod
  def from_file(cls, path, **overrides):
    path = toabs(path)
    with open(path, 'rt') as f:
      text = f.read()

    ext = os.path.splitext(path)[1].lower()
    if ext in ('.json', '.json5'):
      try:
        values = json5.loads(text)
      except ValueError as err:
        raise ConfigError("Could not parse {}: {}".format(path, err))
      if not isinstance(values, dict):
        raise ConfigError("{} must hold a JSON object.".format(path))
      values.update(overrides)
      return cls(values)

    return cls.from_text(text, **overrides)

def output_root(out_dir=None):
  """--out-dir, then $FLOWCRITIC_OUTPUT_DIR, then ./runs"""
  if out_dir:
    return toabs(out_dir)
  return toabs(os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR))
