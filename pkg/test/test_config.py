import pytest

from flowcritic import AgentConfig
from flowcritic.config import DEFAULTS, output_root, parse_assignment
from flowcritic.exceptions import ConfigError

def test_defaults():
  config = AgentConfig()
  assert config.variant == 'DFC'
  assert config.env == 'maze'
  assert config.num_samples == 51
  assert config.kappa == 1.0
  assert config.gamma == 0.99
  assert config.ema_coeff == 0.005
  assert config.batch_size == 256
  assert config.flow_steps == 10
  assert config.lr_flow_critic == 1e-4
  assert config.lr_main_critic == 3e-4
  assert config.lr_actor == 3e-4
  assert config.hidden_dims == [ 64, 64 ]
  assert set(config.keys()) == set(DEFAULTS.keys())

  with pytest.raises(AttributeError):
    config.nonexistent

def test_alpha_resolution():
  assert AgentConfig(env='maze').resolved_alpha == 10.0
  assert AgentConfig(env='chain').resolved_alpha == 1.0
  assert AgentConfig(env='maze', alpha=0.5).resolved_alpha == 0.5
  assert AgentConfig(env='maze', alpha=0).resolved_alpha == 0.0

@pytest.mark.parametrize('overrides', [
  { 'learning_rate': 0.1 },
  { 'variant': 'SAC' },
  { 'env': 'cartpole' },
  { 'gamma': 1.0 },
  { 'gamma': -0.1 },
  { 'kappa': 0 },
  { 'alpha': -1.0 },
  { 'batch_size': 0 },
  { 'num_samples': 0 },
  { 'ema_coeff': 0 },
  { 'hidden_dims': [] },
  { 'distill_source': 'oracle' },
  { 'preset': 'huge' },
  { 'variant': 'FC', 'noise_grid': True },
])
def test_rejects_bad_values(overrides):
  with pytest.raises(ConfigError):
    AgentConfig(overrides)

def test_accepts_edge_values():
  assert AgentConfig(gamma=0.995).gamma == 0.995
  assert AgentConfig(gamma=0).gamma == 0.0
  assert AgentConfig(ema_coeff=1).ema_coeff == 1.0
  assert AgentConfig(offline_steps=0, online_steps=0).offline_steps == 0
  assert AgentConfig(batch_size=32.0).batch_size == 32
  assert isinstance(AgentConfig(batch_size=32.0).batch_size, int)

def test_full_preset():
  config = AgentConfig(preset='full')
  assert config.hidden_dims == [ 512, 512, 512, 512 ]
  assert config.offline_steps == 1000000
  assert config.online_steps == 1000000
  assert config.eval_interval == 100000

  # explicit values beat the preset
  assert AgentConfig(preset='full', offline_steps=10).offline_steps == 10

def test_with_overrides_copies():
  config = AgentConfig(env='chain')
  other = config.with_overrides(seed=3)
  assert other.seed == 3 and other.env == 'chain'
  assert config.seed == 0

  with pytest.raises(ConfigError):
    config.set(seed=-1)

def test_text_roundtrip():
  config = AgentConfig(env='chain', seed=7, hidden_dims=[ 16, 8 ], alpha=2.5, dataset_path='/tmp/x.dat')
  text = config.serialize()
  assert 'env = "chain"\n' in text
  assert 'alpha = 2.5\n' in text
  assert AgentConfig.from_text(text) == config

def test_from_text():
  text = """
  # a comment
  env = chain
  seed=4   # trailing comment
  hidden_dims = [32, 32]
  sort_samples = false
  """
  config = AgentConfig.from_text(text, seed=5)
  assert config.env == 'chain'
  assert config.seed == 5
  assert config.hidden_dims == [ 32, 32 ]
  assert config.sort_samples is False

  with pytest.raises(ConfigError) as err:
    AgentConfig.from_text("env = chain\nseed 4\n")
  assert 'line 2' in str(err.value)

  assert parse_assignment('kappa = 0.5') == ('kappa', 0.5)

def test_from_file(tmp_path):
  path = tmp_path / 'run.json5'
  path.write_text("{ env: 'chain', variant: 'FQL', // comment\n num_samples: 9, }")
  config = AgentConfig.from_file(str(path), seed=2)
  assert config.env == 'chain'
  assert config.variant == 'FQL'
  assert config.num_samples == 9
  assert config.seed == 2

  text_path = tmp_path / 'run.txt'
  text_path.write_text(config.serialize())
  assert AgentConfig.from_file(str(text_path)) == config

  bad = tmp_path / 'bad.json'
  bad.write_text('[ 1, 2 ]')
  with pytest.raises(ConfigError):
    AgentConfig.from_file(str(bad))

def test_output_root(tmp_path, monkeypatch):
  monkeypatch.delenv('FLOWCRITIC_OUTPUT_DIR', raising=False)
  assert output_root().endswith('runs')
  monkeypatch.setenv('FLOWCRITIC_OUTPUT_DIR', str(tmp_path / 'env-dir'))
  assert output_root() == str(tmp_path / 'env-dir')
  assert output_root(str(tmp_path / 'flag-dir')) == str(tmp_path / 'flag-dir')
