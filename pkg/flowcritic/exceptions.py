class FlowCriticError(Exception):
  """Base class for every error raised by flowcritic."""
  pass

class ShapeError(FlowCriticError, ValueError):
  """Array or parameter dimensions do not chain."""
  pass

class ContractError(FlowCriticError, ValueError):
  """
  An operation was called outside of its domain, e.g. an
  interpolation time outside of [0,1] or a non-scalar loss.
  """
  pass

class NumericError(FlowCriticError, ArithmeticError):
  """A NaN or Inf showed up in a loss, gradient or sampled return."""
  pass

class BufferEmptyError(FlowCriticError):
  """Attempted to sample from a replay buffer holding no transitions."""
  pass

class ConfigError(FlowCriticError, ValueError):
  """Unknown key, wrong type, or out of range configuration value."""
  pass

class MetricsParseError(FlowCriticError, ValueError):
  """A metrics CSV could not be parsed. The message names the line."""
  def __init__(self, lineno, message):
    self.lineno = lineno
    super(MetricsParseError, self).__init__(
      "line {}: {}".format(lineno, message)
    )

class DatasetFormatError(FlowCriticError, ValueError):
  """Dataset file header is missing or inconsistent with its payload."""
  pass

class DatasetMissingError(FlowCriticError, IOError):
  """Training was requested but no dataset file exists for the env."""
  pass

class CheckpointFormatError(FlowCriticError, ValueError):
  """Checkpoint header is missing or inconsistent with its payload."""
  pass

class TrainingAborted(FlowCriticError):
  """
  A loss went non-finite during training. The offending
  batch was written to dump_path before raising.
  """
  def __init__(self, message, dump_path=None):
    self.dump_path = dump_path
    super(TrainingAborted, self).__init__(message)
