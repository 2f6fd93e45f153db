"""
Parameter checkpoints.

Format: a plain-text header followed by a little-endian float64
stream.

  flowcritic-checkpoint 1
  layer <group> <index> <out> <in>    (one line per dense layer)
  end

The payload holds, for each header line in order, the weight
matrix (out x in, row major) followed by the bias (out).
"""
from collections import OrderedDict
import os

import numpy as np

from .exceptions import CheckpointFormatError
from .lib import mkdir, toabs
from .nn import MlpParams

MAGIC = b'flowcritic-checkpoint 1'

def encode_checkpoint(named_params):
  header = [ MAGIC ]
  payload = []
  for group, params in named_params.items():
    if not group or any(c.isspace() for c in group):
      raise ValueError("Checkpoint group names cannot be empty or contain whitespace: {}".format(repr(group)))
    for index, (weight, bias) in enumerate(params.layers):
      out_dim, in_dim = weight.shape
      header.append('layer {} {} {} {}'.format(group, index, out_dim, in_dim).encode('utf8'))
      payload.append(weight.data.astype('<f8').tobytes('C'))
      payload.append(bias.data.astype('<f8').tobytes('C'))
  header.append(b'end')
  return b'\n'.join(header) + b'\n' + b''.join(payload)

def decode_checkpoint(buf):
  lines = []
  offset = 0
  while True:
    newline = buf.find(b'\n', offset)
    if newline == -1:
      raise CheckpointFormatError("Checkpoint header is not terminated by 'end'.")
    line = buf[offset:newline]
    offset = newline + 1
    if line == b'end':
      break
    lines.append(line)

  if not lines or lines[0] != MAGIC:
    raise CheckpointFormatError("Not a flowcritic checkpoint (bad magic line).")

  layout = []
  for line in lines[1:]:
    fields = line.decode('utf8').split()
    if len(fields) != 5 or fields[0] != 'layer':
      raise CheckpointFormatError("Malformed header line: {}".format(line))
    group, index, out_dim, in_dim = fields[1], int(fields[2]), int(fields[3]), int(fields[4])
    layout.append((group, index, out_dim, in_dim))

  expected = sum(out_dim * in_dim + out_dim for _, _, out_dim, in_dim in layout) * 8
  if len(buf) - offset != expected:
    raise CheckpointFormatError("The payload was {} bytes but the header requires {} bytes.".format(
      len(buf) - offset, expected
    ))

  values = np.frombuffer(buf, dtype='<f8', offset=offset).astype(np.float64)
  groups = OrderedDict()
  cursor = 0
  for group, index, out_dim, in_dim in layout:
    weight = values[cursor:cursor + out_dim * in_dim].reshape(out_dim, in_dim)
    cursor += out_dim * in_dim
    bias = values[cursor:cursor + out_dim]
    cursor += out_dim
    layers = groups.setdefault(group, [])
    if index != len(layers):
      raise CheckpointFormatError("Layer {} of group {} is out of order.".format(index, group))
    layers.append((weight.copy(), bias.copy()))

  return OrderedDict(
    (group, MlpParams(layers)) for group, layers in groups.items()
  )

def save_checkpoint(path, named_params):
  path = toabs(path)
  mkdir(os.path.dirname(path))
  with open(path, 'wb') as f:
    f.write(encode_checkpoint(named_params))
  return path

def load_checkpoint(path):
  with open(toabs(path), 'rb') as f:
    return decode_checkpoint(f.read())
