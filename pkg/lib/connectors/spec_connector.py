# Copyright 2026 The EBL Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Connector modules - Line specification files.

Reads JSON spec files describing one line or a batch of lines:

  {"machines": 5, "p": [0.6, 0.6, 0.6, 0.6, 0.6], "buffers": [1, 1, 1, 1],
   "policy": "eb", "epsilon": 0.0001,
   "sim": {"replications": 30, "horizon": 500000, "seed": 7, "warmup": 0}}

A batch is either a JSON array of such objects or an object holding shared
defaults ("policy", "epsilon", "sim") and a "cases" array. Each case may carry
a "name" and an "expected" block of reference values.
"""
import dataclasses
import json
import numbers
import re

from ebl_errors import LineEvaluationError
from ebl_general_settings import DEFAULT_EPSILON
from ebl_general_settings import POLICY_EB
from line_model import LineSpec
from simulator import SimConfig

CASE_KEYS = frozenset(
    ('name', 'machines', 'p', 'buffers', 'policy', 'epsilon', 'sim',
     'expected'))
BATCH_KEYS = frozenset(('cases', 'policy', 'epsilon', 'sim', 'description'))
SIM_KEYS = frozenset(('replications', 'horizon', 'seed', 'warmup'))

_WHITESPACE = re.compile(r'[\s,]*')


class SpecFileError(LineEvaluationError):

  def __init__(self, message, source='<spec>', line=None):
    self.source = source
    self.line = line
    if line is not None:
      message = '%s:%d: %s' % (source, line, message)
    else:
      message = '%s: %s' % (source, message)
    super(SpecFileError, self).__init__(message)


@dataclasses.dataclass
class CaseSpec(object):
  name: str
  line: LineSpec
  epsilon: float
  sim: SimConfig
  expected: dict
  line_no: int = 1


def _line_of(text, offset):
  return text.count('\n', 0, offset) + 1


def _array_offsets(text, start):
  """Offsets of the elements of the JSON array opening at text[start]."""
  decoder = json.JSONDecoder()
  offsets = []
  pos = start + 1
  while True:
    pos = _WHITESPACE.match(text, pos).end()
    if pos >= len(text) or text[pos] == ']':
      return offsets
    offsets.append(pos)
    _, pos = decoder.raw_decode(text, pos)


def _cases_offset(text):
  match = re.search(r'"cases"\s*:\s*\[', text)
  return match.end() - 1 if match else None


def _check_keys(obj, allowed, what, source, line):
  if not isinstance(obj, dict):
    raise SpecFileError('%s must be an object' % what, source, line)
  unknown = sorted(set(obj) - allowed)
  if unknown:
    raise SpecFileError('Unknown key(s) in %s: %s' % (what, ', '.join(unknown)),
                        source, line)


def _integer(value, what, source, line):
  if isinstance(value, bool) or not isinstance(value, numbers.Integral):
    raise SpecFileError('%s must be an integer, got %r' % (what, value),
                        source, line)
  return int(value)


def _number(value, what, source, line):
  if isinstance(value, bool) or not isinstance(value, numbers.Real):
    raise SpecFileError('%s must be a number, got %r' % (what, value),
                        source, line)
  return float(value)


def _sim_config(block, defaults, source, line, overrides=None):
  values = dict(defaults)
  if block is not None:
    _check_keys(block, SIM_KEYS, '"sim"', source, line)
    for key, value in block.items():
      values[key] = _integer(value, 'sim.%s' % key, source, line)
  values.update({k: v for k, v in (overrides or {}).items() if v is not None})
  try:
    return SimConfig(replications=values.get('replications', SimConfig.replications),
                     horizon=values.get('horizon', SimConfig.horizon),
                     base_seed=values.get('seed', SimConfig.base_seed),
                     warmup=values.get('warmup', SimConfig.warmup))
  except LineEvaluationError as e:
    raise SpecFileError(str(e), source, line)


def _parse_case(obj, idx, defaults, source, line, overrides):
  _check_keys(obj, CASE_KEYS, 'case %d' % (idx + 1), source, line)
  for key in ('machines', 'p', 'buffers'):
    if key not in obj:
      raise SpecFileError('Missing key "%s"' % key, source, line)
  machines = _integer(obj['machines'], 'machines', source, line)
  if not isinstance(obj['p'], list) or not isinstance(obj['buffers'], list):
    raise SpecFileError('"p" and "buffers" must be arrays', source, line)
  probs = [_number(v, 'p', source, line) for v in obj['p']]
  buffers = [_integer(v, 'buffers', source, line) for v in obj['buffers']]
  policy = obj.get('policy', defaults.get('policy', POLICY_EB))
  name = str(obj.get('name', idx + 1))
  epsilon = overrides.get('epsilon')
  if epsilon is None:
    epsilon = obj.get('epsilon', defaults.get('epsilon', DEFAULT_EPSILON))
  epsilon = _number(epsilon, 'epsilon', source, line)
  if epsilon <= 0.0:
    raise SpecFileError('epsilon must be positive', source, line)
  expected = obj.get('expected', {})
  if not isinstance(expected, dict):
    raise SpecFileError('"expected" must be an object', source, line)
  try:
    spec = LineSpec(machines, tuple(probs), tuple(buffers),
                    policy=str(policy).lower(), name=name)
  except LineEvaluationError as e:
    raise SpecFileError(str(e), source, line)
  sim = _sim_config(obj.get('sim'), defaults.get('sim', {}), source, line,
                    overrides.get('sim'))
  return CaseSpec(name, spec, epsilon, sim, expected, line)


def parse_spec(text, source='<spec>', overrides=None):
  """Parses spec file text into a list of CaseSpec.

  Args:
    text: JSON document.
    source: Name used in error messages.
    overrides: Optional dict with 'epsilon' and 'sim' ({'replications',
      'horizon', 'seed', 'warmup'}) values that win over the file.

  Returns:
    List of CaseSpec in file order.

  Raises:
    SpecFileError: with the offending line number.
  """
  overrides = overrides or {}
  try:
    doc = json.loads(text)
  except json.JSONDecodeError as e:
    raise SpecFileError('Invalid JSON: %s' % e.msg, source, e.lineno)

  defaults = {}
  if isinstance(doc, list):
    items = doc
    start = _WHITESPACE.match(text).end()
  elif isinstance(doc, dict) and 'cases' in doc:
    _check_keys(doc, BATCH_KEYS, 'batch', source, 1)
    items = doc['cases']
    if not isinstance(items, list):
      raise SpecFileError('"cases" must be an array', source, 1)
    start = _cases_offset(text)
    defaults = {k: doc[k] for k in ('policy', 'epsilon') if k in doc}
    if 'sim' in doc:
      _check_keys(doc['sim'], SIM_KEYS, '"sim"', source, 1)
      defaults['sim'] = {k: _integer(v, 'sim.%s' % k, source, 1)
                         for k, v in doc['sim'].items()}
  else:
    return [_parse_case(doc, 0, {}, source, 1, overrides)]

  offsets = _array_offsets(text, start) if start is not None else []
  cases = []
  for idx, obj in enumerate(items):
    line = _line_of(text, offsets[idx]) if idx < len(offsets) else 1
    cases.append(_parse_case(obj, idx, defaults, source, line, overrides))
  return cases


def load_spec(path, overrides=None):
  try:
    with open(path, 'r') as spec_file:
      text = spec_file.read()
  except (IOError, OSError) as e:
    raise SpecFileError('Cannot read spec file: %s' % e, path)
  return parse_spec(text, source=path, overrides=overrides)
