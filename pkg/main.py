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

"""EBL - Main module.

Command routing for the `evaluate` command line:

  evaluate decompose|simulate|exact|compare --spec FILE [--format csv|json]
      [--out PATH] [--epsilon F] [--seed N] [--replications N] [--horizon N]
"""

import argparse
import logging
import os
import sys

_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.append(os.path.join(_ROOT, 'lib/connectors'))
sys.path.append(os.path.join(_ROOT, 'lib/core'))
sys.path.append(os.path.join(_ROOT, 'lib/utils'))
sys.path.append(os.path.join(_ROOT, 'services/line-evaluation'))

from ebl_logging import configure_logging  # pylint: disable=g-import-not-at-top
import line_evaluation_run  # pylint: disable=g-import-not-at-top
from report_connector import FORMAT_CSV  # pylint: disable=g-import-not-at-top
from report_connector import FORMAT_JSON  # pylint: disable=g-import-not-at-top


def build_parser():
  parser = argparse.ArgumentParser(
      prog='evaluate',
      description='Performance evaluation of Bernoulli serial lines.')
  parser.add_argument('--cloud-logging', action='store_true',
                      help='Send logs to Cloud Logging.')
  parser.add_argument('--log-level', default='INFO',
                      choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
  commands = parser.add_subparsers(dest='command', required=True)

  def command(name, help_text, numerical=False, sim=False):
    sub = commands.add_parser(name, help=help_text)
    sub.add_argument('--spec', required=True, help='Line spec file (JSON).')
    sub.add_argument('--format', dest='out_format', default=FORMAT_CSV,
                     choices=[FORMAT_CSV, FORMAT_JSON])
    sub.add_argument('--out', default=None,
                     help='Output path, gs://bucket/name (gs:// alone for the '
                          'default bucket) or - for stdout.')
    sub.add_argument('--workers', type=int, default=1,
                     help='Cases evaluated in parallel.')
    if numerical:
      sub.add_argument('--epsilon', type=float, default=None,
                       help='Convergence tolerance override.')
    if sim:
      sub.add_argument('--seed', type=int, default=None)
      sub.add_argument('--replications', type=int, default=None)
      sub.add_argument('--horizon', type=int, default=None)
      sub.add_argument('--warmup', type=int, default=None)
    return sub

  command('decompose', 'Decomposition estimates (EB lines).', numerical=True)
  command('simulate', 'Replicated simulation with 95% CIs.', sim=True)
  command('exact', 'Exact full-chain solution for small lines.')
  compare = command('compare', 'Decomposition vs EB and IB simulation.',
                    numerical=True, sim=True)
  compare.add_argument('--exact', action='store_true',
                       help='Add the exact EB throughput column.')
  return parser


def main(argv=None):
  parser = build_parser()
  try:
    args = parser.parse_args(argv)
  except SystemExit as e:
    return line_evaluation_run.EXIT_INPUT_ERROR if e.code else e.code
  configure_logging(use_cloud=args.cloud_logging,
                    level=getattr(logging, args.log_level))

  common = dict(out_format=args.out_format, out=args.out,
                workers=args.workers)
  sim = {}
  if args.command in ('simulate', 'compare'):
    sim = dict(seed=args.seed, replications=args.replications,
               horizon=args.horizon, warmup=args.warmup)

  run = line_evaluation_run
  if args.command == 'decompose':
    return run.safe_run(run.cmd_decompose, args.spec, epsilon=args.epsilon,
                        **common)
  if args.command == 'simulate':
    return run.safe_run(run.cmd_simulate, args.spec, **sim, **common)
  if args.command == 'exact':
    return run.safe_run(run.cmd_exact, args.spec, **common)
  return run.safe_run(run.cmd_compare, args.spec, epsilon=args.epsilon,
                      with_exact=args.exact, **sim, **common)


if __name__ == '__main__':
  sys.exit(main())
