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

"""EBL - Line evaluation service - Commands.

Each command reads a spec file, evaluates every case (optionally on a process
pool) and writes one report row per case, in case order.
"""
import concurrent.futures
import dataclasses
import logging
import time

from decomposition import NegativeStageWip
from decomposition import evaluate
from ebl_errors import LineEvaluationError
from ebl_general_settings import EBL_STATUS_DONE
from ebl_general_settings import EBL_STATUS_FAILED
from ebl_general_settings import EBL_STATUS_NO_CONVERGENCE
from ebl_general_settings import POLICY_EB
from ebl_general_settings import POLICY_IB
from exact_oracle import SingularSystem
from exact_oracle import TooLarge
from exact_oracle import evaluate_exact
from exact_oracle import state_index
from line_evaluation_settings import GCS_BUCKET
from line_evaluation_settings import MSG_REQUIRES_EB
from line_evaluation_settings import SERVICE_NAME
from line_evaluation_settings import compare_schema
from line_evaluation_settings import decomposition_schema
from line_evaluation_settings import exact_schema
from line_evaluation_settings import simulation_schema
from report_connector import FORMAT_CSV
from report_connector import ReportTable
from report_connector import write_report
from simulator import simulate
from spec_connector import SpecFileError
from spec_connector import load_spec
from subsystem_solver import DegenerateDownstream
from subsystem_solver import NoConvergence
from utils import TextUtils

logger = logging.getLogger('EBL-%s' % SERVICE_NAME.lower())

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NUMERICAL_FAILURE = 2


def _outcome(status, error=None, input_error=False, **results):
  out = {'status': status, 'error': error, 'input_error': input_error}
  out.update(results)
  return out


def decompose_task(case):
  try:
    report = evaluate(case.line, eps=case.epsilon)
  except NoConvergence as e:
    logger.error('Case %s: %s', case.name, e)
    return _outcome(EBL_STATUS_NO_CONVERGENCE, str(e))
  except (NegativeStageWip, DegenerateDownstream) as e:
    logger.error('Case %s: %s', case.name, e)
    return _outcome(EBL_STATUS_FAILED, str(e))
  return _outcome(EBL_STATUS_DONE, report=report)


def simulate_task(case, policy=None):
  return _outcome(EBL_STATUS_DONE,
                  report=simulate(case.line, case.sim, policy=policy))


def exact_task(case):
  started = time.perf_counter()
  try:
    report = evaluate_exact(case.line)
  except TooLarge as e:
    logger.error('Case %s: %s', case.name, e)
    return _outcome(EBL_STATUS_FAILED, str(e), input_error=True)
  except SingularSystem as e:
    logger.error('Case %s: %s', case.name, e)
    return _outcome(EBL_STATUS_FAILED, str(e))
  report.wall_time = time.perf_counter() - started
  return _outcome(EBL_STATUS_DONE, report=report,
                  states=len(state_index(case.line)))


def compare_task(case, with_exact=False):
  eb_case = case.line.with_policy(POLICY_EB)
  decomposed = decompose_task(_replace_line(case, eb_case))
  sim_eb = simulate(eb_case, case.sim)
  sim_ib = simulate(case.line.with_policy(POLICY_IB), case.sim)
  exact = None
  if with_exact:
    exact = exact_task(_replace_line(case, eb_case))
  return _outcome(decomposed['status'], decomposed['error'],
                  input_error=bool(exact and exact['input_error']),
                  report=decomposed.get('report'), sim_eb=sim_eb,
                  sim_ib=sim_ib, exact=exact)


def _replace_line(case, line):
  return dataclasses.replace(case, line=line)


def _dispatch(task, cases, workers):
  """Runs task over cases; results come back in case order."""
  if workers > 1 and len(cases) > 1:
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
      return list(pool.map(task, cases))
  return [task(case) for case in cases]


def _load(spec_file, overrides):
  try:
    return load_spec(spec_file, overrides=overrides)
  except SpecFileError as e:
    logger.error('%s', e)
    return None


def _width(cases):
  return max([case.line.n_machines for case in cases], default=1)


def _row(schema, values):
  return [values.get(field.get('name')) for field in schema.get('fields')]


def _indexed(prefix, values, suffix=''):
  return {'%s_%d%s' % (prefix, n, suffix): v
          for n, v in enumerate(values, start=1)}


def _exit_code(outcomes):
  if any(o['input_error'] for o in outcomes):
    return EXIT_INPUT_ERROR
  if any(o['status'] != EBL_STATUS_DONE for o in outcomes):
    return EXIT_NUMERICAL_FAILURE
  return EXIT_OK


def _finish(table, outcomes, out, out_format):
  if out == 'gs://':
    out = 'gs://%s/' % GCS_BUCKET
  write_report(table, out, out_format)
  return _exit_code(outcomes)


def decomposition_row(case, outcome):
  values = {'case': case.name, 'status': outcome['status']}
  report = outcome.get('report')
  if report is not None:
    values.update(_indexed('y', report.stage_wip))
    values.update(_indexed('theta', report.overflow))
    values['nu'] = report.throughput
    values['cpu_s'] = report.wall_time
  return values


def simulation_row(case, report):
  values = {'case': case.name, 'policy': report.policy,
            'status': EBL_STATUS_DONE, 'cpu_s': report.wall_time,
            'nu': report.throughput.mean,
            'nu_hw': report.throughput.half_width_95}
  values.update(_indexed('y', [e.mean for e in report.stage_wip]))
  values.update(_indexed('y', [e.half_width_95 for e in report.stage_wip],
                         '_hw'))
  values.update(_indexed('theta', [e.mean for e in report.overflow]))
  values.update(_indexed('theta', [e.half_width_95 for e in report.overflow],
                         '_hw'))
  return values


def cmd_decompose(spec_file, out_format=FORMAT_CSV, out=None, epsilon=None,
                  workers=1):
  """Decomposition report, one row per case.

  Returns:
    0 on success, 1 on input errors, 2 if a case did not converge.
  """
  cases = _load(spec_file, {'epsilon': epsilon})
  if cases is None:
    return EXIT_INPUT_ERROR
  for case in cases:
    if case.line.policy != POLICY_EB:
      logger.error('%s:%d: case %s: %s', spec_file, case.line_no, case.name,
                   MSG_REQUIRES_EB)
      return EXIT_INPUT_ERROR
  schema = decomposition_schema(_width(cases))
  outcomes = _dispatch(decompose_task, cases, workers)
  table = ReportTable(schema, metadata={'command': 'decompose',
                                        'spec': spec_file, 'cases': {}})
  for case, outcome in zip(cases, outcomes):
    table.addrow(_row(schema, decomposition_row(case, outcome)))
    report = outcome.get('report')
    table.metadata['cases'][case.name] = {
        'epsilon': case.epsilon,
        'status': outcome['status'],
        'error': outcome['error'],
        'outer_iterations': report.outer_iterations if report else None,
        'converged': report.converged if report else False,
        'max_boundary_residual': (report.max_boundary_residual
                                  if report else None),
        'echelon_wip': list(report.echelon_wip) if report else None,
    }
  return _finish(table, outcomes, out, out_format)


def cmd_simulate(spec_file, out_format=FORMAT_CSV, out=None, seed=None,
                 replications=None, horizon=None, warmup=None, workers=1):
  """Simulation report with 95% half-widths, under each case's own policy."""
  overrides = {'sim': {'seed': seed, 'replications': replications,
                       'horizon': horizon, 'warmup': warmup}}
  cases = _load(spec_file, overrides)
  if cases is None:
    return EXIT_INPUT_ERROR
  schema = simulation_schema(_width(cases))
  outcomes = _dispatch(simulate_task, cases, workers)
  table = ReportTable(schema, metadata={'command': 'simulate',
                                        'spec': spec_file, 'cases': {}})
  for case, outcome in zip(cases, outcomes):
    table.addrow(_row(schema, simulation_row(case, outcome['report'])))
    table.metadata['cases'][case.name] = {
        'replications': case.sim.replications,
        'horizon': case.sim.horizon,
        'seed': case.sim.base_seed,
        'warmup': case.sim.warmup,
    }
  return _finish(table, outcomes, out, out_format)


def cmd_exact(spec_file, out_format=FORMAT_CSV, out=None, workers=1):
  """Exact full-chain measures for small EB or IB lines."""
  cases = _load(spec_file, {})
  if cases is None:
    return EXIT_INPUT_ERROR
  schema = exact_schema(_width(cases))
  outcomes = _dispatch(exact_task, cases, workers)
  table = ReportTable(schema, metadata={'command': 'exact',
                                        'spec': spec_file, 'cases': {}})
  for case, outcome in zip(cases, outcomes):
    values = {'case': case.name, 'policy': case.line.policy,
              'status': outcome['status'], 'states': outcome.get('states')}
    report = outcome.get('report')
    if report is not None:
      values.update(_indexed('y', report.stage_wip))
      values.update(_indexed('theta', report.overflow))
      values['nu'] = report.throughput
      values['cpu_s'] = report.wall_time
    table.addrow(_row(schema, values))
    table.metadata['cases'][case.name] = {'error': outcome['error']}
  return _finish(table, outcomes, out, out_format)


def compare_row(case, outcome):
  sim_eb = outcome['sim_eb']
  sim_ib = outcome['sim_ib']
  values = {
      'case': case.name,
      'status': outcome['status'],
      'nu_sim_eb': sim_eb.throughput.mean,
      'nu_sim_eb_hw': sim_eb.throughput.half_width_95,
      'nu_sim_ib': sim_ib.throughput.mean,
      'nu_sim_ib_hw': sim_ib.throughput.half_width_95,
      'eb_minus_ib': sim_eb.throughput.mean - sim_ib.throughput.mean,
  }
  report = outcome.get('report')
  if report is not None:
    values['nu_decomp'] = report.throughput
    values['diff_nu'] = TextUtils.percentdiff(report.throughput,
                                              sim_eb.throughput.mean)
    values.update(_indexed('diff_y', [
        TextUtils.percentdiff(d, s.mean)
        for d, s in zip(report.stage_wip, sim_eb.stage_wip)]))
    values.update(_indexed('diff_theta', [
        TextUtils.percentdiff(d, s.mean)
        for d, s in zip(report.overflow, sim_eb.overflow)]))
  exact = outcome.get('exact')
  if exact and exact.get('report') is not None:
    values['nu_exact'] = exact['report'].throughput
    if report is not None:
      values['diff_nu_exact'] = TextUtils.percentdiff(
          report.throughput, exact['report'].throughput)
  return values


def _compare_exact_task(case):
  return compare_task(case, with_exact=True)


def cmd_compare(spec_file, out_format=FORMAT_CSV, out=None, epsilon=None,
                seed=None, replications=None, horizon=None, warmup=None,
                with_exact=False, workers=1):
  """Decomposition vs EB and IB simulation (and optionally the exact chain).

  Percent differences are 100 * (decomposition - simulation) / simulation.
  """
  overrides = {'epsilon': epsilon,
               'sim': {'seed': seed, 'replications': replications,
                       'horizon': horizon, 'warmup': warmup}}
  cases = _load(spec_file, overrides)
  if cases is None:
    return EXIT_INPUT_ERROR
  schema = compare_schema(_width(cases), with_exact=with_exact)
  task = _compare_exact_task if with_exact else compare_task
  outcomes = _dispatch(task, cases, workers)
  table = ReportTable(schema, metadata={'command': 'compare',
                                        'spec': spec_file, 'cases': {}})
  for case, outcome in zip(cases, outcomes):
    table.addrow(_row(schema, compare_row(case, outcome)))
    table.metadata['cases'][case.name] = {'error': outcome['error']}
  return _finish(table, outcomes, out, out_format)


def safe_run(command, *args, **kwargs):
  """Runs a command, turning unexpected library errors into exit codes."""
  try:
    return command(*args, **kwargs)
  except LineEvaluationError as e:
    logger.error('%s', e)
    return EXIT_INPUT_ERROR
