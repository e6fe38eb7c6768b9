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

"""EBL - Line evaluation service - Settings constants."""

from ebl_general_settings import GCS_REPORT_BUCKET

SERVICE_NAME = "LINE-EVALUATION"

# Default Cloud Storage destination for published reports.
GCS_BUCKET = GCS_REPORT_BUCKET

# Messages shown on usage errors.
MSG_REQUIRES_EB = "decomposition requires EB policy"


def _field(name, field_type="FLOAT"):
  return {"name": name, "type": field_type}


def _indexed(prefix, count, suffixes=("",)):
  fields = list()
  for n in range(1, count + 1):
    for suffix in suffixes:
      fields.append(_field("%s_%d%s" % (prefix, n, suffix)))
  return fields


def decomposition_schema(n_machines):
  """case, y_1..y_{N-1}, nu, theta_1..theta_{N-2}, cpu_s, status."""
  return {
      "fields": ([_field("case", "STRING")] +
                 _indexed("y", n_machines - 1) + [_field("nu")] +
                 _indexed("theta", n_machines - 2) +
                 [_field("cpu_s"), _field("status", "STRING")])
  }


def simulation_schema(n_machines):
  """Same layout as decomposition_schema with a _hw column after each value."""
  hw = ("", "_hw")
  overflow = _indexed("theta", n_machines - 2, hw)
  return {
      "fields": ([_field("case", "STRING"), _field("policy", "STRING")] +
                 _indexed("y", n_machines - 1, hw) +
                 [_field("nu"), _field("nu_hw")] + overflow +
                 [_field("cpu_s"), _field("status", "STRING")])
  }


def exact_schema(n_machines):
  return {
      "fields": ([_field("case", "STRING"), _field("policy", "STRING"),
                  _field("states", "INTEGER")] +
                 _indexed("y", n_machines - 1) + [_field("nu")] +
                 _indexed("theta", n_machines - 2) +
                 [_field("cpu_s"), _field("status", "STRING")])
  }


def compare_schema(n_machines, with_exact=False):
  exact = [_field("nu_exact"), _field("diff_nu_exact")] if with_exact else []
  return {
      "fields": ([_field("case", "STRING"), _field("nu_decomp"),
                  _field("nu_sim_eb"), _field("nu_sim_eb_hw"),
                  _field("nu_sim_ib"), _field("nu_sim_ib_hw")] + exact +
                 [_field("diff_nu")] +
                 _indexed("diff_y", n_machines - 1) +
                 _indexed("diff_theta", n_machines - 2) +
                 [_field("eb_minus_ib"), _field("status", "STRING")])
  }
