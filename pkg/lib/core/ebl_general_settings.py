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

"""EBL - General Settings.

General constants used by the solvers, the simulator and the services.
"""

from ebl_project_settings import GCS_PROJECT_ROOT

# Status constant values
EBL_STATUS_DONE = u'DONE'
EBL_STATUS_FAILED = u'FAILED'
EBL_STATUS_NO_CONVERGENCE = u'NO_CONVERGENCE'

# Policy names as they appear in spec files and reports
POLICY_EB = 'eb'
POLICY_IB = 'ib'
POLICY_CONWIP = 'conwip'

# Convergence threshold shared by the subsystem solver and the fixed point
DEFAULT_EPSILON = 0.0001
# Gauss-Seidel sweeps allowed for one subsystem solve
GS_MAX_SWEEPS = 10**6
# Subsystem solves allowed for one fixed-point run
OUTER_MAX_SOLVES = 10**5
# Denominator floor for relative changes and conditional probabilities
PROB_FLOOR = 1e-12
# Slack on the slowest-machine throughput bound and on negative stage WIPs
THROUGHPUT_SLACK = 1e-6
NEGATIVE_WIP_TOLERANCE = 1e-6

# Exact full-chain analysis
EXACT_STATE_CAP = 200000
EXACT_RESIDUAL_TOL = 1e-12
POWER_MAX_ITERATIONS = 200000
# (state, outcome) pairs expanded per batch when building a chain
EXACT_CHUNK_ROWS = 2**18

# Largest count representable by a signed 64-bit integer
MAX_STATE_COUNT = 2**63 - 1

# Simulation protocol defaults
SIM_REPLICATIONS = 30
SIM_HORIZON = 500000
SIM_SEED = 20090101
SIM_WARMUP = 0
SIM_CONFIDENCE = 0.95
# Periods of random draws generated per block
SIM_BLOCK_PERIODS = 4096
# Check x_n <= K_n (or w_n <= 1 + C_n) after every simulated period
SIM_ASSERT_FEASIBLE = False

# Report rendering
REPORT_DECIMALS = 5

# Cloud Storage bucket used when reports are published
GCS_REPORT_BUCKET = '%s-line-evaluation' % GCS_PROJECT_ROOT
