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

"""EBL - pytest configuration.

Workaround to import the flat lib/* modules for local testing.
"""
import os
import sys

_BASEPATH = os.path.dirname(os.path.abspath(__file__))
for p in ('lib/connectors', 'lib/core', 'lib/utils',
          'services/line-evaluation', ''):
  path = os.path.join(_BASEPATH, p)
  if path not in sys.path:
    sys.path.append(path)
