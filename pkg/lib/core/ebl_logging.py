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

"""EBL - Logging setup.

Logging configuration.
"""
import logging
from google.cloud import logging as cloud_logging

_LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def configure_logging(use_cloud=False, level=logging.INFO):
  """Configure EBL logging.

  Invoke once at application startup, before any log calls.

  Args:
    use_cloud: Send records to Cloud Logging instead of stderr.
    level: Root log level.
  """
  if use_cloud:
    client = cloud_logging.Client()
    client.setup_logging(log_level=level)
  else:
    logging.basicConfig(level=level, format=_LOG_FORMAT)
