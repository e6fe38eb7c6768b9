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

"""Utility modules - Misc utility methods."""

import logging
import math
import time


class TextUtils(object):
  """Provides text/string related utility methods."""

  def __init__(self):
    pass

  @classmethod
  def timestamp(cls):
    return time.strftime("%Y%m%d_%H%M%S")

  @classmethod
  def fixed(cls, value, decimals):
    """Fixed-point rendering; None and NaN render as an empty field."""
    if value is None:
      return ""
    if isinstance(value, float):
      if math.isnan(value):
        return ""
      out = "%.*f" % (decimals, value)
      if out.startswith("-") and float(out) == 0.0:
        out = out[1:]
      return out
    return str(value)

  @classmethod
  def percentdiff(cls, value, reference):
    """100 * (value - reference) / reference, None if undefined."""
    if value is None or reference is None or reference == 0.0:
      return None
    return 100.0 * (value - reference) / reference


# Decorators
def retry(some_function, *args, **kwargs):

  _MAX_RETRY = 5

  def wrapper(*args, **kwargs):
    retval = None
    retry_attempts = 0
    done = False
    while not done:
      try:
        retval = some_function(*args, **kwargs)
        done = True
      # pylint: disable=broad-except
      except Exception as error:
        retry_attempts += 1
        if retry_attempts <= _MAX_RETRY:
          seconds = 2 ** retry_attempts
          logging.warning("Encountered an error - %s -, "
                          "retrying in %d seconds...", str(error), seconds)
          time.sleep(seconds)
        else:
          raise error
      # pylint: enable=broad-except
    return retval

  return wrapper
