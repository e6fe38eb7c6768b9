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

"""Connector modules - Report tables.

Tabular reports rendered as CSV (fixed decimals, one header row) or JSON (full
precision plus run metadata), written to a local file, to stdout, or to Cloud
Storage for gs:// destinations.
"""
import csv
import io
import json
import logging
import sys

from ebl_general_settings import REPORT_DECIMALS
from ebl_project_settings import PROJECT_ID
from utils import TextUtils
from utils import retry
from google.cloud import storage

FORMAT_CSV = 'csv'
FORMAT_JSON = 'json'
FORMATS = (FORMAT_CSV, FORMAT_JSON)

_CONTENT_TYPES = {FORMAT_CSV: 'text/csv', FORMAT_JSON: 'application/json'}


class ReportTable(object):
  """A report: a schema, typed rows and free-form metadata."""

  def __init__(self, schema, metadata=None):
    self.__table = list()
    self.schema = schema
    self.metadata = metadata if metadata is not None else dict()

  def getfields(self):
    return [field.get('name') for field in self.schema.get('fields')]

  def addrow(self, row):
    """Add row to table, casting every non-empty value to its field type.

    Args:
      row: List of values, one per schema field; None marks an empty cell.
    """
    assert isinstance(row, list)
    schema_fields = self.schema.get('fields')
    assert len(row) == len(schema_fields)
    casted = list()
    for field, value in zip(schema_fields, row):
      field_type = field.get('type')
      if value is None:
        casted.append(None)
      elif field_type == 'FLOAT':
        casted.append(float(value))
      elif field_type == 'INTEGER':
        casted.append(int(value))
      else:
        casted.append(str(value))
    self.__table.append(casted)

  def rows(self):
    return [list(row) for row in self.__table]

  def tostrrows(self, decimals=REPORT_DECIMALS):
    """Return this table as CSV text rows, header first."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(self.getfields())
    for row in self.__table:
      writer.writerow([TextUtils.fixed(v, decimals) for v in row])
    return out.getvalue().splitlines()

  def tocsv(self, decimals=REPORT_DECIMALS):
    return '\n'.join(self.tostrrows(decimals)) + '\n'

  def tojson(self):
    fields = self.getfields()
    doc = {
        'metadata': self.metadata,
        'rows': [dict(zip(fields, row)) for row in self.__table],
    }
    return json.dumps(doc, indent=2) + '\n'

  def render(self, out_format):
    if out_format == FORMAT_JSON:
      return self.tojson()
    return self.tocsv()

  def dumptofile(self, filename, out_format=FORMAT_CSV):
    with open(filename, 'w', newline='') as out_file:
      out_file.write(self.render(out_format))


def read_csv_report(text):
  """Parses CSV report text back into a list of dicts with float values."""
  rows = list()
  for record in csv.DictReader(io.StringIO(text)):
    row = dict()
    for key, value in record.items():
      if value == '':
        row[key] = None
        continue
      try:
        row[key] = float(value)
      except ValueError:
        row[key] = value
    rows.append(row)
  return rows


def _split_gcs_uri(uri, out_format):
  path = uri[len('gs://'):]
  bucket, _, blob = path.partition('/')
  if not blob or blob.endswith('/'):
    blob = '%sreport_%s.%s' % (blob, TextUtils.timestamp(), out_format)
  return bucket, blob


@retry
def gcs_uploadtable(table, bucket, filename, out_format=FORMAT_CSV,
                    project_id=PROJECT_ID):
  """Upload table to Cloud Storage.

  Args:
    table: ReportTable to be uploaded.
    bucket: Name of the destination bucket.
    filename: Destination object name.
    out_format: 'csv' or 'json'.
    project_id: GCP project owning the bucket.
  """
  client = storage.Client(project_id)
  blob = client.bucket(bucket).blob(filename)
  blob.upload_from_string(table.render(out_format),
                          content_type=_CONTENT_TYPES[out_format])
  logging.info('Report uploaded to gs://%s/%s', bucket, filename)


def write_report(table, out, out_format=FORMAT_CSV):
  """Writes a report to stdout (out is None or '-'), a file or gs://."""
  if out_format not in FORMATS:
    raise ValueError('Unknown report format %r' % out_format)
  if out in (None, '-'):
    sys.stdout.write(table.render(out_format))
  elif out.startswith('gs://'):
    bucket, filename = _split_gcs_uri(out, out_format)
    gcs_uploadtable(table, bucket, filename, out_format)
  else:
    table.dumptofile(out, out_format)
