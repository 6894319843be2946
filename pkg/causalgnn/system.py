"""Interaction with the file system: output directories and the artifact file formats (JSON, CSV, binary)"""

import csv
import hashlib
import io
import json
import os

import numpy as np


__all__ = 'makedirs', 'write_text', 'dump_json', 'write_json', 'read_json', 'write_csv', 'read_csv', 'file_digest'


def makedirs(path, mode=0o777):
    """Create a directory recursively and ignore error if it already exists"""
    try:
        os.makedirs(path, mode)
    except OSError:
        if os.path.isdir(path) and os.access(path, os.R_OK | os.W_OK | os.X_OK):
            return
        raise

def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError('%r is not JSON serializable' % (value,))


def dump_json(data):
    """Canonical JSON text (sorted keys, fixed separators) so equal content gives equal bytes"""
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default) + '\n'


def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    makedirs(directory)
    temporary = path + '.tmp'
    with open(temporary, 'w', newline='') as f:
        f.write(text)
    os.replace(temporary, path)


def write_text(path, text):
    _write_atomic(path, text)


def write_json(path, data):
    _write_atomic(path, dump_json(data))


def read_json(path):
    with open(path) as f:
        return json.load(f)


def _format_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return '' if value is None else str(value)


def write_csv(path, header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(value) for value in row])
    _write_atomic(path, buffer.getvalue())


def read_csv(path):
    """Return (header, rows) with rows as lists of strings"""
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, [row for row in reader]


def file_digest(path):
    sha = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(65536), b''):
            sha.update(chunk)
    return sha.hexdigest()
