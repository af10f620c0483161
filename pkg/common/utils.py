"""
Utility functions shared by the quantization toolkit.
"""
import csv
import hashlib
import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .exceptions import ConfigError

DEFAULT_SETTINGS = {
    'EXHAUSTIVE_CAP': 2 ** 20,
    'THREADS': 1,
    'CSV_DIGITS': 9,
}


def addq_setting(name):
    """
    Read a toolkit setting, falling back to built-in defaults.

    Args:
        name (str): Key of the ADDQ settings dict

    Returns:
        The configured value, or the default when Django is not configured
    """
    from django.conf import settings

    if settings.configured:
        return getattr(settings, 'ADDQ', {}).get(name, DEFAULT_SETTINGS[name])
    return DEFAULT_SETTINGS[name]


def _stream_key(label):
    if isinstance(label, str):
        return zlib.crc32(label.encode('utf-8'))
    return int(label)


def make_rng(seed, *stream):
    """
    Build the counter-based generator for one substream.

    Substreams are addressed by a path of labels, e.g. ``(seed, 'weights', row)``.
    Labels are strings (hashed with CRC-32) or non-negative integers, and the
    whole path seeds a SeedSequence that keys a Philox generator. The same
    path always yields the same stream, whatever order streams are created in.

    Args:
        seed (int): Root seed of the run
        *stream: Labels naming the substream

    Returns:
        numpy.random.Generator: Generator over a Philox bit generator
    """
    entropy = [int(seed)] + [_stream_key(label) for label in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed, *stream):
    """
    Derive an integer seed for a named substream.
    """
    entropy = [int(seed)] + [_stream_key(label) for label in stream]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


def file_digest(path):
    """
    SHA-256 hex digest of a file's bytes.
    """
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def canonical_json(data):
    """
    Serialise to canonical JSON: sorted keys, compact separators, UTF-8 safe.
    """
    return json.dumps(data, sort_keys=True, separators=(',', ':'), ensure_ascii=False)


def format_float(value, digits=None):
    """
    Format a float with a fixed number of significant digits.
    """
    if digits is None:
        digits = addq_setting('CSV_DIGITS')
    return f"{float(value):.{digits}g}"


def format_csv_value(value):
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows):
    """
    Write rows as UTF-8 comma-separated values with a header row.

    Args:
        path (str | Path): Destination file
        header (list): Column names
        rows (iterable): Sequences of values, one per row
    """
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_csv_value(value) for value in row])


def _parse_scalar(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config_file(path):
    """
    Load a config file holding either one JSON object or key=value lines.

    Args:
        path (str | Path): Config file

    Returns:
        dict: Parsed options

    Raises:
        ConfigError: If the file is neither format
    """
    text = Path(path).read_text(encoding='utf-8')
    stripped = text.strip()
    if stripped.startswith('{'):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError({'config': [f"Invalid JSON: {exc}"]})
        if not isinstance(data, dict):
            raise ConfigError({'config': ["Config JSON must be an object."]})
        return data

    options = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError({'config': [f"Line {number} is not key=value: {line!r}"]})
        key, value = line.split('=', 1)
        options[key.strip().replace('-', '_')] = _parse_scalar(value.strip())
    return options


def validated(serializer_class, data):
    """
    Validate data with a serializer and return the config object it builds.

    Defaults the data leaves out are filled in by the serializer fields.

    Raises:
        ConfigError: If validation fails
    """
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise ConfigError(dict(serializer.errors))
    return serializer.save()


def chunk_slices(total, chunk_size):
    """
    Split range(total) into consecutive slices of at most chunk_size items.
    """
    chunk_size = max(1, int(chunk_size))
    return [slice(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


def run_ordered(func, items, threads=1):
    """
    Apply func to every item, using up to `threads` workers.

    Results come back in item order, so callers that combine them in that
    order get the same answer for any thread count.
    """
    items = list(items)
    threads = max(1, int(threads or 1))
    if threads == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
