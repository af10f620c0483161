"""
Bit-exact readers and writers for dense matrices and AQV1 artifacts.

Matrix file layout (all integers little-endian):

    magic    8 bytes  b'ADDQMAT\\x00'
    version  uint8    1
    dtype    uint8    1 = float32 LE (the only supported code)
    ndim     uint8    2 (the only supported rank)
    rows     uint64
    cols     uint64
    payload  rows * cols float32 LE, row-major

Artifact file layout, every header integer uint32 LE:

    magic b'AQV1', version, d_out, d_in, g, M, K, has_scales
    codebooks  M * K * g float32 LE (codebook-major, entry-major)
    codes      N * M uint8, groups in row-major (output row, column block) order
    scales     d_out float32 LE, present when has_scales == 1
"""
import logging
import struct

import numpy as np

from common.exceptions import CorruptionError, FormatError, UnsupportedDtypeError
from .models import MAX_CODEBOOK_SIZE, DenseMatrix, QuantizedArtifact

logger = logging.getLogger(__name__)

MATRIX_MAGIC = b'ADDQMAT\x00'
MATRIX_VERSION = 1
DTYPE_FLOAT32_LE = 1
MATRIX_HEADER = struct.Struct('<8sBBBQQ')

ARTIFACT_MAGIC = b'AQV1'
ARTIFACT_VERSION = 1
ARTIFACT_HEADER = struct.Struct('<4s7I')

FLOAT32_LE = np.dtype('<f4')


def _read_bytes(path):
    with open(path, 'rb') as handle:
        return handle.read()


def _write_bytes(path, blob):
    try:
        with open(path, 'wb') as handle:
            handle.write(blob)
    except OSError as exc:
        raise OSError(exc.errno, f"Cannot write {path}: {exc.strerror}", str(path)) from exc


def load_matrix(path):
    """
    Load a dense float32 matrix.

    Args:
        path (str | Path): Matrix file

    Returns:
        DenseMatrix: The stored values, bit for bit

    Raises:
        FormatError: If a header field or the payload length is wrong
        UnsupportedDtypeError: If the payload is not 2-D float32
    """
    blob = _read_bytes(path)
    if len(blob) < MATRIX_HEADER.size:
        raise FormatError('header', f"{len(blob)} bytes, need {MATRIX_HEADER.size}")
    magic, version, dtype_code, ndim, rows, cols = MATRIX_HEADER.unpack_from(blob)
    if magic != MATRIX_MAGIC:
        raise FormatError('magic', f"expected {MATRIX_MAGIC!r}, got {magic!r}")
    if version != MATRIX_VERSION:
        raise FormatError('version', f"expected {MATRIX_VERSION}, got {version}")
    if dtype_code != DTYPE_FLOAT32_LE:
        raise UnsupportedDtypeError(f"dtype code {dtype_code}; only float32 LE is supported")
    if ndim != 2:
        raise UnsupportedDtypeError(f"{ndim}-D payload; only 2-D matrices are supported")

    payload = memoryview(blob)[MATRIX_HEADER.size:]
    expected = rows * cols * FLOAT32_LE.itemsize
    if len(payload) != expected:
        raise FormatError('payload', f"{len(payload)} bytes for {rows}x{cols} float32 ({expected} bytes)")

    values = np.frombuffer(payload, dtype=FLOAT32_LE).astype(np.float32).reshape(rows, cols)
    if not np.all(np.isfinite(values)):
        raise FormatError('payload', "non-finite values")
    logger.debug("Loaded %dx%d matrix from %s", rows, cols, path)
    return DenseMatrix(values)


def save_matrix(matrix, path):
    """
    Save a dense matrix in the format read by load_matrix.
    """
    header = MATRIX_HEADER.pack(
        MATRIX_MAGIC, MATRIX_VERSION, DTYPE_FLOAT32_LE, 2, matrix.rows, matrix.cols
    )
    _write_bytes(path, header + matrix.data.astype(FLOAT32_LE).tobytes())
    logger.debug("Saved %dx%d matrix to %s", matrix.rows, matrix.cols, path)


def write_artifact(artifact, path):
    """
    Write a quantized layer in AQV1 layout.
    """
    header = ARTIFACT_HEADER.pack(
        ARTIFACT_MAGIC, ARTIFACT_VERSION,
        artifact.d_out, artifact.d_in, artifact.g,
        artifact.M, artifact.K, int(artifact.has_scales),
    )
    parts = [
        header,
        artifact.codebooks.astype(FLOAT32_LE).tobytes(),
        artifact.codes.astype(np.uint8).tobytes(),
    ]
    if artifact.has_scales:
        parts.append(artifact.scales.astype(FLOAT32_LE).tobytes())
    _write_bytes(path, b''.join(parts))
    logger.debug("Wrote %r to %s", artifact, path)


def read_artifact(path):
    """
    Read an AQV1 artifact.

    Every header field is checked before the payload is interpreted.

    Raises:
        FormatError: Bad magic, version, header field or payload length
        CorruptionError: A stored code index is >= K
    """
    blob = _read_bytes(path)
    if len(blob) < ARTIFACT_HEADER.size:
        raise FormatError('header', f"{len(blob)} bytes, need {ARTIFACT_HEADER.size}")
    magic, version, d_out, d_in, g, M, K, has_scales = ARTIFACT_HEADER.unpack_from(blob)
    if magic != ARTIFACT_MAGIC:
        raise FormatError('magic', f"expected {ARTIFACT_MAGIC!r}, got {magic!r}")
    if version != ARTIFACT_VERSION:
        raise FormatError('version', f"expected {ARTIFACT_VERSION}, got {version}")
    if d_out < 1:
        raise FormatError('d_out', f"{d_out}; must be positive")
    if d_in < 1:
        raise FormatError('d_in', f"{d_in}; must be positive")
    if g < 1 or d_in % g:
        raise FormatError('g', f"{g} does not divide d_in={d_in}")
    if M < 1:
        raise FormatError('M', f"{M}; need at least one codebook")
    if not 1 <= K <= MAX_CODEBOOK_SIZE:
        raise FormatError('K', f"{K}; must be in [1, {MAX_CODEBOOK_SIZE}]")
    if has_scales not in (0, 1):
        raise FormatError('has_scales', f"flag value {has_scales}")

    n_groups = d_out * d_in // g
    codebook_bytes = M * K * g * FLOAT32_LE.itemsize
    code_bytes = n_groups * M
    scale_bytes = d_out * FLOAT32_LE.itemsize if has_scales else 0
    payload = memoryview(blob)[ARTIFACT_HEADER.size:]
    expected = codebook_bytes + code_bytes + scale_bytes
    if len(payload) != expected:
        raise FormatError('payload', f"{len(payload)} bytes, header implies {expected}")

    codebooks = np.frombuffer(payload[:codebook_bytes], dtype=FLOAT32_LE).astype(np.float32)
    if not np.all(np.isfinite(codebooks)):
        raise FormatError('codebooks', "non-finite values")
    codes = np.frombuffer(payload[codebook_bytes:codebook_bytes + code_bytes], dtype=np.uint8)
    if codes.size and int(codes.max()) >= K:
        position = int(np.argmax(codes >= K))
        raise CorruptionError(
            f"code {int(codes[position])} at group {position // M}, codebook {position % M} >= K={K}"
        )
    scales = None
    if has_scales:
        scales = np.frombuffer(payload[codebook_bytes + code_bytes:], dtype=FLOAT32_LE).astype(np.float32)

    return QuantizedArtifact(
        d_out=d_out,
        d_in=d_in,
        g=g,
        codebooks=codebooks.reshape(M, K, g),
        codes=codes.reshape(n_groups, M),
        scales=scales,
    )
