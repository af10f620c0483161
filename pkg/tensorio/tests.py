import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from common.exceptions import CorruptionError, FormatError, UnsupportedDtypeError
from .models import DenseMatrix, QuantizedArtifact
from .services import (
    ARTIFACT_HEADER, MATRIX_HEADER, load_matrix, read_artifact, save_matrix, write_artifact,
)


def random_artifact(rng, with_scales=None):
    g = int(rng.integers(1, 5))
    d_in = g * int(rng.integers(1, 5))
    d_out = int(rng.integers(1, 5))
    M = int(rng.integers(1, 4))
    K = int(rng.integers(1, 257))
    n_groups = d_out * d_in // g
    if with_scales is None:
        with_scales = bool(rng.integers(0, 2))
    return QuantizedArtifact(
        d_out=d_out,
        d_in=d_in,
        g=g,
        codebooks=rng.standard_normal((M, K, g)).astype(np.float32),
        codes=rng.integers(0, K, size=(n_groups, M)),
        scales=rng.standard_normal(d_out).astype(np.float32) if with_scales else None,
    )


class MatrixFormatTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_small_matrix_round_trip(self):
        path = self.dir / 'm.bin'
        save_matrix(DenseMatrix.from_values(2, 2, [1, 2, 3, 4]), path)
        loaded = load_matrix(path)
        self.assertEqual(loaded.shape, (2, 2))
        self.assertEqual(loaded.data.tolist(), [[1.0, 2.0], [3.0, 4.0]])

    def test_empty_matrix_round_trip(self):
        path = self.dir / 'empty.bin'
        save_matrix(DenseMatrix.from_values(0, 0, []), path)
        self.assertEqual(load_matrix(path).shape, (0, 0))

    def test_single_value_round_trip(self):
        path = self.dir / 'one.bin'
        save_matrix(DenseMatrix.from_values(1, 1, [3.5]), path)
        self.assertEqual(load_matrix(path).data[0, 0], np.float32(3.5))

    def test_random_matrices_round_trip_bit_exact(self):
        rng = np.random.default_rng(0)
        path = self.dir / 'r.bin'
        for _ in range(1000):
            rows, cols = rng.integers(0, 9, size=2)
            matrix = DenseMatrix(rng.standard_normal((rows, cols)).astype(np.float32))
            save_matrix(matrix, path)
            before = path.read_bytes()
            loaded = load_matrix(path)
            self.assertEqual(loaded, matrix)
            save_matrix(loaded, path)
            self.assertEqual(path.read_bytes(), before)

    def test_large_matrix_round_trip(self):
        rng = np.random.default_rng(1)
        matrix = DenseMatrix(rng.standard_normal((64, 128)).astype(np.float32))
        path = self.dir / 'big.bin'
        save_matrix(matrix, path)
        self.assertEqual(load_matrix(path).data.tobytes(), matrix.data.tobytes())

    def test_payload_length_mismatch(self):
        path = self.dir / 'short.bin'
        save_matrix(DenseMatrix.from_values(2, 2, [1, 2, 3, 4]), path)
        path.write_bytes(path.read_bytes()[:-4])
        with self.assertRaises(FormatError) as ctx:
            load_matrix(path)
        self.assertEqual(ctx.exception.field, 'payload')

    def test_bad_magic(self):
        path = self.dir / 'magic.bin'
        save_matrix(DenseMatrix.from_values(1, 1, [1]), path)
        path.write_bytes(b'NOTAMAT\x00' + path.read_bytes()[8:])
        with self.assertRaises(FormatError) as ctx:
            load_matrix(path)
        self.assertEqual(ctx.exception.field, 'magic')

    def test_unsupported_dtype_and_rank(self):
        path = self.dir / 'dtype.bin'
        save_matrix(DenseMatrix.from_values(1, 1, [1]), path)
        blob = bytearray(path.read_bytes())
        blob[9] = 2
        path.write_bytes(bytes(blob))
        with self.assertRaises(UnsupportedDtypeError):
            load_matrix(path)
        blob[9] = 1
        blob[10] = 3
        path.write_bytes(bytes(blob))
        with self.assertRaises(UnsupportedDtypeError):
            load_matrix(path)

    def test_truncated_header(self):
        path = self.dir / 'trunc.bin'
        path.write_bytes(b'ADDQ')
        with self.assertRaises(FormatError) as ctx:
            load_matrix(path)
        self.assertEqual(ctx.exception.field, 'header')

    def test_non_finite_payload_rejected(self):
        path = self.dir / 'nan.bin'
        header = MATRIX_HEADER.pack(b'ADDQMAT\x00', 1, 1, 2, 1, 1)
        path.write_bytes(header + np.array([np.nan], dtype='<f4').tobytes())
        with self.assertRaises(FormatError):
            load_matrix(path)


class ArtifactFormatTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def minimal_artifact(self):
        return QuantizedArtifact(
            d_out=1, d_in=8, g=8,
            codebooks=np.arange(32, dtype=np.float32).reshape(2, 2, 8),
            codes=[[1, 0]],
        )

    def test_minimal_artifact_round_trip(self):
        path = self.dir / 'a.aqv'
        artifact = self.minimal_artifact()
        write_artifact(artifact, path)
        self.assertEqual(read_artifact(path), artifact)
        self.assertEqual(len(path.read_bytes()), ARTIFACT_HEADER.size + 2 * 2 * 8 * 4 + 2)

    def test_code_index_equal_to_k_is_corruption(self):
        path = self.dir / 'bad.aqv'
        write_artifact(self.minimal_artifact(), path)
        blob = bytearray(path.read_bytes())
        blob[ARTIFACT_HEADER.size + 2 * 2 * 8 * 4] = 2
        path.write_bytes(bytes(blob))
        with self.assertRaises(CorruptionError):
            read_artifact(path)

    def test_bad_magic_and_version(self):
        path = self.dir / 'hdr.aqv'
        write_artifact(self.minimal_artifact(), path)
        blob = path.read_bytes()
        path.write_bytes(b'AQV2' + blob[4:])
        with self.assertRaises(FormatError):
            read_artifact(path)
        path.write_bytes(blob[:4] + (7).to_bytes(4, 'little') + blob[8:])
        with self.assertRaises(FormatError) as ctx:
            read_artifact(path)
        self.assertEqual(ctx.exception.field, 'version')

    def test_header_rejected_before_payload(self):
        path = self.dir / 'k.aqv'
        header = ARTIFACT_HEADER.pack(b'AQV1', 1, 1, 8, 8, 2, 300, 0)
        path.write_bytes(header)
        with self.assertRaises(FormatError) as ctx:
            read_artifact(path)
        self.assertEqual(ctx.exception.field, 'K')

        header = ARTIFACT_HEADER.pack(b'AQV1', 1, 1, 8, 3, 2, 2, 0)
        path.write_bytes(header)
        with self.assertRaises(FormatError) as ctx:
            read_artifact(path)
        self.assertEqual(ctx.exception.field, 'g')

    def test_random_artifacts_round_trip_bit_exact(self):
        rng = np.random.default_rng(7)
        path = self.dir / 'r.aqv'
        for _ in range(1000):
            artifact = random_artifact(rng)
            write_artifact(artifact, path)
            self.assertEqual(read_artifact(path), artifact)

    def test_scales_round_trip(self):
        rng = np.random.default_rng(3)
        artifact = random_artifact(rng, with_scales=True)
        path = self.dir / 's.aqv'
        write_artifact(artifact, path)
        loaded = read_artifact(path)
        self.assertTrue(loaded.has_scales)
        self.assertEqual(loaded.scales.tobytes(), artifact.scales.tobytes())
