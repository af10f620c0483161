import tempfile
import threading
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, override_settings

from .exceptions import ConfigError, DivergenceError
from .utils import (
    addq_setting, canonical_json, chunk_slices, derive_seed, file_digest, format_float,
    load_config_file, make_rng, run_ordered, write_csv,
)


class RandomStreamTestCase(SimpleTestCase):
    def test_same_path_gives_same_stream(self):
        first = make_rng(7, 'weights', 3).standard_normal(16)
        second = make_rng(7, 'weights', 3).standard_normal(16)
        self.assertEqual(first.tobytes(), second.tobytes())

    def test_stream_does_not_depend_on_creation_order(self):
        make_rng(7, 'weights', 0).standard_normal(100)
        late = make_rng(7, 'weights', 1).standard_normal(4)
        self.assertEqual(late.tobytes(), make_rng(7, 'weights', 1).standard_normal(4).tobytes())

    def test_different_labels_give_different_streams(self):
        a = make_rng(7, 'weights').standard_normal(8)
        b = make_rng(7, 'activations').standard_normal(8)
        c = make_rng(8, 'weights').standard_normal(8)
        self.assertFalse(np.array_equal(a, b))
        self.assertFalse(np.array_equal(a, c))

    def test_derived_seeds_are_stable_and_distinct(self):
        self.assertEqual(derive_seed(1, 'init'), derive_seed(1, 'init'))
        self.assertNotEqual(derive_seed(1, 'init'), derive_seed(2, 'init'))
        self.assertNotEqual(derive_seed(1, 'init'), derive_seed(1, 'weights'))


class RunOrderedTestCase(SimpleTestCase):
    def test_results_keep_item_order(self):
        items = list(range(40))
        self.assertEqual(run_ordered(lambda x: x * x, items, threads=8), [x * x for x in items])

    def test_single_thread_runs_inline(self):
        seen = []
        run_ordered(lambda _: seen.append(threading.current_thread()), range(3), threads=1)
        self.assertTrue(all(thread is threading.main_thread() for thread in seen))

    def test_worker_errors_propagate(self):
        def explode(item):
            if item == 3:
                raise DivergenceError('step 3')
            return item

        with self.assertRaises(DivergenceError):
            run_ordered(explode, range(6), threads=4)

    def test_chunks_cover_the_range(self):
        slices = chunk_slices(10, 4)
        self.assertEqual([(s.start, s.stop) for s in slices], [(0, 4), (4, 8), (8, 10)])
        self.assertEqual(chunk_slices(0, 4), [])


class ConfigFileTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, text):
        path = self.dir / 'run.cfg'
        path.write_text(text, encoding='utf-8')
        return path

    def test_key_value_lines(self):
        path = self.write("# comment\nbeam = 4\ninit=greedy\ncodebook-lr = 1e-3\n\n")
        self.assertEqual(load_config_file(path), {'beam': 4, 'init': 'greedy', 'codebook_lr': 1e-3})

    def test_json_object(self):
        path = self.write('{"n_values": [64, 128], "seed": 3}')
        self.assertEqual(load_config_file(path), {'n_values': [64, 128], 'seed': 3})

    def test_malformed_line(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config_file(self.write("beam 4\n"))
        self.assertIn('config', ctx.exception.errors)

    def test_json_must_be_an_object(self):
        with self.assertRaises(ConfigError):
            load_config_file(self.write('{"beam": }'))


class OutputFormatTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_canonical_json_sorts_keys(self):
        self.assertEqual(canonical_json({'b': 1, 'a': [1, 2]}), '{"a":[1,2],"b":1}')

    def test_csv_floats_use_configured_digits(self):
        path = self.dir / 'out.csv'
        write_csv(path, ['step', 'loss'], [(0, 1 / 3), (1, np.float64(0.25))])
        self.assertEqual(path.read_text(encoding='utf-8'), "step,loss\n0,0.333333333\n1,0.25\n")

    @override_settings(ADDQ={'CSV_DIGITS': 3})
    def test_digits_setting(self):
        self.assertEqual(addq_setting('CSV_DIGITS'), 3)
        self.assertEqual(format_float(1 / 3), '0.333')

    def test_file_digest(self):
        path = self.dir / 'blob'
        path.write_bytes(b'abc')
        self.assertEqual(
            file_digest(path), 'ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad'
        )
