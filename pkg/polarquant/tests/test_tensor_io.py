import os
import struct
import tempfile
import unittest

import numpy as np

from polarquant.errors import FormatError, InvalidArgument
from polarquant.structures import TensorDType
from polarquant.tensor_io import (
    check_embedding_matrix,
    check_vector,
    generate_gaussian,
    generate_heavy_tailed,
    load_tensor,
    new_generator,
    save_tensor,
    sub_seeds,
)


class TestGeneration(unittest.TestCase):

    def test_same_seed_same_matrix(self):
        a = generate_gaussian(8, 16, 3)
        b = generate_gaussian(8, 16, 3)
        self.assertTrue(np.array_equal(a, b))
        self.assertEqual(np.float32, a.dtype)
        self.assertEqual((8, 16), a.shape)

    def test_different_seed_different_matrix(self):
        self.assertFalse(np.array_equal(generate_gaussian(8, 16, 3), generate_gaussian(8, 16, 4)))

    def test_moments(self):
        x = generate_gaussian(100000, 1, 0).astype(np.float64)
        self.assertAlmostEqual(0.0, float(np.mean(x)), delta=0.02)
        self.assertAlmostEqual(1.0, float(np.var(x)), delta=0.02)

    def test_bad_dimensions(self):
        with self.assertRaises(InvalidArgument):
            generate_gaussian(0, 4, 0)
        with self.assertRaises(InvalidArgument):
            generate_gaussian(4, 0, 0)
        with self.assertRaises(InvalidArgument):
            new_generator(None)

    def test_heavy_tailed_outliers(self):
        x = generate_heavy_tailed(4000, 32, 1, outlier_channels=2, outlier_scale=20.0)
        self.assertEqual((4000, 32), x.shape)
        spread = np.median(np.abs(x), axis=0)
        # the two outlier channels stand well above the rest
        ordered = np.sort(spread)
        self.assertGreater(ordered[-2], 5 * ordered[-3])
        with self.assertRaises(InvalidArgument):
            generate_heavy_tailed(4, 4, 0, outlier_channels=5)

    def test_sub_seeds(self):
        self.assertEqual(sub_seeds(7, 3), sub_seeds(7, 3))
        self.assertEqual(3, len(set(sub_seeds(7, 3))))
        self.assertNotEqual(sub_seeds(7, 3), sub_seeds(8, 3))


class TestChecks(unittest.TestCase):

    def test_matrix_checks(self):
        with self.assertRaises(InvalidArgument):
            check_embedding_matrix(np.zeros(4))
        with self.assertRaises(InvalidArgument):
            check_embedding_matrix(np.array([[1.0, np.nan]]))
        self.assertEqual(np.float64, check_embedding_matrix([[1, 2]]).dtype)

    def test_vector_checks(self):
        with self.assertRaises(InvalidArgument):
            check_vector(np.zeros((2, 2)))
        with self.assertRaises(InvalidArgument):
            check_vector(np.zeros(3), d=4)
        with self.assertRaises(InvalidArgument):
            check_vector([np.inf, 0.0])


class TestTensorFiles(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.path = os.path.join(self.temp_dir, 'x.pqt')

    def test_round_trip_f32(self):
        x = generate_gaussian(5, 8, 0)
        save_tensor(x, self.path)
        y = load_tensor(self.path)
        self.assertEqual(np.float32, y.dtype)
        self.assertTrue(np.array_equal(x, y))

    def test_round_trip_f16(self):
        x = generate_gaussian(5, 8, 0)
        save_tensor(x, self.path, TensorDType.F16)
        y = load_tensor(self.path)
        self.assertEqual(np.float16, y.dtype)
        self.assertTrue(np.allclose(x, y, rtol=1e-3, atol=1e-3))

    def test_file_layout(self):
        save_tensor(np.ones((2, 3), dtype=np.float32), self.path)
        with open(self.path, 'rb') as f:
            raw = f.read()
        self.assertEqual(b'PQTN', raw[:4])
        self.assertEqual((0, 2, 2, 3), struct.unpack_from('<IIII', raw, 4))
        self.assertEqual(20 + 6 * 4, len(raw))

    def test_rejects_bad_values(self):
        with self.assertRaises(InvalidArgument):
            save_tensor(np.array([[np.nan]]), self.path)
        with self.assertRaises(InvalidArgument):
            save_tensor(np.array([[1e6]]), self.path, TensorDType.F16)

    def test_corrupt_files(self):
        save_tensor(np.ones((2, 3), dtype=np.float32), self.path)
        with open(self.path, 'rb') as f:
            raw = f.read()
        cases = [
            raw[:6],
            b'XXXX' + raw[4:],
            raw[:4] + struct.pack('<I', 9) + raw[8:],
            raw[:-1],
            raw + b'\x00',
        ]
        for data in cases:
            with open(self.path, 'wb') as f:
                f.write(data)
            with self.assertRaises(FormatError):
                load_tensor(self.path)

    def test_non_finite_payload(self):
        save_tensor(np.ones((1, 2), dtype=np.float32), self.path)
        with open(self.path, 'rb') as f:
            raw = f.read()
        with open(self.path, 'wb') as f:
            f.write(raw[:-4] + struct.pack('<f', float('nan')))
        with self.assertRaises(FormatError):
            load_tensor(self.path)
