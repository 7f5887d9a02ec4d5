import os
import tempfile
import unittest

import numpy as np

from polarquant.diffs.mycsv import read_versioned_csv
from polarquant.diffs.tensor_diff import ROWS_HEADER, ROWS_SCHEMA, row_differences, tensor_diff
from polarquant.diffs.thresh_dict import ThreshDict
from polarquant.errors import InvalidArgument


class TestRowDifferences(unittest.TestCase):

    def test_values(self):
        reference = np.array([[3.0, 4.0], [0.0, 0.0], [1.0, 0.0]])
        candidate = np.array([[3.0, 4.0], [0.0, 2.0], [1.0, 1.0]])
        abs_diffs, rel_diffs = row_differences(reference, candidate)
        self.assertTrue(np.allclose(abs_diffs, [0.0, 2.0, 1.0]))
        # a zero reference row reports the absolute difference
        self.assertTrue(np.allclose(rel_diffs, [0.0, 2.0, 1.0]))

    def test_shape_mismatch(self):
        with self.assertRaises(InvalidArgument):
            row_differences(np.zeros((2, 4)), np.zeros((3, 4)))


class TestTensorDiff(unittest.TestCase):

    def setUp(self):
        self.reference = np.array([[3.0, 4.0], [1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
        self.candidate = np.array([[3.0, 4.0], [1.1, 0.0], [0.0, 0.0], [1.0, 1.0]])

    def test_counts(self):
        diffs = tensor_diff(self.reference, self.candidate)
        self.assertEqual(4, diffs.num_rows)
        # row 2 lost all of its norm, row 1 is off by 10 percent
        self.assertEqual(1, diffs.count_of_big_diff)
        self.assertEqual(1, diffs.count_of_small_diff)
        self.assertEqual('Big Diffs', diffs.diff_type)
        self.assertAlmostEqual(2.0, diffs.max_abs_diff)
        self.assertAlmostEqual(1.0, diffs.max_rel_diff)

    def test_custom_thresholds(self):
        thresh_file = tempfile.mkstemp(suffix='.config')[1]
        with open(thresh_file, 'w') as f:
            f.write('reconstruction, rel_error = 0, 2\n')
        diffs = tensor_diff(self.reference, self.candidate, ThreshDict(thresh_file))
        self.assertEqual(0, diffs.count_of_big_diff)
        self.assertEqual(2, diffs.count_of_small_diff)
        self.assertEqual('Small Diffs', diffs.diff_type)

    def test_equal(self):
        diffs = tensor_diff(self.reference, self.reference.copy())
        self.assertEqual('All Equal', diffs.diff_type)
        self.assertEqual(0.0, diffs.max_abs_diff)

    def test_empty(self):
        diffs = tensor_diff(np.zeros((0, 4)), np.zeros((0, 4)))
        self.assertEqual(0, diffs.num_rows)
        self.assertEqual('All Equal', diffs.diff_type)

    def test_rows_csv(self):
        rows_csv = os.path.join(tempfile.mkdtemp(), 'rows.csv')
        tensor_diff(self.reference, self.candidate, rows_csv=rows_csv)
        schema, version, header, rows = read_versioned_csv(rows_csv)
        self.assertEqual(ROWS_SCHEMA, schema)
        self.assertEqual(ROWS_HEADER, header)
        self.assertEqual(4, len(rows))
        self.assertEqual('2', rows[2][0])
        self.assertAlmostEqual(1.0, float(rows[2][2]))
