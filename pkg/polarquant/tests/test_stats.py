import math
import os
import tempfile
import unittest

import numpy as np

from polarquant import stats
from polarquant.diffs.mycsv import read_versioned_csv
from polarquant.errors import InvalidArgument
from polarquant.stats import AngleStatistics, angle_histogram, level1_ks_distance, level_angles
from polarquant.tensor_io import generate_gaussian, generate_heavy_tailed


class TestHistograms(unittest.TestCase):

    def test_level_angles(self):
        x = generate_gaussian(10, 16, 0)
        angles = level_angles(x, 3)
        self.assertEqual([80, 40, 20], [a.shape[0] for a in angles])

    def test_histogram_rows(self):
        angles = np.linspace(0.0, math.pi / 2, 1000)
        rows = angle_histogram(angles, 2, bins=10)
        self.assertEqual(10, len(rows))
        self.assertEqual(1000, sum(row[3] for row in rows))
        self.assertAlmostEqual(0.0, rows[0][1])
        self.assertAlmostEqual(math.pi / 2, rows[-1][2])
        width = rows[0][2] - rows[0][1]
        self.assertAlmostEqual(1.0, sum(row[4] for row in rows) * width)
        # analytic density of level 2 peaks at pi/4
        self.assertGreater(rows[5][5], rows[0][5])

    def test_bad_bins(self):
        with self.assertRaises(InvalidArgument):
            angle_histogram(np.zeros(3), 2, bins=0)

    def test_ks_distance(self):
        uniform_grid = (np.arange(1000) + 0.5) / 1000 * 2 * math.pi
        self.assertLess(level1_ks_distance(uniform_grid), 0.001)
        self.assertGreater(level1_ks_distance(np.full(100, 1.0)), 0.8)


class TestAngleStatistics(unittest.TestCase):

    def test_gaussian(self):
        result = AngleStatistics(generate_gaussian(500, 32, 1), levels=3, rotation_seed=2, bins=16)
        self.assertEqual(3 * 16, len(result.histogram_rows()))
        self.assertLess(result.ks_rotated, 0.05)
        lo, hi = result.ranges_rotated[1]
        self.assertGreaterEqual(lo, 0.0)
        self.assertLessEqual(hi, math.pi / 2)
        response = result.to_dict()
        self.assertEqual(32, response['d'])
        self.assertEqual(500, response['rows'])
        self.assertEqual(3, len(response['ranges_unrotated']))

    def test_rotation_flattens_heavy_tails(self):
        result = AngleStatistics(generate_heavy_tailed(2000, 64, 3), levels=4, rotation_seed=4)
        self.assertLess(result.ks_rotated, result.ks_unrotated)
        self.assertLess(result.flattening_gain, 0.0)

    def test_csv(self):
        result = AngleStatistics(generate_gaussian(100, 16, 5), levels=2, bins=8)
        csv_file = os.path.join(tempfile.mkdtemp(), 'hist.csv')
        result.to_csv(csv_file)
        schema, version, header, rows = read_versioned_csv(csv_file)
        self.assertEqual(stats.HISTOGRAM_SCHEMA, schema)
        self.assertEqual(stats.HISTOGRAM_HEADER, header)
        self.assertEqual(16, len(rows))

    def test_bad_levels(self):
        with self.assertRaises(InvalidArgument):
            AngleStatistics(generate_gaussian(10, 16, 6), levels=5)
