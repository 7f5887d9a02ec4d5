import math
import tempfile
import unittest

from polarquant.diffs.thresh_dict import DEFAULT_CONFIG, ThreshDict
from polarquant.errors import FormatError


def write_config(text):
    thresh_file = tempfile.mkstemp(suffix='.config')[1]
    with open(thresh_file, 'w') as f_thresh:
        f_thresh.write(text)
    return thresh_file


class TestThreshDict(unittest.TestCase):

    def setUp(self):
        self.typical_thresholds = """#comment line
variance, product = 0.1, 0.5  # comments ok here
variance, step_ratio = 0.4, 0.6
variance, * = 0, 1
theorem1, doubling_ratio = 3, 5
separability, control_corr = 0.5, *
stats, flattening_gain = *, 0

attention, default_rel_error = 0, 0.35
attention, default_rel_error = 0, 0.35  # duplicated line
"""

    def test_construction(self):
        t = ThreshDict(write_config(self.typical_thresholds))
        self.assertEqual(7, len(t.thresholds))

    def test_lookup(self):
        t = ThreshDict(write_config(self.typical_thresholds))
        self.assertTupleEqual((0.1, 0.5), t.lookup('variance', 'product'))
        # unknown metric falls back to the suite wildcard
        self.assertTupleEqual((0.0, 1.0), t.lookup('variance', 'level2_rel_error'))
        # open sides
        self.assertTupleEqual((0.5, math.inf), t.lookup('separability', 'control_corr'))
        self.assertTupleEqual((-math.inf, 0.0), t.lookup('stats', 'flattening_gain'))
        # nothing matches and no global default
        with self.assertRaises(FormatError):
            t.lookup('codebook_lemma', 'consecutive_ratio')
        with self.assertRaises(FormatError):
            t.within('codebook_lemma', 'consecutive_ratio', 1.0)
        # then a user-defined global default
        t.thresholds['*|*'] = (2, 2)
        self.assertTupleEqual((2, 2), t.lookup('codebook_lemma', 'consecutive_ratio'))

    def test_within(self):
        t = ThreshDict(write_config(self.typical_thresholds))
        self.assertTrue(t.within('theorem1', 'doubling_ratio', 4.1))
        self.assertTrue(t.within('theorem1', 'doubling_ratio', 3.0))
        self.assertFalse(t.within('theorem1', 'doubling_ratio', 5.2))
        self.assertTrue(t.within('stats', 'flattening_gain', -0.3))
        self.assertTrue(t.all_within('variance', 'product', [0.117, 0.184, 0.2]))
        self.assertFalse(t.all_within('variance', 'product', [0.117, 0.6]))

    def test_invalid_line(self):
        with self.assertRaises(FormatError):
            ThreshDict(write_config('variance, product = 0.1\n'))
        with self.assertRaises(FormatError):
            ThreshDict(write_config('invalid line\n'))
        with self.assertRaises(FormatError):
            ThreshDict(write_config('variance, product = 0.1, abc\n'))

    def test_empty_band(self):
        with self.assertRaises(FormatError):
            ThreshDict(write_config('variance, product = 0.5, 0.1\n'))

    def test_band_open_on_both_sides(self):
        with self.assertRaises(FormatError):
            ThreshDict(write_config('variance, product = *, *\n'))
        with self.assertRaises(FormatError):
            ThreshDict(write_config('*, * = *, *\n'))
        t = ThreshDict(write_config('*, * = -1, 1\n'))
        self.assertTupleEqual((-1.0, 1.0), t.lookup('codebook_lemma', 'consecutive_ratio'))

    def test_shipped_config(self):
        t = ThreshDict(DEFAULT_CONFIG)
        self.assertTupleEqual((0.4, 0.6), t.lookup('variance', 'step_ratio'))
        self.assertTupleEqual((3.0, 5.0), t.lookup('theorem1', 'doubling_ratio'))
        self.assertTupleEqual((0.0, 0.35), t.lookup('attention', 'default_rel_error'))
        self.assertTupleEqual((0.0, 1e-3), t.lookup('attention', 'near_lossless_rel_error'))
        self.assertTupleEqual((0.01, math.inf), t.lookup('angle_distribution', 'p_value'))
