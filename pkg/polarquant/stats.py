"""
Per-level angle histograms of an embedding matrix next to the analytic densities, and the level 1 KS distance to
the uniform law with and without the random rotation.
"""

import numpy as np
from scipy import stats

from polarquant import distribution, polar
from polarquant.diffs import mycsv
from polarquant.errors import InvalidArgument
from polarquant.precondition.rotation import build_rotation
from polarquant.tensor_io import check_embedding_matrix

HISTOGRAM_SCHEMA = 'angle-histogram'
HISTOGRAM_HEADER = ['level', 'bin_low', 'bin_high', 'count', 'density', 'analytic_pdf']
DEFAULT_BINS = 64


def level_angles(x, levels, rotation=None):
    """Flattened angles of every level, after the rotation when one is given"""
    x = check_embedding_matrix(x).astype(np.float64)
    if rotation is not None:
        x = rotation.apply(x)
    return [a.ravel() for a in polar.polar_rows(x, levels)[1]]


def angle_histogram(angles, level, bins=DEFAULT_BINS):
    """
    Rows of (level, bin_low, bin_high, count, density, analytic pdf at the bin center) over the level's support
    """
    if int(bins) != bins or bins < 1:
        raise InvalidArgument('Bin count must be a positive integer, got %s' % bins)
    lo, hi = distribution.angle_support(level)
    counts, edges = np.histogram(angles, bins=int(bins), range=(lo, hi))
    width = edges[1] - edges[0]
    total = max(int(np.sum(counts)), 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    analytic = distribution.angle_pdf(level, centers)
    return [
        [level, float(edges[i]), float(edges[i + 1]), int(counts[i]), counts[i] / (total * width), float(analytic[i])]
        for i in range(len(counts))
    ]


def level1_ks_distance(angles):
    return float(stats.kstest(angles, 'uniform', args=(0.0, polar.TWO_PI)).statistic)


class AngleStatistics(object):
    """
    Histograms are taken on the rotated angles; the KS distances and angle ranges are reported for both variants
    """

    def __init__(self, x, levels=polar.DEFAULT_LEVELS, rotation_seed=0, bins=DEFAULT_BINS):
        x = check_embedding_matrix(x)
        d = x.shape[1]
        polar.check_levels(d, levels)
        self.d = d
        self.levels = levels
        self.rows = x.shape[0]
        self.rotation_seed = rotation_seed
        self.bins = bins
        rotated = level_angles(x, levels, build_rotation(d, rotation_seed))
        plain = level_angles(x, levels)
        self.histograms = [angle_histogram(a, level, bins) for level, a in enumerate(rotated, start=1)]
        self.ks_rotated = level1_ks_distance(rotated[0])
        self.ks_unrotated = level1_ks_distance(plain[0])
        self.ranges_rotated = [(float(a.min()), float(a.max())) for a in rotated]
        self.ranges_unrotated = [(float(a.min()), float(a.max())) for a in plain]

    @property
    def flattening_gain(self):
        """Negative when the rotation brings level 1 closer to uniform"""
        return self.ks_rotated - self.ks_unrotated

    def histogram_rows(self):
        return [row for histogram in self.histograms for row in histogram]

    def to_csv(self, csv_file_path):
        mycsv.write_versioned_csv(csv_file_path, HISTOGRAM_SCHEMA, HISTOGRAM_HEADER, self.histogram_rows())

    def to_dict(self):
        response = dict()
        response['d'] = self.d
        response['rows'] = self.rows
        response['levels'] = self.levels
        response['rotation_seed'] = self.rotation_seed
        response['bins'] = self.bins
        response['level1_ks_rotated'] = self.ks_rotated
        response['level1_ks_unrotated'] = self.ks_unrotated
        response['flattening_gain'] = self.flattening_gain
        response['ranges_rotated'] = [list(r) for r in self.ranges_rotated]
        response['ranges_unrotated'] = [list(r) for r in self.ranges_unrotated]
        return response
