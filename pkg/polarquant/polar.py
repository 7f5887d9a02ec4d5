"""
Recursive Cartesian <-> polar transform.

Level 1 pairs adjacent coordinates (x[2j], x[2j+1]) into a radius and an angle in [0, 2pi).  Every later level
pairs the radii of the level before, giving angles in [0, pi/2].  After L levels d / 2^L radii remain.
"""

import math

import numpy as np

from polarquant.errors import InvalidArgument

TWO_PI = 2.0 * math.pi
DEFAULT_LEVELS = 4


class PolarRep(object):
    """
    radii: length d / 2^L; angles[0] holds level 1 (length d / 2), angles[L - 1] holds level L
    """

    def __init__(self, radii, angles):
        self.radii = np.asarray(radii, dtype=np.float64)
        self.angles = [np.asarray(a, dtype=np.float64) for a in angles]

    @property
    def levels(self):
        return len(self.angles)

    @property
    def dim(self):
        return self.radii.shape[-1] * 2 ** self.levels

    def to_dict(self):
        response = dict()
        response['dim'] = self.dim
        response['levels'] = self.levels
        response['radii'] = self.radii.tolist()
        response['angles'] = [a.tolist() for a in self.angles]
        return response


def is_power_of_two(d):
    return d >= 1 and (d & (d - 1)) == 0


def max_levels(d):
    if int(d) != d or not is_power_of_two(int(d)):
        raise InvalidArgument('Dimension must be a power of two, got %s' % d)
    return int(d).bit_length() - 1


def check_levels(d, levels):
    top = max_levels(d)
    if int(levels) != levels or levels < 1 or levels > top:
        raise InvalidArgument('Level count %s out of range [1, %i] for d=%s' % (levels, top, d))
    return int(levels)


def level_lengths(d, levels):
    """Number of angles at each level 1..L"""
    check_levels(d, levels)
    return [d >> level for level in range(1, levels + 1)]


def pair_angles(first, second, full_circle):
    """
    Quadrant-aware angle of each (first, second) pair; a (0, 0) pair gets angle 0
    """
    angles = np.arctan2(second, first)
    if full_circle:
        angles = np.where(angles < 0.0, angles + TWO_PI, angles)
        # a tiny negative angle can round up to exactly 2 pi
        angles[angles >= TWO_PI] = 0.0
    angles[(first == 0.0) & (second == 0.0)] = 0.0
    return angles + 0.0


def polar_rows(x, levels):
    """
    Vectorized forward transform of an (n, d) float64 matrix, returning (radii, angles) arrays
    """
    n, d = x.shape
    check_levels(d, levels)
    angles = []
    r = x
    for level in range(1, levels + 1):
        first = r[:, 0::2]
        second = r[:, 1::2]
        angles.append(pair_angles(first, second, full_circle=level == 1))
        r = np.hypot(first, second)
    return r, angles


def cartesian_rows(radii, angles):
    """Vectorized inverse of polar_rows"""
    r = radii
    for theta in reversed(angles):
        if theta.shape[1] != r.shape[1]:
            raise InvalidArgument(
                'Malformed polar levels: %i angles against %i radii' % (theta.shape[1], r.shape[1])
            )
        expanded = np.empty((r.shape[0], 2 * r.shape[1]))
        expanded[:, 0::2] = r * np.cos(theta)
        expanded[:, 1::2] = r * np.sin(theta)
        r = expanded
    return r


def to_polar(x, levels=DEFAULT_LEVELS):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgument('to_polar expects a vector, got shape %s' % (x.shape,))
    if not np.all(np.isfinite(x)):
        raise InvalidArgument('Input vector contains NaN or infinite values')
    radii, angles = polar_rows(x.reshape(1, -1), levels)
    return PolarRep(radii[0], [a[0] for a in angles])


def _check_rep(rep):
    levels = rep.levels
    if levels < 1:
        raise InvalidArgument('Polar representation has no levels')
    d = rep.dim
    lengths = level_lengths(d, levels)
    for level, (angles, expected) in enumerate(zip(rep.angles, lengths), start=1):
        if angles.shape[-1] != expected:
            raise InvalidArgument(
                'Malformed level %i: %i angles, expected %i for d=%i' % (level, angles.shape[-1], expected, d)
            )
    if np.any(rep.radii < 0):
        raise InvalidArgument('Polar radii must be nonnegative')


def from_polar(rep):
    if rep.radii.ndim != 1:
        raise InvalidArgument('from_polar expects a single representation')
    _check_rep(rep)
    return cartesian_rows(rep.radii.reshape(1, -1), [a.reshape(1, -1) for a in rep.angles])[0]


def to_polar_batch(x, levels=DEFAULT_LEVELS):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidArgument('to_polar_batch expects a matrix, got shape %s' % (x.shape,))
    if x.shape[0] == 0:
        return []
    if not np.all(np.isfinite(x)):
        raise InvalidArgument('Input matrix contains NaN or infinite values')
    radii, angles = polar_rows(x, levels)
    return [PolarRep(radii[i], [a[i] for a in angles]) for i in range(x.shape[0])]


def from_polar_batch(reps):
    reps = list(reps)
    if not reps:
        return np.zeros((0, 0))
    levels = reps[0].levels
    for rep in reps:
        if rep.levels != levels or rep.dim != reps[0].dim:
            raise InvalidArgument('All representations in a batch must share d and L')
        _check_rep(rep)
    radii = np.stack([rep.radii for rep in reps])
    angles = [np.stack([rep.angles[i] for rep in reps]) for i in range(levels)]
    return cartesian_rows(radii, angles)
