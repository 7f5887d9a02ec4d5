"""
Densities, moments and samplers for the radius and the per-level angles of a standard Gaussian vector.

With m = 2^(level - 1), a level >= 2 angle is atan(|b| / |a|) for two independent m-dimensional Gaussian halves
a and b, so sin^2 of the angle follows Beta(m / 2, m / 2) and its density on [0, pi/2] is

    Gamma(m) / (2^(m - 2) Gamma(m / 2)^2) * sin^(m - 1)(2 theta)

Level 1 angles are uniform on [0, 2 pi).  The radius of a d-dimensional Gaussian follows the chi distribution.
"""

import math

import numpy as np
from scipy import integrate, special

from polarquant.errors import InvalidArgument
from polarquant.polar import TWO_PI, pair_angles
from polarquant.tensor_io import new_generator

HALF_PI = 0.5 * math.pi
QUARTER_PI = 0.25 * math.pi
QUADRATURE_POINTS = 10001


def _check_level(level):
    if int(level) != level or level < 1:
        raise InvalidArgument('Angle level must be a positive integer, got %s' % level)
    return int(level)


def half_dim(level):
    return 2 ** (_check_level(level) - 1)


def angle_support(level):
    if _check_level(level) == 1:
        return 0.0, TWO_PI
    return 0.0, HALF_PI


def log_angle_normalizer(level):
    """log of Gamma(m) / (2^(m - 2) Gamma(m / 2)^2); stays finite for any level"""
    m = half_dim(level)
    return special.gammaln(m) - (m - 2) * math.log(2.0) - 2.0 * special.gammaln(m / 2.0)


def angle_pdf(level, theta):
    """
    Density of the level angle; zero outside the support
    """
    level = _check_level(level)
    theta = np.asarray(theta, dtype=np.float64)
    lo, hi = angle_support(level)
    if level == 1:
        inside = (theta >= lo) & (theta < hi)
        density = np.where(inside, 1.0 / TWO_PI, 0.0)
    else:
        inside = (theta >= lo) & (theta <= hi)
        m = half_dim(level)
        s = np.clip(np.sin(2.0 * theta), 0.0, None)
        with np.errstate(divide='ignore'):
            log_density = log_angle_normalizer(level) + (m - 1) * np.log(s)
        density = np.where(inside, np.exp(log_density), 0.0)
    return density if density.ndim else float(density)


def angle_cdf(level, theta):
    level = _check_level(level)
    theta = np.asarray(theta, dtype=np.float64)
    lo, hi = angle_support(level)
    t = np.clip(theta, lo, hi)
    if level == 1:
        p = t / TWO_PI
    else:
        a = half_dim(level) / 2.0
        lower = special.betainc(a, a, np.sin(t) ** 2)
        # evaluate the upper half through the mirror so values near pi/2 keep precision
        upper = 1.0 - special.betainc(a, a, np.cos(t) ** 2)
        p = np.where(t <= QUARTER_PI, lower, upper)
    return p if p.ndim else float(p)


def angle_inverse_cdf(level, p):
    level = _check_level(level)
    p = np.asarray(p, dtype=np.float64)
    if np.any(np.isnan(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise InvalidArgument('Probabilities must lie in [0, 1]')
    if level == 1:
        theta = TWO_PI * p
    else:
        a = half_dim(level) / 2.0
        lower = np.arcsin(np.sqrt(special.betaincinv(a, a, np.minimum(p, 0.5))))
        upper = HALF_PI - np.arcsin(np.sqrt(special.betaincinv(a, a, 1.0 - np.maximum(p, 0.5))))
        theta = np.where(p <= 0.5, lower, upper)
    return theta if theta.ndim else float(theta)


def quadrature_grid(level, num=QUADRATURE_POINTS):
    lo, hi = angle_support(level)
    return np.linspace(lo, hi, num)


def integrate_pdf(level, num=QUADRATURE_POINTS):
    grid = quadrature_grid(level, num)
    if _check_level(level) == 1:
        values = np.full(grid.shape, 1.0 / TWO_PI)
    else:
        values = angle_pdf(level, grid)
    return float(integrate.simpson(values, x=grid))


def angle_mean_var(level):
    """
    Mean and variance of the level angle; level 1 is the uniform law on [0, 2 pi)
    """
    level = _check_level(level)
    if level == 1:
        return math.pi, math.pi ** 2 / 3.0
    grid = quadrature_grid(level)
    values = (grid - QUARTER_PI) ** 2 * angle_pdf(level, grid)
    return QUARTER_PI, float(integrate.simpson(values, x=grid))


def sample_angles(level, n, seed):
    """
    n i.i.d. level angles.  Level 1 takes the angle of a 2-D standard normal pair, later levels take
    atan(sqrt(B) / sqrt(A)) with A, B ~ chi^2(m), the squared norms of the two Gaussian halves.
    """
    level = _check_level(level)
    if int(n) != n or n < 1:
        raise InvalidArgument('Sample count must be a positive integer, got %s' % n)
    rng = new_generator(seed)
    n = int(n)
    if level == 1:
        pair = rng.standard_normal((2, n))
        return pair_angles(pair[0], pair[1], full_circle=True)
    m = half_dim(level)
    first = rng.chisquare(m, n)
    second = rng.chisquare(m, n)
    return np.arctan2(np.sqrt(second), np.sqrt(first))


def _check_dim(d):
    if int(d) != d or d < 1:
        raise InvalidArgument('Dimension must be a positive integer, got %s' % d)
    return int(d)


def radius_pdf(d, r):
    """
    Chi density 2 / (2^(d/2) Gamma(d/2)) r^(d-1) exp(-r^2 / 2), evaluated in log space; zero for r < 0
    """
    d = _check_dim(d)
    r = np.asarray(r, dtype=np.float64)
    positive = np.where(r > 0.0, r, 1.0)
    log_density = math.log(2.0) - (d / 2.0) * math.log(2.0) - special.gammaln(d / 2.0) - 0.5 * r ** 2
    if d > 1:
        log_density = log_density + (d - 1) * np.log(positive)
    density = np.exp(log_density)
    if d > 1:
        density = np.where(r > 0.0, density, 0.0)
    else:
        density = np.where(r >= 0.0, density, 0.0)
    return density if density.ndim else float(density)


def radius_cdf(d, r):
    d = _check_dim(d)
    r = np.clip(np.asarray(r, dtype=np.float64), 0.0, None)
    p = special.gammainc(d / 2.0, 0.5 * r ** 2)
    return p if p.ndim else float(p)


def sample_radius(d, n, seed):
    d = _check_dim(d)
    if int(n) != n or n < 1:
        raise InvalidArgument('Sample count must be a positive integer, got %s' % n)
    return np.sqrt(new_generator(seed).chisquare(d, int(n)))


def gaussian_abs_moment(p):
    """E|x|^p = 2^(p/2) Gamma((p + 1) / 2) / sqrt(pi) for x ~ N(0, 1)"""
    if p < 0:
        raise InvalidArgument('Moment order must be nonnegative, got %s' % p)
    return math.exp(0.5 * p * math.log(2.0) + special.gammaln((p + 1) / 2.0) - 0.5 * math.log(math.pi))


class LevelAngleDensity(object):

    def __init__(self, level):
        self.level = _check_level(level)
        self.half_dim = half_dim(level)
        self.support = angle_support(level)

    def pdf(self, theta):
        return angle_pdf(self.level, theta)

    def cdf(self, theta):
        return angle_cdf(self.level, theta)

    def inverse_cdf(self, p):
        return angle_inverse_cdf(self.level, p)

    def mean_var(self):
        return angle_mean_var(self.level)

    def sample(self, n, seed):
        return sample_angles(self.level, n, seed)

    def to_dict(self):
        response = dict()
        response['level'] = self.level
        response['half_dim'] = self.half_dim
        response['support'] = list(self.support)
        return response


class RadiusDensity(object):

    def __init__(self, dim):
        self.dim = _check_dim(dim)

    def pdf(self, r):
        return radius_pdf(self.dim, r)

    def cdf(self, r):
        return radius_cdf(self.dim, r)

    def sample(self, n, seed):
        return sample_radius(self.dim, n, seed)

    def to_dict(self):
        response = dict()
        response['dim'] = self.dim
        return response
