"""
Desk-scale empirical checks of the accuracy and distribution claims behind the quantizer.

Every check is deterministic in its seed.  Pass/fail decisions compare measured values against the frozen bands of
polarquant/diffs/validation.config.
"""

import math

import numpy as np
from scipy import stats

from polarquant import distribution, polar
from polarquant.codebook import (
    BitWidthConfig,
    KMeans1D,
    KMeansInit,
    LevelCodebook,
    build_from_sizes,
    expected_quant_error,
)
from polarquant.diffs.thresh_dict import ThreshDict
from polarquant.errors import InvalidArgument
from polarquant.precondition.rotation import RotationMatrix, build_rotation
from polarquant.quantizer import PolarQuantizer, QuantizerConfig, bits_per_coordinate
from polarquant.structures import (
    AngleDistributionReport,
    CodebookSizeReport,
    RadiusPrecision,
    SeparabilityReport,
    TheoremTrialReport,
    ValidationSuite,
    VarianceBoundReport,
    compensated_mean,
)
from polarquant.tensor_io import new_generator, sub_seeds

THEOREM1_SCALES = (1, 2, 4, 8)
MAX_CODEBOOK_SIZE = 4096
# level 1 spans 2 pi, four times the other levels, so it gets four times the centroids
LEVEL1_WIDTH_FACTOR = 4
EXACT_RADIUS_BITS = 64


def _thresholds(thresholds):
    return thresholds if thresholds is not None else ThreshDict()


def _check_dim(d):
    if not polar.is_power_of_two(d) or d < 2:
        raise InvalidArgument('d must be a power of two of at least 2, got %s' % d)
    return int(d)


def _check_count(n, name):
    if int(n) != n or n < 1:
        raise InvalidArgument('%s must be a positive integer, got %s' % (name, n))
    return int(n)


def gaussian_rows(n, d, seed):
    return new_generator(seed).standard_normal((n, d))


def theorem1_level_sizes(k0, levels, scale, max_size=MAX_CODEBOOK_SIZE):
    """Centroid counts s*k0*4 for level 1 and s*k0*l for level l, capped at max_size"""
    sizes = [min(scale * k0 * LEVEL1_WIDTH_FACTOR, max_size)]
    sizes.extend(min(scale * k0 * level, max_size) for level in range(2, levels + 1))
    return sizes


def theorem1_samples(sizes):
    return int(min(max(100000, 50 * max(sizes)), 1000000))


def theorem1_codebooks(sizes, seed):
    return build_from_sizes(sizes, theorem1_samples(sizes), seed)


def theorem1_error_bound(quant_per_level, alpha=0.5):
    """
    (4 / alpha) * sum over levels of (1 + alpha)^(l - 1) * quant_l, the worst-case accumulation of per-level
    angle errors into the relative squared reconstruction error
    """
    if alpha <= 0:
        raise InvalidArgument('alpha must be positive, got %s' % alpha)
    return 4.0 / alpha * math.fsum((1.0 + alpha) ** i * q for i, q in enumerate(quant_per_level))


def run_theorem1_trial(x, codebooks, rotation):
    """
    Encode and decode the rows of x with exact (f64) radii; returns the per-row ||x - x'||^2 / ||x||^2
    """
    config = QuantizerConfig(BitWidthConfig(codebooks.level_bits, EXACT_RADIUS_BITS),
                             radius_precision=RadiusPrecision.F64)
    quantizer = PolarQuantizer(rotation, codebooks, config)
    radii, packed = quantizer.encode_rows(x)
    reconstructed = quantizer.decode_rows(radii, packed)
    return np.sum((x - reconstructed) ** 2, axis=1) / np.sum(x ** 2, axis=1)


def check_theorem1(d=64, k0=4, trials=2000, seed=0, scales=THEOREM1_SCALES, precondition=True, levels=None,
                   max_size=MAX_CODEBOOK_SIZE):
    """
    Reconstruction error of Gaussian vectors as every codebook grows with the scale factor

    :param d: dimension, a power of two
    :param k0: base codebook size, at least 2
    :param trials: number of Gaussian vectors per scale
    :param seed: drives the data, the codebooks and the rotation
    :param scales: codebook size multipliers, one report each
    :param precondition: rotate with a random orthogonal matrix, otherwise use the identity
    :param levels: recursion depth, defaults to the full log2(d)
    """
    d = _check_dim(d)
    trials = _check_count(trials, 'trials')
    if int(k0) != k0 or k0 < 2:
        raise InvalidArgument('Base codebook size must be an integer of at least 2, got %s' % k0)
    levels = polar.max_levels(d) if levels is None else levels
    polar.check_levels(d, levels)
    data_seed, codebook_seed, rotation_seed = sub_seeds(seed, 3)
    x = gaussian_rows(trials, d, data_seed)
    rotation = build_rotation(d, rotation_seed) if precondition else RotationMatrix.identity(d)
    reports = []
    for scale in scales:
        sizes = theorem1_level_sizes(int(k0), levels, scale, max_size)
        codebooks = theorem1_codebooks(sizes, codebook_seed)
        errors = run_theorem1_trial(x, codebooks, rotation)
        expected = [expected_quant_error(cb) for cb in codebooks.levels]
        bit_config = BitWidthConfig(codebooks.level_bits, EXACT_RADIUS_BITS)
        reports.append(TheoremTrialReport(d, scale, sizes, codebooks.level_bits, trials, compensated_mean(errors),
                                          float(bits_per_coordinate(bit_config)), expected,
                                          theorem1_error_bound(expected)))
    return reports


def theorem1_doubling_ratios(reports):
    """Error ratio between each scale and the one that doubles it"""
    by_scale = dict((r.scale, r.mean_rel_sq_error) for r in reports)
    return [by_scale[s] / by_scale[2 * s] for s in sorted(by_scale) if 2 * s in by_scale and by_scale[2 * s] > 0]


def check_large_codebook_limit(d=16, k=MAX_CODEBOOK_SIZE, trials=1000, seed=0):
    d = _check_dim(d)
    levels = polar.max_levels(d)
    data_seed, codebook_seed, rotation_seed = sub_seeds(seed, 3)
    sizes = [k] * levels
    codebooks = theorem1_codebooks(sizes, codebook_seed)
    x = gaussian_rows(_check_count(trials, 'trials'), d, data_seed)
    errors = run_theorem1_trial(x, codebooks, build_rotation(d, rotation_seed))
    expected = [expected_quant_error(cb) for cb in codebooks.levels]
    bit_config = BitWidthConfig(codebooks.level_bits, EXACT_RADIUS_BITS)
    return TheoremTrialReport(d, None, sizes, codebooks.level_bits, trials, compensated_mean(errors),
                              float(bits_per_coordinate(bit_config)), expected, theorem1_error_bound(expected))


def check_variance_bound(levels=(2, 3, 4, 5, 6), samples=1000000, seed=0, thresholds=None):
    """
    Empirical variance of each level angle against quadrature, with Var * (2^(l-1) - 1) expected to stay in one
    constant band
    """
    levels = [int(level) for level in levels]
    if not levels or any(level < 2 or level > 10 for level in levels):
        raise InvalidArgument('Levels must lie in 2..10, got %s' % levels)
    samples = _check_count(samples, 'samples')
    seeds = sub_seeds(seed, len(levels))
    empirical = []
    analytic = []
    for level, level_seed in zip(levels, seeds):
        theta = distribution.sample_angles(level, samples, level_seed)
        mean = compensated_mean(theta)
        empirical.append(math.fsum((theta - mean) ** 2) / samples)
        analytic.append(distribution.angle_mean_var(level)[1])
    report = VarianceBoundReport(levels, empirical, analytic, samples)
    bands = _thresholds(thresholds)
    passed = bands.all_within('variance', 'product', report.products)
    passed = passed and bands.within('variance', 'product_ratio', report.product_ratio)
    for i, ratio in enumerate(report.step_ratios):
        if levels[i + 1] == levels[i] + 1 and levels[i + 1] >= 4:
            passed = passed and bands.within('variance', 'step_ratio', ratio)
    if 2 in levels:
        i = levels.index(2)
        passed = passed and bands.within('variance', 'level2_rel_error', abs(empirical[i] / analytic[i] - 1.0))
    report.passed = bool(passed)
    return report


def fitted_variance(samples, level, k, seed, restarts):
    """Expected squared error under the level density of a k-means codebook fitted to samples"""
    fit = KMeans1D(k, seed, init=KMeansInit.PLUS_PLUS, level=level, n_init=restarts).fit(samples)
    return expected_quant_error(fit.codebook())


def minimal_codebook_size(samples, level, target, seed, restarts=5, max_k=MAX_CODEBOOK_SIZE):
    """
    Smallest k whose fitted codebook reaches target, by doubling and then bisection; returns (k, variance)
    """
    k = 1
    variance = fitted_variance(samples, level, k, seed, restarts)
    while variance > target:
        if k >= max_k:
            raise InvalidArgument('No codebook up to %i centroids reaches %s' % (max_k, target))
        k = min(2 * k, max_k)
        variance = fitted_variance(samples, level, k, seed, restarts)
    low = k // 2
    while k - low > 1:
        middle = (low + k) // 2
        trial = fitted_variance(samples, level, middle, seed, restarts)
        if trial <= target:
            k, variance = middle, trial
        else:
            low = middle
    return k, variance


def constructive_codebook(level, eps):
    """
    Explicit codebook reaching eps * Var: a grid of spacing eps' * sigma over mu +- sigma joined with geometric
    steps mu +- (1 + eps')^i * sigma out to the support ends, with eps' = sqrt(eps / 2)
    """
    if eps <= 0:
        raise InvalidArgument('eps must be positive, got %s' % eps)
    mu, var = distribution.angle_mean_var(level)
    sigma = math.sqrt(var)
    lo, hi = distribution.angle_support(level)
    step = math.sqrt(eps / 2.0)
    count = int(math.ceil(1.0 / step))
    points = [mu + j * step * sigma for j in range(-count, count + 1)]
    radius = sigma
    while mu - radius > lo or mu + radius < hi:
        points.extend([mu - radius, mu + radius])
        radius *= 1.0 + step
    points.extend([mu - radius, mu + radius])
    centroids = np.unique(np.clip(points, lo, np.nextafter(hi, lo) if level == 1 else hi))
    return LevelCodebook(level, centroids)


def check_codebook_size_lemma(level=3, epsilons=(0.1, 0.03, 0.01), seed=0, samples=100000, restarts=5,
                              thresholds=None):
    """
    Smallest k-means codebook with Var_k <= eps * Var_1 for each eps; k * sqrt(eps) should stay bounded
    """
    if int(level) != level or level < 2:
        raise InvalidArgument('Level must be at least 2, got %s' % level)
    epsilons = [float(e) for e in epsilons]
    if not epsilons or any(e <= 0 or e > 1 for e in epsilons):
        raise InvalidArgument('Every eps must lie in (0, 1], got %s' % epsilons)
    sample_seed, fit_seed = sub_seeds(seed, 2)
    x = distribution.sample_angles(level, _check_count(samples, 'samples'), sample_seed)
    var_1 = fitted_variance(x, level, 1, fit_seed, restarts)
    sizes = []
    variances = []
    constructive_sizes = []
    constructive_variances = []
    for eps in epsilons:
        k, variance = minimal_codebook_size(x, level, eps * var_1, fit_seed, restarts)
        sizes.append(k)
        variances.append(variance)
        explicit = constructive_codebook(level, eps)
        constructive_sizes.append(explicit.size)
        constructive_variances.append(expected_quant_error(explicit))
    report = CodebookSizeReport(level, epsilons, sizes, variances, var_1, math.sqrt(var_1), constructive_sizes,
                                constructive_variances)
    report.passed = _thresholds(thresholds).all_within('codebook_lemma', 'consecutive_ratio',
                                                       report.consecutive_ratios)
    return report


def _rotated_polar(d, samples, seed, levels):
    data_seed, rotation_seed = sub_seeds(seed, 2)
    x = gaussian_rows(samples, d, data_seed)
    return polar.polar_rows(build_rotation(d, rotation_seed).apply(x), levels)


def _max_offdiagonal(matrix):
    corr = np.abs(np.corrcoef(matrix, rowvar=False))
    np.fill_diagonal(corr, 0.0)
    return float(np.max(corr))


def check_separability(d=16, samples=100000, seed=0, thresholds=None):
    """
    Pairwise correlation of every angle coordinate, radius against angles, and per-coordinate KS distance to the
    analytic law.  A control copy with one pair duplicated must show the injected dependence.
    """
    d = _check_dim(d)
    if d < 4:
        raise InvalidArgument('Separability needs at least two pairs, got d=%i' % d)
    samples = _check_count(samples, 'samples')
    levels = polar.max_levels(d)
    radii, angles = _rotated_polar(d, samples, seed, levels)
    columns = np.hstack(angles)
    column_levels = np.concatenate([np.full(a.shape[1], level) for level, a in enumerate(angles, start=1)])
    max_angle_corr = _max_offdiagonal(columns) if columns.shape[1] > 1 else 0.0
    max_radius_corr = float(np.max(np.abs(np.corrcoef(np.hstack([radii, columns]), rowvar=False)[0, 1:])))
    ks_values = [
        stats.kstest(columns[:, j], lambda t, level=level: distribution.angle_cdf(level, t)).statistic
        for j, level in enumerate(column_levels)
    ]
    bands = _thresholds(thresholds)
    alpha = bands.lookup('separability', 'ks_alpha')[1]
    critical = float(stats.kstwo.ppf(1.0 - alpha / columns.shape[1], samples))

    control_seed = sub_seeds(seed, 3)[2]
    x = gaussian_rows(samples, d, control_seed)
    x[:, 2:4] = x[:, 0:2]
    control = np.hstack(polar.polar_rows(x, levels)[1])
    control_corr = _max_offdiagonal(control)

    report = SeparabilityReport(d, samples, max_angle_corr, max_radius_corr, float(max(ks_values)), critical,
                                control_corr)
    report.passed = bool(
        bands.within('separability', 'max_abs_corr', max_angle_corr) and
        bands.within('separability', 'max_abs_corr', max_radius_corr) and
        report.max_ks_statistic <= critical and
        bands.within('separability', 'control_corr', control_corr)
    )
    return report


def check_angle_distribution(d=64, samples=100000, levels=4, seed=0, bins=64, thresholds=None):
    """
    Chi-square goodness of fit of one angle coordinate per level against its analytic law over equiprobable
    bins, plus the mean of every level >= 2 angle against pi/4
    """
    d = _check_dim(d)
    samples = _check_count(samples, 'samples')
    polar.check_levels(d, levels)
    angles = _rotated_polar(d, samples, seed, levels)[1]
    bands = _thresholds(thresholds)
    sigmas = bands.lookup('angle_distribution', 'mean_sigmas')[1]
    expected = np.full(bins, samples / float(bins))
    statistics, p_values, means, tolerances = [], [], [], []
    passed = True
    for level, level_angles in enumerate(angles, start=1):
        column = level_angles[:, 0]
        edges = distribution.angle_inverse_cdf(level, np.linspace(0.0, 1.0, bins + 1))
        counts = np.histogram(column, bins=edges)[0]
        result = stats.chisquare(counts, expected)
        statistics.append(float(result.statistic))
        p_values.append(float(result.pvalue))
        passed = passed and bands.within('angle_distribution', 'p_value', result.pvalue)
        if level == 1:
            means.append(None)
            tolerances.append(None)
            continue
        mu, var = distribution.angle_mean_var(level)
        mean = compensated_mean(column)
        tolerance = sigmas * math.sqrt(var / samples)
        means.append(mean)
        tolerances.append(tolerance)
        passed = passed and abs(mean - mu) <= tolerance
    report = AngleDistributionReport(d, samples, range(1, levels + 1), statistics, p_values, means, tolerances)
    report.passed = bool(passed)
    return report


def run_theorem1_suite(seed=0, thresholds=None):
    """Scaling series, rotation agreement and the large-codebook limit as one pass/fail result"""
    bands = _thresholds(thresholds)
    rotated = check_theorem1(seed=seed)
    plain = check_theorem1(seed=seed, precondition=False)
    ratios = theorem1_doubling_ratios(rotated)
    agreement = [abs(a.mean_rel_sq_error / b.mean_rel_sq_error - 1.0) for a, b in zip(rotated, plain)]
    limit = check_large_codebook_limit(seed=seed)
    passed = (bands.all_within('theorem1', 'doubling_ratio', ratios) and
              bands.all_within('theorem1', 'rotation_agreement', agreement) and
              bands.within('theorem1', 'large_codebook_error', limit.mean_rel_sq_error))
    response = dict()
    response['reports'] = [r.to_dict() for r in rotated]
    response['identity_reports'] = [r.to_dict() for r in plain]
    response['doubling_ratios'] = ratios
    response['rotation_agreement'] = agreement
    response['large_codebook'] = limit.to_dict()
    response['passed'] = bool(passed)
    return response


def run_suite(suite, seed=0, thresholds=None):
    """
    Run one named validation suite; returns (passed, report dictionary)
    """
    suite = ValidationSuite.validate(suite)
    if suite == ValidationSuite.THEOREM1:
        report = run_theorem1_suite(seed, thresholds)
        return report['passed'], report
    elif suite == ValidationSuite.VARIANCE:
        report = check_variance_bound(seed=seed, thresholds=thresholds)
    elif suite == ValidationSuite.CODEBOOK_LEMMA:
        report = check_codebook_size_lemma(seed=seed, thresholds=thresholds)
    elif suite == ValidationSuite.SEPARABILITY:
        report = check_separability(seed=seed, thresholds=thresholds)
    else:
        report = check_angle_distribution(seed=seed, thresholds=thresholds)
    return report.passed, report.to_dict()
