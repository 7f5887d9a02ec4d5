import json
import math

import numpy as np

from polarquant import __version__
from polarquant.diffs import mycsv
from polarquant.errors import InvalidArgument


class TensorDType:
    F32 = "f32"
    F16 = "f16"

    @staticmethod
    def to_code(dtype):
        if dtype == TensorDType.F32:
            return 0
        elif dtype == TensorDType.F16:
            return 1
        else:
            raise InvalidArgument('Invalid tensor dtype passed in: %s' % dtype)

    @staticmethod
    def from_code(code):
        if code == 0:
            return TensorDType.F32
        elif code == 1:
            return TensorDType.F16
        else:
            raise InvalidArgument('Invalid tensor dtype code: %s' % code)

    @staticmethod
    def numpy_dtype(dtype):
        if dtype == TensorDType.F32:
            return np.dtype('<f4')
        elif dtype == TensorDType.F16:
            return np.dtype('<f2')
        else:
            raise InvalidArgument('Invalid tensor dtype passed in: %s' % dtype)


class RadiusPrecision:
    F16 = "f16"
    F32 = "f32"
    F64 = "f64"

    @staticmethod
    def bits(precision):
        if precision == RadiusPrecision.F16:
            return 16
        elif precision == RadiusPrecision.F32:
            return 32
        elif precision == RadiusPrecision.F64:
            return 64
        else:
            raise InvalidArgument('Invalid radius precision passed in: %s' % precision)

    @staticmethod
    def from_bits(bits):
        for precision in (RadiusPrecision.F16, RadiusPrecision.F32, RadiusPrecision.F64):
            if RadiusPrecision.bits(precision) == bits:
                return precision
        raise InvalidArgument('No radius precision stores %s bits' % bits)

    @staticmethod
    def numpy_dtype(precision):
        return np.dtype('<f%i' % (RadiusPrecision.bits(precision) // 8))

    @staticmethod
    def to_code(precision):
        return {RadiusPrecision.F16: 0, RadiusPrecision.F32: 1, RadiusPrecision.F64: 2}[
            RadiusPrecision.validate(precision)
        ]

    @staticmethod
    def from_code(code):
        for precision in (RadiusPrecision.F16, RadiusPrecision.F32, RadiusPrecision.F64):
            if RadiusPrecision.to_code(precision) == code:
                return precision
        raise InvalidArgument('Invalid radius precision code: %s' % code)

    @staticmethod
    def validate(precision):
        RadiusPrecision.bits(precision)
        return precision


class CodebookMode:
    ONLINE = "online"
    OFFLINE = "offline"

    @staticmethod
    def validate(mode):
        if mode not in (CodebookMode.ONLINE, CodebookMode.OFFLINE):
            raise InvalidArgument('Invalid codebook mode passed in: %s' % mode)
        return mode

    @staticmethod
    def to_code(mode):
        return 0 if CodebookMode.validate(mode) == CodebookMode.ONLINE else 1

    @staticmethod
    def from_code(code):
        if code == 0:
            return CodebookMode.ONLINE
        elif code == 1:
            return CodebookMode.OFFLINE
        else:
            raise InvalidArgument('Invalid codebook mode code: %s' % code)


class AppendMode:
    FP_TAIL = "fp_tail"
    QUANTIZE = "quantize"

    @staticmethod
    def validate(mode):
        if mode not in (AppendMode.FP_TAIL, AppendMode.QUANTIZE):
            raise InvalidArgument('Invalid append mode passed in: %s' % mode)
        return mode

    @staticmethod
    def to_code(mode):
        return 0 if AppendMode.validate(mode) == AppendMode.FP_TAIL else 1

    @staticmethod
    def from_code(code):
        if code == 0:
            return AppendMode.FP_TAIL
        elif code == 1:
            return AppendMode.QUANTIZE
        else:
            raise InvalidArgument('Invalid append mode code: %s' % code)


class ValidationSuite:
    THEOREM1 = "theorem1"
    VARIANCE = "variance"
    CODEBOOK_LEMMA = "codebook-lemma"
    SEPARABILITY = "separability"
    ANGLE_DISTRIBUTION = "angle-distribution"

    ALL = [THEOREM1, VARIANCE, CODEBOOK_LEMMA, SEPARABILITY, ANGLE_DISTRIBUTION]

    @staticmethod
    def validate(suite):
        if suite not in ValidationSuite.ALL:
            raise InvalidArgument('Invalid validation suite passed in: %s' % suite)
        return suite


def provenance(seed, config=None):
    response = dict()
    response['tool_version'] = __version__
    response['seed'] = seed
    response['config'] = config if config is not None else {}
    return response


def compensated_mean(values):
    values = [float(v) for v in values]
    if not values:
        return 0.0
    return math.fsum(values) / len(values)


class TheoremTrialReport:
    def __init__(self, d, scale, level_sizes, level_bits, trials, mean_rel_sq_error, bits_per_coord,
                 expected_level_errors, error_bound):
        self.d = d
        self.scale = scale
        self.level_sizes = list(level_sizes)
        self.level_bits = list(level_bits)
        self.trials = trials
        self.mean_rel_sq_error = mean_rel_sq_error
        self.bits_per_coord = bits_per_coord
        self.expected_level_errors = list(expected_level_errors)
        self.error_bound = error_bound

    def to_dict(self):
        response = dict()
        response['d'] = self.d
        response['scale'] = self.scale
        response['level_sizes'] = self.level_sizes
        response['level_bits'] = self.level_bits
        response['trials'] = self.trials
        response['mean_rel_sq_error'] = self.mean_rel_sq_error
        response['bits_per_coord'] = self.bits_per_coord
        response['expected_level_errors'] = self.expected_level_errors
        response['error_bound'] = self.error_bound
        return response


class VarianceBoundReport:
    def __init__(self, levels, empirical_variances, analytic_variances, samples):
        self.levels = list(levels)
        self.empirical_variances = list(empirical_variances)
        self.analytic_variances = list(analytic_variances)
        self.samples = samples
        self.products = [
            v * (2 ** (level - 1) - 1) for level, v in zip(self.levels, self.empirical_variances)
        ]
        self.product_ratio = max(self.products) / min(self.products)
        # variance ratio between each level and the one before it
        self.step_ratios = [
            self.empirical_variances[i + 1] / self.empirical_variances[i] for i in range(len(self.levels) - 1)
        ]
        self.passed = None

    def to_dict(self):
        response = dict()
        response['levels'] = self.levels
        response['samples'] = self.samples
        response['empirical_variances'] = self.empirical_variances
        response['analytic_variances'] = self.analytic_variances
        response['products'] = self.products
        response['product_ratio'] = self.product_ratio
        response['step_ratios'] = self.step_ratios
        response['passed'] = self.passed
        return response


class CodebookSizeReport:
    def __init__(self, level, epsilons, sizes, variances, var_1, sigma, constructive_sizes=None,
                 constructive_variances=None):
        self.level = level
        self.epsilons = list(epsilons)
        self.sizes = list(sizes)
        self.variances = list(variances)
        self.var_1 = var_1
        self.sigma = sigma
        # sizes and errors of the explicit grid-plus-geometric codebook, one per epsilon
        self.constructive_sizes = list(constructive_sizes) if constructive_sizes else []
        self.constructive_variances = list(constructive_variances) if constructive_variances else []
        self.scaled_sizes = [k * math.sqrt(eps) for k, eps in zip(self.sizes, self.epsilons)]
        log_term = math.log(1.0 / sigma)
        self.normalized_sizes = [s / log_term for s in self.scaled_sizes]
        self.consecutive_ratios = [
            max(a, b) / min(a, b) for a, b in zip(self.scaled_sizes[:-1], self.scaled_sizes[1:])
        ]
        self.passed = None

    def to_dict(self):
        response = dict()
        response['level'] = self.level
        response['epsilons'] = self.epsilons
        response['sizes'] = self.sizes
        response['variances'] = self.variances
        response['var_1'] = self.var_1
        response['sigma'] = self.sigma
        response['scaled_sizes'] = self.scaled_sizes
        response['normalized_sizes'] = self.normalized_sizes
        response['consecutive_ratios'] = self.consecutive_ratios
        response['constructive_sizes'] = self.constructive_sizes
        response['constructive_variances'] = self.constructive_variances
        response['passed'] = self.passed
        return response


class SeparabilityReport:
    def __init__(self, d, samples, max_abs_angle_corr, max_abs_radius_corr, max_ks_statistic, ks_critical_value,
                 control_max_abs_corr):
        self.d = d
        self.samples = samples
        self.max_abs_angle_corr = max_abs_angle_corr
        self.max_abs_radius_corr = max_abs_radius_corr
        self.max_ks_statistic = max_ks_statistic
        self.ks_critical_value = ks_critical_value
        self.control_max_abs_corr = control_max_abs_corr
        self.passed = None

    def to_dict(self):
        response = dict()
        response['d'] = self.d
        response['samples'] = self.samples
        response['max_abs_angle_corr'] = self.max_abs_angle_corr
        response['max_abs_radius_corr'] = self.max_abs_radius_corr
        response['max_ks_statistic'] = self.max_ks_statistic
        response['ks_critical_value'] = self.ks_critical_value
        response['control_max_abs_corr'] = self.control_max_abs_corr
        response['passed'] = self.passed
        return response


class AngleDistributionReport:
    def __init__(self, d, samples, levels, chi2_statistics, p_values, means, mean_tolerances):
        self.d = d
        self.samples = samples
        self.levels = list(levels)
        self.chi2_statistics = list(chi2_statistics)
        self.p_values = list(p_values)
        # None for level 1, whose mean is not checked
        self.means = list(means)
        self.mean_tolerances = list(mean_tolerances)
        self.passed = None

    def to_dict(self):
        response = dict()
        response['d'] = self.d
        response['samples'] = self.samples
        response['levels'] = self.levels
        response['chi2_statistics'] = self.chi2_statistics
        response['p_values'] = self.p_values
        response['means'] = self.means
        response['mean_tolerances'] = self.mean_tolerances
        response['passed'] = self.passed
        return response


class MemoryReport:
    # claims stated alongside the measured numbers, never asserted against them
    STATED_FORMULA_SAVING = 4.008
    STATED_OVERALL_SAVING = 4.2

    def __init__(self, d, quantized_tokens, tail_tokens, payload_bits, codebook_bits, tail_bits, rotation_bits,
                 baseline_bits_per_coord, formula_ratio=None):
        self.d = d
        self.quantized_tokens = quantized_tokens
        self.tail_tokens = tail_tokens
        self.payload_bits = payload_bits
        self.codebook_bits = codebook_bits
        self.tail_bits = tail_bits
        self.rotation_bits = rotation_bits
        self.baseline_bits_per_coord = baseline_bits_per_coord
        self.formula_ratio = formula_ratio

    @property
    def total_bits(self):
        return self.payload_bits + self.codebook_bits + self.tail_bits + self.rotation_bits

    @property
    def payload_bits_per_coord(self):
        # keys and values both count
        coords = 2 * self.quantized_tokens * self.d
        return self.payload_bits / coords if coords else 0.0

    @property
    def baseline_bits(self):
        return 2 * (self.quantized_tokens + self.tail_tokens) * self.d * self.baseline_bits_per_coord

    @property
    def payload_ratio(self):
        bpc = self.payload_bits_per_coord
        return self.baseline_bits_per_coord / bpc if bpc else 0.0

    @property
    def total_ratio(self):
        return self.baseline_bits / self.total_bits if self.total_bits else 0.0

    @staticmethod
    def combine(reports):
        reports = list(reports)
        if not reports:
            raise InvalidArgument('Cannot combine an empty list of memory reports')
        first = reports[0]
        combined = MemoryReport(
            first.d,
            sum(r.quantized_tokens for r in reports),
            sum(r.tail_tokens for r in reports),
            sum(r.payload_bits for r in reports),
            sum(r.codebook_bits for r in reports),
            sum(r.tail_bits for r in reports),
            first.rotation_bits,
            first.baseline_bits_per_coord,
            first.formula_ratio
        )
        return combined

    def to_dict(self):
        response = dict()
        response['d'] = self.d
        response['quantized_tokens'] = self.quantized_tokens
        response['tail_tokens'] = self.tail_tokens
        response['payload_bits'] = self.payload_bits
        response['codebook_bits'] = self.codebook_bits
        response['tail_bits'] = self.tail_bits
        response['rotation_bits'] = self.rotation_bits
        response['total_bits'] = self.total_bits
        response['payload_bits_per_coord'] = self.payload_bits_per_coord
        response['baseline_bits'] = self.baseline_bits
        response['payload_ratio'] = self.payload_ratio
        response['total_ratio'] = self.total_ratio
        response['formula_ratio'] = self.formula_ratio
        response['stated_formula_saving'] = self.STATED_FORMULA_SAVING
        response['stated_overall_saving'] = self.STATED_OVERALL_SAVING
        return response


class ErrorTrace:
    SCHEMA = 'error-trace'
    HEADER = ['step', 'tokens', 'rel_l2_error']

    def __init__(self):
        self.steps = []
        self.tokens = []
        self.errors = []

    def add_step(self, tokens, rel_error):
        self.steps.append(len(self.steps))
        self.tokens.append(tokens)
        self.errors.append(float(rel_error))

    def __len__(self):
        return len(self.steps)

    @property
    def mean_error(self):
        return compensated_mean(self.errors)

    @property
    def max_error(self):
        return max(self.errors) if self.errors else 0.0

    def to_rows(self):
        return [[s, t, repr(e)] for s, t, e in zip(self.steps, self.tokens, self.errors)]

    def to_csv(self, csv_file_path):
        mycsv.write_versioned_csv(csv_file_path, self.SCHEMA, self.HEADER, self.to_rows())

    def to_dict(self):
        response = dict()
        response['steps'] = len(self.steps)
        response['mean_rel_l2_error'] = self.mean_error
        response['max_rel_l2_error'] = self.max_error
        return response


class TensorDifferences:
    def __init__(self, num_rows, max_abs_diff, mean_abs_diff, max_rel_diff, mean_rel_diff, count_of_big_diff,
                 count_of_small_diff):
        self.num_rows = num_rows
        self.max_abs_diff = max_abs_diff
        self.mean_abs_diff = mean_abs_diff
        self.max_rel_diff = max_rel_diff
        self.mean_rel_diff = mean_rel_diff
        self.count_of_big_diff = count_of_big_diff
        self.count_of_small_diff = count_of_small_diff

    @property
    def diff_type(self):
        if self.count_of_big_diff > 0:
            return 'Big Diffs'
        elif self.count_of_small_diff > 0:
            return 'Small Diffs'
        return 'All Equal'

    def to_dict(self):
        response = dict()
        response['num_rows'] = self.num_rows
        response['max_abs_diff'] = self.max_abs_diff
        response['mean_abs_diff'] = self.mean_abs_diff
        response['max_rel_diff'] = self.max_rel_diff
        response['mean_rel_diff'] = self.mean_rel_diff
        response['count_of_big_diff'] = self.count_of_big_diff
        response['count_of_small_diff'] = self.count_of_small_diff
        response['diff_type'] = self.diff_type
        return response


class SuiteResult:
    def __init__(self, suite, passed, report, runtime_seconds):
        self.suite = suite
        self.passed = passed
        self.report = report
        self.runtime_seconds = runtime_seconds

    def to_dict(self):
        response = dict()
        response['suite'] = self.suite
        response['passed'] = self.passed
        response['runtime_seconds'] = self.runtime_seconds
        response['report'] = self.report
        return response


class CompletedValidation:
    def __init__(self, seed, config=None):
        self.seed = seed
        self.config = config
        self.results = []

    def add_result(self, suite_result):
        self.results.append(suite_result)
        self.results.sort(key=lambda r: r.suite)

    @property
    def passed_suites(self):
        return [r.suite for r in self.results if r.passed]

    @property
    def failed_suites(self):
        return [r.suite for r in self.results if not r.passed]

    @property
    def all_passed(self):
        return len(self.failed_suites) == 0

    def to_dict(self):
        response = provenance(self.seed, self.config)
        response['passed'] = self.passed_suites
        response['failed'] = self.failed_suites
        response['results'] = [r.to_dict() for r in self.results]
        return response

    def to_json_summary(self, json_file_path):
        output_string = json.dumps(self.to_dict(), indent=2)
        with open(json_file_path, 'w') as json_file:
            json_file.write(output_string)
