"""
Per-level angle codebooks: sorted centroids whose midpoints partition the level's support.

Codebooks are fitted with 1-D Lloyd iterations on angle samples, either the observed angles of a prompt (online)
or samples drawn from the analytic level density (offline).  The JSON layout is

    {"format": "polarquant-codebooks", "version": 1,
     "levels": [{"level": 1, "bits": 4, "centroids": [...]}, ...],
     "meta": {"L": 4, "seed": 0, "samples": 100000, "mode": "offline"}}
"""

import hashlib
import json
import math

import numpy as np
from scipy import integrate

from polarquant import distribution
from polarquant.errors import CodebookValidationError, FormatError, InvalidArgument
from polarquant.structures import CodebookMode
from polarquant.tensor_io import new_generator

CODEBOOK_FORMAT = 'polarquant-codebooks'
CODEBOOK_VERSION = 1
DEFAULT_MAX_ITERS = 100
INTERVAL_POINTS = 129


class KMeansInit:
    PLUS_PLUS = "kmeans++"
    # quantiles of pdf^(1/3), the asymptotically optimal point density
    COMPANDER = "compander"

    @staticmethod
    def validate(init):
        if init not in (KMeansInit.PLUS_PLUS, KMeansInit.COMPANDER):
            raise InvalidArgument('Invalid k-means initialization passed in: %s' % init)
        return init


def bits_for_size(k):
    return max(1, int(math.ceil(math.log2(k)))) if k > 1 else 1


class BitWidthConfig(object):

    def __init__(self, per_level_bits=(4, 2, 2, 2), radius_bits=16):
        self.per_level_bits = [int(b) for b in per_level_bits]
        self.radius_bits = int(radius_bits)
        if not self.per_level_bits:
            raise InvalidArgument('At least one level is required')
        if any(b < 1 for b in self.per_level_bits):
            raise InvalidArgument('Every level needs at least one bit, got %s' % self.per_level_bits)
        if self.radius_bits < 1:
            raise InvalidArgument('Radius bits must be positive, got %s' % self.radius_bits)

    @property
    def levels(self):
        return len(self.per_level_bits)

    @property
    def max_bits(self):
        return max(self.per_level_bits)

    def __eq__(self, other):
        return (isinstance(other, BitWidthConfig) and self.per_level_bits == other.per_level_bits and
                self.radius_bits == other.radius_bits)

    def __ne__(self, other):
        return not self.__eq__(other)

    @staticmethod
    def parse_bits(text):
        try:
            return [int(x) for x in text.split(',') if x.strip() != '']
        except ValueError:
            raise InvalidArgument('Bit widths must be a comma separated list of integers, got %s' % text)

    def to_dict(self):
        response = dict()
        response['per_level_bits'] = list(self.per_level_bits)
        response['radius_bits'] = self.radius_bits
        response['levels'] = self.levels
        return response

    @staticmethod
    def from_dict(data):
        return BitWidthConfig(data['per_level_bits'], data['radius_bits'])


class LevelCodebook(object):

    def __init__(self, level, centroids, bits=None):
        self.level = int(level)
        self.centroids = np.array(centroids, dtype=np.float64).reshape(-1)
        k = self.centroids.shape[0]
        if k < 1:
            raise InvalidArgument('Level %i codebook has no centroids' % self.level)
        self.bits = bits_for_size(k) if bits is None else int(bits)
        if k > 2 ** self.bits:
            raise InvalidArgument('Level %i codebook has %i centroids, more than %i bits index' % (
                self.level, k, self.bits))
        if not np.all(np.isfinite(self.centroids)):
            raise InvalidArgument('Level %i codebook has non-finite centroids' % self.level)
        if k > 1 and not np.all(np.diff(self.centroids) > 0):
            raise InvalidArgument('Level %i centroids are not strictly increasing' % self.level)
        lo, hi = distribution.angle_support(self.level)
        if self.centroids[0] < lo or self.centroids[-1] > hi:
            raise InvalidArgument('Level %i centroids fall outside [%s, %s]' % (self.level, lo, hi))
        self.boundaries = 0.5 * (self.centroids[:-1] + self.centroids[1:])

    @property
    def size(self):
        return self.centroids.shape[0]

    def quantize(self, angles):
        """
        Index of the nearest centroid; an angle on a boundary goes to the lower index
        """
        return np.searchsorted(self.boundaries, angles, side='left')

    def lookup(self, indices):
        indices = np.asarray(indices)
        if indices.size and (indices.min() < 0 or indices.max() >= self.size):
            raise FormatError('Level %i index out of range for %i centroids' % (self.level, self.size))
        return self.centroids[indices]

    def to_dict(self):
        response = dict()
        response['level'] = self.level
        response['bits'] = self.bits
        response['centroids'] = [float(c) for c in self.centroids]
        return response


class CodebookSet(object):

    def __init__(self, levels, meta=None):
        self.levels = list(levels)
        if not self.levels:
            raise InvalidArgument('A codebook set needs at least one level')
        for expected, cb in enumerate(self.levels, start=1):
            if cb.level != expected:
                raise InvalidArgument('Codebook levels must be 1..L in order, found level %i at position %i' % (
                    cb.level, expected))
        self.meta = dict(meta) if meta else {}

    @property
    def num_levels(self):
        return len(self.levels)

    @property
    def level_bits(self):
        return [cb.bits for cb in self.levels]

    @property
    def level_sizes(self):
        return [cb.size for cb in self.levels]

    def bit_config(self, radius_bits=16):
        return BitWidthConfig(self.level_bits, radius_bits)

    def check_fits(self, bit_config):
        if bit_config.levels != self.num_levels:
            raise InvalidArgument('Codebook set has %i levels, configuration has %i' % (
                self.num_levels, bit_config.levels))
        for cb, bits in zip(self.levels, bit_config.per_level_bits):
            if cb.size > 2 ** bits:
                raise InvalidArgument('Level %i codebook has %i centroids, configuration allows %i bits' % (
                    cb.level, cb.size, bits))

    def storage_bits(self, bits_per_centroid):
        return sum(cb.size for cb in self.levels) * bits_per_centroid

    def codebook_hash(self):
        """First 8 bytes of the sha256 of the canonical JSON of the levels"""
        canonical = json.dumps([cb.to_dict() for cb in self.levels], sort_keys=True)
        return hashlib.sha256(canonical.encode('utf-8')).digest()[:8]

    def __eq__(self, other):
        if not isinstance(other, CodebookSet) or other.num_levels != self.num_levels:
            return False
        for a, b in zip(self.levels, other.levels):
            if a.bits != b.bits or not np.array_equal(a.centroids, b.centroids):
                return False
        return True

    def __ne__(self, other):
        return not self.__eq__(other)

    def to_dict(self):
        response = dict()
        response['format'] = CODEBOOK_FORMAT
        response['version'] = CODEBOOK_VERSION
        response['levels'] = [cb.to_dict() for cb in self.levels]
        meta = dict(self.meta)
        meta['L'] = self.num_levels
        response['meta'] = meta
        return response


class KMeans1D(object):
    """
    Lloyd iterations in one dimension: sorted centroids, midpoint boundaries, assignment by binary search.
    Stops once assignments repeat or after max_iters.  An empty cluster is reseeded at the sample farthest
    from its centroid among values not already used as centroids.
    """

    def __init__(self, k, seed=0, max_iters=DEFAULT_MAX_ITERS, init=KMeansInit.PLUS_PLUS, level=1, n_init=1):
        if int(k) != k or k < 1:
            raise InvalidArgument('k must be a positive integer, got %s' % k)
        if int(max_iters) != max_iters or max_iters < 1:
            raise InvalidArgument('max_iters must be a positive integer, got %s' % max_iters)
        if int(n_init) != n_init or n_init < 1:
            raise InvalidArgument('n_init must be a positive integer, got %s' % n_init)
        self.k = int(k)
        self.seed = seed
        self.max_iters = int(max_iters)
        self.init = KMeansInit.validate(init)
        self.level = level
        self.n_init = int(n_init)
        self.centroids_ = None
        self.cost_history_ = []
        self.n_iter_ = 0
        self.converged_ = False

    def check_samples(self, samples):
        x = np.asarray(samples, dtype=np.float64).reshape(-1)
        if np.any(np.isnan(x)):
            raise InvalidArgument('Samples contain NaN')
        if not np.all(np.isfinite(x)):
            raise InvalidArgument('Samples contain infinite values')
        if x.shape[0] < self.k:
            raise InvalidArgument('Need at least k=%i samples, got %i' % (self.k, x.shape[0]))
        distinct = np.unique(x).shape[0]
        if distinct < self.k:
            raise InvalidArgument('Need at least k=%i distinct sample values, got %i' % (self.k, distinct))
        return x

    def _init_plus_plus(self, x, rng):
        centroids = [x[rng.integers(x.shape[0])]]
        d2 = (x - centroids[0]) ** 2
        for _ in range(1, self.k):
            cumulative = np.cumsum(d2)
            target = rng.random() * cumulative[-1]
            idx = min(int(np.searchsorted(cumulative, target, side='right')), x.shape[0] - 1)
            centroids.append(x[idx])
            d2 = np.minimum(d2, (x - x[idx]) ** 2)
        return np.sort(np.array(centroids))

    def _init_compander(self, x):
        grid = distribution.quadrature_grid(self.level, 4097)
        weights = np.cbrt(distribution.angle_pdf(self.level, grid))
        cumulative = integrate.cumulative_trapezoid(weights, grid, initial=0.0)
        targets = (np.arange(self.k) + 0.5) / self.k * cumulative[-1]
        centroids = np.interp(targets, cumulative, grid)
        return self._make_distinct(x, np.sort(centroids))

    @staticmethod
    def _make_distinct(x, centroids):
        # snapping can only collide when k approaches the grid size; spread by sample order instead
        if centroids.shape[0] > 1 and not np.all(np.diff(centroids) > 0):
            values = np.unique(x)
            picks = np.linspace(0, values.shape[0] - 1, centroids.shape[0]).round().astype(int)
            centroids = values[picks]
        return centroids

    @staticmethod
    def _cost(x, centroids):
        assign = np.searchsorted(0.5 * (centroids[:-1] + centroids[1:]), x, side='left')
        return float(np.mean((x - centroids[assign]) ** 2))

    def _lloyd(self, x, centroids):
        history = []
        previous = None
        converged = False
        iterations = 0
        for iterations in range(1, self.max_iters + 1):
            boundaries = 0.5 * (centroids[:-1] + centroids[1:])
            assign = np.searchsorted(boundaries, x, side='left')
            cost = float(np.mean((x - centroids[assign]) ** 2))
            if history:
                assert cost <= history[-1] * (1.0 + 1e-12) + 1e-300, 'Lloyd cost increased'
            history.append(cost)
            if previous is not None and np.array_equal(assign, previous):
                converged = True
                break
            counts = np.bincount(assign, minlength=self.k)
            sums = np.bincount(assign, weights=x, minlength=self.k)
            updated = centroids.copy()
            filled = counts > 0
            updated[filled] = sums[filled] / counts[filled]
            empty = np.flatnonzero(~filled)
            if empty.size:
                distance = np.abs(x - centroids[assign])
                for j in empty:
                    distance[np.isin(x, updated)] = -1.0
                    far = int(np.argmax(distance))
                    updated[j] = x[far]
            centroids = np.sort(updated)
            previous = assign
        return centroids, history, iterations, converged

    def fit(self, samples):
        x = self.check_samples(samples)
        best = None
        rng = new_generator(self.seed)
        for _ in range(self.n_init):
            if self.init == KMeansInit.PLUS_PLUS:
                start = self._init_plus_plus(x, rng)
            else:
                start = self._init_compander(x)
            run = self._lloyd(x, start)
            final_cost = self._cost(x, run[0])
            if best is None or final_cost < best[0]:
                best = (final_cost, run)
            if self.init == KMeansInit.COMPANDER:
                # deterministic start, restarts would repeat it
                break
        self.centroids_, self.cost_history_, self.n_iter_, self.converged_ = best[1]
        self.final_cost_ = best[0]
        return self

    def cost_is_monotone(self):
        h = self.cost_history_
        return all(b <= a * (1.0 + 1e-12) for a, b in zip(h[:-1], h[1:]))

    def codebook(self, bits=None):
        return LevelCodebook(self.level, self.centroids_, bits)


def kmeans_1d(samples, k, seed=0, max_iters=DEFAULT_MAX_ITERS, level=1, init=KMeansInit.PLUS_PLUS, n_init=1,
              bits=None):
    """
    Fit a k-centroid codebook for the given level to 1-D samples

    :param samples: real sample values inside the level's support
    :param k: number of centroids
    :param seed: integer or SeedSequence for the k-means++ draws
    :param max_iters: cap on Lloyd iterations
    :param level: angle level the codebook belongs to
    :param init: KMeansInit.PLUS_PLUS or KMeansInit.COMPANDER
    :param n_init: restarts, the lowest final cost wins
    """
    return KMeans1D(k, seed, max_iters, init, level, n_init).fit(samples).codebook(bits)


def _child_seeds(seed, count):
    return np.random.SeedSequence(seed).spawn(count)


def build_online(angles_per_level, config, seed, max_iters=DEFAULT_MAX_ITERS):
    """
    Cluster observed angles, one sample vector per level, with k = 2^b for each level.  A level with fewer
    distinct angles than 2^b gets one centroid per distinct angle and keeps its configured bit width.
    """
    angles_per_level = list(angles_per_level)
    if len(angles_per_level) != config.levels:
        raise InvalidArgument('Got angles for %i levels, configuration has %i' % (
            len(angles_per_level), config.levels))
    seeds = _child_seeds(seed, config.levels)
    levels = []
    for level, (samples, bits, child) in enumerate(zip(angles_per_level, config.per_level_bits, seeds), start=1):
        samples = np.asarray(samples).reshape(-1)
        if samples.shape[0] == 0:
            raise InvalidArgument('No angle samples for level %i' % level)
        k = min(2 ** bits, np.unique(samples).shape[0])
        levels.append(kmeans_1d(samples, k, child, max_iters, level=level, bits=bits))
    meta = {'mode': CodebookMode.ONLINE, 'seed': seed, 'samples': [int(np.size(a)) for a in angles_per_level]}
    return CodebookSet(levels, meta)


def build_from_sizes(sizes, samples_per_level, seed, max_iters=DEFAULT_MAX_ITERS, bits=None):
    """
    Offline codebooks with explicit centroid counts per level, fitted on analytic angle samples.
    Seeding uses the companding quantiles, so the result is close to the optimal quantizer before iterating.
    """
    sizes = [int(k) for k in sizes]
    if bits is None:
        bits = [bits_for_size(k) for k in sizes]
    if int(samples_per_level) != samples_per_level or samples_per_level < max(sizes):
        raise InvalidArgument('samples_per_level=%s is below the largest codebook size %i' % (
            samples_per_level, max(sizes)))
    seeds = _child_seeds(seed, len(sizes))
    levels = []
    for level, (k, b, child) in enumerate(zip(sizes, bits, seeds), start=1):
        samples = distribution.sample_angles(level, int(samples_per_level), child)
        levels.append(kmeans_1d(samples, k, child, max_iters, level=level, init=KMeansInit.COMPANDER, bits=b))
    meta = {'mode': CodebookMode.OFFLINE, 'seed': seed, 'samples': int(samples_per_level)}
    return CodebookSet(levels, meta)


def build_offline(config, samples_per_level, seed, max_iters=DEFAULT_MAX_ITERS):
    if samples_per_level < 2 ** config.max_bits:
        raise InvalidArgument('samples_per_level=%s is below 2^%i' % (samples_per_level, config.max_bits))
    sizes = [2 ** b for b in config.per_level_bits]
    return build_from_sizes(sizes, samples_per_level, seed, max_iters, bits=config.per_level_bits)


def uniform_codebook(level, k, bits=None):
    """Equally spaced cell midpoints over the level's support"""
    if int(k) != k or k < 1:
        raise InvalidArgument('k must be a positive integer, got %s' % k)
    lo, hi = distribution.angle_support(level)
    width = (hi - lo) / k
    return LevelCodebook(level, lo + (np.arange(k) + 0.5) * width, bits)


def expected_quant_error(cb):
    """
    E[(psi - nearest centroid)^2] under the analytic level density, by Simpson's rule on every cell
    """
    lo, hi = distribution.angle_support(cb.level)
    edges = np.concatenate([[lo], cb.boundaries, [hi]])
    fractions = np.linspace(0.0, 1.0, INTERVAL_POINTS)
    grid = edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * fractions[None, :]
    density = distribution.angle_pdf(cb.level, np.minimum(grid, np.nextafter(hi, lo)) if cb.level == 1 else grid)
    integrand = (grid - cb.centroids[:, None]) ** 2 * density
    return float(np.sum(integrate.simpson(integrand, x=grid, axis=1)))


def save_codebooks(cs, path):
    with open(path, 'w') as f:
        f.write(json.dumps(cs.to_dict(), indent=2))


def codebooks_from_dict(data):
    try:
        if data.get('format') != CODEBOOK_FORMAT:
            raise FormatError('Not a polarquant codebook file')
        if data.get('version') != CODEBOOK_VERSION:
            raise FormatError('Unsupported codebook file version %s' % data.get('version'))
        raw_levels = data['levels']
        meta = data.get('meta', {})
        declared = meta.get('L', len(raw_levels))
        if declared != len(raw_levels):
            raise FormatError('Codebook file declares %s levels but holds %i' % (declared, len(raw_levels)))
        numbers = [int(entry['level']) for entry in raw_levels]
        if numbers != list(range(1, len(raw_levels) + 1)):
            raise FormatError('Codebook file levels %s are not 1..L' % numbers)
        entries = [(int(e['level']), [float(c) for c in e['centroids']], int(e['bits'])) for e in raw_levels]
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise FormatError('Malformed codebook file: %s' % exc)
    levels = []
    for level, centroids, bits in entries:
        try:
            levels.append(LevelCodebook(level, centroids, bits))
        except InvalidArgument as exc:
            raise CodebookValidationError(str(exc))
    return CodebookSet(levels, {k: v for k, v in meta.items() if k != 'L'})


def load_codebooks(path):
    with open(path) as f:
        text = f.read()
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise FormatError('Codebook file <%s> is not valid JSON: %s' % (path, exc))
    return codebooks_from_dict(data)
