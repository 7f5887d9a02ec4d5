"""
Encode and decode of embeddings: rotate, polar transform, per-level nearest-centroid indices, bit packing.

Packed index layout: levels in order 1..L, each level's indices in order, index j of a level with b bits at bit
offset j*b of that level's stream.  The level streams are concatenated without padding, bits fill each byte from
the least significant bit upward and only the final byte is zero padded.

Quantized file layout (little-endian):

    magic       4 bytes b'PQNT'
    version     u32
    d, L, n     u32 x 3
    bits        u32 x L
    precision   u32     0 = f16, 1 = f32, 2 = f64 radii
    rot. seed   u64
    rotated     u32     0 when stored without preconditioning
    cb hash     8 bytes
    n records of (d / 2^L radii at the stored precision, packed indices)
"""

import struct
from fractions import Fraction

import numpy as np

from polarquant import polar
from polarquant.codebook import BitWidthConfig
from polarquant.errors import FormatError, InvalidArgument
from polarquant.precondition.rotation import RotationMatrix, build_rotation
from polarquant.structures import AppendMode, CodebookMode, RadiusPrecision

QUANTIZED_MAGIC = b'PQNT'
QUANTIZED_VERSION = 1
_PREAMBLE = struct.Struct('<4sIIII')
_BITS = struct.Struct('<I')
_TRAILER = struct.Struct('<IQI8s')


class QuantizerConfig(object):

    def __init__(self, bit_config=None, rotation_seed=0, radius_precision=RadiusPrecision.F16,
                 codebook_mode=CodebookMode.ONLINE, precondition=True, append_mode=AppendMode.FP_TAIL,
                 offline_samples=100000):
        self.radius_precision = RadiusPrecision.validate(radius_precision)
        if bit_config is None:
            bit_config = BitWidthConfig(radius_bits=RadiusPrecision.bits(radius_precision))
        if bit_config.radius_bits != RadiusPrecision.bits(radius_precision):
            raise InvalidArgument('Radius bits %i do not match radius precision %s' % (
                bit_config.radius_bits, radius_precision))
        if int(rotation_seed) != rotation_seed or rotation_seed < 0 or rotation_seed >= 2 ** 64:
            raise InvalidArgument('Rotation seed must be an unsigned 64 bit integer, got %s' % rotation_seed)
        if codebook_mode == CodebookMode.OFFLINE and (int(offline_samples) != offline_samples or
                                                      offline_samples < 2 ** bit_config.max_bits):
            raise InvalidArgument('offline_samples=%s is below 2^%i' % (offline_samples, bit_config.max_bits))
        self.bit_config = bit_config
        self.rotation_seed = int(rotation_seed)
        self.codebook_mode = CodebookMode.validate(codebook_mode)
        self.precondition = bool(precondition)
        self.append_mode = AppendMode.validate(append_mode)
        self.offline_samples = int(offline_samples)

    @property
    def levels(self):
        return self.bit_config.levels

    @property
    def radius_dtype(self):
        return RadiusPrecision.numpy_dtype(self.radius_precision)

    def make_rotation(self, d):
        if self.precondition:
            return build_rotation(d, self.rotation_seed)
        return RotationMatrix.identity(d)

    def to_dict(self):
        response = dict()
        response['bit_config'] = self.bit_config.to_dict()
        response['rotation_seed'] = self.rotation_seed
        response['radius_precision'] = self.radius_precision
        response['codebook_mode'] = self.codebook_mode
        response['precondition'] = self.precondition
        response['append_mode'] = self.append_mode
        response['offline_samples'] = self.offline_samples
        return response


class QuantizedEmbedding(object):

    def __init__(self, dim, levels, radii, packed_indices, bit_config):
        self.dim = dim
        self.levels = levels
        self.radii = radii
        self.packed_indices = bytes(packed_indices)
        self.bit_config = bit_config

    @property
    def num_bits(self):
        return 8 * (self.radii.nbytes + len(self.packed_indices))

    def to_bytes(self):
        return np.ascontiguousarray(self.radii).tobytes() + self.packed_indices


def index_bits(d, bit_config):
    return sum(n * b for n, b in zip(polar.level_lengths(d, bit_config.levels), bit_config.per_level_bits))


def packed_length(d, bit_config):
    return (index_bits(d, bit_config) + 7) // 8


def radius_count(d, levels):
    polar.check_levels(d, levels)
    return d >> levels


def record_length(d, bit_config):
    return radius_count(d, bit_config.levels) * bit_config.radius_bits // 8 + packed_length(d, bit_config)


def bits_per_coordinate(bit_config):
    """
    Exact stored bits per coordinate: radius_bits / 2^L + sum of b_l / 2^l; independent of d
    """
    total = Fraction(bit_config.radius_bits, 2 ** bit_config.levels)
    for level, bits in enumerate(bit_config.per_level_bits, start=1):
        total += Fraction(bits, 2 ** level)
    return total


def formula_ratio(d, bits, radius_bits=16):
    """d * b_FPN / (b_FPN + (d - 1) b), the saving of a fully recursed uniform-width encoding"""
    return Fraction(d * radius_bits, radius_bits + (d - 1) * bits)


def _as_bit_config(bit_config):
    if isinstance(bit_config, BitWidthConfig):
        return bit_config
    return BitWidthConfig(bit_config)


def quant_indices(angles, cs):
    """
    Nearest-centroid indices per level, ties to the lower index

    :param angles: list of per-level angle arrays (vectors or row matrices)
    :param cs: CodebookSet with one codebook per level
    """
    angles = list(angles)
    if len(angles) != cs.num_levels:
        raise InvalidArgument('Got %i angle levels, codebook set has %i' % (len(angles), cs.num_levels))
    return [cb.quantize(np.asarray(a, dtype=np.float64)) for cb, a in zip(cs.levels, angles)]


def dequant_angles(indices, cs):
    if len(indices) != cs.num_levels:
        raise InvalidArgument('Got %i index levels, codebook set has %i' % (len(indices), cs.num_levels))
    return [cb.lookup(idx) for cb, idx in zip(cs.levels, indices)]


def pack_rows(indices, widths):
    """
    Pack per-level (n, len_l) index matrices into an (n, bytes) uint8 matrix
    """
    streams = []
    for level, (idx, bits) in enumerate(zip(indices, widths), start=1):
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= 2 ** bits):
            raise InvalidArgument('Level %i index out of range for %i bits' % (level, bits))
        shifts = np.arange(bits, dtype=np.int64)
        level_bits = (idx[:, :, None] >> shifts) & 1
        streams.append(level_bits.reshape(idx.shape[0], -1).astype(np.uint8))
    return np.packbits(np.concatenate(streams, axis=1), axis=1, bitorder='little')


def unpack_rows(packed, d, widths):
    packed = np.asarray(packed, dtype=np.uint8)
    lengths = polar.level_lengths(d, len(widths))
    stream = np.unpackbits(packed, axis=1, bitorder='little')
    indices = []
    offset = 0
    for n, bits in zip(lengths, widths):
        level_bits = stream[:, offset:offset + n * bits].reshape(packed.shape[0], n, bits).astype(np.int64)
        indices.append(level_bits @ (np.int64(1) << np.arange(bits, dtype=np.int64)))
        offset += n * bits
    return indices


def pack_indices(indices, bit_config):
    bit_config = _as_bit_config(bit_config)
    if len(indices) != bit_config.levels:
        raise InvalidArgument('Got %i index levels, configuration has %i' % (len(indices), bit_config.levels))
    rows = [np.asarray(idx).reshape(1, -1) for idx in indices]
    return pack_rows(rows, bit_config.per_level_bits)[0].tobytes()


def unpack_indices(buffer, d, bit_config):
    bit_config = _as_bit_config(bit_config)
    expected = packed_length(d, bit_config)
    if len(buffer) != expected:
        raise FormatError('Packed buffer is %i bytes, expected %i' % (len(buffer), expected))
    packed = np.frombuffer(bytes(buffer), dtype=np.uint8).reshape(1, -1)
    return [idx[0] for idx in unpack_rows(packed, d, bit_config.per_level_bits)]


class PolarQuantizer(object):
    """
    Binds a rotation, a codebook set and a configuration; encode and decode are pure given these three
    """

    def __init__(self, rotation, codebooks, config):
        codebooks.check_fits(config.bit_config)
        self.rotation = rotation
        self.codebooks = codebooks
        self.config = config
        self.d = rotation.dim
        polar.check_levels(self.d, config.levels)

    def _check_rows(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.d:
            raise InvalidArgument('Expected rows of length %i, got shape %s' % (self.d, x.shape))
        if not np.all(np.isfinite(x)):
            raise InvalidArgument('Input contains NaN or infinite values')
        return x

    def encode_rows(self, x):
        """Returns (radii at the stored precision, packed index bytes) for an (n, d) matrix"""
        x = self._check_rows(x)
        radii, angles = polar.polar_rows(self.rotation.apply(x), self.config.levels)
        stored = radii.astype(self.config.radius_dtype)
        if not np.all(np.isfinite(stored)):
            raise InvalidArgument('A radius overflows the %s range' % self.config.radius_precision)
        packed = pack_rows(quant_indices(angles, self.codebooks), self.config.bit_config.per_level_bits)
        return stored, packed

    def decode_rows(self, radii, packed):
        if packed.shape[1] != packed_length(self.d, self.config.bit_config):
            raise FormatError('Packed rows are %i bytes, expected %i' % (
                packed.shape[1], packed_length(self.d, self.config.bit_config)))
        if radii.shape[1] != radius_count(self.d, self.config.levels):
            raise FormatError('Got %i radii per row, expected %i' % (
                radii.shape[1], radius_count(self.d, self.config.levels)))
        indices = unpack_rows(packed, self.d, self.config.bit_config.per_level_bits)
        angles = dequant_angles(indices, self.codebooks)
        rotated = polar.cartesian_rows(np.asarray(radii, dtype=np.float64), angles)
        return self.rotation.apply_inverse(rotated)

    def encode_batch(self, x):
        stored, packed = self.encode_rows(x)
        return [
            QuantizedEmbedding(self.d, self.config.levels, stored[i], packed[i].tobytes(), self.config.bit_config)
            for i in range(stored.shape[0])
        ]

    def decode_batch(self, entries):
        entries = list(entries)
        if not entries:
            return np.zeros((0, self.d))
        for qe in entries:
            if qe.dim != self.d or qe.levels != self.config.levels:
                raise FormatError('Quantized entry shape (d=%i, L=%i) does not match (d=%i, L=%i)' % (
                    qe.dim, qe.levels, self.d, self.config.levels))
            if len(qe.packed_indices) != packed_length(self.d, self.config.bit_config):
                raise FormatError('Quantized entry holds %i index bytes, expected %i' % (
                    len(qe.packed_indices), packed_length(self.d, self.config.bit_config)))
        radii = np.stack([qe.radii for qe in entries])
        packed = np.stack([np.frombuffer(qe.packed_indices, dtype=np.uint8) for qe in entries])
        return self.decode_rows(radii, packed)


def encode(x, rotation, cs, config):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgument('encode expects a vector, got shape %s' % (x.shape,))
    return PolarQuantizer(rotation, cs, config).encode_batch(x.reshape(1, -1))[0]


def decode(qe, rotation, cs, config=None):
    if config is None:
        config = QuantizerConfig(qe.bit_config, radius_precision=RadiusPrecision.from_bits(qe.bit_config.radius_bits))
    return PolarQuantizer(rotation, cs, config).decode_batch([qe])[0]


def encode_batch(x, rotation, cs, config):
    return PolarQuantizer(rotation, cs, config).encode_batch(x)


def decode_batch(entries, rotation, cs, config):
    return PolarQuantizer(rotation, cs, config).decode_batch(entries)


class QuantizedFileHeader(object):

    def __init__(self, d, bit_config, n, radius_precision, rotation_seed, precondition, codebook_hash):
        self.d = d
        self.bit_config = bit_config
        self.n = n
        self.radius_precision = radius_precision
        self.rotation_seed = rotation_seed
        self.precondition = precondition
        self.codebook_hash = codebook_hash

    @staticmethod
    def for_config(d, n, config, codebooks):
        return QuantizedFileHeader(d, config.bit_config, n, config.radius_precision, config.rotation_seed,
                                   config.precondition, codebooks.codebook_hash())

    @property
    def record_length(self):
        return record_length(self.d, self.bit_config)

    def config(self, codebook_mode=CodebookMode.ONLINE, append_mode=AppendMode.FP_TAIL):
        return QuantizerConfig(self.bit_config, self.rotation_seed, self.radius_precision, codebook_mode,
                               self.precondition, append_mode, max(100000, 2 ** self.bit_config.max_bits))

    def to_bytes(self):
        out = _PREAMBLE.pack(QUANTIZED_MAGIC, QUANTIZED_VERSION, self.d, self.bit_config.levels, self.n)
        for bits in self.bit_config.per_level_bits:
            out += _BITS.pack(bits)
        out += _TRAILER.pack(RadiusPrecision.to_code(self.radius_precision), self.rotation_seed,
                             1 if self.precondition else 0, self.codebook_hash)
        return out

    @staticmethod
    def from_bytes(raw, offset=0):
        """Returns (header, offset just past the header)"""
        if len(raw) < offset + _PREAMBLE.size:
            raise FormatError('Quantized data too short for a header')
        magic, version, d, levels, n = _PREAMBLE.unpack_from(raw, offset)
        if magic != QUANTIZED_MAGIC:
            raise FormatError('Wrong quantized magic %r' % magic)
        if version != QUANTIZED_VERSION:
            raise FormatError('Unsupported quantized version %i' % version)
        offset += _PREAMBLE.size
        if len(raw) < offset + levels * _BITS.size + _TRAILER.size:
            raise FormatError('Quantized header is truncated')
        bits = [_BITS.unpack_from(raw, offset + i * _BITS.size)[0] for i in range(levels)]
        offset += levels * _BITS.size
        precision_code, seed, rotated, codebook_hash = _TRAILER.unpack_from(raw, offset)
        offset += _TRAILER.size
        try:
            precision = RadiusPrecision.from_code(precision_code)
            bit_config = BitWidthConfig(bits, RadiusPrecision.bits(precision))
            polar.check_levels(d, levels)
        except InvalidArgument as exc:
            raise FormatError('Invalid quantized header: %s' % exc)
        return QuantizedFileHeader(d, bit_config, n, precision, seed, bool(rotated), codebook_hash), offset


def records_to_bytes(entries):
    return b''.join(qe.to_bytes() for qe in entries)


def records_from_bytes(raw, offset, count, header):
    """Parses count records starting at offset, returns (entries, offset past them)"""
    dtype = RadiusPrecision.numpy_dtype(header.radius_precision)
    n_radii = radius_count(header.d, header.bit_config.levels)
    n_packed = packed_length(header.d, header.bit_config)
    length = header.record_length
    if len(raw) < offset + count * length:
        raise FormatError('Quantized data holds fewer than %i records' % count)
    entries = []
    for _ in range(count):
        radii = np.frombuffer(raw, dtype=dtype, count=n_radii, offset=offset).copy()
        packed = raw[offset + n_radii * dtype.itemsize:offset + length]
        if len(packed) != n_packed:
            raise FormatError('Quantized record is truncated')
        entries.append(QuantizedEmbedding(header.d, header.bit_config.levels, radii, packed, header.bit_config))
        offset += length
    return entries, offset


def save_quantized(path, entries, config, codebooks, d):
    entries = list(entries)
    header = QuantizedFileHeader.for_config(d, len(entries), config, codebooks)
    with open(path, 'wb') as f:
        f.write(header.to_bytes())
        f.write(records_to_bytes(entries))


def load_quantized(path):
    """Returns (header, entries)"""
    with open(path, 'rb') as f:
        raw = f.read()
    header, offset = QuantizedFileHeader.from_bytes(raw)
    entries, offset = records_from_bytes(raw, offset, header.n, header)
    if offset != len(raw):
        raise FormatError('Quantized file <%s> has %i trailing bytes' % (path, len(raw) - offset))
    return header, entries
