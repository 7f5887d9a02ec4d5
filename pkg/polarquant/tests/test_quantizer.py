import os
import tempfile
import unittest
from fractions import Fraction

import numpy as np

from polarquant import polar, quantizer
from polarquant.codebook import BitWidthConfig, CodebookSet, LevelCodebook, build_offline, build_online
from polarquant.errors import FormatError, InvalidArgument
from polarquant.precondition.rotation import RotationMatrix, build_rotation
from polarquant.quantizer import (
    PolarQuantizer, QuantizedFileHeader, QuantizerConfig, bits_per_coordinate, formula_ratio, load_quantized,
    pack_indices, save_quantized, unpack_indices
)
from polarquant.structures import CodebookMode, RadiusPrecision
from polarquant.tensor_io import new_generator


def online_codebooks(x, config):
    rotated = config.make_rotation(x.shape[1]).apply(x)
    return build_online(polar.polar_rows(rotated, config.levels)[1], config.bit_config, 0)


def relative_errors(x, y):
    return np.linalg.norm(x - y, axis=1) / np.linalg.norm(x, axis=1)


class TestQuantizerConfig(unittest.TestCase):

    def test_defaults(self):
        config = QuantizerConfig()
        self.assertEqual(config.bit_config, BitWidthConfig())
        self.assertEqual(config.levels, 4)
        self.assertEqual(config.radius_dtype, np.float16)
        response = config.to_dict()
        self.assertEqual(response['radius_precision'], 'f16')
        self.assertEqual(response['codebook_mode'], 'online')
        self.assertEqual(response['append_mode'], 'fp_tail')
        self.assertTrue(response['precondition'])

    def test_rotation(self):
        self.assertTrue(np.array_equal(QuantizerConfig(rotation_seed=3).make_rotation(8).entries,
                                       build_rotation(8, 3).entries))
        self.assertTrue(np.array_equal(QuantizerConfig(precondition=False).make_rotation(8).entries, np.eye(8)))

    def test_invalid(self):
        with self.assertRaises(InvalidArgument):
            QuantizerConfig(BitWidthConfig(radius_bits=16), radius_precision=RadiusPrecision.F32)
        with self.assertRaises(InvalidArgument):
            QuantizerConfig(rotation_seed=-1)
        with self.assertRaises(InvalidArgument):
            QuantizerConfig(rotation_seed=2 ** 64)
        with self.assertRaises(InvalidArgument):
            QuantizerConfig(codebook_mode=CodebookMode.OFFLINE, offline_samples=8)
        with self.assertRaises(InvalidArgument):
            QuantizerConfig(radius_precision='f8')
        with self.assertRaises(InvalidArgument):
            QuantizerConfig(codebook_mode='sometimes')
        with self.assertRaises(InvalidArgument):
            QuantizerConfig(append_mode='drop')


class TestSizes(unittest.TestCase):

    def test_record_length(self):
        config = BitWidthConfig()
        self.assertEqual(quantizer.radius_count(128, 4), 8)
        self.assertEqual(quantizer.index_bits(128, config), 368)
        self.assertEqual(quantizer.packed_length(128, config), 46)
        self.assertEqual(quantizer.record_length(128, config), 62)
        self.assertEqual(quantizer.record_length(128, BitWidthConfig(radius_bits=32)), 78)

    def test_bits_per_coordinate(self):
        self.assertEqual(bits_per_coordinate(BitWidthConfig()), Fraction(31, 8))
        self.assertEqual(float(bits_per_coordinate(BitWidthConfig())), 3.875)
        full = BitWidthConfig([3] * 7)
        self.assertEqual(bits_per_coordinate(full), Fraction(397, 128))
        self.assertEqual(formula_ratio(128, 3), Fraction(16, 1) / bits_per_coordinate(full))
        self.assertEqual(bits_per_coordinate(BitWidthConfig([16], radius_bits=16)), Fraction(16))

    def test_record_matches_bits_per_coordinate(self):
        config = BitWidthConfig()
        self.assertEqual(8 * quantizer.record_length(128, config), bits_per_coordinate(config) * 128)


class TestPacking(unittest.TestCase):

    def test_four_bit_layout(self):
        packed = pack_indices([np.array([0xA, 0x3])], BitWidthConfig([4]))
        self.assertEqual(packed, b'\x3a')
        self.assertEqual([a.tolist() for a in unpack_indices(packed, 4, BitWidthConfig([4]))], [[0xA, 0x3]])

    def test_two_bit_layout(self):
        packed = pack_indices([np.array([1, 2, 3, 0])], BitWidthConfig([2]))
        self.assertEqual(packed, b'\x39')
        self.assertEqual(unpack_indices(packed, 8, BitWidthConfig([2]))[0].tolist(), [1, 2, 3, 0])

    def test_levels_are_concatenated(self):
        # 4 x 4 bits then 2 x 2 bits, the last byte zero padded
        config = BitWidthConfig([4, 2])
        packed = pack_indices([np.array([1, 2, 3, 4]), np.array([3, 1])], config)
        self.assertEqual(packed, b'\x21\x43\x07')
        indices = unpack_indices(packed, 8, config)
        self.assertEqual(indices[0].tolist(), [1, 2, 3, 4])
        self.assertEqual(indices[1].tolist(), [3, 1])

    def test_odd_widths(self):
        config = BitWidthConfig([3, 5, 1])
        rng = new_generator(0)
        indices = [rng.integers(0, 2 ** b, n) for b, n in zip(config.per_level_bits, polar.level_lengths(16, 3))]
        packed = pack_indices(indices, config)
        self.assertEqual(len(packed), quantizer.packed_length(16, config))
        for a, b in zip(indices, unpack_indices(packed, 16, config)):
            self.assertTrue(np.array_equal(a, b))

    def test_every_index_value_round_trips(self):
        for bits in [1, 2, 3, 4, 8]:
            values = 2 ** bits
            for power in range(1, 11):
                d = 2 ** power
                # every value appears at every position across the rows
                rows = [(np.arange(values)[:, None] + np.arange(n)[None, :]) % values
                        for n in polar.level_lengths(d, power)]
                single = quantizer.pack_rows(rows[:1], [bits])
                self.assertEqual(single.shape, (values, (d // 2 * bits + 7) // 8))
                self.assertTrue(np.array_equal(quantizer.unpack_rows(single, d, [bits])[0], rows[0]))
                packed = quantizer.pack_rows(rows, [bits] * power)
                self.assertEqual(packed.shape[1], quantizer.packed_length(d, BitWidthConfig([bits] * power)))
                for level, (expected, got) in enumerate(zip(rows, quantizer.unpack_rows(packed, d, [bits] * power))):
                    self.assertTrue(np.array_equal(expected, got), 'b=%i, d=%i, level %i' % (bits, d, level + 1))

    def test_invalid(self):
        with self.assertRaises(InvalidArgument):
            pack_indices([np.array([4, 0])], BitWidthConfig([2]))
        with self.assertRaises(InvalidArgument):
            pack_indices([np.array([-1, 0])], BitWidthConfig([2]))
        with self.assertRaises(InvalidArgument):
            pack_indices([np.array([1, 0])], BitWidthConfig([2, 2]))
        with self.assertRaises(FormatError):
            unpack_indices(b'\x00\x00', 8, BitWidthConfig([2]))


class TestQuantIndices(unittest.TestCase):

    def test_nearest_and_ties(self):
        cs = CodebookSet([LevelCodebook(1, [0.2, 0.8])])
        indices = quantizer.quant_indices([np.array([0.1, 0.5, 0.7, 3.0])], cs)
        self.assertEqual(indices[0].tolist(), [0, 0, 1, 1])
        self.assertTrue(np.allclose(quantizer.dequant_angles(indices, cs)[0], [0.2, 0.2, 0.8, 0.8]))

    def test_level_mismatch(self):
        cs = CodebookSet([LevelCodebook(1, [0.2, 0.8])])
        with self.assertRaises(InvalidArgument):
            quantizer.quant_indices([np.zeros(2), np.zeros(1)], cs)
        with self.assertRaises(InvalidArgument):
            quantizer.dequant_angles([np.zeros(2, dtype=int), np.zeros(1, dtype=int)], cs)


class TestPolarQuantizer(unittest.TestCase):

    def setUp(self):
        self.config = QuantizerConfig()
        self.x = new_generator(1).standard_normal((512, 128))
        self.codebooks = online_codebooks(self.x, self.config)
        self.rotation = self.config.make_rotation(128)
        self.q = PolarQuantizer(self.rotation, self.codebooks, self.config)

    def test_default_error(self):
        back = self.q.decode_batch(self.q.encode_batch(self.x))
        errors = relative_errors(self.x, back)
        self.assertLess(float(np.mean(errors)), 0.4)
        self.assertGreater(float(np.mean(errors)), 0.0)

    def test_record_size(self):
        qe = self.q.encode_batch(self.x[:1])[0]
        self.assertEqual(len(qe.to_bytes()), 62)
        self.assertEqual(qe.num_bits, 62 * 8)
        self.assertEqual(qe.radii.dtype, np.float16)
        self.assertEqual(qe.dim, 128)
        self.assertEqual(qe.levels, 4)

    def test_batch_matches_single(self):
        batch = self.q.encode_batch(self.x[:5])
        for row, qe in zip(self.x[:5], batch):
            single = quantizer.encode(row, self.rotation, self.codebooks, self.config)
            self.assertEqual(single.to_bytes(), qe.to_bytes())
        decoded = quantizer.decode_batch(batch, self.rotation, self.codebooks, self.config)
        self.assertTrue(np.array_equal(decoded[2], quantizer.decode(batch[2], self.rotation, self.codebooks)))

    def test_deterministic(self):
        first = self.q.decode_rows(*self.q.encode_rows(self.x[:10]))
        second = self.q.decode_rows(*self.q.encode_rows(self.x[:10]))
        self.assertTrue(np.array_equal(first, second))

    def test_zero_vector(self):
        qe = quantizer.encode(np.zeros(128), self.rotation, self.codebooks, self.config)
        self.assertTrue(np.array_equal(quantizer.decode(qe, self.rotation, self.codebooks), np.zeros(128)))

    def test_empty_batch(self):
        self.assertEqual(self.q.decode_batch([]).shape, (0, 128))

    def test_bad_input(self):
        with self.assertRaises(InvalidArgument):
            self.q.encode_rows(np.zeros((2, 64)))
        bad = self.x[:2].copy()
        bad[0, 3] = np.nan
        with self.assertRaises(InvalidArgument):
            self.q.encode_rows(bad)
        with self.assertRaises(InvalidArgument):
            quantizer.encode(self.x[:2], self.rotation, self.codebooks, self.config)
        with self.assertRaises(InvalidArgument):
            self.q.encode_rows(np.full((1, 128), 1e6))

    def test_mismatched_entry(self):
        qe = self.q.encode_batch(self.x[:1])[0]
        qe.packed_indices = qe.packed_indices[:-1]
        with self.assertRaises(FormatError):
            self.q.decode_batch([qe])

    def test_codebook_too_large(self):
        with self.assertRaises(InvalidArgument):
            PolarQuantizer(self.rotation, self.codebooks, QuantizerConfig(BitWidthConfig([3, 2, 2, 2])))

    def test_without_preconditioning(self):
        config = QuantizerConfig(precondition=False)
        codebooks = online_codebooks(self.x, config)
        q = PolarQuantizer(RotationMatrix.identity(128), codebooks, config)
        errors = relative_errors(self.x, q.decode_batch(q.encode_batch(self.x)))
        self.assertLess(float(np.mean(errors)), 0.4)


def mean_relative_sq_error(x, q):
    back = q.decode_batch(q.encode_batch(x))
    return float(np.sum((x - back) ** 2) / np.sum(x ** 2))


class TestQuantizerInvariants(unittest.TestCase):

    def setUp(self):
        self.x = new_generator(5).standard_normal((2000, 64))

    def offline_quantizer(self, bits, rotation_seed=0, radius_precision=RadiusPrecision.F16):
        bit_config = BitWidthConfig(bits, RadiusPrecision.bits(radius_precision))
        config = QuantizerConfig(bit_config, rotation_seed, radius_precision, CodebookMode.OFFLINE,
                                 offline_samples=20000)
        return PolarQuantizer(config.make_rotation(64), build_offline(bit_config, 20000, 0), config)

    def test_more_bits_never_hurt(self):
        base_bits = [3, 2, 2, 2]
        base = mean_relative_sq_error(self.x, self.offline_quantizer(base_bits))
        for level in range(4):
            bits = list(base_bits)
            bits[level] += 1
            grown = mean_relative_sq_error(self.x, self.offline_quantizer(bits))
            self.assertLessEqual(grown, 1.02 * base, 'level %i' % (level + 1))

    def test_error_independent_of_rotation_seed(self):
        errors = [mean_relative_sq_error(self.x, self.offline_quantizer([4, 2, 2, 2], seed)) for seed in [0, 1, 2]]
        for e in errors[1:]:
            self.assertAlmostEqual(e / errors[0], 1.0, delta=0.05)

    def test_requantizing_decoded_rows_is_stable(self):
        q = self.offline_quantizer([4, 2, 2, 2], 3, RadiusPrecision.F32)
        entries = q.encode_batch(self.x[:200])
        again = q.encode_batch(q.decode_batch(entries))
        self.assertEqual([e.packed_indices for e in entries], [e.packed_indices for e in again])
        self.assertTrue(all(np.array_equal(a.radii, b.radii) for a, b in zip(entries, again)))

    def test_indices_match_brute_force(self):
        q = self.offline_quantizer([4, 2, 2, 2], 2)
        x = self.x[:100]
        _, packed = q.encode_rows(x)
        angles = polar.polar_rows(q.rotation.apply(x), 4)[1]
        for cb, a, idx in zip(q.codebooks.levels, angles, quantizer.unpack_rows(packed, 64, [4, 2, 2, 2])):
            brute = np.argmin(np.abs(a[:, :, None] - cb.centroids[None, None, :]), axis=2)
            self.assertTrue(np.array_equal(brute, idx))


class TestLargeCodebooks(unittest.TestCase):

    def test_ten_bit_levels(self):
        config = QuantizerConfig(BitWidthConfig([10] * 4))
        codebooks = build_offline(config.bit_config, 100000, 0)
        x = new_generator(2).standard_normal((100, 16))
        q = PolarQuantizer(config.make_rotation(16), codebooks, config)
        errors = relative_errors(x, q.decode_batch(q.encode_batch(x)))
        self.assertLessEqual(float(np.mean(errors)), 1e-2)

    def test_f32_radii(self):
        config = QuantizerConfig(BitWidthConfig([10] * 4, radius_bits=32), radius_precision=RadiusPrecision.F32)
        codebooks = build_offline(config.bit_config, 100000, 1)
        x = new_generator(3).standard_normal((20, 16))
        q = PolarQuantizer(config.make_rotation(16), codebooks, config)
        entries = q.encode_batch(x)
        self.assertEqual(entries[0].radii.dtype, np.float32)
        self.assertLessEqual(float(np.mean(relative_errors(x, q.decode_batch(entries)))), 1e-2)


class TestQuantizedFile(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.config = QuantizerConfig(rotation_seed=5)
        self.x = new_generator(4).standard_normal((32, 64))
        self.codebooks = online_codebooks(self.x, self.config)
        self.q = PolarQuantizer(self.config.make_rotation(64), self.codebooks, self.config)
        self.entries = self.q.encode_batch(self.x)
        self.path = os.path.join(self.temp_dir, 'x.pq')
        save_quantized(self.path, self.entries, self.config, self.codebooks, 64)

    def test_round_trip(self):
        header, entries = load_quantized(self.path)
        self.assertEqual(header.d, 64)
        self.assertEqual(header.n, 32)
        self.assertEqual(header.bit_config, self.config.bit_config)
        self.assertEqual(header.radius_precision, 'f16')
        self.assertEqual(header.rotation_seed, 5)
        self.assertTrue(header.precondition)
        self.assertEqual(header.codebook_hash, self.codebooks.codebook_hash())
        self.assertEqual([e.to_bytes() for e in entries], [e.to_bytes() for e in self.entries])
        q = PolarQuantizer(header.config().make_rotation(64), self.codebooks, header.config())
        self.assertTrue(np.array_equal(q.decode_batch(entries), self.q.decode_batch(self.entries)))

    def test_file_size(self):
        header_bytes = len(QuantizedFileHeader.for_config(64, 32, self.config, self.codebooks).to_bytes())
        self.assertEqual(header_bytes, 60)
        record = quantizer.record_length(64, self.config.bit_config)
        self.assertEqual(os.path.getsize(self.path), header_bytes + 32 * record)

    def _corrupt(self, raw):
        path = os.path.join(self.temp_dir, 'bad.pq')
        with open(path, 'wb') as f:
            f.write(raw)
        return path

    def test_corrupt_files(self):
        with open(self.path, 'rb') as f:
            raw = f.read()
        with self.assertRaises(FormatError):
            load_quantized(self._corrupt(b'XXXX' + raw[4:]))
        with self.assertRaises(FormatError):
            load_quantized(self._corrupt(raw[:10]))
        with self.assertRaises(FormatError):
            load_quantized(self._corrupt(raw[:-1]))
        with self.assertRaises(FormatError):
            load_quantized(self._corrupt(raw + b'\x00'))
        bad_version = raw[:4] + (9).to_bytes(4, 'little') + raw[8:]
        with self.assertRaises(FormatError):
            load_quantized(self._corrupt(bad_version))
