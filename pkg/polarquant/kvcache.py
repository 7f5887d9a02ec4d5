"""
Quantized KV cache with streaming append and softmax attention over dequantized keys and values.

Cache file layout (little-endian): magic b'PQKV', u32 version, u32 quantized token count, u32 tail token count,
u32 append mode code, u32 codebook mode code,
then a quantized file header (see polarquant.quantizer) describing the shared configuration, then the body:
key records, value records, tail keys as f32 rows, tail values as f32 rows.  The body is exactly the payload and
tail bits of memory_report.
"""

import hashlib
import math
import struct
import threading

import numpy as np

from polarquant import polar
from polarquant.codebook import build_offline, build_online
from polarquant.errors import FormatError, InvalidArgument, InvalidState
from polarquant.quantizer import (
    PolarQuantizer,
    QuantizedFileHeader,
    QuantizerConfig,
    formula_ratio,
    records_from_bytes,
    records_to_bytes,
)
from polarquant.structures import AppendMode, CodebookMode, ErrorTrace, MemoryReport
from polarquant.tensor_io import check_embedding_matrix, check_vector, sub_seeds

CACHE_MAGIC = b'PQKV'
CACHE_VERSION = 1
_CACHE_PREAMBLE = struct.Struct('<4sIIIII')
TAIL_BITS = 32
ROTATION_SEED_BITS = 64
# fully recursed 3 bit encoding of 128 dimensional vectors, the case the stated saving refers to
FORMULA_REFERENCE_D = 128
FORMULA_REFERENCE_BITS = 3


class AttentionResult(object):

    def __init__(self, output, scores):
        self.output = output
        self.scores = scores

    def to_dict(self):
        response = dict()
        response['output'] = self.output.tolist()
        response['scores'] = self.scores.tolist()
        return response


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = np.exp(logits - np.max(logits))
    return shifted / np.sum(shifted)


def attend_exact(keys, values, q):
    """
    softmax(K q / sqrt(d))^T V in float64
    """
    keys = check_embedding_matrix(keys, 'keys').astype(np.float64)
    values = check_embedding_matrix(values, 'values').astype(np.float64)
    if keys.shape != values.shape:
        raise InvalidArgument('Keys %s and values %s must have the same shape' % (keys.shape, values.shape))
    if keys.shape[0] == 0:
        raise InvalidState('Cannot attend over zero tokens')
    q = check_vector(q, keys.shape[1], 'q')
    scores = softmax(keys @ q / math.sqrt(keys.shape[1]))
    return AttentionResult(scores @ values, scores)


def relative_l2_error(approx, exact):
    exact_norm = np.linalg.norm(exact)
    diff = np.linalg.norm(np.asarray(approx) - np.asarray(exact))
    return float(diff / exact_norm) if exact_norm > 0 else float(diff)


def combined_codebook_hash(key_codebooks, value_codebooks):
    joined = key_codebooks.codebook_hash() + value_codebooks.codebook_hash()
    return hashlib.sha256(joined).digest()[:8]


class QuantizedKVCache(object):
    """
    Append-only quantized key/value store.  One writer may append while readers attend; attend works on a
    snapshot of the tokens appended before it started.
    """

    def __init__(self, d, config, rotation, key_codebooks, value_codebooks):
        polar.check_levels(d, config.levels)
        if rotation.dim != d:
            raise InvalidArgument('Rotation dimension %i does not match d=%i' % (rotation.dim, d))
        self.d = d
        self.config = config
        self.rotation = rotation
        self.key_codebooks = key_codebooks
        self.value_codebooks = value_codebooks
        self.key_quantizer = PolarQuantizer(rotation, key_codebooks, config)
        self.value_quantizer = PolarQuantizer(rotation, value_codebooks, config)
        self.key_entries = []
        self.value_entries = []
        self.tail_keys = []
        self.tail_values = []
        self._lock = threading.Lock()
        self._decoded_keys = np.zeros((0, d))
        self._decoded_values = np.zeros((0, d))

    @property
    def quantized_tokens(self):
        return len(self.key_entries)

    @property
    def tail_tokens(self):
        return len(self.tail_keys)

    @property
    def token_count(self):
        return self.quantized_tokens + self.tail_tokens

    @property
    def shares_codebooks(self):
        return self.key_codebooks is self.value_codebooks

    def _check_rows(self, keys, values):
        keys = check_embedding_matrix(keys, 'keys')
        values = check_embedding_matrix(values, 'values')
        if keys.shape != values.shape:
            raise InvalidArgument('Keys %s and values %s must have the same shape' % (keys.shape, values.shape))
        if keys.shape[1] != self.d:
            raise InvalidArgument('Rows have length %i, cache holds d=%i' % (keys.shape[1], self.d))
        return keys, values

    def add_quantized_rows(self, keys, values):
        keys, values = self._check_rows(keys, values)
        key_entries = self.key_quantizer.encode_batch(keys)
        value_entries = self.value_quantizer.encode_batch(values)
        with self._lock:
            self.key_entries.extend(key_entries)
            self.value_entries.extend(value_entries)

    def append(self, k, v):
        """
        Full precision tail by default; with AppendMode.QUANTIZE the pair is encoded with the existing codebooks
        """
        k = check_vector(k, self.d, 'k')
        v = check_vector(v, self.d, 'v')
        if self.config.append_mode == AppendMode.QUANTIZE:
            self.add_quantized_rows(k.reshape(1, -1), v.reshape(1, -1))
        else:
            with self._lock:
                self.tail_keys.append(k.astype(np.float32))
                self.tail_values.append(v.astype(np.float32))

    def snapshot(self):
        """Decoded keys and values of every token appended so far, quantized rows first"""
        with self._lock:
            done = self._decoded_keys.shape[0]
            count = len(self.key_entries)
            if done < count:
                # only rows added since the last snapshot are decoded
                new_keys = self.key_quantizer.decode_batch(self.key_entries[done:count])
                new_values = self.value_quantizer.decode_batch(self.value_entries[done:count])
                self._decoded_keys = np.vstack([self._decoded_keys, new_keys])
                self._decoded_values = np.vstack([self._decoded_values, new_values])
            keys = self._decoded_keys
            values = self._decoded_values
            tail_keys = list(self.tail_keys)
            tail_values = list(self.tail_values)
        if tail_keys:
            keys = np.vstack([keys, np.asarray(tail_keys, dtype=np.float64)])
            values = np.vstack([values, np.asarray(tail_values, dtype=np.float64)])
        return keys, values

    def attend(self, q):
        keys, values = self.snapshot()
        if keys.shape[0] == 0:
            raise InvalidState('Cannot attend over an empty cache')
        return attend_exact(keys, values, q)

    def memory_report(self):
        bit_config = self.config.bit_config
        payload = 8 * sum(len(qe.to_bytes()) for qe in self.key_entries + self.value_entries)
        codebook_bits = self.key_codebooks.storage_bits(bit_config.radius_bits)
        if not self.shares_codebooks:
            codebook_bits += self.value_codebooks.storage_bits(bit_config.radius_bits)
        return MemoryReport(
            self.d,
            self.quantized_tokens,
            self.tail_tokens,
            payload,
            codebook_bits,
            2 * self.tail_tokens * self.d * TAIL_BITS,
            ROTATION_SEED_BITS if self.config.precondition else 0,
            bit_config.radius_bits,
            float(formula_ratio(FORMULA_REFERENCE_D, FORMULA_REFERENCE_BITS, bit_config.radius_bits))
        )

    def header_bytes(self):
        with self._lock:
            quantized, tail = self.quantized_tokens, self.tail_tokens
        header = QuantizedFileHeader(self.d, self.config.bit_config, quantized, self.config.radius_precision,
                                     self.config.rotation_seed, self.config.precondition,
                                     combined_codebook_hash(self.key_codebooks, self.value_codebooks))
        preamble = _CACHE_PREAMBLE.pack(CACHE_MAGIC, CACHE_VERSION, quantized, tail,
                                        AppendMode.to_code(self.config.append_mode),
                                        CodebookMode.to_code(self.config.codebook_mode))
        return preamble + header.to_bytes()

    def body_bytes(self):
        with self._lock:
            keys = list(self.key_entries)
            values = list(self.value_entries)
            tail_keys = list(self.tail_keys)
            tail_values = list(self.tail_values)
        body = records_to_bytes(keys) + records_to_bytes(values)
        if tail_keys:
            body += np.asarray(tail_keys, dtype='<f4').tobytes() + np.asarray(tail_values, dtype='<f4').tobytes()
        return body

    def to_bytes(self):
        return self.header_bytes() + self.body_bytes()

    def save(self, path):
        with open(path, 'wb') as f:
            f.write(self.to_bytes())


def load_cache(path, key_codebooks, value_codebooks=None):
    if value_codebooks is None:
        value_codebooks = key_codebooks
    with open(path, 'rb') as f:
        raw = f.read()
    if len(raw) < _CACHE_PREAMBLE.size:
        raise FormatError('Cache file <%s> is too short' % path)
    magic, version, quantized, tail, append_code, mode_code = _CACHE_PREAMBLE.unpack_from(raw, 0)
    if magic != CACHE_MAGIC:
        raise FormatError('Cache file <%s> has wrong magic %r' % (path, magic))
    if version != CACHE_VERSION:
        raise FormatError('Cache file <%s> has unsupported version %i' % (path, version))
    header, offset = QuantizedFileHeader.from_bytes(raw, _CACHE_PREAMBLE.size)
    if header.n != quantized:
        raise FormatError('Cache file <%s> token counts disagree' % path)
    if header.codebook_hash != combined_codebook_hash(key_codebooks, value_codebooks):
        raise FormatError('Cache file <%s> was written with different codebooks' % path)
    try:
        config = header.config(CodebookMode.from_code(mode_code), AppendMode.from_code(append_code))
    except InvalidArgument as exc:
        raise FormatError('Cache file <%s> has a bad mode code: %s' % (path, exc))
    cache = QuantizedKVCache(header.d, config, config.make_rotation(header.d), key_codebooks, value_codebooks)
    keys, offset = records_from_bytes(raw, offset, quantized, header)
    values, offset = records_from_bytes(raw, offset, quantized, header)
    tail_length = tail * header.d * 4
    if len(raw) - offset != 2 * tail_length:
        raise FormatError('Cache file <%s> tail is %i bytes, expected %i' % (path, len(raw) - offset, 2 * tail_length))
    cache.key_entries = keys
    cache.value_entries = values
    if tail:
        tail_keys = np.frombuffer(raw, dtype='<f4', count=tail * header.d, offset=offset).reshape(tail, header.d)
        tail_values = np.frombuffer(raw, dtype='<f4', count=tail * header.d,
                                    offset=offset + tail_length).reshape(tail, header.d)
        cache.tail_keys = [row.astype(np.float32) for row in tail_keys]
        cache.tail_values = [row.astype(np.float32) for row in tail_values]
    return cache


def prefill(keys, values, config=None, seed=0, key_codebooks=None, value_codebooks=None, rotation=None):
    """
    Build codebooks for the configured mode (unless given) and encode every prompt row

    :param keys: (n, d) prompt keys
    :param values: (n, d) prompt values
    :param config: QuantizerConfig, defaults to the 3.875 bits per coordinate configuration
    :param seed: seed for codebook construction
    :param key_codebooks: optional prebuilt key codebooks; value_codebooks defaults to the same set
    :param rotation: optional shared rotation, otherwise built from the configuration
    """
    if config is None:
        config = QuantizerConfig()
    keys = check_embedding_matrix(keys, 'keys')
    values = check_embedding_matrix(values, 'values')
    if keys.shape != values.shape:
        raise InvalidArgument('Keys %s and values %s must have the same shape' % (keys.shape, values.shape))
    d = keys.shape[1]
    polar.check_levels(d, config.levels)
    if rotation is None:
        rotation = config.make_rotation(d)
    if key_codebooks is not None:
        if value_codebooks is None:
            value_codebooks = key_codebooks
    elif config.codebook_mode == CodebookMode.OFFLINE:
        key_codebooks = build_offline(config.bit_config, config.offline_samples, seed)
        value_codebooks = key_codebooks
    else:
        key_seed, value_seed = sub_seeds(seed, 2)
        key_angles = polar.polar_rows(rotation.apply(keys), config.levels)[1]
        value_angles = polar.polar_rows(rotation.apply(values), config.levels)[1]
        key_codebooks = build_online([a.ravel() for a in key_angles], config.bit_config, key_seed)
        value_codebooks = build_online([a.ravel() for a in value_angles], config.bit_config, value_seed)
    cache = QuantizedKVCache(d, config, rotation, key_codebooks, value_codebooks)
    cache.add_quantized_rows(keys, values)
    return cache


def append(cache, k, v):
    cache.append(k, v)


def attend_approx(cache, q):
    return cache.attend(q)


def memory_report(cache):
    return cache.memory_report()


def compare_attention(cache, keys, values, queries):
    """
    Error trace of cache attention against exact attention on (keys, values) for a fixed set of queries
    """
    queries = check_embedding_matrix(queries, 'queries')
    trace = ErrorTrace()
    for q in queries:
        approx = cache.attend(q)
        exact = attend_exact(keys, values, q)
        trace.add_step(cache.token_count, relative_l2_error(approx.output, exact.output))
    return trace


def simulate_decode(prompt_keys, prompt_values, query_stream, config=None, seed=0, print_callback=None):
    """
    Prefill with the prompt, then for every (q, k, v) step append (k, v) and compare cache attention for q with
    exact attention over all tokens so far
    """
    steps = [tuple(step) for step in query_stream]
    cache = prefill(prompt_keys, prompt_values, config, seed)
    n, d = cache.quantized_tokens, cache.d
    exact_keys = np.empty((n + len(steps), d))
    exact_values = np.empty((n + len(steps), d))
    exact_keys[:n] = prompt_keys
    exact_values[:n] = prompt_values
    trace = ErrorTrace()
    for i, step in enumerate(steps):
        if len(step) != 3:
            raise InvalidArgument('Decode steps must be (q, k, v) triples')
        q, k, v = step
        cache.append(k, v)
        exact_keys[n + i] = k
        exact_values[n + i] = v
        approx = cache.attend(q)
        exact = attend_exact(exact_keys[:n + i + 1], exact_values[:n + i + 1], q)
        trace.add_step(cache.token_count, relative_l2_error(approx.output, exact.output))
        if print_callback:
            print_callback('Decode step %i: tokens = %i, relative error = %.6g' % (
                i, cache.token_count, trace.errors[-1]))
    return trace


class KVCacheGroup(object):
    """
    Independent caches per (layer, head) that share one rotation seed and, offline, one codebook set
    """

    def __init__(self, layers, heads, config=None, seed=0):
        if int(layers) != layers or int(heads) != heads or layers < 1 or heads < 1:
            raise InvalidArgument('Layer and head counts must be positive integers, got %s, %s' % (layers, heads))
        self.layers = int(layers)
        self.heads = int(heads)
        self.config = config if config is not None else QuantizerConfig()
        self.seed = seed
        self.caches = {}
        self.rotation = None
        self.shared_codebooks = None

    def _check_member(self, layer, head):
        if not (0 <= layer < self.layers and 0 <= head < self.heads):
            raise InvalidArgument('No cache at layer %s, head %s' % (layer, head))

    def prefill(self, layer, head, keys, values):
        self._check_member(layer, head)
        keys = check_embedding_matrix(keys, 'keys')
        d = keys.shape[1]
        if self.rotation is None:
            self.rotation = self.config.make_rotation(d)
        codebooks = None
        if self.config.codebook_mode == CodebookMode.OFFLINE:
            if self.shared_codebooks is None:
                self.shared_codebooks = build_offline(self.config.bit_config, self.config.offline_samples, self.seed)
            codebooks = self.shared_codebooks
        member_seed = int(np.random.SeedSequence([self.seed, layer, head]).generate_state(1)[0])
        cache = prefill(keys, values, self.config, member_seed, key_codebooks=codebooks, rotation=self.rotation)
        self.caches[(layer, head)] = cache
        return cache

    def cache(self, layer, head):
        self._check_member(layer, head)
        if (layer, head) not in self.caches:
            raise InvalidState('Cache at layer %i, head %i has not been prefilled' % (layer, head))
        return self.caches[(layer, head)]

    def attend(self, layer, head, q):
        return self.cache(layer, head).attend(q)

    def memory_report(self):
        if not self.caches:
            raise InvalidState('No caches have been prefilled')
        reports = [self.caches[key].memory_report() for key in sorted(self.caches)]
        combined = MemoryReport.combine(reports)
        if self.shared_codebooks is not None:
            combined.codebook_bits = self.shared_codebooks.storage_bits(self.config.bit_config.radius_bits)
        return combined
