"""
Generation, loading and saving of dense row-major embedding matrices.

An embedding matrix is a 2-D numpy array of shape (n, d) with finite entries.  Tensor files are little-endian:

    magic    4 bytes  b'PQTN'
    dtype    u32      0 = f32, 1 = f16
    rank     u32
    shape    u32 x rank
    payload  prod(shape) elements, row-major
"""

import struct

import numpy as np

from polarquant.errors import FormatError, InvalidArgument
from polarquant.structures import TensorDType

TENSOR_MAGIC = b'PQTN'
_PREAMBLE = struct.Struct('<4sII')
_DIM = struct.Struct('<I')


def new_generator(seed):
    """
    Seeded PCG64 generator; seed may be an int or a numpy SeedSequence
    """
    if seed is None:
        raise InvalidArgument('A seed is required, hidden entropy is not allowed')
    return np.random.Generator(np.random.PCG64(seed))


def sub_seeds(seed, count):
    """Independent integer seeds derived from one seed"""
    if seed is None:
        raise InvalidArgument('A seed is required, hidden entropy is not allowed')
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


def check_embedding_matrix(x, name='X'):
    x = np.asarray(x)
    if x.ndim != 2:
        raise InvalidArgument('%s must be a 2-D matrix, got shape %s' % (name, x.shape))
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidArgument('%s contains NaN or infinite values' % name)
    return x


def check_vector(x, d=None, name='x'):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgument('%s must be a vector, got shape %s' % (name, x.shape))
    if d is not None and x.shape[0] != d:
        raise InvalidArgument('%s has length %i, expected %i' % (name, x.shape[0], d))
    if not np.all(np.isfinite(x)):
        raise InvalidArgument('%s contains NaN or infinite values' % name)
    return x


def _check_shape(n, d):
    if int(n) != n or int(d) != d or n < 1 or d < 1:
        raise InvalidArgument('Matrix dimensions must be positive integers, got n=%s, d=%s' % (n, d))
    return int(n), int(d)


def generate_gaussian(n, d, seed):
    """
    i.i.d. standard normal (n, d) float32 matrix drawn with numpy's ziggurat sampler over PCG64

    :param n: number of rows
    :param d: number of columns
    :param seed: integer seed; the output is a pure function of (n, d, seed)
    """
    n, d = _check_shape(n, d)
    return new_generator(seed).standard_normal((n, d), dtype=np.float32)


def generate_heavy_tailed(n, d, seed, df=3.0, outlier_channels=4, outlier_scale=10.0):
    """
    Student-t entries where a few fixed channels carry a much larger scale, mimicking the
    outlier channels of real key caches
    """
    n, d = _check_shape(n, d)
    if df <= 0:
        raise InvalidArgument('Degrees of freedom must be positive, got %s' % df)
    if outlier_channels < 0 or outlier_channels > d:
        raise InvalidArgument('Outlier channel count %s out of range for d=%i' % (outlier_channels, d))
    rng = new_generator(seed)
    data = rng.standard_t(df, size=(n, d))
    channels = rng.choice(d, size=outlier_channels, replace=False)
    data[:, channels] *= outlier_scale
    return data.astype(np.float32)


def save_tensor(m, path, dtype=TensorDType.F32):
    m = np.asarray(m)
    if m.ndim < 1:
        raise InvalidArgument('Cannot save a scalar as a tensor')
    if not np.all(np.isfinite(m)):
        raise InvalidArgument('Tensor contains NaN or infinite values')
    payload = m.astype(TensorDType.numpy_dtype(dtype))
    if not np.all(np.isfinite(payload)):
        raise InvalidArgument('Tensor values overflow the %s range' % dtype)
    with open(path, 'wb') as f:
        f.write(_PREAMBLE.pack(TENSOR_MAGIC, TensorDType.to_code(dtype), m.ndim))
        for dim in m.shape:
            f.write(_DIM.pack(dim))
        f.write(np.ascontiguousarray(payload).tobytes())


def load_tensor(path):
    with open(path, 'rb') as f:
        raw = f.read()
    if len(raw) < _PREAMBLE.size:
        raise FormatError('Tensor file <%s> is too short for a header' % path)
    magic, dtype_code, rank = _PREAMBLE.unpack_from(raw, 0)
    if magic != TENSOR_MAGIC:
        raise FormatError('Tensor file <%s> has wrong magic %r' % (path, magic))
    try:
        dtype = TensorDType.from_code(dtype_code)
    except InvalidArgument:
        raise FormatError('Tensor file <%s> has unknown dtype code %i' % (path, dtype_code))
    if rank < 1:
        raise FormatError('Tensor file <%s> has rank 0' % path)
    offset = _PREAMBLE.size
    if len(raw) < offset + rank * _DIM.size:
        raise FormatError('Tensor file <%s> is truncated inside the shape' % path)
    shape = [_DIM.unpack_from(raw, offset + i * _DIM.size)[0] for i in range(rank)]
    offset += rank * _DIM.size
    np_dtype = TensorDType.numpy_dtype(dtype)
    expected = int(np.prod(shape)) * np_dtype.itemsize
    if len(raw) - offset != expected:
        raise FormatError(
            'Tensor file <%s> payload is %i bytes, shape %s needs %i' % (path, len(raw) - offset, shape, expected)
        )
    data = np.frombuffer(raw, dtype=np_dtype, offset=offset).reshape(shape)
    data = data.astype(np_dtype.newbyteorder('='))
    if not np.all(np.isfinite(data)):
        raise FormatError('Tensor file <%s> contains NaN or infinite values' % path)
    return data
