import numpy as np

from polarquant.errors import InvalidArgument
from polarquant.precondition.base import BasePreconditioner, KnownPreconditioners
from polarquant.tensor_io import new_generator


class RotationMatrix(BasePreconditioner):
    """
    Haar-distributed orthogonal matrix S; rows are mapped x -> x S and back with x -> x S^T.
    Persisted as {d, seed} and regenerated on load, never stored densely.
    """

    def __init__(self, dim, seed, entries):
        super(RotationMatrix, self).__init__()
        self.in_dim = dim
        self.seed = seed
        self.entries = entries

    @property
    def dim(self):
        return self.in_dim

    @property
    def is_identity(self):
        return self.seed is None

    @classmethod
    def identity(cls, d):
        d = _check_dim(d)
        return cls(d, None, np.eye(d))

    def apply(self, x):
        rows, single = self.check_input(x)
        out = rows @ self.entries
        return out[0] if single else out

    def apply_inverse(self, x):
        rows, single = self.check_input(x)
        out = rows @ self.entries.T
        return out[0] if single else out

    def to_dict(self):
        response = dict()
        response['kind'] = KnownPreconditioners.Identity if self.is_identity else KnownPreconditioners.Rotation
        response['d'] = self.dim
        response['seed'] = self.seed
        return response

    @staticmethod
    def from_dict(data):
        try:
            d = int(data['d'])
            seed = data['seed']
        except (KeyError, TypeError, ValueError):
            raise InvalidArgument('Rotation description needs d and seed, got %s' % data)
        if seed is None:
            return RotationMatrix.identity(d)
        return build_rotation(d, int(seed))


def _check_dim(d):
    if int(d) != d or d < 1:
        raise InvalidArgument('Rotation dimension must be a positive integer, got %s' % d)
    return int(d)


def build_rotation(d, seed):
    """
    QR of a seeded Gaussian matrix, with the columns of Q flipped so that diag(R) > 0;
    the sign fix makes the result uniform over the orthogonal group
    """
    d = _check_dim(d)
    gaussian = new_generator(seed).standard_normal((d, d))
    q, r = np.linalg.qr(gaussian)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return RotationMatrix(d, seed, q * signs)


def apply(x, rotation):
    return rotation.apply(x)


def apply_inverse(x, rotation):
    return rotation.apply_inverse(x)
