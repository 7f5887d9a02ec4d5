import numpy as np

from polarquant.errors import InvalidArgument


class KnownPreconditioners:
    Rotation = "rotation"
    Identity = "identity"
    GaussianSketch = "gaussian_sketch"


class BasePreconditioner(object):
    def __init__(self):
        self.in_dim = None
        self.seed = None

    def apply(self, x):
        raise NotImplementedError('Must implement apply(x) in derived classes')

    def apply_inverse(self, x):
        raise NotImplementedError('Must implement apply_inverse(x) in derived classes')

    def to_dict(self):
        raise NotImplementedError('Must implement to_dict() in derived classes')

    def check_input(self, x):
        """
        Returns x as a float64 array of rows, and whether it arrived as a single vector

        :param x: vector of length in_dim, or matrix with in_dim columns
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        rows = x.reshape(1, -1) if single else x
        if rows.ndim != 2 or rows.shape[1] != self.in_dim:
            raise InvalidArgument(
                'Dimension mismatch: input shape %s, preconditioner expects %s columns' % (x.shape, self.in_dim)
            )
        return rows, single
