import numpy as np

from polarquant.errors import InvalidArgument
from polarquant.precondition.base import BasePreconditioner, KnownPreconditioners
from polarquant.tensor_io import new_generator


class GaussianSketch(BasePreconditioner):
    """
    m x d matrix of i.i.d. N(0, 1) entries; x -> S x has law N(0, |x|^2 I_m) for a fixed x.
    Not invertible, so apply_inverse stays abstract.
    """

    def __init__(self, out_dim, in_dim, seed, entries):
        super(GaussianSketch, self).__init__()
        self.out_dim = out_dim
        self.in_dim = in_dim
        self.seed = seed
        self.entries = entries

    def apply(self, x):
        rows, single = self.check_input(x)
        out = rows @ self.entries.T
        return out[0] if single else out

    def to_dict(self):
        response = dict()
        response['kind'] = KnownPreconditioners.GaussianSketch
        response['m'] = self.out_dim
        response['d'] = self.in_dim
        response['seed'] = self.seed
        return response


def build_gaussian_sketch(m, d, seed):
    if int(m) != m or int(d) != d or m < 1 or d < 1:
        raise InvalidArgument('Sketch dimensions must be positive integers, got m=%s, d=%s' % (m, d))
    entries = new_generator(seed).standard_normal((int(m), int(d)))
    return GaussianSketch(int(m), int(d), seed, entries)


def apply_sketch(x, sketch):
    return sketch.apply(x)
