#!/usr/bin/env python
# encoding: utf-8
"""
Compares a reconstructed embedding matrix against its reference row by row
usage:
    python tensor_diff.py <reference> <candidate> <rows_csv>

    reference = tensor file holding the original rows
    candidate = tensor file holding the reconstructed rows, same shape
    rows_csv  = csv output file of per-row differences
                abs_l2[i] = ||reference[i] - candidate[i]||
                rel_l2[i] = abs_l2[i] / ||reference[i]||   (abs_l2[i] when the reference row is zero)

    configuration file validation.config gives the acceptable relative error band, for instance:
               reconstruction, rel_error = 0, 0.5
    rows outside the band are big diffs, rows inside the band with a nonzero error are small diffs.
"""

import sys

import numpy as np

from polarquant.diffs import mycsv
from polarquant.diffs import thresh_dict as td
from polarquant.errors import InvalidArgument
from polarquant.structures import TensorDifferences
from polarquant.tensor_io import check_embedding_matrix, load_tensor

ROWS_SCHEMA = 'tensor-diff'
ROWS_HEADER = ['row', 'abs_l2', 'rel_l2']


def row_differences(reference, candidate):
    """Per-row absolute and relative L2 differences"""
    reference = check_embedding_matrix(reference, 'reference').astype(np.float64)
    candidate = check_embedding_matrix(candidate, 'candidate').astype(np.float64)
    if reference.shape != candidate.shape:
        raise InvalidArgument('Reference %s and candidate %s shapes differ' % (reference.shape, candidate.shape))
    abs_diffs = np.linalg.norm(reference - candidate, axis=1)
    norms = np.linalg.norm(reference, axis=1)
    rel_diffs = np.where(norms > 0, abs_diffs / np.where(norms > 0, norms, 1.0), abs_diffs)
    return abs_diffs, rel_diffs


def tensor_diff(reference, candidate, thresholds=None, rows_csv=None):
    """
    Summarize row differences between two matrices; optionally write the per-row csv
    """
    if thresholds is None:
        thresholds = td.ThreshDict()
    abs_diffs, rel_diffs = row_differences(reference, candidate)
    num_rows = abs_diffs.shape[0]
    if num_rows == 0:
        return TensorDifferences(0, 0.0, 0.0, 0.0, 0.0, 0, 0)
    big = sum(1 for x in rel_diffs if not thresholds.within('reconstruction', 'rel_error', x))
    small = sum(1 for x in rel_diffs if x > 0.0) - big
    if rows_csv:
        rows = [[i, float(a), float(r)] for i, (a, r) in enumerate(zip(abs_diffs, rel_diffs))]
        mycsv.write_versioned_csv(rows_csv, ROWS_SCHEMA, ROWS_HEADER, rows)
    return TensorDifferences(num_rows, float(np.max(abs_diffs)), float(np.mean(abs_diffs)), float(np.max(rel_diffs)),
                             float(np.mean(rel_diffs)), big, small)


def main(argv=None):  # pragma: no cover
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 3:
        print(__doc__)
        return 2
    diffs = tensor_diff(load_tensor(argv[0]), load_tensor(argv[1]), rows_csv=argv[2])
    print(diffs.to_dict())
    return 0


if __name__ == '__main__':  # pragma: no cover
    sys.exit(main())
