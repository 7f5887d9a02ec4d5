#!/usr/bin/env python
# encoding: utf-8

"""
    configuration file validation.config holds the frozen acceptance bands of the validation suites, for instance:
               variance, product = 0.1, 0.5
    means that every per-level variance product reported by the variance suite must lie in [0.1, 0.5].
    Either bound, but not both, may be '*' for an open side.  Lookups fall back from suite|metric to suite|* to *|*,
    and a metric with no band anywhere is an error.
"""

import os
import re

from polarquant.errors import FormatError

DEFAULT_CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'validation.config')


def _bound(text, default):
    return default if text == '*' else float(text)


class ThreshDict(object):

    def __init__(self, tdname=DEFAULT_CONFIG):
        self.thresholds = {}
        self.path = tdname
        with open(tdname, 'r') as f:
            for raw in f:
                line = raw.strip()
                # blank and comment lines
                if line == '' or line[0] == '#':
                    continue
                # Split off end-of-line comments
                if line.find('#') > -1:
                    line = line[:line.find('#')]
                try:
                    [suite, metric, low, high] = [x.strip() for x in re.split('[,=]', line) if x.strip() != '']
                    band = (_bound(low, float('-inf')), _bound(high, float('inf')))
                except ValueError:
                    raise FormatError('Cannot parse threshold line <%s> in %s' % (raw.strip(), tdname))
                if low == '*' and high == '*':
                    raise FormatError('Band open on both sides on line <%s> in %s' % (raw.strip(), tdname))
                if band[0] > band[1]:
                    raise FormatError('Empty band on line <%s> in %s' % (raw.strip(), tdname))
                self.thresholds[suite + '|' + metric] = band

    def lookup(self, suite, metric):
        tag = suite + '|' + metric
        tag_d1 = suite + '|*'
        tag_d2 = '*|*'
        # matching suite and metric
        if tag in self.thresholds:
            return self.thresholds[tag]
        # then just the suite
        elif tag_d1 in self.thresholds:
            return self.thresholds[tag_d1]
        # then the global default
        elif tag_d2 in self.thresholds:
            return self.thresholds[tag_d2]
        else:
            raise FormatError('No band for %s in %s' % (tag, self.path))

    def within(self, suite, metric, value):
        low, high = self.lookup(suite, metric)
        return low <= value <= high

    def all_within(self, suite, metric, values):
        return all(self.within(suite, metric, v) for v in values)
