#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
polarquant command line: every subcommand is a thin shell over the library.

Exit codes: 0 success, 1 runtime error (or a failed validation suite), 2 usage error.  Errors are reported on
stderr as one JSON object {"error": <kind>, "message": <text>}.
"""

import argparse
import csv
import json
import multiprocessing
import sys
import time

import numpy as np

from polarquant import __version__
from polarquant import codebook, kvcache, polar, quantizer, tensor_io
from polarquant.diffs import mycsv
from polarquant.diffs.tensor_diff import tensor_diff
from polarquant.errors import FormatError, PolarQuantError
from polarquant.run_validation import SuiteRunner, ValidationRunConfiguration
from polarquant.stats import AngleStatistics
from polarquant.structures import (
    AppendMode,
    CodebookMode,
    RadiusPrecision,
    TensorDType,
    ValidationSuite,
    provenance,
)


class UsageError(Exception):
    pass


class OutputFormat:
    JSON = 'json'
    CSV = 'csv'


class CliConfig:
    def __init__(self, seed=0, threads=None, out=None, output_format=OutputFormat.JSON):
        self.seed = seed
        self.threads = threads if threads is not None else multiprocessing.cpu_count()
        self.out = out
        self.format = output_format

    @staticmethod
    def from_args(args):
        return CliConfig(args.seed, args.threads, args.out, args.format)

    def to_dict(self):
        response = dict()
        response['seed'] = self.seed
        response['threads'] = self.threads
        response['out'] = self.out
        response['format'] = self.format
        return response


class JsonErrorParser(argparse.ArgumentParser):
    """Usage errors become exit code 2 with the JSON error object on stderr"""

    def error(self, message):
        report_error('UsageError', '%s: %s' % (self.prog, message))
        sys.exit(2)


def report_error(kind, message):
    sys.stderr.write(json.dumps({'error': kind, 'message': message}) + '\n')


def quantizer_config(args):
    precision = args.radius_precision
    bits = codebook.BitWidthConfig.parse_bits(args.bits)
    if args.levels is not None and args.levels != len(bits):
        if len(bits) != 1:
            raise UsageError('--levels %i does not match %i bit widths' % (args.levels, len(bits)))
        bits = bits * args.levels
    return quantizer.QuantizerConfig(
        codebook.BitWidthConfig(bits, RadiusPrecision.bits(precision)),
        rotation_seed=args.rotation_seed,
        radius_precision=precision,
        codebook_mode=args.codebook_mode,
        precondition=not args.no_precondition,
        append_mode=args.append_mode,
        offline_samples=args.offline_samples,
    )


def emit(cli_config, payload, csv_table=None):
    """
    Write the command's report: csv when requested and available, JSON otherwise; to --out or stdout
    """
    if cli_config.format == OutputFormat.CSV and csv_table is not None:
        schema, header, rows = csv_table
        if cli_config.out:
            mycsv.write_versioned_csv(cli_config.out, schema, header, rows)
        else:
            sys.stdout.write(mycsv.version_line(schema) + '\n')
            writer = csv.writer(sys.stdout)
            writer.writerow(header)
            writer.writerows(rows)
        return
    text = json.dumps(payload, indent=2)
    if cli_config.out:
        with open(cli_config.out, 'w') as f:
            f.write(text + '\n')
    else:
        sys.stdout.write(text + '\n')


def print_summary(payload):
    """Commands whose --out is an artifact report on stdout"""
    sys.stdout.write(json.dumps(payload, indent=2) + '\n')


def summary(cli_config, command, config=None, **fields):
    response = provenance(cli_config.seed, config.to_dict() if config is not None else None)
    response['tool_version'] = __version__
    response['command'] = command
    response.update(fields)
    return response


def check_codebook_hash(header, codebooks, path):
    if header.codebook_hash != codebooks.codebook_hash():
        raise FormatError('Quantized file <%s> was written with different codebooks' % path)


def cmd_gen(args, cli_config):
    if not args.out:
        raise UsageError('gen needs --out')
    if args.distribution == 'heavy-tailed':
        m = tensor_io.generate_heavy_tailed(args.n, args.d, cli_config.seed)
    else:
        m = tensor_io.generate_gaussian(args.n, args.d, cli_config.seed)
    tensor_io.save_tensor(m, args.out, args.dtype)
    print_summary(summary(cli_config, 'gen', shape=list(m.shape), out=args.out,
                          distribution=args.distribution, dtype=args.dtype))
    return 0


def cmd_codebook(args, cli_config):
    if not args.out:
        raise UsageError('codebook needs --out')
    config = quantizer_config(args)
    if config.codebook_mode == CodebookMode.OFFLINE:
        cs = codebook.build_offline(config.bit_config, config.offline_samples, cli_config.seed)
    else:
        if not args.input:
            raise UsageError('online codebooks need --in with the observed embeddings')
        x = tensor_io.check_embedding_matrix(tensor_io.load_tensor(args.input)).astype(np.float64)
        angles = polar.polar_rows(config.make_rotation(x.shape[1]).apply(x), config.levels)[1]
        cs = codebook.build_online([a.ravel() for a in angles], config.bit_config, cli_config.seed)
    codebook.save_codebooks(cs, args.out)
    print_summary(summary(cli_config, 'codebook', config, out=args.out,
                          level_sizes=cs.level_sizes,
                          codebook_hash=cs.codebook_hash().hex()))
    return 0


def cmd_quantize(args, cli_config):
    if not args.input or not args.codebooks or not args.out:
        raise UsageError('quantize needs --in, --codebooks and --out')
    config = quantizer_config(args)
    x = tensor_io.check_embedding_matrix(tensor_io.load_tensor(args.input))
    cs = codebook.load_codebooks(args.codebooks)
    entries = quantizer.encode_batch(x, config.make_rotation(x.shape[1]), cs, config)
    quantizer.save_quantized(args.out, entries, config, cs, x.shape[1])
    print_summary(summary(
        cli_config, 'quantize', config, out=args.out, rows=x.shape[0],
        record_bytes=quantizer.record_length(x.shape[1], config.bit_config),
        bits_per_coordinate=float(quantizer.bits_per_coordinate(config.bit_config))))
    return 0


def cmd_dequantize(args, cli_config):
    if not args.input or not args.codebooks or not args.out:
        raise UsageError('dequantize needs --in, --codebooks and --out')
    if args.diff_csv and not args.reference:
        raise UsageError('--diff-csv needs --reference')
    header, entries = quantizer.load_quantized(args.input)
    cs = codebook.load_codebooks(args.codebooks)
    check_codebook_hash(header, cs, args.input)
    config = header.config()
    rebuilt = quantizer.decode_batch(entries, config.make_rotation(header.d), cs, config)
    tensor_io.save_tensor(rebuilt, args.out)
    fields = dict(out=args.out, rows=len(entries))
    if args.reference:
        diffs = tensor_diff(tensor_io.load_tensor(args.reference), rebuilt, rows_csv=args.diff_csv)
        fields['reconstruction'] = diffs.to_dict()
    print_summary(summary(cli_config, 'dequantize', config, **fields))
    return 0


def cmd_stats(args, cli_config):
    if not args.input:
        raise UsageError('stats needs --in')
    x = tensor_io.load_tensor(args.input)
    levels = args.levels if args.levels is not None else polar.DEFAULT_LEVELS
    result = AngleStatistics(x, levels, args.rotation_seed, args.bins)
    emit(cli_config, summary(cli_config, 'stats', **result.to_dict()),
         ('angle-histogram', ['level', 'bin_low', 'bin_high', 'count', 'density', 'analytic_pdf'],
          result.histogram_rows()))
    return 0


def cmd_attend(args, cli_config):
    if not args.keys or not args.values or not args.queries:
        raise UsageError('attend needs --keys, --values and --queries')
    config = quantizer_config(args)
    keys = tensor_io.load_tensor(args.keys)
    values = tensor_io.load_tensor(args.values)
    queries = tensor_io.load_tensor(args.queries)
    cs = codebook.load_codebooks(args.codebooks) if args.codebooks else None
    cache = kvcache.prefill(keys, values, config, cli_config.seed, key_codebooks=cs)
    trace = kvcache.compare_attention(cache, keys, values, queries)
    emit(cli_config, summary(cli_config, 'attend', config, trace=trace.to_dict(),
                             memory=cache.memory_report().to_dict()),
         (trace.SCHEMA, trace.HEADER, trace.to_rows()))
    return 0


def cmd_validate(args, cli_config):
    suites = ValidationSuite.ALL if 'all' in args.which else list(dict.fromkeys(args.which))
    runner = SuiteRunner(ValidationRunConfiguration(suites, min(cli_config.threads, len(suites)), cli_config.seed))

    def progress(msg):
        sys.stderr.write(msg + '\n')

    runner.add_callbacks(
        progress,
        lambda count: progress('Starting %i validation suites' % count),
        lambda result: progress('%s: %s' % (result.suite, 'passed' if result.passed else 'FAILED')),
        lambda results: None,
    )
    results = runner.run_validation()
    rows = [[r.suite, 'passed' if r.passed else 'failed', r.runtime_seconds] for r in results.results]
    emit(cli_config, results.to_dict(), ('validation', ['suite', 'status', 'runtime_seconds'], rows))
    if not results.all_passed:
        report_error('ValidationFailed', 'Failed suites: %s' % ', '.join(results.failed_suites))
        return 1
    return 0


def cmd_bench(args, cli_config):
    config = quantizer_config(args)
    keys = tensor_io.generate_gaussian(args.n, args.d, cli_config.seed)
    values = tensor_io.generate_gaussian(args.n, args.d, cli_config.seed + 1)
    queries = tensor_io.generate_gaussian(args.queries, args.d, cli_config.seed + 2)
    rows = []

    start = time.perf_counter()
    cache = kvcache.prefill(keys, values, config, cli_config.seed)
    rows.append(['prefill', time.perf_counter() - start, 2 * args.n])

    start = time.perf_counter()
    cache.snapshot()
    rows.append(['decode', time.perf_counter() - start, 2 * args.n])

    start = time.perf_counter()
    for q in queries:
        cache.attend(q)
    rows.append(['attend', time.perf_counter() - start, args.queries])

    table = [[name, seconds, count, count / seconds if seconds > 0 else 0.0] for name, seconds, count in rows]
    emit(cli_config, summary(cli_config, 'bench', config, n=args.n, d=args.d,
                             timings=[dict(zip(['operation', 'seconds', 'items', 'items_per_second'], row))
                                      for row in table]),
         ('bench', ['operation', 'seconds', 'items', 'items_per_second'], table))
    return 0


COMMANDS = {
    'gen': cmd_gen,
    'codebook': cmd_codebook,
    'quantize': cmd_quantize,
    'dequantize': cmd_dequantize,
    'stats': cmd_stats,
    'attend': cmd_attend,
    'validate': cmd_validate,
    'bench': cmd_bench,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=0, help='Seed for every random draw (default 0)')
    common.add_argument('--threads', type=int, default=None, help='Worker processes (default: all cores)')
    common.add_argument('--format', choices=[OutputFormat.JSON, OutputFormat.CSV], default=OutputFormat.JSON,
                        help='Report format')
    common.add_argument('--out', default=None, help='Output path (default: report on stdout)')

    quant = argparse.ArgumentParser(add_help=False)
    quant.add_argument('--levels', type=int, default=None, help='Recursion depth L')
    quant.add_argument('--bits', default='4,2,2,2', help='Comma separated bits per level')
    quant.add_argument('--radius-precision', default=RadiusPrecision.F16,
                       choices=[RadiusPrecision.F16, RadiusPrecision.F32, RadiusPrecision.F64])
    quant.add_argument('--codebook-mode', default=CodebookMode.ONLINE,
                       choices=[CodebookMode.ONLINE, CodebookMode.OFFLINE])
    quant.add_argument('--rotation-seed', type=int, default=0, help='Seed of the shared rotation')
    quant.add_argument('--no-precondition', action='store_true', help='Skip the random rotation')
    quant.add_argument('--append-mode', default=AppendMode.FP_TAIL, choices=[AppendMode.FP_TAIL, AppendMode.QUANTIZE])
    quant.add_argument('--offline-samples', type=int, default=100000, help='Samples per level for offline fits')

    parser = JsonErrorParser(prog='polarquant', description='Polar-coordinate quantization of embeddings')
    parser.add_argument('--version', action='version', version='polarquant %s' % __version__)
    sub = parser.add_subparsers(dest='command', parser_class=JsonErrorParser)
    sub.required = True

    p = sub.add_parser('gen', parents=[common], help='Write a synthetic tensor file')
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--d', type=int, required=True)
    p.add_argument('--distribution', choices=['gaussian', 'heavy-tailed'], default='gaussian')
    p.add_argument('--dtype', choices=[TensorDType.F32, TensorDType.F16], default=TensorDType.F32)

    p = sub.add_parser('codebook', parents=[common, quant], help='Build and save a codebook set')
    p.add_argument('--in', dest='input', default=None, help='Embeddings for online codebooks')

    p = sub.add_parser('quantize', parents=[common, quant], help='Encode a tensor file')
    p.add_argument('--in', dest='input', default=None)
    p.add_argument('--codebooks', default=None)

    p = sub.add_parser('dequantize', parents=[common], help='Decode a quantized file')
    p.add_argument('--in', dest='input', default=None)
    p.add_argument('--codebooks', default=None)
    p.add_argument('--reference', default=None, help='Original tensor for a reconstruction report')
    p.add_argument('--diff-csv', default=None, help='Per-row reconstruction csv, needs --reference')

    p = sub.add_parser('stats', parents=[common], help='Angle histograms and flattening statistics')
    p.add_argument('--in', dest='input', default=None)
    p.add_argument('--levels', type=int, default=None)
    p.add_argument('--bins', type=int, default=64)
    p.add_argument('--rotation-seed', type=int, default=0)

    p = sub.add_parser('attend', parents=[common, quant], help='Cache attention against exact attention')
    p.add_argument('--keys', default=None)
    p.add_argument('--values', default=None)
    p.add_argument('--queries', default=None)
    p.add_argument('--codebooks', default=None, help='Prebuilt codebooks shared by keys and values')

    p = sub.add_parser('validate', parents=[common], help='Run validation suites')
    p.add_argument('which', nargs='*', default='all', choices=ValidationSuite.ALL + ['all'])

    p = sub.add_parser('bench', parents=[common, quant], help='Encode, decode and attend throughput')
    p.add_argument('--n', type=int, default=1024)
    p.add_argument('--d', type=int, default=128)
    p.add_argument('--queries', type=int, default=16)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    cli_config = CliConfig.from_args(args)
    try:
        return COMMANDS[args.command](args, cli_config)
    except UsageError as exc:
        report_error('UsageError', str(exc))
        return 2
    except (PolarQuantError, OSError) as exc:
        report_error(type(exc).__name__, str(exc))
        return 1


if __name__ == '__main__':  # pragma: no cover
    sys.exit(main())
