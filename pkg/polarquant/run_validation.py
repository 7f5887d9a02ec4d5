#!/usr/bin/env python
# -*- coding: utf-8 -*-

import argparse
import sys
from datetime import datetime
from multiprocessing import Process, Queue, freeze_support

from polarquant import theory_validation
from polarquant.diffs import thresh_dict as td
from polarquant.errors import InvalidArgument
from polarquant.structures import CompletedValidation, SuiteResult, ValidationSuite


class ValidationRunConfiguration:
    def __init__(self, suites, num_threads=1, seed=0, thresh_dict_file=td.DEFAULT_CONFIG):
        self.suites = [ValidationSuite.validate(s) for s in suites]
        if not self.suites:
            raise InvalidArgument('At least one validation suite is required')
        if int(num_threads) != num_threads or num_threads < 1:
            raise InvalidArgument('Thread count must be a positive integer, got %s' % num_threads)
        self.num_threads = int(num_threads)
        self.seed = seed
        self.thresh_dict_file = thresh_dict_file

    def to_dict(self):
        response = dict()
        response['suites'] = self.suites
        response['num_threads'] = self.num_threads
        response['thresh_dict_file'] = self.thresh_dict_file
        return response


def execute_suite(suite, seed, thresh_dict_file):
    """Runs in the worker processes, so arguments and results stay picklable"""
    start_time = datetime.now()
    passed, report = theory_validation.run_suite(suite, seed, td.ThreshDict(thresh_dict_file))
    runtime = (datetime.now() - start_time).total_seconds()
    return suite, passed, report, runtime


def threaded_worker(input_data, output):  # pragma: no cover - even with multiprocess, coverage misses this
    for func, these_args in iter(input_data.get, 'STOP'):
        output.put(func(*these_args))


class SuiteRunner:

    def __init__(self, run_config):

        # initialize callbacks
        self.print_callback = None
        self.starting_callback = None
        self.suite_completed_callback = None
        self.all_done_callback = None

        self.suites = run_config.suites
        self.number_of_threads = min(run_config.num_threads, len(run_config.suites))
        self.seed = run_config.seed
        self.thresh_dict_file = run_config.thresh_dict_file
        self.run_config = run_config

        # Required to avoid stalls
        if self.number_of_threads == 1:
            freeze_support()

    def run_validation(self):
        self.my_starting(len(self.suites))
        results = CompletedValidation(self.seed, self.run_config.to_dict())
        tasks = [(execute_suite, (suite, self.seed, self.thresh_dict_file)) for suite in self.suites]

        if self.number_of_threads == 1:
            for func, these_args in tasks:
                self.record(results, func(*these_args))
        else:
            task_queue = Queue()
            done_queue = Queue()
            for task in tasks:
                task_queue.put(task)
            for i in range(self.number_of_threads):
                p = Process(target=threaded_worker, args=(task_queue, done_queue))
                p.daemon = True
                p.start()
            for i in range(len(tasks)):
                self.record(results, done_queue.get())
            # Tell child processes to stop
            for i in range(self.number_of_threads):
                task_queue.put('STOP')

        self.my_alldone(results)
        return results

    def record(self, results, ret):
        suite_result = SuiteResult(*ret)
        results.add_result(suite_result)
        self.my_suitecompleted(suite_result)

    def add_callbacks(self, print_callback, starting_callback, suite_completed_callback, all_done_callback):
        self.print_callback = print_callback
        self.starting_callback = starting_callback
        self.suite_completed_callback = suite_completed_callback
        self.all_done_callback = all_done_callback

    def my_print(self, msg):
        if self.print_callback:
            self.print_callback(msg)
        else:  # pragma: no cover
            print(msg)

    def my_starting(self, number_of_suites):
        if self.starting_callback:
            self.starting_callback(number_of_suites)
        else:  # pragma: no cover
            self.my_print('Starting validation, # suites = %i, # threads = %i' % (
                number_of_suites, self.number_of_threads))

    def my_suitecompleted(self, suite_result):
        if self.suite_completed_callback:
            self.suite_completed_callback(suite_result)
        else:  # pragma: no cover
            self.my_print('Suite complete: %s : %s (%.1f s)' % (
                suite_result.suite, 'passed' if suite_result.passed else 'FAILED', suite_result.runtime_seconds))

    def my_alldone(self, results):
        if self.all_done_callback:
            self.all_done_callback(results)
        else:  # pragma: no cover
            self.my_print('Completed validation, failed suites: %s' % (results.failed_suites or 'none'))


if __name__ == "__main__":  # pragma: no cover

    parser = argparse.ArgumentParser(description='Run the polarquant validation suites')
    parser.add_argument('suites', nargs='*', default=ValidationSuite.ALL, help='Suites to run, default all')
    parser.add_argument('-j', action='store', dest='j', type=int, default=1, help='Number of processors to use')
    parser.add_argument('-s', action='store', dest='s', type=int, default=0, help='Seed')
    parser.add_argument('-o', action='store', dest='o', default=None, help='Path for the JSON summary')
    args = parser.parse_args()

    Runner = SuiteRunner(ValidationRunConfiguration(args.suites, args.j, args.s))
    Results = Runner.run_validation()
    if args.o:
        Results.to_json_summary(args.o)
    sys.exit(0 if Results.all_passed else 1)
