#
# Copyright (c) SAS Institute Inc.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#

'''
Command line entry point: ``lsmcmc run``, ``lsmcmc metric`` and
``lsmcmc convergence``.
'''

from __future__ import absolute_import
from __future__ import print_function
from __future__ import unicode_literals

import argparse
import logging
import os
import sys

from . import constants
from .config import ExperimentConfig
from .errors import LsmcmcError, debug_except_hook
from .harness import (
    convergence_study,
    error_metric,
    read_means,
    run_experiment,
)
from .utils import makedirs

log = logging.getLogger(__name__)


def _add_overrides(parser):
    parser.add_argument("config", help="Experiment configuration (INI)")
    parser.add_argument("--seed", type=int, default=None,
                        help="Seed for truth, observations and replicas")
    parser.add_argument("--out", default=None, help="Output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="Replicas run in parallel (-1: all cores)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog='lsmcmc',
        description="Localized sequential MCMC filtering benchmarks")
    parser.add_argument("--version", action='version',
                        version="%(prog)s " + constants.__version__)
    parser.add_argument("-v", "--verbose", action='count', default=0,
                        help="More logging; repeat for debug output")
    parser.add_argument("--debug", action='store_true',
                        help="Drop into the debugger on errors")
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    run = commands.add_parser('run', help="Run an experiment")
    _add_overrides(run)
    run.set_defaults(func=cmd_run)

    metric = commands.add_parser(
        'metric', help="Percentage of absolute errors below a threshold")
    metric.add_argument("means", help="Filter means CSV")
    metric.add_argument("reference", help="Reference means CSV")
    metric.add_argument("threshold", type=float, help="Error threshold")
    metric.set_defaults(func=cmd_metric)

    convergence = commands.add_parser(
        'convergence', help="Error against sample size on the linear model")
    _add_overrides(convergence)
    convergence.add_argument("N", type=int, nargs='+', help="Sample sizes")
    convergence.add_argument("--filter", default='smcmc',
                             choices=('smcmc', 'lsmcmc'),
                             help="Filter to study (default: %(default)s)")
    convergence.set_defaults(func=cmd_convergence)
    return parser


def _load(args):
    cfg = ExperimentConfig.from_file(args.config)
    return cfg.override(seed=args.seed, out=args.out, threads=args.threads)


def cmd_run(args):
    result = run_experiment(_load(args))
    print(result.summary.to_string(index=False))
    return 0


def cmd_metric(args):
    pct = error_metric(read_means(args.means), read_means(args.reference),
                       args.threshold)
    print("%.4f" % pct)
    return 0


def cmd_convergence(args):
    cfg = _load(args)
    result = convergence_study(cfg, args.N, filter_name=args.filter)
    path = os.path.join(makedirs(cfg.out), 'convergence.csv')
    result.table.to_csv(path, index=False, float_format='%.17g')
    print(result.table.to_string(index=False))
    print("slope %.4f" % result.slope)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[
        min(args.verbose, 2)]
    logging.basicConfig(level=level,
                        format="%(asctime)s %(levelname)s %(name)s: "
                               "%(message)s")
    if args.debug:
        sys.excepthook = debug_except_hook
        return args.func(args)
    try:
        return args.func(args)
    except (LsmcmcError, IOError, ValueError) as e:
        log.error("%s", e)
        return 1


if __name__ == '__main__':
    sys.exit(main())
