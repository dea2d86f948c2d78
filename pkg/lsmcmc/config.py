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
Experiment configuration.

Experiments are described by INI files; every key has a default, so an
empty file describes the linear swath benchmark. See README.rst for the
full schema.
'''

from __future__ import absolute_import
from __future__ import division
from __future__ import unicode_literals

import copy
import io
import logging
import os
from collections import namedtuple

from . import constants
from .compat import configparser, iteritems, string_types
from .errors import InvalidConfigError
from .grid import default_gamma
from .observations import SwathConfig
from .utils import normpath, split_list

log = logging.getLogger(__name__)

MODELS = ('linear', 'swe')
OBSERVATION_MODES = ('swath', 'full', 'drifters')
ANALYSIS_METHODS = ('auto', 'direct', 'smw')


def _boolean(value):
    if isinstance(value, bool):
        return value
    lowered = str(value).strip().lower()
    if lowered in ('1', 'yes', 'true', 'on'):
        return True
    if lowered in ('0', 'no', 'false', 'off'):
        return False
    raise ValueError("not a boolean: %r" % (value, ))


def _integers(value):
    return split_list(value, int)


# section -> [(key, converter, default)]
SCHEMA = {
    'experiment': [
        ('model', str, 'linear'),
        ('observations', str, 'swath'),
        ('filters', split_list, 'kf lsmcmc'),
        ('steps', int, 100),
        ('replicas', int, 20),
        ('seed', int, 0),
        ('seeds', _integers, ''),
        ('output', str, 'results'),
        ('threads', int, 1),
        ('sigma_y', float, 0.05),
        ('threshold', float, 0.0),
        ('reference_runs', int, constants.REFERENCE_RUNS),
        ('observation_file', str, ''),
    ],
    'linear': [
        ('dim', int, 0),
        ('nx', int, 33),
        ('ny', int, 33),
        ('a_scale', float, 0.25),
        ('sigma_z', float, 0.05),
    ],
    'swe': [
        ('nx', int, 32),
        ('ny', int, 32),
        ('dx', float, 2000.0),
        ('dy', float, 2000.0),
        ('depth', float, 100.0),
        ('seamount_height', float, 40.0),
        ('f0', float, 1.0e-4),
        ('beta', float, 2.0e-11),
        ('interval', float, 120.0),
        ('substeps', int, 10),
        ('bump_amplitude', float, 1.0),
        ('noise_modes', int, 4),
        ('noise_sigma', float, 0.01),
    ],
    'swath': [
        ('width', int, constants.SWATH_WIDTH),
        ('slope', float, constants.SWATH_SLOPE),
        ('stride', int, constants.SWATH_STRIDE),
        ('phase', int, constants.SWATH_PHASE),
    ],
    'drifters': [
        ('count', int, 16),
    ],
}

FILTER_SCHEMA = {
    'kf': [],
    'enkf': [
        ('n', int, 50),
        ('method', str, 'auto'),
    ],
    'lenkf': [
        ('n', int, 50),
        ('method', str, 'auto'),
        ('gamma', int, 0),
        ('r', float, 5.0),
        ('w0', float, constants.DEFAULT_W0),
    ],
    'smcmc': [
        ('n', int, 1000),
        ('n_burn', int, 500),
        ('q', float, constants.DEFAULT_Q),
        ('proposal_scale', float, constants.DEFAULT_PROPOSAL_SCALE),
        ('boundary_rule', str, 'printed'),
        ('scale_by_dimension', _boolean, True),
    ],
}
FILTER_SCHEMA['lsmcmc'] = FILTER_SCHEMA['smcmc'] + [('gamma', int, 0)]

LinearSpec = namedtuple("LinearSpec", "dim nx ny a_scale sigma_z")
SweSpec = namedtuple("SweSpec",
                     "nx ny dx dy depth seamount_height f0 beta interval "
                     "substeps bump_amplitude noise_modes noise_sigma")
DrifterSpec = namedtuple("DrifterSpec", "count")


class FilterSpec(namedtuple("FilterSpec",
                            "name N N_burn q proposal_scale boundary_rule "
                            "scale_by_dimension gamma r w0 method")):
    __slots__ = ()

    def __new__(cls, name, N=None, N_burn=0, q=constants.DEFAULT_Q,
                proposal_scale=constants.DEFAULT_PROPOSAL_SCALE,
                boundary_rule='printed', scale_by_dimension=True, gamma=1,
                r=None, w0=constants.DEFAULT_W0, method='auto'):
        return super(FilterSpec, cls).__new__(
            cls, name, N, N_burn, q, proposal_scale, boundary_rule,
            scale_by_dimension, gamma, r, w0, method)


def _read(parser, section, key, convert, default):
    if not parser.has_option(section, key):
        value = default
    else:
        value = parser.get(section, key)
    try:
        return convert(value)
    except (TypeError, ValueError) as e:
        raise InvalidConfigError("[%s] %s: cannot parse %r (%s)"
                                 % (section, key, value, e),
                                 section=section, key=key)


def _section(parser, section, schema):
    known = set(key for key, _, _ in schema)
    if parser.has_section(section):
        unknown = sorted(set(parser.options(section)) - known)
        if unknown:
            raise InvalidConfigError("[%s] unknown key %s"
                                     % (section, unknown[0]),
                                     section=section, key=unknown[0])
    return dict((key, _read(parser, section, key, convert, default))
                for key, convert, default in schema)


def _require(condition, section, key, message):
    if not condition:
        raise InvalidConfigError("[%s] %s: %s" % (section, key, message),
                                 section=section, key=key)


class ExperimentConfig(object):
    """
    A validated experiment.

    Build one with :meth:`from_file`, :meth:`from_string` or
    :meth:`from_dict`; the constructor takes an already filled
    ConfigParser.
    """

    def __init__(self, parser, base=None):
        self.parser = parser
        for section in parser.sections():
            if section not in SCHEMA and section not in FILTER_SCHEMA:
                raise InvalidConfigError("Unknown section [%s]" % section,
                                         section=section)
        experiment = _section(parser, 'experiment', SCHEMA['experiment'])
        self.model = experiment['model']
        self.observations = experiment['observations']
        self.filter_names = experiment['filters']
        self.T = experiment['steps']
        self.M = experiment['replicas']
        self.seed = experiment['seed']
        self.seeds = experiment['seeds']
        self.out = experiment['output']
        self.threads = experiment['threads']
        self.sigma_y = experiment['sigma_y']
        self.threshold = experiment['threshold'] or self.sigma_y / 2.0
        self.reference_runs = experiment['reference_runs']
        self.observation_file = None
        if experiment['observation_file']:
            self.observation_file = normpath(experiment['observation_file'],
                                             base)

        self.linear = LinearSpec(**_section(parser, 'linear',
                                            SCHEMA['linear']))
        self.swe = SweSpec(**_section(parser, 'swe', SCHEMA['swe']))
        swath = _section(parser, 'swath', SCHEMA['swath'])
        self.drifters = DrifterSpec(**_section(parser, 'drifters',
                                               SCHEMA['drifters']))
        self.filters = [self._filter(name) for name in self.filter_names]
        self.validate(swath)

    @classmethod
    def from_file(cls, path):
        parser = configparser.ConfigParser(interpolation=None)
        with io.open(path, encoding='utf-8') as fh:
            parser.read_file(fh, source=path)
        log.debug("Read experiment configuration from %s", path)
        return cls(parser, base=os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_string(cls, text):
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_string(text)
        return cls(parser)

    @classmethod
    def from_dict(cls, sections):
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_dict(dict(
            (name, dict((k, _format(v)) for k, v in iteritems(values)))
            for name, values in iteritems(sections)))
        return cls(parser)

    def _filter(self, name):
        if name not in FILTER_SCHEMA:
            raise InvalidConfigError("Unknown filter %r; expected one of %s"
                                     % (name,
                                        ', '.join(constants.FILTER_NAMES)),
                                     section='experiment', key='filters')
        values = _section(self.parser, name, FILTER_SCHEMA[name])
        if 'n' in values:
            values['N'] = values.pop('n')
        if 'n_burn' in values:
            values['N_burn'] = values.pop('n_burn')
        if values.get('gamma') == 0:
            values['gamma'] = default_gamma(*self.grid_shape)
        return FilterSpec(name, **values)

    @property
    def grid_shape(self):
        spec = self.linear if self.model == 'linear' else self.swe
        return spec.nx, spec.ny

    def validate(self, swath):
        """Checks every parameter; raises :class:`InvalidConfigError`."""
        _require(self.model in MODELS, 'experiment', 'model',
                 "expected one of %s" % ', '.join(MODELS))
        _require(self.observations in OBSERVATION_MODES, 'experiment',
                 'observations',
                 "expected one of %s" % ', '.join(OBSERVATION_MODES))
        _require(not (self.model == 'linear' and
                      self.observations == 'drifters'),
                 'experiment', 'observations',
                 "drifters need the shallow-water model")
        _require(self.filter_names, 'experiment', 'filters',
                 "no filter selected")
        _require(len(set(self.filter_names)) == len(self.filter_names),
                 'experiment', 'filters', "filters listed twice")
        _require(not ('kf' in self.filter_names and self.model != 'linear'),
                 'experiment', 'filters',
                 "the Kalman filter needs the linear model")
        _require(self.T >= 1, 'experiment', 'steps', "must be >= 1")
        _require(self.M >= 1, 'experiment', 'replicas', "must be >= 1")
        _require(not self.seeds or len(self.seeds) >= self.M, 'experiment',
                 'seeds', "%d seeds for %d replicas"
                 % (len(self.seeds), self.M))
        _require(self.threads != 0, 'experiment', 'threads',
                 "must be nonzero")
        _require(self.sigma_y > 0, 'experiment', 'sigma_y', "must be > 0")
        _require(self.threshold > 0, 'experiment', 'threshold',
                 "must be > 0")
        _require(self.reference_runs >= 1, 'experiment', 'reference_runs',
                 "must be >= 1")

        lin = self.linear
        _require(lin.dim >= 0, 'linear', 'dim', "must be >= 0")
        if self.model == 'linear' and lin.dim:
            _require(self.observations == 'full', 'experiment',
                     'observations', "a gridless state is observed in full")
            _require(not set(self.filter_names) & set(('lenkf', 'lsmcmc')),
                     'experiment', 'filters',
                     "localized filters need a grid")
        _require(lin.dim or (lin.nx >= 2 and lin.ny >= 2), 'linear', 'nx',
                 "the grid needs at least 2x2 points")
        _require(abs(lin.a_scale) <= 1, 'linear', 'a_scale',
                 "must satisfy |a_scale| <= 1")
        _require(lin.sigma_z > 0, 'linear', 'sigma_z', "must be > 0")

        swe = self.swe
        _require(swe.nx >= 3 and swe.ny >= 3, 'swe', 'nx',
                 "the shallow-water grid needs at least 3x3 points")
        _require(swe.dx > 0 and swe.dy > 0, 'swe', 'dx', "must be > 0")
        _require(swe.depth > swe.seamount_height >= 0, 'swe',
                 'seamount_height', "must lie in [0, depth)")
        _require(swe.interval > 0, 'swe', 'interval', "must be > 0")
        _require(swe.substeps >= 1, 'swe', 'substeps', "must be >= 1")
        _require(swe.noise_modes >= 1, 'swe', 'noise_modes', "must be >= 1")
        _require(swe.noise_sigma >= 0, 'swe', 'noise_sigma', "must be >= 0")

        nx = self.grid_shape[0]
        _require(self.observations != 'swath' or 1 <= swath['width'] <= nx,
                 'swath', 'width', "must lie in [1, %d]" % nx)
        _require(swath['stride'] >= 1, 'swath', 'stride', "must be >= 1")
        _require(swath['slope'] >= 0, 'swath', 'slope', "must be >= 0")
        self.swath = SwathConfig(swath['width'], swath['slope'],
                                 swath['stride'], swath['phase'])
        _require(self.drifters.count >= 1, 'drifters', 'count',
                 "must be >= 1")

        for spec in self.filters:
            self._validate_filter(spec)

    def _validate_filter(self, spec):
        name = spec.name
        if name == 'kf':
            return
        _require(spec.N >= (2 if 'enkf' in name else 1), name, 'n',
                 "too few samples")
        if 'enkf' in name:
            _require(spec.method in ANALYSIS_METHODS, name, 'method',
                     "expected one of %s" % ', '.join(ANALYSIS_METHODS))
        else:
            _require(spec.N_burn >= 0, name, 'n_burn', "must be >= 0")
            _require(0 < spec.q <= 0.5, name, 'q', "must lie in (0, 1/2]")
            _require(spec.proposal_scale > 0, name, 'proposal_scale',
                     "must be > 0")
            _require(spec.boundary_rule in constants.BOUNDARY_RULES, name,
                     'boundary_rule', "expected one of %s"
                     % ', '.join(constants.BOUNDARY_RULES))
        if name in ('lenkf', 'lsmcmc'):
            _require(spec.gamma >= 1, name, 'gamma', "must be >= 1")
        if name == 'lenkf':
            _require(spec.r > 0, name, 'r', "must be > 0")
            _require(0 < spec.w0 < 1, name, 'w0', "must lie in (0, 1)")

    def override(self, seed=None, out=None, threads=None):
        """A copy with command line values in place of the file's."""
        other = copy.copy(self)
        if seed is not None:
            other.seed = int(seed)
        if out is not None:
            other.out = out
        if threads is not None:
            _require(threads != 0, 'experiment', 'threads',
                     "must be nonzero")
            other.threads = int(threads)
        return other

    def filter_spec(self, name):
        for spec in self.filters:
            if spec.name == name:
                return spec
        raise KeyError(name)

    def to_string(self):
        """The effective configuration, command line overrides included."""
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_dict(self.parser)
        if not parser.has_section('experiment'):
            parser.add_section('experiment')
        parser.set('experiment', 'seed', str(self.seed))
        parser.set('experiment', 'output', self.out)
        parser.set('experiment', 'threads', str(self.threads))
        out = io.StringIO()
        parser.write(out)
        return out.getvalue()


def _format(value):
    if isinstance(value, string_types):
        return value
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (list, tuple)):
        return ' '.join(str(v) for v in value)
    return str(value)
