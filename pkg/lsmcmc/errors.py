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


import traceback
import pdb


class LsmcmcError(Exception):

    "Base class"

    # Names of keyword arguments kept on the instance
    _context = ()

    def __init__(self, *args, **kwargs):
        for name in self._context:
            setattr(self, name, kwargs.pop(name, None))
        super(LsmcmcError, self).__init__(*args, **kwargs)


class InvalidConfigError(LsmcmcError):

    "Raised when an experiment configuration is invalid"

    _context = ('section', 'key')


class PartitionError(LsmcmcError):

    "Raised when a grid cannot be partitioned or an index is out of range"

    _context = ('index',)


class DimensionError(LsmcmcError):

    """Vector or matrix shapes do not agree"""


class CovarianceError(LsmcmcError):

    """A covariance or precision matrix is unusable"""


class DryStateError(LsmcmcError):

    """The water depth is not positive somewhere on the grid"""

    _context = ('location',)


class CFLViolationError(LsmcmcError):

    """The time step exceeds the stability limit"""

    _context = ('courant',)


class ObservationError(LsmcmcError):

    """An observation batch is malformed"""

    _context = ('index',)


class DrifterError(LsmcmcError):

    """A drifter position became non-finite"""

    _context = ('drifter_id',)


class InnovationError(LsmcmcError):

    """The innovation system of an analysis step is singular"""

    _context = ('condition',)


class ChainError(LsmcmcError):

    """A Metropolis run is misconfigured or cannot start"""


class RunError(LsmcmcError):

    """A filter replica failed during an experiment"""

    _context = ('step', 'replica', 'partial')


def debug_except_hook(type, value, tb):
    print("Unhandled {0}; entering the debugger".format(type.__name__))
    traceback.print_exception(type, value, tb)
    pdb.post_mortem(tb)
