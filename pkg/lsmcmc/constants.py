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

__title__ = 'lsmcmc'
__version__ = '0.1.0'
__build__ = ''
__license__ = 'Apache 2.0'
__version_info__ = tuple(__version__.split('.'))

# Subdomains of 2x2 grid cells when no count is configured
CELLS_PER_SUBDOMAIN = 4

# Localized ensemble analysis
DEFAULT_W0 = 1.0e-10

# Random-walk Metropolis kernel
DEFAULT_Q = 0.2
# Proposal steps are DEFAULT_PROPOSAL_SCALE / sqrt(d_k) in noise units
DEFAULT_PROPOSAL_SCALE = 2.0
BOUNDARY_RULES = ('printed', 'hastings')
# Proposal increments drawn per batch
PROPOSAL_CHUNK = 1024

# Relative ridge added to rank-deficient covariances before inversion
RIDGE_FACTOR = 1.0e-8

# Relative asymmetry tolerated in precision matrices
SYMMETRY_RTOL = 1.0e-10

GRAVITY = 9.81

# Swath geometry, in grid points
SWATH_WIDTH = 7
SWATH_SLOPE = 1.0
SWATH_STRIDE = 7
SWATH_PHASE = 0

# Number of free forward runs averaged for the drifter reference
REFERENCE_RUNS = 50

FILTER_NAMES = ('kf', 'enkf', 'lenkf', 'smcmc', 'lsmcmc')
