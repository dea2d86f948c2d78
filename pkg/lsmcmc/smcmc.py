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
Sequential MCMC filters.

At every assimilation time a random-walk Metropolis chain targets the
mixture of transition densities centred at the previous step's forecasts,
weighted by the observation likelihood. The chain runs jointly over a
state and an auxiliary index picking the mixture component. The localized
variant runs the chain only on the rows of the active set and fills the
other rows of each retained sample from its noisy forecast.

Bank indices are 0-based: j lies in 0 .. n_bank - 1.
'''

from __future__ import absolute_import
from __future__ import division
from __future__ import unicode_literals

import logging
import math
from collections import namedtuple

import numpy as np

from . import constants
from .errors import ChainError, DimensionError
from .grid import active_set
from .observations import forecast, obs_loglik, relocate

log = logging.getLogger(__name__)

ChainState = namedtuple("ChainState", "current j log_pi_old accept_count")
ChainResult = namedtuple("ChainResult", "samples indices acceptance_rate")
StepResult = namedtuple("StepResult", "bank mean acceptance_rate d_k")


class ChainConfig(namedtuple("ChainConfig",
                             "N N_burn q proposal_scale seed boundary_rule "
                             "scale_by_dimension")):
    """
    Settings of one Metropolis run.

    Proposals are ``c * W`` with ``W ~ N(0, Q)`` on the chained rows and
    ``c = proposal_scale``, divided by the square root of the number of
    chained rows when scale_by_dimension is set (the default).
    """
    __slots__ = ()

    def __new__(cls, N, N_burn=0, q=constants.DEFAULT_Q,
                proposal_scale=constants.DEFAULT_PROPOSAL_SCALE, seed=None,
                boundary_rule='printed', scale_by_dimension=True):
        if int(N) < 1:
            raise ChainError("Need at least one retained sample")
        if int(N_burn) < 0:
            raise ChainError("Burn-in length must be nonnegative")
        if not 0 < q <= 0.5:
            raise ChainError("Index move probability must lie in (0, 1/2], "
                             "got %r" % (q, ))
        if not proposal_scale > 0:
            raise ChainError("Proposal scale must be positive")
        if boundary_rule not in constants.BOUNDARY_RULES:
            raise ChainError("Unknown boundary rule %r; expected one of %s"
                             % (boundary_rule,
                                ', '.join(constants.BOUNDARY_RULES)))
        return super(ChainConfig, cls).__new__(
            cls, int(N), int(N_burn), float(q), float(proposal_scale), seed,
            boundary_rule, bool(scale_by_dimension))

    @property
    def iterations(self):
        return self.N + self.N_burn


class SampleBank(namedtuple("SampleBank",
                            "samples propagated noisy_forecasts")):
    """
    samples are the retained states of the previous time, propagated
    their deterministic forecasts, noisy_forecasts the forecasts plus
    fresh state noise. All are (n, dim).
    """
    __slots__ = ()

    def __new__(cls, samples, propagated=None, noisy_forecasts=None):
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        for name, value in (('propagated', propagated),
                            ('noisy_forecasts', noisy_forecasts)):
            if value is not None and np.shape(value)[-1] != samples.shape[1]:
                raise DimensionError("%s has shape %s, samples %s"
                                     % (name, np.shape(value),
                                        samples.shape))
        return super(SampleBank, cls).__new__(cls, samples, propagated,
                                              noisy_forecasts)

    @property
    def size(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]


def _propose_index(j, u, n, q):
    if n == 1:
        return j
    if j == 0:
        return 1
    if j == n - 1:
        return n - 2
    if u < q:
        return j - 1
    if u < 2 * q:
        return j + 1
    return j


def _move_probability(a, b, n, q):
    if a == 0 or a == n - 1:
        return 1.0
    return q if a != b else 1.0 - 2 * q


def index_log_factor(j, j_new, n, q, rule='printed'):
    """Log of the factor the index move adds to the acceptance ratio."""
    if n == 1 or j_new == j:
        return 0.0
    if rule == 'printed':
        return math.log(q) if j in (0, n - 1) else 0.0
    return (math.log(_move_probability(j_new, j, n, q)) -
            math.log(_move_probability(j, j_new, n, q)))


def _increments(proposal, rng, size, dim):
    if proposal is None:
        return rng.standard_normal((size, dim))
    return proposal.sample(rng, size)


def rwm_joint_kernel(n_bank, target, cfg, init, rng, proposal=None):
    """
    Random-walk Metropolis over (state, index).

    :param n_bank: number of mixture components; 1 freezes the index
    :param target: ``target(z, j)`` returning a log density
    :param cfg: :class:`ChainConfig`
    :param init: ``(z0, j0)``
    :param proposal: covariance operator of the state increments, or None
        for the identity
    :returns: :class:`ChainResult` with the last N states and indices
    """
    z = np.array(init[0], dtype=float)
    j = int(init[1])
    if not 0 <= j < n_bank:
        raise ChainError("Initial index %d outside 0..%d" % (j, n_bank - 1))
    log_pi = target(z, j)
    if not np.isfinite(log_pi):
        raise ChainError("Target is not finite at the initial state")
    dim = z.size
    scale = cfg.proposal_scale
    if cfg.scale_by_dimension:
        scale /= math.sqrt(dim)
    state = ChainState(z, j, log_pi, 0)

    samples = np.empty((cfg.N, dim))
    indices = np.empty(cfg.N, dtype=np.intp)
    done = 0
    while done < cfg.iterations:
        size = min(constants.PROPOSAL_CHUNK, cfg.iterations - done)
        steps = scale * _increments(proposal, rng, size, dim)
        uniforms = rng.random((size, 2))
        for n in range(size):
            state = _transition(state, steps[n], uniforms[n], n_bank,
                                target, cfg)
            kept = done + n - cfg.N_burn
            if kept >= 0:
                samples[kept] = state.current
                indices[kept] = state.j
        done += size

    rate = state.accept_count / cfg.iterations
    if state.accept_count == 0:
        log.warning("No proposal accepted in %d iterations", cfg.iterations)
    return ChainResult(samples, indices, rate)


def _transition(state, step, uniform, n_bank, target, cfg):
    j_new = _propose_index(state.j, uniform[0], n_bank, cfg.q)
    z_new = state.current + step
    log_pi_new = target(z_new, j_new)
    log_alpha = (log_pi_new - state.log_pi_old +
                 index_log_factor(state.j, j_new, n_bank, cfg.q,
                                  cfg.boundary_rule))
    if log_alpha >= 0 or uniform[1] < math.exp(log_alpha):
        return ChainState(z_new, j_new, log_pi_new, state.accept_count + 1)
    return state


def estimate(samples, phi=None):
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if phi is None:
        return samples.mean(axis=0)
    return np.mean([phi(z) for z in samples], axis=0)


def multi_run_mean(means):
    """Coordinatewise average of per-replica filter means."""
    means = [np.asarray(m, dtype=float) for m in means]
    if not means:
        raise DimensionError("No replica means to average")
    shapes = set(m.shape for m in means)
    if len(shapes) != 1:
        raise DimensionError("Replica means have shapes %s"
                             % sorted(shapes))
    return np.mean(means, axis=0)


def forecast_bank(model, bank, t_prev=None, t_next=None, drifters=None):
    """The bank with its deterministic forecasts filled in, and the new
    drifter estimate."""
    propagated, drifters = forecast(model, bank.samples, t_prev, t_next,
                                    drifters)
    return bank._replace(propagated=propagated), drifters


def _noisy_forecasts(bank, cov_q, N, rng):
    noise = np.atleast_2d(cov_q.sample(rng, N))
    return bank.propagated[np.arange(N) % bank.size] + noise


def _chain_step(bank, batch, cov_q, cfg, rng, layout, partition=None):
    if bank.propagated is None:
        raise ChainError("Sample bank has no forecasts")
    n_bank = bank.size
    noisy = _noisy_forecasts(bank, cov_q, cfg.N, rng)
    if batch is None or batch.size == 0:
        log.debug("No observations; keeping the noisy forecasts")
        return StepResult(SampleBank(noisy, bank.propagated, noisy),
                          estimate(noisy), float('nan'), 0)

    if partition is None:
        rows = np.arange(layout.dim)
        local_cov = cov_q
    else:
        active = active_set(partition, batch.locations, batch.k)
        rows = layout.state_indices(active.points)
        local_cov = cov_q.localize(active, layout)
    obs_pos = np.searchsorted(rows, batch.state_indices(layout))
    centers = bank.propagated[:, rows]

    def target(z, j):
        return (obs_loglik(z[obs_pos], batch) +
                local_cov.logpdf(z - centers[j]))

    j0 = int(rng.integers(n_bank))
    result = rwm_joint_kernel(n_bank, target, cfg, (noisy[j0, rows], j0),
                              rng, proposal=local_cov)
    if n_bank == 1:
        # First step: the noisy forecast the chain starts from fills every
        # row outside the active set
        samples = np.repeat(noisy[j0:j0 + 1], cfg.N, axis=0)
    else:
        samples = noisy.copy()
    samples[:, rows] = result.samples
    log.debug("k=%d: chained %d of %d rows, acceptance %.3f",
              batch.k, rows.size, layout.dim, result.acceptance_rate)
    return StepResult(SampleBank(samples, bank.propagated, noisy),
                      estimate(samples), result.acceptance_rate, rows.size)


def smcmc_step(bank, batch, cov_q, cfg, rng, layout):
    """
    One assimilation over the full state.

    A bank of a single sample (the first step) leaves the index frozen and
    the chain targets the posterior given that one forecast.
    """
    return _chain_step(bank, batch, cov_q, cfg, rng, layout)


def lsmcmc_step(bank, batch, cov_q, partition, cfg, rng, layout):
    """
    One assimilation restricted to the active set of the batch.

    The chain perturbs and scores only the active rows. Outside the active
    set, sample i is the i-th noisy forecast; on the first step, with a
    bank of one, every sample shares the forecast the chain started from.
    """
    return _chain_step(bank, batch, cov_q, cfg, rng, layout,
                       partition=partition)


class SMCMCFilter(object):
    name = 'smcmc'

    def __init__(self, model, cov_q, layout, cfg, rng, drifters=None):
        self.model = model
        self.cov_q = cov_q
        self.layout = layout
        self.cfg = cfg
        self.rng = rng
        self.drifters = drifters
        self.bank = None
        self.diagnostics = None

    @property
    def partition(self):
        return None

    def initialize(self, z0):
        self.bank = SampleBank(self.layout.validate(z0))

    def assimilate(self, batch, t_prev=None, t_next=None):
        bank, self.drifters = forecast_bank(self.model, self.bank, t_prev,
                                            t_next, self.drifters)
        if self.drifters is not None and batch is not None:
            batch = relocate(batch, self.drifters.mean_positions,
                             self.layout.grid)
        result = _chain_step(bank, batch, self.cov_q, self.cfg, self.rng,
                             self.layout, partition=self.partition)
        self.bank = SampleBank(result.bank.samples)
        self.diagnostics = dict(acceptance_rate=result.acceptance_rate,
                                d_k=result.d_k)
        return result.mean


class LSMCMCFilter(SMCMCFilter):
    name = 'lsmcmc'

    def __init__(self, model, cov_q, layout, cfg, rng, partition,
                 drifters=None):
        super(LSMCMCFilter, self).__init__(model, cov_q, layout, cfg, rng,
                                           drifters=drifters)
        self._partition = partition

    @property
    def partition(self):
        return self._partition
