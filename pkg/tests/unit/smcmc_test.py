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
from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import math
from collections import namedtuple

import numpy as np

from lsmcmc import smcmc
from lsmcmc.dynamics import LinearModel, StateLayout, VectorLayout
from lsmcmc.errors import ChainError, DimensionError
from lsmcmc.gaussian import KalmanFilter
from lsmcmc.grid import GridSpec, active_set, make_partition
from lsmcmc.noise import DiagonalCovariance
from lsmcmc.observations import (ObservationBatch, SwathConfig,
                                 synthesize_observations)

from tests import base

FIG_LOCATIONS = [0, 30, 33, 63, 66, 1, 31, 88, 99]


def _batch_means_se(x, batches=50):
    means = np.array([b.mean(axis=0) for b in np.array_split(x, batches)])
    return means.std(axis=0, ddof=1) / math.sqrt(batches)


def _isotropic(z, j):
    return -0.5 * float(np.dot(z, z))


class ChainConfigTests(base.BaseTestCase):

    Invalid = namedtuple("Invalid", "kwargs")

    def test_defaults(self):
        cfg = smcmc.ChainConfig(100, 50)
        self.assertEqual(150, cfg.iterations)
        self.assertEqual(0.2, cfg.q)
        self.assertEqual('printed', cfg.boundary_rule)
        self.assertEqual(2.0, cfg.proposal_scale)
        self.assertTrue(cfg.scale_by_dimension)

    def test_invalid(self):
        cases = [
            self.Invalid(dict(N=0)),
            self.Invalid(dict(N=10, N_burn=-1)),
            self.Invalid(dict(N=10, q=0.0)),
            self.Invalid(dict(N=10, q=0.6)),
            self.Invalid(dict(N=10, proposal_scale=0.0)),
            self.Invalid(dict(N=10, boundary_rule='reflect')),
        ]
        for case in cases:
            self.assertRaises(ChainError, smcmc.ChainConfig, **case.kwargs)
        # q = 1/2 is allowed
        self.assertEqual(0.5, smcmc.ChainConfig(10, q=0.5).q)


class IndexMoveTests(base.BaseTestCase):

    def test_ends_move_inward(self):
        for u in (0.0, 0.3, 0.99):
            self.assertEqual(1, smcmc._propose_index(0, u, 5, 0.2))
            self.assertEqual(3, smcmc._propose_index(4, u, 5, 0.2))
            self.assertEqual(2, smcmc._propose_index(2, u, 1, 0.2))

    def test_interior_walk(self):
        self.assertEqual(1, smcmc._propose_index(2, 0.1, 5, 0.2))
        self.assertEqual(3, smcmc._propose_index(2, 0.3, 5, 0.2))
        self.assertEqual(2, smcmc._propose_index(2, 0.5, 5, 0.2))

    def test_two_components_always_move(self):
        for u in np.linspace(0.0, 0.999, 7):
            self.assertEqual(1, smcmc._propose_index(0, u, 2, 0.5))
            self.assertEqual(0, smcmc._propose_index(1, u, 2, 0.5))

    def test_log_factor(self):
        q = 0.25
        f = smcmc.index_log_factor
        self.assertEqual(math.log(q), f(0, 1, 4, q))
        self.assertEqual(math.log(q), f(3, 2, 4, q))
        self.assertEqual(0.0, f(1, 0, 4, q))
        self.assertEqual(0.0, f(1, 1, 4, q))
        self.assertAlmostEqual(math.log(q), f(0, 1, 4, q, 'hastings'))
        self.assertAlmostEqual(-math.log(q), f(1, 0, 4, q, 'hastings'))
        self.assertEqual(0.0, f(1, 2, 4, q, 'hastings'))
        self.assertEqual(0.0, f(0, 1, 2, q, 'hastings'))
        self.assertEqual(0.0, f(0, 0, 1, q))


class KernelTests(base.BaseTestCase):

    def test_degenerate_proposal(self):
        cfg = smcmc.ChainConfig(200, 10, proposal_scale=1e-300)
        result = smcmc.rwm_joint_kernel(1, _isotropic, cfg, ([1.0, 2.0], 0),
                                        self.rng())
        np.testing.assert_array_equal(np.tile([1.0, 2.0], (200, 1)),
                                      result.samples)
        np.testing.assert_array_equal(np.zeros(200), result.indices)

    def test_isotropic_gaussian(self):
        cfg = smcmc.ChainConfig(50000, 1000, proposal_scale=2.38,
                                scale_by_dimension=True)
        result = smcmc.rwm_joint_kernel(1, _isotropic, cfg, ([3.0, -3.0], 0),
                                        self.rng(12))
        samples = result.samples
        self.assertEqual((50000, 2), samples.shape)
        se = _batch_means_se(samples)
        self.assertTrue(np.all(np.abs(samples.mean(axis=0)) <= 5 * se))
        np.testing.assert_allclose(np.eye(2), np.cov(samples.T), rtol=0,
                                   atol=0.1)
        self.assertTrue(0.2 < result.acceptance_rate < 0.6)

    def test_two_component_bank_alternates(self):
        cfg = smcmc.ChainConfig(20, q=0.5, proposal_scale=1e-300,
                                boundary_rule='hastings')
        result = smcmc.rwm_joint_kernel(2, _isotropic, cfg, ([0.5], 0),
                                        self.rng())
        np.testing.assert_array_equal([1, 0] * 10, result.indices)
        self.assertEqual(1.0, result.acceptance_rate)

    def test_zero_acceptance_is_a_warning(self):
        def spike(z, j):
            return 0.0 if not np.any(z) else -np.inf

        cfg = smcmc.ChainConfig(30)
        with self.assertLogs('lsmcmc.smcmc', level='WARNING'):
            result = smcmc.rwm_joint_kernel(1, spike, cfg, ([0.0], 0),
                                            self.rng())
        self.assertEqual(0.0, result.acceptance_rate)
        np.testing.assert_array_equal(np.zeros((30, 1)), result.samples)

    def test_bad_init(self):
        cfg = smcmc.ChainConfig(5)
        self.assertRaises(ChainError, smcmc.rwm_joint_kernel, 1,
                          lambda z, j: -np.inf, cfg, ([0.0], 0), self.rng())
        self.assertRaises(ChainError, smcmc.rwm_joint_kernel, 2, _isotropic,
                          cfg, ([0.0], 2), self.rng())

    def test_same_seed_same_chain(self):
        cfg = smcmc.ChainConfig(1500, 100)
        runs = [smcmc.rwm_joint_kernel(3, _isotropic, cfg, ([0.0, 0.0], 1),
                                       self.rng(4)) for _ in range(2)]
        np.testing.assert_array_equal(runs[0].samples, runs[1].samples)
        np.testing.assert_array_equal(runs[0].indices, runs[1].indices)

    @base.slow
    def test_index_marginal(self):
        centers = np.array([[-1.0, 0.5], [0.0, 0.0], [1.5, -1.0]])
        y, r = 0.5, 0.5

        def target(z, j):
            d = z - centers[j]
            return -0.5 * float(np.dot(d, d)) - 0.5 * (y - z[0]) ** 2 / r

        cfg = smcmc.ChainConfig(200000, 2000, q=0.3, proposal_scale=1.0,
                                boundary_rule='hastings',
                                scale_by_dimension=False)
        result = smcmc.rwm_joint_kernel(3, target, cfg, ([0.0, 0.0], 1),
                                        self.rng(99))
        # Integrating z out leaves a Gaussian in the first centre coordinate
        weights = np.exp(-0.5 * (y - centers[:, 0]) ** 2 / (1.0 + r))
        expected = weights / weights.sum()
        hits = np.equal.outer(result.indices, np.arange(3)).astype(float)
        se = _batch_means_se(hits, batches=100)
        np.testing.assert_array_less(np.abs(hits.mean(axis=0) - expected),
                                     5 * se)


class EstimateTests(base.BaseTestCase):

    def test_estimate(self):
        z = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(z, smcmc.estimate(np.tile(z, (4, 1))))
        np.testing.assert_array_equal(
            [2.0, 3.0], smcmc.estimate([[1.0, 2.0], [3.0, 4.0]]))
        samples = self.rng(2).standard_normal((101, 3))
        expected = math.fsum(s[0] ** 2 for s in samples) / 101
        self.assertAlmostEqual(
            expected, smcmc.estimate(samples, phi=lambda s: s[0] ** 2),
            places=12)
        shuffled = samples[self.rng(3).permutation(101)]
        self.assertAllClose(smcmc.estimate(samples), smcmc.estimate(shuffled))

    def test_multi_run_mean(self):
        a = np.array([[1.0, 2.0]])
        b = np.array([[3.0, 6.0]])
        np.testing.assert_array_equal(a, smcmc.multi_run_mean([a]))
        np.testing.assert_array_equal([[2.0, 4.0]],
                                      smcmc.multi_run_mean([a, b]))
        self.assertRaises(DimensionError, smcmc.multi_run_mean,
                          [a, np.zeros(3)])
        self.assertRaises(DimensionError, smcmc.multi_run_mean, [])


class SampleBankTests(base.BaseTestCase):

    def test_shapes(self):
        bank = smcmc.SampleBank([1.0, 2.0, 3.0])
        self.assertEqual(1, bank.size)
        self.assertEqual(3, bank.dim)
        self.assertRaises(DimensionError, smcmc.SampleBank, np.zeros((2, 3)),
                          propagated=np.zeros((2, 4)))

    def test_forecast_bank(self):
        bank = smcmc.SampleBank(np.ones((3, 2)))
        bank, drifters = smcmc.forecast_bank(LinearModel(0.5, 0.1), bank)
        self.assertIsNone(drifters)
        np.testing.assert_array_equal(np.full((3, 2), 0.5), bank.propagated)


class AssimilationStepTests(base.BaseTestCase):

    def setUp(self):
        super(AssimilationStepTests, self).setUp()
        self.grid = GridSpec(10, 10)
        self.layout = StateLayout(self.grid, 1)
        self.cov_q = DiagonalCovariance(0.0025, self.layout.dim)
        rng = self.rng(30)
        samples = 0.05 * rng.standard_normal((6, self.layout.dim))
        self.bank, _ = smcmc.forecast_bank(LinearModel(0.9, 0.05),
                                           smcmc.SampleBank(samples))
        self.batch = ObservationBatch(3, FIG_LOCATIONS,
                                      0.05 * rng.standard_normal(9), 0.05)
        self.cfg = smcmc.ChainConfig(300, 100, proposal_scale=0.3)

    def test_single_subdomain_matches_global_chain(self):
        partition = make_partition(self.grid, 1)
        full = smcmc.smcmc_step(self.bank, self.batch, self.cov_q, self.cfg,
                                self.rng(5), self.layout)
        local = smcmc.lsmcmc_step(self.bank, self.batch, self.cov_q,
                                  partition, self.cfg, self.rng(5),
                                  self.layout)
        np.testing.assert_array_equal(full.bank.samples, local.bank.samples)
        np.testing.assert_array_equal(full.mean, local.mean)
        self.assertEqual(full.acceptance_rate, local.acceptance_rate)
        self.assertEqual(100, local.d_k)

    def test_active_rows_only(self):
        partition = make_partition(self.grid, 9)
        result = smcmc.lsmcmc_step(self.bank, self.batch, self.cov_q,
                                   partition, self.cfg, self.rng(6),
                                   self.layout)
        self.assertEqual(55, result.d_k)
        bank = result.bank
        self.assertEqual((300, 100), bank.samples.shape)
        complement = active_set(partition, FIG_LOCATIONS).complement
        self.assertEqual(45, complement.size)
        np.testing.assert_array_equal(bank.noisy_forecasts[:, complement],
                                      bank.samples[:, complement])
        self.assertAllClose(bank.samples.mean(axis=0), result.mean)

    def test_first_step_shares_complement(self):
        bank, _ = smcmc.forecast_bank(LinearModel(0.9, 0.05),
                                      smcmc.SampleBank(np.zeros(100)))
        partition = make_partition(self.grid, 9)
        result = smcmc.lsmcmc_step(bank, self.batch, self.cov_q, partition,
                                   self.cfg, self.rng(9), self.layout)
        active = active_set(partition, FIG_LOCATIONS)
        samples = result.bank.samples
        noisy = result.bank.noisy_forecasts
        shared = samples[:, active.complement]
        np.testing.assert_array_equal(np.repeat(shared[:1], 300, axis=0),
                                      shared)
        np.testing.assert_array_equal(noisy[0, active.complement],
                                      shared[0])
        self.assertFalse(np.array_equal(noisy[0], noisy[1]))
        self.assertGreater(np.unique(samples[:, active.points[0]]).size, 1)

    def test_empty_batch_keeps_noisy_forecasts(self):
        batch = ObservationBatch(3, [], [], 0.05)
        result = smcmc.lsmcmc_step(self.bank, batch, self.cov_q,
                                   make_partition(self.grid, 9), self.cfg,
                                   self.rng(7), self.layout)
        noise = self.cov_q.sample(self.rng(7), 300)
        expected = self.bank.propagated[np.arange(300) % 6] + noise
        np.testing.assert_array_equal(expected, result.bank.samples)
        self.assertTrue(np.isnan(result.acceptance_rate))
        self.assertEqual(0, result.d_k)

    def test_bank_needs_forecasts(self):
        bank = smcmc.SampleBank(np.zeros((2, 100)))
        self.assertRaises(ChainError, smcmc.smcmc_step, bank, self.batch,
                          self.cov_q, self.cfg, self.rng(), self.layout)

    def test_filter_objects(self):
        model = LinearModel(0.9, 0.05)
        filters = [
            smcmc.SMCMCFilter(model, self.cov_q, self.layout, self.cfg,
                              self.rng(8)),
            smcmc.LSMCMCFilter(model, self.cov_q, self.layout, self.cfg,
                               self.rng(8), make_partition(self.grid, 9)),
        ]
        for f, d_k in zip(filters, (100, 55)):
            f.initialize(np.zeros(100))
            mean = f.assimilate(self.batch)
            self.assertEqual((100, ), mean.shape)
            self.assertEqual(d_k, f.diagnostics['d_k'])
            self.assertEqual(300, f.bank.size)
            self.assertTrue(0 < f.diagnostics['acceptance_rate'] <= 1)


def _linear_twin(d, T, sigma, rng, source='full', grid=None):
    model = LinearModel(1.0, sigma)
    cov_q = DiagonalCovariance(sigma ** 2, d)
    layout = VectorLayout(d) if grid is None else StateLayout(grid, 1)
    truth = [np.zeros(d)]
    for _ in range(T):
        truth.append(model.forward(truth[-1]) + cov_q.sample(rng))
    batches = synthesize_observations(np.array(truth), source, sigma, rng,
                                      layout)
    return model, cov_q, layout, batches


class LinearBenchmarkTests(base.BaseTestCase):

    def test_tuned_acceptance_rate(self):
        grid = GridSpec(12, 12)
        swath = SwathConfig(width=3, slope_mag=1.0, stride=3)
        model, cov_q, layout, batches = _linear_twin(
            144, 2, 0.05, self.rng(40), source=swath, grid=grid)
        cfg = smcmc.ChainConfig(2000, 500, proposal_scale=2.0,
                                scale_by_dimension=True)
        f = smcmc.SMCMCFilter(model, cov_q, layout, cfg, self.rng(41))
        f.initialize(np.zeros(144))
        f.assimilate(batches[0])
        rate = f.diagnostics['acceptance_rate']
        self.assertTrue(0.1 <= rate <= 0.6, rate)

    @base.slow
    def test_matches_kalman_filter(self):
        T, M, N, sigma = 10, 20, 50000, 0.05
        model, cov_q, layout, batches = _linear_twin(1, T, sigma,
                                                     self.rng(50))
        kf = KalmanFilter(model, cov_q, layout)
        kf.initialize(np.zeros(1))
        kf_means = np.array([kf.assimilate(batch) for batch in batches])
        cfg = smcmc.ChainConfig(N, 2000)
        runs = []
        for seed in range(M):
            f = smcmc.SMCMCFilter(model, cov_q, layout, cfg,
                                  self.rng(100 + seed))
            f.initialize(np.zeros(1))
            runs.append([f.assimilate(batch) for batch in batches])
        runs = np.array(runs)[:, :, 0]
        gap = np.abs(smcmc.multi_run_mean(runs) - kf_means[:, 0])
        # standard error of the replica average, chain correlation included
        se = runs.std(axis=0, ddof=1) / math.sqrt(M)
        np.testing.assert_array_less(gap, 5 * se)
