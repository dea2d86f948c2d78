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

from collections import namedtuple

import numpy as np

from lsmcmc import gaussian
from lsmcmc.dynamics import LinearModel, StateLayout, VectorLayout
from lsmcmc.errors import DimensionError, InnovationError
from lsmcmc.grid import GridSpec, make_partition
from lsmcmc.harness import error_metric
from lsmcmc.noise import DiagonalCovariance
from lsmcmc.observations import ObservationBatch, synthesize_observations

from tests import base


class GaspariCohnTests(base.BaseTestCase):

    def test_end_values(self):
        self.assertEqual(1.0, gaussian.gaspari_cohn(0.0))
        self.assertLessEqual(gaussian.gaspari_cohn(2.0), 1e-14)
        self.assertEqual(0.0, gaussian.gaspari_cohn(2.0 + 1e-9))
        self.assertEqual(0.0, gaussian.gaspari_cohn(7.5))
        self.assertIsInstance(gaussian.gaspari_cohn(0.3), float)

    def test_continuous_at_one(self):
        self.assertLessEqual(
            abs(gaussian._gc_near(1.0) - gaussian._gc_far(1.0)), 1e-14)

    def test_monotone(self):
        x = np.linspace(0.0, 2.0, 10000)
        values = gaussian.gaspari_cohn(x)
        self.assertTrue(np.all(np.diff(values) <= 1e-14))
        self.assertTrue(np.all((values >= 0) & (values <= 1)))

    def test_negative(self):
        self.assertRaises(ValueError, gaussian.gaspari_cohn, [0.5, -0.1])

    def test_localization_weights(self):
        grid = GridSpec(5, 4, dx=2.0, dy=3.0)
        weights = gaussian.localization_weights(grid, [0, 7], 2.0)
        self.assertEqual((20, 2), weights.shape)
        self.assertEqual(1.0, weights[0, 0])
        self.assertEqual(1.0, weights[7, 1])
        # point 9 lies beyond twice the taper scale of 4 from point 0
        self.assertEqual(0.0, weights[9, 0])
        self.assertEqual(0.0, weights[19, 0])


AnalysisCase = namedtuple("AnalysisCase", "n m N")


class EnsembleAnalysisTests(base.BaseTestCase):

    def _case(self, rng, n, m, N):
        Xf = rng.standard_normal((n, N))
        HXf = Xf[rng.choice(n, m, replace=False)]
        y = rng.standard_normal(m)
        r_var = rng.uniform(0.2, 1.0, m)
        E = rng.standard_normal((m, N))
        return Xf, HXf, y, r_var, E

    def test_woodbury_matches_direct(self):
        rng = self.rng(7)
        for _ in range(50):
            n = int(rng.integers(3, 15))
            case = AnalysisCase(n, int(rng.integers(1, n + 1)),
                                int(rng.integers(2, 12)))
            args = self._case(rng, *case)
            direct = gaussian.ensemble_analysis(*args, method='direct')
            smw = gaussian.ensemble_analysis(*args, method='smw')
            np.testing.assert_allclose(direct, smw, rtol=1e-8, atol=1e-8,
                                       err_msg=str(case))

    def test_auto_choice(self):
        rng = self.rng(3)
        wide = self._case(rng, 10, 8, 4)
        np.testing.assert_array_equal(
            gaussian.ensemble_analysis(*wide, method='smw'),
            gaussian.ensemble_analysis(*wide, method='auto'))
        narrow = self._case(rng, 10, 3, 6)
        np.testing.assert_array_equal(
            gaussian.ensemble_analysis(*narrow, method='direct'),
            gaussian.ensemble_analysis(*narrow, method='auto'))

    def test_no_observations(self):
        Xf = np.ones((3, 4))
        out = gaussian.ensemble_analysis(Xf, np.zeros((0, 4)), np.zeros(0),
                                         np.zeros(0), np.zeros((0, 4)))
        self.assertIs(Xf, out)

    def test_unknown_method(self):
        args = self._case(self.rng(), 4, 2, 3)
        self.assertRaises(ValueError, gaussian.ensemble_analysis, *args,
                          method='inverse')

    def test_singular_innovation(self):
        Xf = np.ones((3, 4))
        with self.assertRaises(InnovationError):
            gaussian.ensemble_analysis(Xf, Xf[:2], np.zeros(2), np.zeros(2),
                                       np.zeros((2, 4)), method='direct')

    def test_ensemble_type(self):
        self.assertRaises(DimensionError, gaussian.Ensemble, np.zeros((3, 1)))
        self.assertRaises(DimensionError, gaussian.Ensemble,
                          [[0.0, np.nan], [0.0, 0.0]])
        ens = gaussian.Ensemble(np.arange(6.0).reshape(3, 2))
        self.assertEqual(2, ens.N)
        np.testing.assert_array_equal([0.5, 2.5, 4.5], ens.mean)


class KalmanTests(base.BaseTestCase):

    def test_scalar_update(self):
        model = LinearModel(1.0, 1.0)
        state = gaussian.KalmanState(np.zeros(1), np.zeros((1, 1)))
        batch = ObservationBatch(1, [0], [2.0], 1.0)
        out = gaussian.kf_step(model, DiagonalCovariance(1.0, 1), state,
                               batch, VectorLayout(1))
        self.assertAllClose([1.0], out.mean)
        self.assertAllClose([[0.5]], out.cov)

    def test_prediction_only(self):
        model = LinearModel(0.5, 1.0)
        state = gaussian.KalmanState(np.array([2.0, -4.0]), np.eye(2))
        out = gaussian.kf_step(model, DiagonalCovariance(0.25, 2), state,
                               None, VectorLayout(2))
        np.testing.assert_array_equal([1.0, -2.0], out.mean)
        np.testing.assert_array_equal(0.5 * np.eye(2), out.cov)

    def test_information_form(self):
        rng = self.rng(5)
        d = 6
        root = rng.standard_normal((d, d))
        prior = gaussian.KalmanState(rng.standard_normal(d),
                                     root.dot(root.T) + np.eye(d))
        model = LinearModel(0.8, 0.1)
        Q = 0.01 * np.eye(d)
        batch = ObservationBatch(1, [4, 1], [0.3, -0.2], 0.5)
        out = gaussian.kf_step(model, Q, prior, batch, VectorLayout(d))

        P = 0.64 * prior.cov + Q
        C = np.zeros((2, d))
        C[0, 4] = C[1, 1] = 1.0
        info = np.linalg.inv(P) + C.T.dot(C) / 0.25
        cov = np.linalg.inv(info)
        mean = cov.dot(np.linalg.solve(P, 0.8 * prior.mean) +
                       C.T.dot(batch.values) / 0.25)
        self.assertAllClose(cov, out.cov, rtol=1e-9, atol=1e-12)
        self.assertAllClose(mean, out.mean, rtol=1e-9, atol=1e-12)

    def test_filter_object(self):
        layout = VectorLayout(2)
        kf = gaussian.KalmanFilter(LinearModel(1.0, 1.0),
                                   DiagonalCovariance(1.0, 2), layout)
        kf.initialize([0.0, 0.0])
        mean = kf.assimilate(ObservationBatch(1, [1], [2.0], 1.0))
        self.assertAllClose([0.0, 1.0], mean)
        self.assertEqual(2, kf.diagnostics['d_k'])
        self.assertTrue(np.isnan(kf.diagnostics['acceptance_rate']))


class EnsembleFilterTests(base.BaseTestCase):

    def setUp(self):
        super(EnsembleFilterTests, self).setUp()
        self.grid = GridSpec(6, 6)
        self.layout = StateLayout(self.grid, 1)
        self.model = LinearModel(0.9, 0.1)
        self.cov_q = DiagonalCovariance(0.01, self.layout.dim)
        rng = self.rng(21)
        self.ens = gaussian.Ensemble(
            rng.standard_normal((self.layout.dim, 10)))
        self.batch = ObservationBatch(1, [0, 7, 20, 35],
                                      rng.standard_normal(4), 0.2)

    def test_localization_degenerates_to_enkf(self):
        loc = gaussian.LocalizationConfig(make_partition(self.grid, 1), 1e6)
        global_ = gaussian.enkf_step(self.model, self.cov_q, self.ens,
                                     self.batch, self.rng(4), self.layout,
                                     method='direct')
        local = gaussian.lenkf_step(self.model, self.cov_q, self.ens,
                                    self.batch, loc, self.layout,
                                    self.rng(4), method='direct')
        np.testing.assert_allclose(global_.members, local.members,
                                   rtol=1e-8, atol=1e-8)

    def test_far_subdomains_keep_forecast(self):
        grid = GridSpec(9, 9)
        layout = StateLayout(grid, 1)
        partition = make_partition(grid, 4)
        loc = gaussian.LocalizationConfig(partition, 1.0)
        rng = self.rng(8)
        Xf = rng.standard_normal((layout.dim, 8))
        batch = ObservationBatch(1, [0], [3.0], 0.1)
        E = rng.standard_normal((1, 8))
        Xa = gaussian.localized_analysis(Xf, batch, E, loc, layout)
        far = partition.sub_of_point[80]
        near = partition.sub_of_point[0]
        rows = partition.owned_points(far)
        np.testing.assert_array_equal(Xf[rows], Xa[rows])
        rows = partition.owned_points(near)
        self.assertGreater(np.max(np.abs(Xf[rows] - Xa[rows])), 0.0)

    def test_parallel_merge_is_deterministic(self):
        partition = make_partition(self.grid, 4)
        rng = self.rng(2)
        Xf = rng.standard_normal((self.layout.dim, 10))
        E = rng.standard_normal((self.batch.size, 10))
        results = [
            gaussian.localized_analysis(
                Xf, self.batch, E,
                gaussian.LocalizationConfig(partition, 3.0, n_jobs=n_jobs),
                self.layout)
            for n_jobs in (1, 3)]
        np.testing.assert_array_equal(results[0], results[1])

    def test_localization_config(self):
        partition = make_partition(self.grid, 1)
        self.assertRaises(DimensionError, gaussian.LocalizationConfig,
                          partition, 0.0)
        self.assertRaises(DimensionError, gaussian.LocalizationConfig,
                          partition, 2.0, w0=1.0)

    def test_empty_batch_is_forecast(self):
        batch = ObservationBatch(1, [], [], 0.2)
        out = gaussian.enkf_step(self.model, self.cov_q, self.ens, batch,
                                 self.rng(6), self.layout)
        noise = self.cov_q.sample(self.rng(6), 10)
        self.assertAllClose(0.9 * self.ens.members + noise.T, out.members)

    def test_large_ensemble_tracks_kalman_filter(self):
        d, T, sigma = 64, 10, 0.05
        layout = VectorLayout(d)
        model = LinearModel(0.9, sigma)
        cov_q = DiagonalCovariance(sigma ** 2, d)
        rng = self.rng(17)
        truth = [np.zeros(d)]
        for _ in range(T):
            truth.append(model.forward(truth[-1]) + cov_q.sample(rng))
        batches = synthesize_observations(np.array(truth), 'full', sigma, rng,
                                          layout)
        kf = gaussian.KalmanFilter(model, cov_q, layout)
        enkf = gaussian.EnsembleKalmanFilter(model, cov_q, layout, 5000,
                                             self.rng(18))
        kf.initialize(np.zeros(d))
        enkf.initialize(np.zeros(d))
        kf_means = [kf.assimilate(b) for b in batches]
        enkf_means = [enkf.assimilate(b) for b in batches]
        self.assertGreaterEqual(
            error_metric(enkf_means, kf_means, sigma / 2), 99.0)
