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

import os

import numpy as np

from lsmcmc import noise
from lsmcmc.dynamics import StateLayout
from lsmcmc.errors import CovarianceError, DimensionError
from lsmcmc.grid import GridSpec, active_set, make_partition

from tests import base


class SineBasisTests(base.BaseTestCase):

    def test_mode_zero_and_endpoints(self):
        g = GridSpec(7, 5, dx=0.5, dy=2.0)
        S1, S2 = noise.build_sine_bases(g, 3)
        self.assertEqual((5, 3), S1.shape)
        self.assertEqual((7, 3), S2.shape)
        np.testing.assert_array_equal(np.zeros(5), S1[:, 0])
        np.testing.assert_array_equal(np.zeros(7), S2[:, 0])
        # the last grid line sits on the domain end
        np.testing.assert_array_equal(np.zeros(3), S1[-1])
        np.testing.assert_array_equal(np.zeros(3), S2[-1])

    def test_values(self):
        g = GridSpec(5, 5, dx=0.25, dy=0.25)
        S1, _ = noise.build_sine_bases(g, 2, domain=(0.0, 1.0, 0.0, 1.0))
        np.testing.assert_allclose(S1[:, 1], np.sin(np.pi * g.y), rtol=0,
                                   atol=1e-15)

    def test_invalid(self):
        g = GridSpec(4, 4)
        self.assertRaises(CovarianceError, noise.build_sine_bases, g, 0)
        self.assertRaises(CovarianceError, noise.build_sine_bases, g, 2,
                          (0.0, 0.0, 0.0, 1.0))

    def test_aliasing_warning(self):
        with self.assertLogs('lsmcmc.noise', level='WARNING'):
            noise.build_sine_bases(GridSpec(3, 4), 5)


class FourierCovarianceTests(base.BaseTestCase):

    def test_naive_formula(self):
        g = GridSpec(4, 4)
        S1, S2 = noise.build_sine_bases(g, 2)
        Q = noise.assemble_covariance(S1, S2, 1.0, 2)
        for m in range(4):
            for i in range(4):
                for n in range(4):
                    for j in range(4):
                        expected = 0.0
                        for l in range(2):
                            for s in range(2):
                                expected += (S1[m, l] * S1[n, l] *
                                             S2[i, s] * S2[j, s] /
                                             (max(l, s) + 1))
                        self.assertAlmostEqual(expected,
                                               Q[m * 4 + i, n * 4 + j],
                                               places=13)

    def test_symmetric_psd(self):
        S1, S2 = noise.build_sine_bases(GridSpec(9, 9), 4)
        Q = noise.assemble_covariance(S1, S2, 0.3)
        scale = np.abs(Q).max()
        self.assertTrue(np.abs(Q - Q.T).max() <= 1e-12 * scale)
        eig = np.linalg.eigvalsh(Q)
        self.assertTrue(eig.min() >= -1e-10 * eig.max())
        self.assertTrue(np.linalg.matrix_rank(Q) <= 16)

    def test_zero_sigma(self):
        op = noise.FourierSineCovariance(GridSpec(5, 5), 3, 0.0)
        np.testing.assert_array_equal(np.zeros((25, 25)), op.block)
        draw = noise.sample_field_noise(op, self.rng())
        np.testing.assert_array_equal(np.zeros(75), draw.vector)

    def test_sample_covariance(self):
        g = GridSpec(9, 9)
        op = noise.FourierSineCovariance(g, 3, 0.05, field_count=1)
        draws = op.sample(self.rng(5), 100000)
        Q = op.block
        S = np.cov(draws, rowvar=False)
        var = np.diag(Q)
        se = np.sqrt((np.outer(var, var) + Q ** 2) / draws.shape[0])
        inside = np.abs(S - Q) <= 5 * se
        self.assertTrue(inside.mean() >= 0.995)

    def test_coefficient_variance(self):
        op = noise.FourierSineCovariance(GridSpec(6, 6), 4, 0.1,
                                         field_count=1)
        n = 200000
        eps = op.sample_coefficients(self.rng(6), n)[:, 0, 3, 1]
        expected = 0.01 / 4
        se = expected * np.sqrt(2.0 / n)
        self.assertTrue(abs(eps.var() - expected) <= 5 * se)

    def test_boundary_zero(self):
        g = GridSpec(8, 6)
        op = noise.FourierSineCovariance(g, 4, 1.0)
        draw = noise.sample_field_noise(op, self.rng(7))
        self.assertEqual((3, 6, 8), draw.fields.shape)
        for field in draw.fields:
            for edge in (field[0], field[-1], field[:, 0], field[:, -1]):
                np.testing.assert_array_equal(np.zeros(edge.size), edge)
        np.testing.assert_array_equal(draw.fields.ravel(), draw.vector)

    def test_sample_matches_fields(self):
        op = noise.FourierSineCovariance(GridSpec(5, 4), 3, 0.2)
        a = op.sample(self.rng(8))
        b = noise.sample_field_noise(op, self.rng(8)).vector
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)

    def test_precision_inverts_on_ridge(self):
        op = noise.FourierSineCovariance(GridSpec(5, 5), 3, 0.5,
                                         field_count=1)
        n = op.block.shape[0]
        self.assertAlmostEqual(1e-8 * np.trace(op.block) / n, op.ridge)
        product = (op.block + op.ridge * np.eye(n)).dot(op.block_precision)
        np.testing.assert_allclose(product, np.eye(n), atol=1e-4)

    def test_field_noise_requires_sine(self):
        op = noise.DiagonalCovariance(1.0, 4)
        self.assertRaises(CovarianceError, noise.sample_field_noise, op,
                          self.rng())

    def test_localize(self):
        g = GridSpec(7, 7)
        layout = StateLayout(g, 3)
        op = noise.FourierSineCovariance(g, 3, 0.2)
        active = active_set(make_partition(g, 9), [0, 24])
        local = op.localize(active, layout)
        rows = layout.state_indices(active.points)
        self.assertEqual(rows.size, local.dim)
        x = self.rng(9).standard_normal(layout.dim)
        pts = active.points
        expected = sum(
            -0.5 * x[pts + f * 49].dot(op.block_precision[np.ix_(pts, pts)])
            .dot(x[pts + f * 49]) for f in range(3))
        self.assertAlmostEqual(expected, local.logpdf(x[rows]), places=10)
        self.assertEqual((4, rows.size),
                         local.sample(self.rng(), 4).shape)
        # the whole state is the operator itself
        everything = active_set(make_partition(g, 1), [0])
        self.assertTrue(op.localize(everything, layout) is op)

    def test_save_load(self):
        g = GridSpec(5, 4)
        op = noise.FourierSineCovariance(g, 3, 0.2, field_count=2)
        for name in ("cov.bin", "cov.bin.gz"):
            path = noise.save_covariance(op, os.path.join(self.test_dir,
                                                          name))
            loaded = noise.load_covariance(path, g, 0.2)
            self.assertEqual(2, loaded.field_count)
            self.assertEqual(3, loaded.J)
            np.testing.assert_array_equal(op.block, loaded.block)
            np.testing.assert_array_equal(op.block_precision,
                                          loaded.block_precision)
        self.assertRaises(CovarianceError, noise.load_covariance, path,
                          GridSpec(4, 5), 0.2)


class DensityTests(base.BaseTestCase):

    def test_origin(self):
        for op in (noise.DiagonalCovariance(0.3, 4),
                   noise.DenseCovariance(2 * np.eye(4)),
                   noise.FourierSineCovariance(GridSpec(2, 2), 1, 1.0,
                                               field_count=1)):
            self.assertEqual(0.0, noise.gaussian_logpdf(op, np.zeros(4)))

    def test_diagonal(self):
        x = self.rng(1).standard_normal(6)
        op = noise.DiagonalCovariance(0.25, 6)
        self.assertAlmostEqual(-sum(v * v for v in x) / 0.5,
                               noise.gaussian_logpdf(op, x), places=12)
        np.testing.assert_array_equal(0.25 * np.eye(6), op.dense())
        self.assertRaises(CovarianceError, noise.DiagonalCovariance, 0.0, 3)

    def test_whitened_coordinate(self):
        A = self.rng(2).standard_normal((5, 5))
        Q = A.dot(A.T) + 5 * np.eye(5)
        op = noise.DenseCovariance(Q)
        L = np.linalg.cholesky(Q)
        self.assertAlmostEqual(-0.5, op.logpdf(L[:, 0]), places=10)

    def test_dimension_mismatch(self):
        op = noise.DiagonalCovariance(1.0, 3)
        self.assertRaises(DimensionError, op.logpdf, np.zeros(4))
        self.assertRaises(DimensionError, op.restrict, [0, 3])
        self.assertRaises(CovarianceError, noise.DenseCovariance,
                          np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_restrict_permutation(self):
        A = self.rng(3).standard_normal((6, 6))
        op = noise.DenseCovariance(A.dot(A.T) + np.eye(6))
        x = self.rng(4).standard_normal(6)
        rows = np.array([4, 1, 2])
        perm = np.array([2, 0, 1])
        self.assertAlmostEqual(op.restrict(rows).logpdf(x[rows]),
                               op.restrict(rows[perm]).logpdf(x[rows[perm]]),
                               places=12)
        self.assertTrue(op.restrict(np.arange(6)) is op)

    def test_singular_dense(self):
        v = np.array([1.0, 2.0, 0.0])
        op = noise.DenseCovariance(np.outer(v, v))
        self.assertTrue(op.ridge > 0)
        self.assertEqual((10, 3), op.sample(self.rng(), 10).shape)
