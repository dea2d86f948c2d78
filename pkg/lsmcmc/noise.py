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
State-noise covariance operators: a scaled identity, a general dense
matrix and the structured sine-series field noise.

Every operator offers the same small interface:

``sample(rng, size)``
    draws of shape (size, dim), or (dim,) when size is None
``logpdf(x)``
    ``-0.5 * x' P x`` for the precision P, up to an additive constant
``restrict(rows)`` / ``localize(active, layout)``
    the operator over a subset of the coordinates; it carries the gathered
    covariance block for proposals and the gathered precision block for
    densities
``dense()`` / ``precision()``
    explicit matrices
'''

from __future__ import absolute_import
from __future__ import division
from __future__ import unicode_literals

import logging
from collections import namedtuple

import numpy as np
from scipy import linalg

from . import constants
from .compressr import Opener, read_exact
from .errors import CovarianceError, DimensionError
from .grid import check_symmetric, restrict_precision

log = logging.getLogger(__name__)

NoiseDraw = namedtuple("NoiseDraw", "fields vector")

_HEADER = np.dtype('<i8')
_VALUES = np.dtype('<f8')


class CovarianceOperator(object):
    kind = None

    def __init__(self, dim):
        self.dim = int(dim)

    def __repr__(self):
        return "<%s kind=%s dim=%d>" % (
            self.__class__.__name__, self.kind, self.dim)

    def sample(self, rng, size=None):
        raise NotImplementedError

    def logpdf(self, x):
        raise NotImplementedError

    def dense(self):
        raise NotImplementedError

    def precision(self):
        raise NotImplementedError

    def restrict(self, rows):
        raise NotImplementedError

    def localize(self, active, layout):
        return self.restrict(layout.state_indices(active.points))

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise DimensionError("Expected vectors of length %d, got shape %s"
                                 % (self.dim, x.shape))
        return x

    def _rows(self, rows):
        rows = np.asarray(rows, dtype=np.intp).ravel()
        if rows.size and (rows.min() < 0 or rows.max() >= self.dim):
            raise DimensionError("Rows outside a %d-dimensional operator"
                                 % self.dim)
        return rows

    def _covers(self, rows):
        return (rows.size == self.dim and
                np.array_equal(rows, np.arange(self.dim)))


def _quadratic(precision, x):
    return -0.5 * np.einsum('...i,ij,...j->...', x, precision, x)


class DiagonalCovariance(CovarianceOperator):
    kind = 'diagonal'

    def __init__(self, variance, dim):
        super(DiagonalCovariance, self).__init__(dim)
        if not variance > 0:
            raise CovarianceError("Variance must be positive, got %r"
                                  % (variance, ))
        self.variance = float(variance)
        self.std = np.sqrt(self.variance)

    def sample(self, rng, size=None):
        shape = (self.dim, ) if size is None else (size, self.dim)
        return self.std * rng.standard_normal(shape)

    def logpdf(self, x):
        x = self._check(x)
        return -0.5 * np.sum(x * x, axis=-1) / self.variance

    def dense(self):
        return self.variance * np.eye(self.dim)

    def precision(self):
        return np.eye(self.dim) / self.variance

    def restrict(self, rows):
        rows = self._rows(rows)
        if self._covers(rows):
            return self
        return DiagonalCovariance(self.variance, rows.size)


def _ridge(matrix):
    n = matrix.shape[0]
    trace = float(np.trace(matrix))
    if trace <= 0:
        log.warning("Covariance has zero trace; regularizing with unit ridge")
        return 1.0
    return constants.RIDGE_FACTOR * trace / n


def regularized_precision(matrix):
    """(matrix + delta I)^-1 with delta a tiny multiple of the mean variance.

    Returns the precision and delta.
    """
    delta = _ridge(matrix)
    n = matrix.shape[0]
    try:
        factor = linalg.cho_factor(matrix + delta * np.eye(n), lower=True)
    except linalg.LinAlgError as e:
        raise CovarianceError("Covariance is not positive semidefinite: %s"
                              % e)
    precision = linalg.cho_solve(factor, np.eye(n))
    return 0.5 * (precision + precision.T), delta


class DenseCovariance(CovarianceOperator):
    kind = 'dense'

    def __init__(self, Q, precision=None):
        try:
            Q = check_symmetric(Q)
        except DimensionError as e:
            raise CovarianceError(str(e))
        super(DenseCovariance, self).__init__(Q.shape[0])
        self.Q = Q
        self.ridge = 0.0
        try:
            self.factor = linalg.cholesky(Q, lower=True)
        except linalg.LinAlgError:
            self.ridge = _ridge(Q)
            log.debug("Dense covariance is singular, adding ridge %g",
                      self.ridge)
            try:
                self.factor = linalg.cholesky(
                    Q + self.ridge * np.eye(self.dim), lower=True)
            except linalg.LinAlgError as e:
                raise CovarianceError(
                    "Covariance is not positive semidefinite: %s" % e)
        if precision is None:
            precision = linalg.cho_solve((self.factor, True), np.eye(self.dim))
            precision = 0.5 * (precision + precision.T)
        self._precision = np.asarray(precision, dtype=float)

    def sample(self, rng, size=None):
        shape = (self.dim, ) if size is None else (size, self.dim)
        return rng.standard_normal(shape).dot(self.factor.T)

    def logpdf(self, x):
        return _quadratic(self._precision, self._check(x))

    def dense(self):
        return self.Q

    def precision(self):
        return self._precision

    def restrict(self, rows):
        rows = self._rows(rows)
        if self._covers(rows):
            return self
        ix = np.ix_(rows, rows)
        return DenseCovariance(self.Q[ix], precision=self._precision[ix])


class RestrictedCovariance(CovarianceOperator):
    """
    A subset of the coordinates of a parent operator.

    Draws are full parent draws gathered at the rows, so they follow the
    exact marginal covariance; densities use the supplied precision block.
    """

    def __init__(self, parent, rows, precision):
        super(RestrictedCovariance, self).__init__(len(rows))
        self.parent = parent
        self.rows = rows
        self.kind = parent.kind
        self._precision = precision

    def sample(self, rng, size=None):
        return self.parent.sample(rng, size)[..., self.rows]

    def logpdf(self, x):
        return _quadratic(self._precision, self._check(x))

    def dense(self):
        return self.parent.dense()[np.ix_(self.rows, self.rows)]

    def precision(self):
        return self._precision

    def restrict(self, rows):
        rows = self._rows(rows)
        if self._covers(rows):
            return self
        return RestrictedCovariance(self.parent, self.rows[rows],
                                    self._precision[np.ix_(rows, rows)])


def build_sine_bases(grid, J, domain=None):
    """
    Sine bases along y (S1, ny x J) and x (S2, nx x J).

    Coordinates are measured from the domain corner; mode 0 is kept and is
    identically zero. Endpoint rows are set to exact zeros.
    """
    if int(J) != J or J < 1:
        raise CovarianceError("Mode count must be a positive integer, got %r"
                              % (J, ))
    if domain is None:
        domain = grid.extent
    a1, b1, a2, b2 = domain
    if not (b1 > a1 and b2 > a2):
        raise CovarianceError("Empty domain %r" % (domain, ))
    if J > min(grid.nx, grid.ny):
        log.warning("%d sine modes exceed the %dx%d grid; modes alias",
                    J, grid.nx, grid.ny)
    modes = np.arange(int(J))

    def basis(coords, length):
        frac = coords / length
        values = np.sin(np.pi * np.outer(frac, modes))
        values[(frac == 0.0) | (frac == 1.0)] = 0.0
        return values

    S1 = basis(grid.y - a2, b2 - a2)
    S2 = basis(grid.x - a1, b1 - a1)
    return S1, S2


def coefficient_variances(sigma, J):
    a, b = np.meshgrid(np.arange(J), np.arange(J), indexing='ij')
    return sigma ** 2 / (np.maximum(a, b) + 1.0)


def assemble_covariance(S1, S2, sigma, J=None):
    """
    Covariance of one vectorized field ``S1 E S2'`` with independent
    coefficients ``E[a, b] ~ N(0, sigma^2 / (max(a, b) + 1))``.

    Row ``j * nx + i`` is the point in row j, column i.
    """
    if J is None:
        J = S1.shape[1]
    K = np.kron(S1[:, :J], S2[:, :J])
    weighted = K * coefficient_variances(sigma, J).ravel()
    Q = weighted.dot(K.T)
    return 0.5 * (Q + Q.T)


class FourierSineCovariance(CovarianceOperator):
    kind = 'fourier_sine'

    def __init__(self, grid, J, sigma, domain=None, field_count=3,
                 blocks=None):
        self.grid = grid
        self.J = int(J)
        self.sigma = float(sigma)
        self.field_count = int(field_count)
        self.npoints = grid.npoints
        super(FourierSineCovariance, self).__init__(
            self.field_count * self.npoints)
        if self.sigma < 0:
            raise CovarianceError("Noise scale must be nonnegative")
        self.S1, self.S2 = build_sine_bases(grid, J, domain)
        self.coefficient_std = np.sqrt(coefficient_variances(self.sigma,
                                                             self.J))
        if blocks is None:
            block = assemble_covariance(self.S1, self.S2, self.sigma, self.J)
            block_precision, self.ridge = regularized_precision(block)
        else:
            block, block_precision = blocks
            self.ridge = _ridge(block)
        self.block = block
        self.block_precision = block_precision

    def sample_coefficients(self, rng, size=None):
        n = 1 if size is None else size
        shape = (n, self.field_count, self.J, self.J)
        eps = rng.standard_normal(shape) * self.coefficient_std
        return eps[0] if size is None else eps

    def sample(self, rng, size=None):
        eps = self.sample_coefficients(rng, 1 if size is None else size)
        fields = np.einsum('la,nfab,sb->nfls', self.S1, eps, self.S2)
        draws = fields.reshape(fields.shape[0], self.dim)
        return draws[0] if size is None else draws

    def logpdf(self, x):
        x = self._check(x)
        fields = x.reshape(x.shape[:-1] + (self.field_count, self.npoints))
        return _quadratic(self.block_precision, fields).sum(axis=-1)

    def dense(self):
        return linalg.block_diag(*([self.block] * self.field_count))

    def precision(self):
        return linalg.block_diag(*([self.block_precision] * self.field_count))

    def restrict(self, rows):
        rows = self._rows(rows)
        if self._covers(rows):
            return self
        field, point = np.divmod(rows, self.npoints)
        precision = (self.block_precision[np.ix_(point, point)] *
                     (field[:, np.newaxis] == field[np.newaxis, :]))
        return RestrictedCovariance(self, rows, precision)

    def localize(self, active, layout):
        rows = layout.state_indices(active.points)
        if self._covers(rows):
            return self
        precision = restrict_precision(self.block_precision, active,
                                       self.field_count)
        return RestrictedCovariance(self, rows, precision)


def sample_field_noise(op, rng):
    if op.kind != 'fourier_sine':
        raise CovarianceError("Field noise needs a sine-series operator, "
                              "got %s" % op.kind)
    eps = op.sample_coefficients(rng)
    fields = np.stack([op.S1.dot(e).dot(op.S2.T) for e in eps])
    return NoiseDraw(fields=fields, vector=fields.ravel())


def gaussian_logpdf(op, x):
    return op.logpdf(x)


def save_covariance(op, path):
    """
    Binary dump: int64 header (nx, ny, J, field count) followed by the
    single-field covariance block and its precision, float64 row-major,
    all little-endian.
    """
    header = np.array([op.grid.nx, op.grid.ny, op.J, op.field_count],
                      dtype=_HEADER)
    with Opener().open(path, 'wb') as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(op.block, dtype=_VALUES).tobytes())
        fh.write(np.ascontiguousarray(op.block_precision,
                                      dtype=_VALUES).tobytes())
    log.debug("Saved %s to %s", op, path)
    return path


def load_covariance(path, grid, sigma, domain=None):
    with Opener().open(path, 'rb') as fh:
        header = np.frombuffer(read_exact(fh, 4 * _HEADER.itemsize),
                               dtype=_HEADER)
        nx, ny, J, field_count = [int(x) for x in header]
        if (nx, ny) != (grid.nx, grid.ny):
            raise CovarianceError(
                "Dump %s is for a %dx%d grid, not %dx%d"
                % (path, nx, ny, grid.nx, grid.ny))
        n = nx * ny
        size = n * n * _VALUES.itemsize
        block = np.frombuffer(read_exact(fh, size), dtype=_VALUES)
        block_precision = np.frombuffer(read_exact(fh, size), dtype=_VALUES)
    blocks = (block.reshape(n, n).astype(float),
              block_precision.reshape(n, n).astype(float))
    return FourierSineCovariance(grid, J, sigma, domain=domain,
                                 field_count=field_count, blocks=blocks)
