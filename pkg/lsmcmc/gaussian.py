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
Gaussian baselines: the exact Kalman filter, the perturbed-observation
ensemble Kalman filter and its subdomain-localized variant.

Ensembles are (dim, N) matrices whose columns are members. No inverse is
formed explicitly; every gain comes from a Cholesky or symmetric solve.
'''

from __future__ import absolute_import
from __future__ import division
from __future__ import unicode_literals

import logging
from collections import namedtuple

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.spatial.distance import cdist

from . import constants
from .errors import DimensionError, InnovationError
from .observations import forecast, relocate

log = logging.getLogger(__name__)

KalmanState = namedtuple("KalmanState", "mean cov")


class Ensemble(namedtuple("Ensemble", "members")):
    __slots__ = ()

    def __new__(cls, members):
        members = np.asarray(members, dtype=float)
        if members.ndim != 2 or members.shape[1] < 2:
            raise DimensionError("An ensemble needs a (dim, N) matrix with "
                                 "N >= 2, got shape %s" % (members.shape, ))
        if not np.all(np.isfinite(members)):
            raise DimensionError("Ensemble has non-finite members")
        return super(Ensemble, cls).__new__(cls, members)

    @property
    def N(self):
        return self.members.shape[1]

    @property
    def mean(self):
        return self.members.mean(axis=1)


class LocalizationConfig(namedtuple("LocalizationConfig",
                                    "partition r w0 n_jobs")):
    __slots__ = ()

    def __new__(cls, partition, r, w0=constants.DEFAULT_W0, n_jobs=1):
        if not r > 0:
            raise DimensionError("Localization length must be positive")
        if not 0 < w0 < 1:
            raise DimensionError("Minimum weight must lie in (0, 1)")
        return super(LocalizationConfig, cls).__new__(
            cls, partition, float(r), float(w0), n_jobs)


def _innovation_error(matrix, exc):
    try:
        condition = float(np.linalg.cond(matrix))
    except np.linalg.LinAlgError:
        condition = float('inf')
    return InnovationError("Innovation system is singular (condition "
                           "%.3e): %s" % (condition, exc),
                           condition=condition)


def kf_step(model, cov_q, state, batch, layout):
    """Predict with the linear map, update with the gain solved from the
    innovation covariance, Joseph-form posterior covariance."""
    Q = cov_q.dense() if hasattr(cov_q, 'dense') else np.asarray(cov_q)
    a = model.a_scale
    mean = a * state.mean
    P = a * a * state.cov + Q
    if batch is None or batch.size == 0:
        return KalmanState(mean, P)
    ix = batch.state_indices(layout)
    r = batch.sigma_y ** 2
    S = P[np.ix_(ix, ix)] + r * np.eye(ix.size)
    try:
        factor = linalg.cho_factor(S, lower=True)
    except linalg.LinAlgError as e:
        raise _innovation_error(S, e)
    PCt = P[:, ix]
    K = linalg.cho_solve(factor, PCt.T).T
    mean = mean + K.dot(batch.values - mean[ix])
    # (I - KC) P (I - KC)' + K R K'
    A = P - K.dot(P[ix, :])
    P = A - A[:, ix].dot(K.T) + r * K.dot(K.T)
    return KalmanState(mean, 0.5 * (P + P.T))


def ensemble_analysis(Xf, HXf, y, r_var, E, method='auto'):
    """
    Perturbed-observation update of the rows Xf (n, N) given their
    forecast observations HXf (m, N), the data y, per-observation error
    variances r_var and standard normal perturbations E (m, N).

    method 'direct' solves in observation space, 'smw' in ensemble space
    through the Sherman-Morrison-Woodbury identity; 'auto' picks 'smw' when
    there are more observations than members.
    """
    m, N = HXf.shape
    if m == 0:
        return Xf
    if method == 'auto':
        method = 'smw' if m > N else 'direct'
    r_var = np.asarray(r_var, dtype=float)
    D = y[:, np.newaxis] + np.sqrt(r_var)[:, np.newaxis] * E
    innovation = D - HXf
    scale = 1.0 / np.sqrt(N - 1)
    A = (Xf - Xf.mean(axis=1, keepdims=True)) * scale
    V = (HXf - HXf.mean(axis=1, keepdims=True)) * scale
    if method == 'direct':
        S = V.dot(V.T) + np.diag(r_var)
        try:
            weights = linalg.solve(S, innovation, assume_a='pos')
        except linalg.LinAlgError as e:
            raise _innovation_error(S, e)
    elif method == 'smw':
        RiV = V / r_var[:, np.newaxis]
        T = np.eye(N) + V.T.dot(RiV)
        Ri_innovation = innovation / r_var[:, np.newaxis]
        try:
            inner = linalg.solve(T, V.T.dot(Ri_innovation), assume_a='pos')
        except linalg.LinAlgError as e:
            raise _innovation_error(T, e)
        weights = Ri_innovation - RiV.dot(inner)
    else:
        raise ValueError("Unknown analysis method %r" % (method, ))
    return Xf + A.dot(V.T.dot(weights))


def ensemble_forecast(model, cov_q, members, rng, t_prev=None, t_next=None,
                      drifters=None):
    """Propagate every member and add fresh state noise; returns the
    (dim, N) forecast and the drifter estimate."""
    propagated, drifters = forecast(model, members.T, t_prev, t_next,
                                    drifters)
    noise = cov_q.sample(rng, members.shape[1])
    return (propagated + noise).T, drifters


def _gc_near(x):
    return ((((-0.25 * x + 0.5) * x + 0.625) * x - 5.0 / 3.0) * x * x + 1.0)


def _gc_far(x):
    return (((((x / 12.0 - 0.5) * x + 0.625) * x + 5.0 / 3.0) * x - 5.0) *
            x + 4.0 - 2.0 / (3.0 * x))


def gaspari_cohn(x):
    """
    Compactly supported fifth-order taper: 1 at 0, 0 from 2 on.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("Gaspari-Cohn taper is defined for x >= 0")
    near = x < 1
    far = (x >= 1) & (x <= 2)
    out = np.zeros_like(x)
    out[near] = _gc_near(x[near])
    out[far] = _gc_far(x[far])
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def localization_weights(grid, locations, r):
    """Taper weights (npoints, len(locations)) between every grid point
    and every observation location; r is in grid points."""
    points = grid.point_coordinates()
    obs = grid.point_coordinates(locations)
    scale = r * min(grid.dx, grid.dy)
    return gaspari_cohn(cdist(points, obs) / scale)


def _subdomain_analysis(owned, rows, weights, Xf, HXf, y, base_var, E, w0,
                        method):
    mean_weight = weights[owned].mean(axis=0)
    kept = np.flatnonzero(mean_weight > w0)
    if kept.size == 0:
        return None
    r_var = base_var[kept] / mean_weight[kept]
    return ensemble_analysis(Xf[rows], HXf[kept], y[kept], r_var, E[kept],
                             method)


def localized_analysis(Xf, batch, E, loc, layout, method='auto'):
    """Independent analyses of the rows owned by every subdomain, merged
    in subdomain order."""
    HXf = Xf[batch.state_indices(layout)]
    base_var = np.full(batch.size, batch.sigma_y ** 2)
    weights = localization_weights(layout.grid, batch.point_of_value(),
                                   loc.r)
    partition = loc.partition
    labels = range(partition.gamma_effective)
    owned = [partition.owned_points(label) for label in labels]
    rows = [layout.state_indices(points) for points in owned]
    results = Parallel(n_jobs=loc.n_jobs, prefer='threads')(
        delayed(_subdomain_analysis)(owned[n], rows[n], weights, Xf, HXf,
                                     batch.values, base_var, E, loc.w0,
                                     method)
        for n in labels)
    Xa = Xf.copy()
    updated = 0
    for n, local in enumerate(results):
        if local is not None:
            Xa[rows[n]] = local
            updated += 1
    log.debug("Localized analysis at k=%d updated %d of %d subdomains",
              batch.k, updated, partition.gamma_effective)
    return Xa


def _ensemble_step(model, cov_q, ens, batch, rng, layout, method, t_prev,
                   t_next, drifters, loc=None):
    Xf, drifters = ensemble_forecast(model, cov_q, ens.members, rng,
                                     t_prev, t_next, drifters)
    if drifters is not None:
        batch = relocate(batch, drifters.mean_positions, layout.grid)
    if batch is None or batch.size == 0:
        return Ensemble(Xf), drifters
    E = rng.standard_normal((batch.size, ens.N))
    if loc is None:
        ix = batch.state_indices(layout)
        r_var = np.full(batch.size, batch.sigma_y ** 2)
        Xa = ensemble_analysis(Xf, Xf[ix], batch.values, r_var, E, method)
    else:
        Xa = localized_analysis(Xf, batch, E, loc, layout, method)
    return Ensemble(Xa), drifters


def enkf_step(model, cov_q, ens, batch, rng, layout, method='auto',
              t_prev=None, t_next=None):
    return _ensemble_step(model, cov_q, ens, batch, rng, layout, method,
                          t_prev, t_next, None)[0]


def lenkf_step(model, cov_q, ens, batch, loc, layout, rng, method='auto',
               t_prev=None, t_next=None):
    """
    Every subdomain updates its own rows with the observations whose mean
    taper weight over the subdomain exceeds w0, their error variances
    divided by that weight. Forecast noise and observation perturbations
    are drawn exactly as in :func:`enkf_step`.
    """
    return _ensemble_step(model, cov_q, ens, batch, rng, layout, method,
                          t_prev, t_next, None, loc=loc)[0]


class KalmanFilter(object):
    name = 'kf'

    def __init__(self, model, cov_q, layout):
        self.model = model
        self.layout = layout
        self.Q = cov_q.dense()
        self.state = None
        self.diagnostics = None

    def initialize(self, z0):
        z0 = self.layout.validate(z0)
        self.state = KalmanState(z0.copy(), np.zeros((z0.size, z0.size)))

    def assimilate(self, batch, t_prev=None, t_next=None):
        self.state = kf_step(self.model, self.Q, self.state, batch,
                             self.layout)
        self.diagnostics = dict(acceptance_rate=np.nan, d_k=self.layout.dim)
        return self.state.mean


class EnsembleKalmanFilter(object):
    name = 'enkf'

    def __init__(self, model, cov_q, layout, N, rng, method='auto',
                 drifters=None):
        self.model = model
        self.cov_q = cov_q
        self.layout = layout
        self.N = int(N)
        self.rng = rng
        self.method = method
        self.drifters = drifters
        self.ens = None
        self.diagnostics = None

    @property
    def localization(self):
        return None

    def initialize(self, z0):
        z0 = self.layout.validate(z0)
        self.ens = Ensemble(np.repeat(z0[:, np.newaxis], self.N, axis=1))

    def assimilate(self, batch, t_prev=None, t_next=None):
        self.ens, self.drifters = _ensemble_step(
            self.model, self.cov_q, self.ens, batch, self.rng, self.layout,
            self.method, t_prev, t_next, self.drifters,
            loc=self.localization)
        self.diagnostics = dict(acceptance_rate=np.nan, d_k=self.layout.dim)
        return self.ens.mean


class LocalEnsembleKalmanFilter(EnsembleKalmanFilter):
    name = 'lenkf'

    def __init__(self, model, cov_q, layout, N, rng, loc, method='auto',
                 drifters=None):
        super(LocalEnsembleKalmanFilter, self).__init__(
            model, cov_q, layout, N, rng, method=method, drifters=drifters)
        self.loc = loc

    @property
    def localization(self):
        return self.loc
