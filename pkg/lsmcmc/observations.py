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
Observation batches, the moving swath, synthetic observations and
drifters whose positions follow the estimated flow.
'''

from __future__ import absolute_import
from __future__ import division
from __future__ import unicode_literals

import logging
from collections import namedtuple

import numpy as np
import pandas

from . import constants
from .errors import DimensionError, DrifterError, ObservationError

log = logging.getLogger(__name__)

HEIGHT_FIELDS = (0, )
VELOCITY_FIELDS = (1, 2)

DRIFTER_COLUMNS = ['time_s', 'drifter_id', 'x_m', 'y_m', 'u_mps', 'v_mps']

DrifterObservations = namedtuple("DrifterObservations",
                                 "initial_positions positions batches")


class ObservationBatch(namedtuple("ObservationBatch",
                                  "k locations values sigma_y fields "
                                  "per_drifter")):
    """
    Observations at one assimilation time.

    values are location-major: for every location, one value per observed
    field. per_drifter keeps the raw (n_drifters, 2) velocities of a
    drifter batch so it can be re-binned onto estimated positions.
    """
    __slots__ = ()

    def __new__(cls, k, locations, values, sigma_y, fields=HEIGHT_FIELDS,
                per_drifter=None):
        locations = np.asarray(locations, dtype=np.intp).ravel()
        values = np.asarray(values, dtype=float).ravel()
        fields = tuple(int(f) for f in fields)
        if np.unique(locations).size != locations.size:
            raise ObservationError("Duplicate observation locations")
        if values.size != locations.size * len(fields):
            raise ObservationError(
                "%d values for %d locations of %d fields"
                % (values.size, locations.size, len(fields)))
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise ObservationError("Non-finite observation value",
                                   index=int(bad[0]))
        if not sigma_y > 0:
            raise ObservationError("Observation noise must be positive")
        return super(ObservationBatch, cls).__new__(
            cls, int(k), locations, values, float(sigma_y), fields,
            per_drifter)

    @property
    def m(self):
        return self.locations.size

    @property
    def size(self):
        return self.values.size

    def state_indices(self, layout):
        offsets = np.asarray(self.fields, dtype=np.intp) * layout.npoints
        return (self.locations[:, np.newaxis] +
                offsets[np.newaxis, :]).ravel()

    def gather(self, z, layout):
        """The action of the selection operator on z (..., dim)."""
        return np.asarray(z)[..., self.state_indices(layout)]

    def point_of_value(self):
        "Grid point of every value"
        return np.repeat(self.locations, len(self.fields))


def selection_matrix(batch, layout):
    C = np.zeros((batch.size, layout.dim))
    C[np.arange(batch.size), batch.state_indices(layout)] = 1.0
    return C


class SwathConfig(namedtuple("SwathConfig", "width slope_mag stride phase")):
    __slots__ = ()

    def __new__(cls, width=constants.SWATH_WIDTH,
                slope_mag=constants.SWATH_SLOPE,
                stride=constants.SWATH_STRIDE, phase=constants.SWATH_PHASE):
        if width < 1 or stride < 1:
            raise ObservationError("Swath width and stride must be >= 1")
        if slope_mag < 0:
            raise ObservationError("Swath slope magnitude must be >= 0")
        return super(SwathConfig, cls).__new__(
            cls, width, float(slope_mag), int(stride), phase)


def swath_centerline(cfg, grid, k):
    """Column of the swath centre in every grid row at time k."""
    center = (grid.nx - 1 - cfg.phase - cfg.stride * k) % grid.nx
    sign = 1.0 if k % 2 == 0 else -1.0
    return center + sign * cfg.slope_mag * (np.arange(grid.ny) - grid.ny / 2)


def swath_locations(cfg, grid, k):
    """
    Points of the tilted band at time k.

    A point belongs to the band when its column offset from the centre
    line lies in the half-open interval [-width/2, width/2), so every row
    holds exactly width points. A strict |offset| < width/2 would keep one
    point fewer on rows whose offsets fall on half-integers, as they do for
    odd ny with unit slope. Distances along x wrap around the grid, so the
    band re-enters from the east when it leaves through the west edge.
    """
    if cfg.width > grid.nx:
        raise ObservationError("Swath width %s exceeds nx=%d"
                               % (cfg.width, grid.nx))
    centers = swath_centerline(cfg, grid, k)
    half = grid.nx / 2.0
    offset = np.mod(np.arange(grid.nx)[np.newaxis, :] -
                    centers[:, np.newaxis] + half, grid.nx) - half
    inside = (offset >= -cfg.width / 2.0) & (offset < cfg.width / 2.0)
    return np.flatnonzero(inside.ravel())


def obs_loglik(z_values, batch):
    z_values = np.asarray(z_values, dtype=float)
    if z_values.shape[-1] != batch.size:
        raise DimensionError("%d values for a batch of %d"
                             % (z_values.shape[-1], batch.size))
    resid = batch.values - z_values
    return -0.5 * np.sum(resid * resid, axis=-1) / batch.sigma_y ** 2


def nearest_points(grid, positions):
    """Nearest grid point of every (x, y); ties go to the lower index."""
    positions = np.asarray(positions, dtype=float)
    fi = (positions[..., 0] - grid.x0) / grid.dx
    fj = (positions[..., 1] - grid.y0) / grid.dy
    i = np.clip(np.ceil(fi - 0.5), 0, grid.nx - 1).astype(np.intp)
    j = np.clip(np.ceil(fj - 0.5), 0, grid.ny - 1).astype(np.intp)
    return i + j * grid.nx


def bin_drifter_values(k, points, per_drifter, sigma_y):
    """Batch of drifter velocities; drifters sharing a grid point are
    averaged."""
    per_drifter = np.asarray(per_drifter, dtype=float).reshape(-1, 2)
    locations, inverse = np.unique(points, return_inverse=True)
    sums = np.zeros((locations.size, 2))
    np.add.at(sums, inverse, per_drifter)
    counts = np.bincount(inverse, minlength=locations.size)
    values = sums / counts[:, np.newaxis]
    return ObservationBatch(k, locations, values.ravel(), sigma_y,
                            fields=VELOCITY_FIELDS, per_drifter=per_drifter)


def relocate(batch, mean_positions, grid):
    """Drifter batch placed at the grid points nearest to estimated
    positions."""
    if batch.per_drifter is None:
        return batch
    return bin_drifter_values(batch.k, nearest_points(grid, mean_positions),
                              batch.per_drifter, batch.sigma_y)


def synthesize_observations(truth_path, source, sigma_y, rng, layout,
                            drifter_path=None):
    """
    Noisy observations of a truth run.

    truth_path[k] is the true state at observation time k, with k = 0 the
    initial condition; batches are produced for k = 1 .. T. source is a
    SwathConfig, the string 'full' for field 0 at every point, or a
    DrifterSet with drifter_path[k] the true drifter positions.
    """
    truth_path = np.asarray(truth_path, dtype=float)
    batches = []
    for k in range(1, truth_path.shape[0]):
        if isinstance(source, DrifterSet):
            if drifter_path is None:
                raise ObservationError("Drifter observations need the true "
                                       "drifter path")
            points = nearest_points(layout.grid, drifter_path[k])
            rows = (points[:, np.newaxis] +
                    np.asarray(VELOCITY_FIELDS) * layout.npoints)
            clean = truth_path[k][rows]
            noisy = clean + sigma_y * rng.standard_normal(clean.shape)
            batches.append(bin_drifter_values(k, points, noisy, sigma_y))
        else:
            if source == 'full':
                locations = np.arange(layout.npoints)
            else:
                locations = swath_locations(source, layout.grid, k)
            batch = ObservationBatch(k, locations,
                                     np.zeros(locations.size), sigma_y)
            clean = batch.gather(truth_path[k], layout)
            noisy = clean + sigma_y * rng.standard_normal(clean.shape)
            batches.append(batch._replace(values=noisy))
    return batches


class DrifterSet(namedtuple("DrifterSet", "mean_positions sample_positions")):
    """mean_positions (n_drifters, 2); sample_positions
    (n_drifters, n_samples, 2), physical coordinates."""
    __slots__ = ()

    @classmethod
    def start(cls, mean_positions, n_samples=1):
        mean_positions = np.array(mean_positions, dtype=float).reshape(-1, 2)
        samples = np.repeat(mean_positions[:, np.newaxis, :], n_samples,
                            axis=1)
        return cls(mean_positions, samples)

    @property
    def n_drifters(self):
        return self.mean_positions.shape[0]

    @property
    def n_samples(self):
        return self.sample_positions.shape[1]


def _check_positions(positions):
    bad = ~np.all(np.isfinite(positions), axis=-1)
    if np.any(bad):
        drifter_id = int(np.argwhere(bad)[0][0])
        raise DrifterError("Drifter %d has a non-finite position"
                           % drifter_id, drifter_id=drifter_id)


def clamp_positions(grid, positions):
    xmin, xmax, ymin, ymax = grid.extent
    clamped = np.array(positions, dtype=float)
    clamped[..., 0] = np.clip(clamped[..., 0], xmin, xmax)
    clamped[..., 1] = np.clip(clamped[..., 1], ymin, ymax)
    return clamped


def bilinear(grid, field, positions):
    """
    Values of per-sample fields at per-sample positions.

    field is (n_samples, ny, nx) and positions (n_drifters, n_samples, 2);
    the result is (n_drifters, n_samples).
    """
    fi = np.clip((positions[..., 0] - grid.x0) / grid.dx, 0, grid.nx - 1)
    fj = np.clip((positions[..., 1] - grid.y0) / grid.dy, 0, grid.ny - 1)
    i0 = np.minimum(np.floor(fi).astype(np.intp), grid.nx - 2)
    j0 = np.minimum(np.floor(fj).astype(np.intp), grid.ny - 2)
    wx = fi - i0
    wy = fj - j0
    n = np.arange(field.shape[0])[np.newaxis, :]
    return ((1 - wx) * (1 - wy) * field[n, j0, i0] +
            wx * (1 - wy) * field[n, j0, i0 + 1] +
            (1 - wx) * wy * field[n, j0 + 1, i0] +
            wx * wy * field[n, j0 + 1, i0 + 1])


def drifter_euler_step(grid, positions, u, v, tau):
    _check_positions(positions)
    moved = np.empty_like(positions)
    moved[..., 0] = positions[..., 0] + tau * bilinear(grid, u, positions)
    moved[..., 1] = positions[..., 1] + tau * bilinear(grid, v, positions)
    _check_positions(moved)
    return clamp_positions(grid, moved)


def advect_drifters(drifters, velocity_path, layout, tau):
    """
    Euler-advect every sample position through the per-sample states of
    successive substeps; velocity_path yields (n_samples, dim) arrays.
    """
    positions = drifters.sample_positions
    for states in velocity_path:
        fields = layout.split(states)
        positions = drifter_euler_step(layout.grid, positions,
                                       fields[:, 1], fields[:, 2], tau)
    return DrifterSet(positions.mean(axis=1), positions)


def drifter_obs_locations(drifters, grid):
    return np.unique(nearest_points(grid, drifters.mean_positions))


class DrifterTracker(object):
    """Substep callback that advects drifter samples alongside a forecast
    of a stack of states."""

    def __init__(self, layout, drifters, n_samples, tau):
        self.layout = layout
        self.tau = tau
        self.positions = DrifterSet.start(drifters.mean_positions,
                                          n_samples).sample_positions

    def __call__(self, l, t, states):
        fields = self.layout.split(np.atleast_2d(states))
        self.positions = drifter_euler_step(
            self.layout.grid, self.positions, fields[:, 1], fields[:, 2],
            self.tau)

    def result(self):
        return DrifterSet(self.positions.mean(axis=1), self.positions)


def forecast(model, states, t_prev, t_next, drifters=None):
    """
    Deterministic forecast of a stack of states (n, dim).

    When drifters are given, every state carries its own copy of the
    current drifter estimate and the new estimate is their average.
    """
    states = np.atleast_2d(states)
    if drifters is None:
        return model.propagate(states, t_prev, t_next), None
    tracker = DrifterTracker(model.layout, drifters, states.shape[0],
                             (t_next - t_prev) / model.L)
    propagated = model.propagate(states, t_prev, t_next, on_substep=tracker)
    return propagated, tracker.result()


def load_drifter_csv(path):
    frame = pandas.read_csv(path)
    missing = [c for c in DRIFTER_COLUMNS if c not in frame.columns]
    if missing:
        raise ObservationError("%s lacks columns %s"
                               % (path, ', '.join(missing)))
    return frame.sort_values(['time_s', 'drifter_id'], kind='mergesort'
                             ).reset_index(drop=True)


def drifter_observations(frame, times, grid, sigma_y):
    """
    Drifter batches at the observation times times[1:], with the drifter
    positions at times[0] as the starting estimate.
    """
    ids = np.unique(frame['drifter_id'].values)
    positions = []
    batches = []
    for k, t in enumerate(times):
        rows = frame[np.isclose(frame['time_s'].values, t)]
        if not np.array_equal(np.sort(rows['drifter_id'].values), ids):
            raise ObservationError("Drifter records at t=%s are incomplete"
                                   % t, index=k)
        xy = rows[['x_m', 'y_m']].values.astype(float)
        positions.append(xy)
        if k == 0:
            continue
        velocities = rows[['u_mps', 'v_mps']].values.astype(float)
        batches.append(bin_drifter_values(k, nearest_points(grid, xy),
                                          velocities, sigma_y))
    return DrifterObservations(positions[0], np.stack(positions), batches)


def save_batches(batches, path):
    width = max([len(b.fields) for b in batches] or [1])
    columns = ['k', 'location_index'] + ['value_%d' % (n + 1)
                                         for n in range(width)]
    records = []
    for batch in batches:
        values = batch.values.reshape(batch.m, len(batch.fields))
        for location, row in zip(batch.locations, values):
            record = dict(k=batch.k, location_index=int(location))
            for n, value in enumerate(row):
                record['value_%d' % (n + 1)] = value
            records.append(record)
    frame = pandas.DataFrame.from_records(records, columns=columns)
    frame.to_csv(path, index=False)
    return path


def load_batches(path, sigma_y, fields=HEIGHT_FIELDS):
    frame = pandas.read_csv(path)
    columns = ['value_%d' % (n + 1) for n in range(len(fields))]
    check = [c for c in columns if c not in frame.columns]
    if check:
        raise ObservationError("%s lacks columns %s"
                               % (path, ', '.join(check)))
    batches = []
    for k, group in frame.groupby('k', sort=True):
        batches.append(ObservationBatch(k, group['location_index'].values,
                                        group[columns].values.ravel(),
                                        sigma_y, fields=fields))
    return batches

