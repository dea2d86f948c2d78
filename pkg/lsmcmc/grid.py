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
Rectangular grids, their partition into subdomains and the active set of
subdomains touched by observations.

Points are numbered ``i + j * nx`` with ``i`` the column (x) and ``j`` the
row (y), both starting at 0 in the southwest corner.
'''

from __future__ import absolute_import
from __future__ import division
from __future__ import unicode_literals

import logging
from collections import namedtuple

import numpy as np
from scipy.linalg import block_diag

from . import constants
from .errors import DimensionError, PartitionError

log = logging.getLogger(__name__)


class GridSpec(namedtuple("GridSpec", "nx ny dx dy x0 y0")):
    __slots__ = ()

    def __new__(cls, nx, ny, dx=1.0, dy=1.0, x0=0.0, y0=0.0):
        if int(nx) != nx or int(ny) != ny or nx < 2 or ny < 2:
            raise PartitionError(
                "Grid needs at least 2x2 points, got %sx%s" % (nx, ny))
        if not (dx > 0 and dy > 0):
            raise PartitionError(
                "Cell sizes must be positive, got dx=%s dy=%s" % (dx, dy))
        return super(GridSpec, cls).__new__(
            cls, int(nx), int(ny), float(dx), float(dy), float(x0), float(y0))

    @property
    def npoints(self):
        return self.nx * self.ny

    @property
    def shape(self):
        "Array shape of one field, rows first"
        return (self.ny, self.nx)

    @property
    def x(self):
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def y(self):
        return self.y0 + self.dy * np.arange(self.ny)

    @property
    def extent(self):
        "(xmin, xmax, ymin, ymax) of the grid points"
        return (self.x0, self.x0 + self.dx * (self.nx - 1),
                self.y0, self.y0 + self.dy * (self.ny - 1))

    def point_index(self, i, j):
        return np.asarray(i) + np.asarray(j) * self.nx

    def point_ij(self, index):
        index = np.asarray(index)
        return index % self.nx, index // self.nx

    def point_coordinates(self, index=None):
        """Physical (x, y) of points, shape (n, 2)."""
        if index is None:
            index = np.arange(self.npoints)
        i, j = self.point_ij(index)
        return np.stack([self.x0 + self.dx * i, self.y0 + self.dy * j],
                        axis=-1)


class Partition(namedtuple("Partition",
                           "grid gamma_effective sub_of_point sub_rects "
                           "cells_per_sub")):
    """
    sub_rects[s] is (i_start, i_stop, j_start, j_stop), half open, in point
    indices. cells_per_sub is (a, b): cells along x and along y.
    """
    __slots__ = ()

    @property
    def layout(self):
        "(columns, rows) of subdomains"
        a, b = self.cells_per_sub
        return ((self.grid.nx - 1) // a, (self.grid.ny - 1) // b)

    def owned_points(self, label):
        return np.flatnonzero(self.sub_of_point == label)

    def owned_counts(self):
        return np.bincount(self.sub_of_point, minlength=self.gamma_effective)


ActiveSet = namedtuple("ActiveSet",
                       "time_index points complement d_k hit_subdomains")


def is_prime(n):
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def factor_pairs(n):
    """(a, b) with a * b == n and a <= b, closest pair first."""
    pairs = []
    a = 1
    while a * a <= n:
        if n % a == 0:
            pairs.append((a, n // a))
        a += 1
    return sorted(pairs, key=lambda p: p[1] - p[0])


def _tiling(grid, quotient):
    """Cells per subdomain along (x, y) tiling the cell grid, or None."""
    cx, cy = grid.nx - 1, grid.ny - 1
    for a, b in factor_pairs(quotient):
        for along_x, along_y in ((a, b), (b, a)):
            if cx % along_x == 0 and cy % along_y == 0:
                return along_x, along_y
    return None


def make_partition(grid, gamma_requested):
    """
    Split the grid into equal rectangles of cells.

    The subdomain count must divide the number of cells with a quotient that
    is 1 or composite; other requests fall back to the nearest valid count
    below. Points on the west and south edges of a subdomain belong to it;
    the east and north grid-boundary lines fold into the last subdomain in
    their direction.
    """
    if int(gamma_requested) != gamma_requested or gamma_requested < 1:
        raise PartitionError(
            "Subdomain count must be a positive integer, got %r"
            % (gamma_requested, ))
    cells = (grid.nx - 1) * (grid.ny - 1)
    if gamma_requested > cells:
        raise PartitionError(
            "Subdomain count %d exceeds the %d grid cells"
            % (gamma_requested, cells))
    shape = None
    gamma = int(gamma_requested)
    while gamma >= 1:
        if cells % gamma == 0:
            quotient = cells // gamma
            if quotient == 1 or not is_prime(quotient):
                shape = _tiling(grid, quotient)
                if shape is not None:
                    break
        gamma -= 1
    if shape is None:
        # A single subdomain always tiles
        gamma, shape = 1, (grid.nx - 1, grid.ny - 1)
    if gamma != gamma_requested:
        log.info("Using %d subdomains instead of %d", gamma, gamma_requested)
    a, b = shape
    ncol = (grid.nx - 1) // a
    nrow = (grid.ny - 1) // b
    col = np.minimum(np.arange(grid.nx) // a, ncol - 1)
    row = np.minimum(np.arange(grid.ny) // b, nrow - 1)
    sub_of_point = (col[np.newaxis, :] + ncol * row[:, np.newaxis]).ravel()
    rects = []
    for r in range(nrow):
        j_stop = grid.ny if r == nrow - 1 else (r + 1) * b
        for c in range(ncol):
            i_stop = grid.nx if c == ncol - 1 else (c + 1) * a
            rects.append((c * a, i_stop, r * b, j_stop))
    return Partition(grid=grid, gamma_effective=gamma,
                     sub_of_point=sub_of_point, sub_rects=tuple(rects),
                     cells_per_sub=(a, b))


def default_gamma(nx, ny):
    """Subdomain count that cuts the grid into 2x2-cell rectangles, or as
    close to that as the cell count allows."""
    cells = (nx - 1) * (ny - 1)
    return max(1, cells // constants.CELLS_PER_SUBDOMAIN)


def check_locations(grid, locations):
    locations = np.asarray(locations)
    if locations.size == 0:
        return locations.astype(np.intp).ravel()
    if not np.issubdtype(locations.dtype, np.integer):
        if not np.all(np.equal(np.mod(locations, 1), 0)):
            raise PartitionError("Location indices must be integers")
        locations = locations.astype(np.intp)
    locations = locations.ravel()
    bad = np.flatnonzero((locations < 0) | (locations >= grid.npoints))
    if bad.size:
        index = int(locations[bad[0]])
        raise PartitionError("Location index %d outside grid of %d points"
                             % (index, grid.npoints), index=index)
    return locations


def active_set(partition, obs_locations, k=0):
    locations = check_locations(partition.grid, obs_locations)
    hits = np.unique(partition.sub_of_point[locations])
    mask = np.isin(partition.sub_of_point, hits)
    points = np.flatnonzero(mask)
    return ActiveSet(time_index=k, points=points,
                     complement=np.flatnonzero(~mask),
                     d_k=int(points.size), hit_subdomains=hits)


def check_symmetric(matrix, rtol=constants.SYMMETRY_RTOL):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionError("Expected a square matrix, got shape %s"
                             % (matrix.shape, ))
    scale = np.max(np.abs(matrix)) if matrix.size else 0.0
    gap = np.max(np.abs(matrix - matrix.T)) if matrix.size else 0.0
    if gap > rtol * scale:
        raise DimensionError(
            "Matrix is not symmetric: max asymmetry %.3e" % gap)
    return matrix


def restrict_precision(Q_inv, active, field_count=1):
    """
    Rows and columns of a single-field precision matrix at the active
    points, repeated block-diagonally for each field of the state.
    """
    Q_inv = check_symmetric(Q_inv)
    points = active.points if isinstance(active, ActiveSet) else active
    points = np.asarray(points, dtype=np.intp)
    if points.size and (points.min() < 0 or points.max() >= Q_inv.shape[0]):
        raise PartitionError("Active points outside a %d-point field block"
                             % Q_inv.shape[0])
    block = Q_inv[np.ix_(points, points)]
    if field_count == 1:
        return block
    return block_diag(*([block] * field_count))
