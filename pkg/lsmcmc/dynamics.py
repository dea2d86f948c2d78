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
Forward models: the scaled-identity linear map and a finite-volume solver
for the rotating shallow-water equations.

Shallow-water states hold depth and velocities, ``[eta; u; v]``, each laid
out like a grid field. The solver works on the conserved variables
``(eta, eta * u, eta * v)`` with local Lax-Friedrichs (Rusanov) interface
fluxes and a two-stage Heun time step. The one-cell frame around the grid
is overwritten from a boundary provider after every stage.
'''

from __future__ import absolute_import
from __future__ import division
from __future__ import unicode_literals

import logging
from collections import namedtuple

import numpy as np

from . import constants
from .compressr import Opener, read_exact
from .errors import CFLViolationError, DimensionError, DryStateError
from .noise import gaussian_logpdf

log = logging.getLogger(__name__)

Snapshot = namedtuple("Snapshot", "state t nx ny field_count")


def _validate(z, dim):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != dim:
        raise DimensionError("State length %d does not match layout %d"
                             % (z.shape[-1], dim))
    if not np.all(np.isfinite(z)):
        raise DimensionError("State has non-finite entries")
    return z


class StateLayout(namedtuple("StateLayout", "grid field_count")):
    __slots__ = ()

    @property
    def npoints(self):
        return self.grid.npoints

    @property
    def dim(self):
        return self.field_count * self.grid.npoints

    def split(self, z):
        """(..., dim) -> (..., field_count, ny, nx)"""
        z = np.asarray(z)
        if z.shape[-1] != self.dim:
            raise DimensionError("State length %d does not match layout %d"
                                 % (z.shape[-1], self.dim))
        return z.reshape(z.shape[:-1] + (self.field_count, ) +
                         self.grid.shape)

    def join(self, fields):
        fields = np.asarray(fields)
        return fields.reshape(fields.shape[:-3] + (self.dim, ))

    def state_indices(self, points, fields=None):
        """Rows of the state vector holding the given grid points, field
        by field."""
        points = np.asarray(points, dtype=np.intp).ravel()
        if fields is None:
            fields = range(self.field_count)
        return np.concatenate([points + f * self.npoints for f in fields])

    def validate(self, z):
        return _validate(z, self.dim)


class VectorLayout(namedtuple("VectorLayout", "dim")):
    """
    Layout of a plain vector state with no grid behind it, one point per
    coordinate. Swaths and partitions need a :class:`StateLayout`.
    """
    __slots__ = ()

    grid = None
    field_count = 1

    @property
    def npoints(self):
        return self.dim

    def state_indices(self, points, fields=None):
        return np.asarray(points, dtype=np.intp).ravel()

    def validate(self, z):
        return _validate(z, self.dim)


class LinearModel(object):
    __slots__ = ['a_scale', 'sigma_z']

    def __init__(self, a_scale, sigma_z):
        if abs(a_scale) > 1:
            raise DimensionError("|a_scale| must not exceed 1, got %r"
                                 % (a_scale, ))
        self.a_scale = float(a_scale)
        self.sigma_z = float(sigma_z)

    def forward(self, z):
        return self.a_scale * np.asarray(z, dtype=float)

    def propagate(self, z, t_prev=None, t_next=None, L=None,
                  on_substep=None):
        # A discrete map: one application per observation interval
        return self.forward(z)


def linear_forward(model, z):
    return model.forward(z)


def linear_initial_condition(dim, rng):
    """The first third of the coordinates uniform on [-0.15, 0], the rest
    zero."""
    z0 = np.zeros(dim)
    n = dim // 3
    z0[:n] = -0.15 * rng.random(n)
    return z0


class ConstantBoundary(object):
    def __init__(self, fields):
        self.fields = np.array(fields, dtype=float)

    def __call__(self, t):
        return self.fields


class LinearBoundary(object):
    """Boundary values extrapolated linearly in time from two states."""

    def __init__(self, start, end, t_start, t_end):
        if not t_end > t_start:
            raise DimensionError("Boundary times must increase")
        self.start = np.array(start, dtype=float)
        self.rate = (np.array(end, dtype=float) - self.start) / (
            t_end - t_start)
        self.t_start = float(t_start)

    def __call__(self, t):
        return self.start + (t - self.t_start) * self.rate


def _central_difference(field, spacing, axis):
    diff = np.zeros_like(field)
    inner = [slice(1, -1), slice(1, -1)]
    ahead = list(inner)
    behind = list(inner)
    ahead[axis] = slice(2, None)
    behind[axis] = slice(None, -2)
    diff[tuple(inner)] = (field[tuple(ahead)] -
                          field[tuple(behind)]) / (2.0 * spacing)
    return diff


class SweModel(object):

    field_count = 3

    def __init__(self, grid, H, g=constants.GRAVITY, f0=0.0, beta=0.0,
                 y_ref=None, boundary=None, tau=120.0, L=10):
        self.grid = grid
        self.layout = StateLayout(grid, self.field_count)
        self.H = np.array(np.broadcast_to(np.asarray(H, dtype=float),
                                          grid.shape))
        self.g = float(g)
        self.f0 = float(f0)
        self.beta = float(beta)
        if y_ref is None:
            y_ref = 0.5 * (grid.extent[2] + grid.extent[3])
        self.y_ref = float(y_ref)
        self.tau = float(tau)
        self.L = int(L)
        if self.L < 1 or not self.tau > 0:
            raise DimensionError("Need tau > 0 and L >= 1")
        self.boundary = boundary
        self.dHdx = _central_difference(self.H, grid.dx, axis=1)
        self.dHdy = _central_difference(self.H, grid.dy, axis=0)
        self.coriolis = (self.f0 + self.beta * (grid.y - self.y_ref))[
            :, np.newaxis]

    def surface(self, state):
        "Surface elevation h - H"
        return self.layout.split(state)[..., 0, :, :] - self.H

    def mass(self, state):
        fields = self.layout.split(state)
        return fields[..., 0, :, :].sum(axis=(-2, -1)) * (
            self.grid.dx * self.grid.dy)

    def _check_wet(self, h):
        wet = h > 0
        if not np.all(wet):
            location = tuple(int(x) for x in np.argwhere(~wet)[0])
            raise DryStateError("Non-positive depth at %s" % (location, ),
                                location=location)

    def courant(self, fields, dt):
        h = fields[..., 0, :, :]
        c = np.sqrt(self.g * h)
        speed = np.maximum(np.abs(fields[..., 1, :, :]),
                           np.abs(fields[..., 2, :, :])) + c
        return dt * float(np.max(speed)) / min(self.grid.dx, self.grid.dy)

    def _check_cfl(self, fields, dt):
        courant = self.courant(fields, dt)
        if courant > 1.0:
            raise CFLViolationError("Courant number %.3f exceeds 1" % courant,
                                    courant=courant)

    @staticmethod
    def _conserved(fields):
        h = fields[..., 0, :, :]
        return np.stack([h, h * fields[..., 1, :, :],
                         h * fields[..., 2, :, :]], axis=-3)

    @staticmethod
    def _primitive(U):
        h = U[..., 0, :, :]
        return np.stack([h, U[..., 1, :, :] / h, U[..., 2, :, :] / h],
                        axis=-3)

    def _fluxes(self, U):
        """Rusanov fluxes through x faces (..., 3, ny, nx-1) and y faces
        (..., 3, ny-1, nx)."""
        g = self.g
        h, hu, hv = U[..., 0, :, :], U[..., 1, :, :], U[..., 2, :, :]
        u = hu / h
        v = hv / h
        c = np.sqrt(g * h)
        pressure = 0.5 * g * h * h

        F = np.stack([hu, hu * u + pressure, hu * v], axis=-3)
        speed = np.abs(u) + c
        lam = np.maximum(speed[..., :, :-1], speed[..., :, 1:])
        Fx = (0.5 * (F[..., :, :, :-1] + F[..., :, :, 1:]) -
              0.5 * lam[..., np.newaxis, :, :] *
              (U[..., :, :, 1:] - U[..., :, :, :-1]))

        G = np.stack([hv, hv * u, hv * v + pressure], axis=-3)
        speed = np.abs(v) + c
        lam = np.maximum(speed[..., :-1, :], speed[..., 1:, :])
        Gy = (0.5 * (G[..., :, :-1, :] + G[..., :, 1:, :]) -
              0.5 * lam[..., np.newaxis, :, :] *
              (U[..., :, 1:, :] - U[..., :, :-1, :]))
        return Fx, Gy

    def _rhs(self, U):
        """Tendency on interior cells and the mass entering through the
        frame per unit time."""
        dx, dy = self.grid.dx, self.grid.dy
        Fx, Gy = self._fluxes(U)
        R = (-(Fx[..., 1:-1, 1:] - Fx[..., 1:-1, :-1]) / dx -
             (Gy[..., 1:, 1:-1] - Gy[..., :-1, 1:-1]) / dy)
        h = U[..., 0, 1:-1, 1:-1]
        f = self.coriolis[1:-1]
        R[..., 1, :, :] += (self.g * h * self.dHdx[1:-1, 1:-1] +
                            f * U[..., 2, 1:-1, 1:-1])
        R[..., 2, :, :] += (self.g * h * self.dHdy[1:-1, 1:-1] -
                            f * U[..., 1, 1:-1, 1:-1])
        inflow = (dy * (Fx[..., 0, 1:-1, 0] - Fx[..., 0, 1:-1, -1]).sum(-1) +
                  dx * (Gy[..., 0, 0, 1:-1] - Gy[..., 0, -1, 1:-1]).sum(-1))
        return R, inflow

    @staticmethod
    def _frame_mass(U):
        h = U[..., 0, :, :]
        return h.sum(axis=(-2, -1)) - h[..., 1:-1, 1:-1].sum(axis=(-2, -1))

    def _apply_frame(self, U, values):
        U[..., :, 0, :] = values[..., :, 0, :]
        U[..., :, -1, :] = values[..., :, -1, :]
        U[..., :, :, 0] = values[..., :, :, 0]
        U[..., :, :, -1] = values[..., :, :, -1]

    def step(self, state, t, dt, budget=False):
        """
        One Heun step of length dt from time t.

        With budget=True also returns the mass that crossed the frame
        during the step, so that ``mass(new) - mass(state)`` equals it up
        to rounding.
        """
        fields = self.layout.split(np.asarray(state, dtype=float))
        self._check_wet(fields[..., 0, :, :])
        self._check_cfl(fields, dt)
        U = self._conserved(fields)
        if self.boundary is None:
            # Frame held at its current values
            frame = U.copy()
        else:
            frame = self._conserved(self.boundary(t + dt))

        R1, inflow1 = self._rhs(U)
        U1 = U.copy()
        U1[..., 1:-1, 1:-1] += dt * R1
        self._apply_frame(U1, frame)
        self._check_wet(U1[..., 0, :, :])

        R2, inflow2 = self._rhs(U1)
        U2 = 0.5 * (U + U1)
        U2[..., 1:-1, 1:-1] += 0.5 * dt * R2
        old_frame = self._frame_mass(U)
        self._apply_frame(U2, frame)
        self._check_wet(U2[..., 0, :, :])

        new_state = self.layout.join(self._primitive(U2))
        if not budget:
            return new_state
        cell = self.grid.dx * self.grid.dy
        exchange = (0.5 * dt * (inflow1 + inflow2) +
                    cell * (self._frame_mass(U2) - old_frame))
        return new_state, exchange

    def propagate(self, z, t_prev, t_next, L=None, on_substep=None):
        """
        Advance from t_prev to t_next in L equal substeps.

        on_substep(l, t, state) sees the state at the start of every
        substep.
        """
        if L is None:
            L = self.L
        if L < 1 or not t_next > t_prev:
            raise DimensionError("Need t_next > t_prev and L >= 1")
        tau = (t_next - t_prev) / L
        state = np.asarray(z, dtype=float)
        for l in range(L):
            t = t_prev + l * tau
            if on_substep is not None:
                on_substep(l, t, state)
            state = self.step(state, t, tau)
        return state


def swe_step(model, state, t, dt):
    return model.step(state, t, dt)


def propagate(model, z, t_prev, t_next, L=None, on_substep=None):
    return model.propagate(z, t_prev, t_next, L=L, on_substep=on_substep)


def transition_logpdf(cov, z_prev_propagated, z):
    z_prev_propagated = np.asarray(z_prev_propagated, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.shape != z_prev_propagated.shape:
        raise DimensionError("States of shapes %s and %s"
                             % (z_prev_propagated.shape, z.shape))
    return gaussian_logpdf(cov, z - z_prev_propagated)


def bathymetry(grid, depth, seamount_height=0.0, seamount_width=None):
    """Flat sea floor at the given depth with an optional Gaussian
    seamount in the middle of the domain."""
    H = np.full(grid.shape, float(depth))
    if seamount_height:
        xmin, xmax, ymin, ymax = grid.extent
        if seamount_width is None:
            seamount_width = 0.15 * min(xmax - xmin, ymax - ymin)
        X, Y = np.meshgrid(grid.x, grid.y)
        r2 = ((X - 0.5 * (xmin + xmax)) ** 2 + (Y - 0.5 * (ymin + ymax)) ** 2)
        H -= seamount_height * np.exp(-r2 / seamount_width ** 2)
    return H


def bump_state(model, amplitude, width=None, center=None):
    """Fluid at rest with a Gaussian hump on the surface."""
    grid = model.grid
    xmin, xmax, ymin, ymax = grid.extent
    if center is None:
        center = (xmin + 0.35 * (xmax - xmin), ymin + 0.5 * (ymax - ymin))
    if width is None:
        width = 0.1 * min(xmax - xmin, ymax - ymin)
    X, Y = np.meshgrid(grid.x, grid.y)
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2
    fields = np.zeros((model.field_count, ) + grid.shape)
    fields[0] = model.H + amplitude * np.exp(-r2 / width ** 2)
    return model.layout.join(fields)


def save_snapshot(path, layout, state, t):
    """int64 header (nx, ny, field count), float64 time, then the state;
    little-endian."""
    state = layout.validate(state)
    header = np.array([layout.grid.nx, layout.grid.ny, layout.field_count],
                      dtype='<i8')
    with Opener().open(path, 'wb') as fh:
        fh.write(header.tobytes())
        fh.write(np.array([t], dtype='<f8').tobytes())
        fh.write(np.ascontiguousarray(state, dtype='<f8').tobytes())
    return path


def load_snapshot(path):
    with Opener().open(path, 'rb') as fh:
        nx, ny, field_count = [int(x) for x in np.frombuffer(
            read_exact(fh, 24), dtype='<i8')]
        t = float(np.frombuffer(read_exact(fh, 8), dtype='<f8')[0])
        size = nx * ny * field_count
        state = np.frombuffer(read_exact(fh, 8 * size), dtype='<f8')
    return Snapshot(state=state.astype(float), t=t, nx=nx, ny=ny,
                    field_count=field_count)
