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
Experiment orchestration: problem set-up, replicated filter runs, the
accuracy metric, convergence studies and result files.
'''

from __future__ import absolute_import
from __future__ import division
from __future__ import unicode_literals

import io
import logging
import os
from collections import namedtuple

import numpy as np
import pandas
from joblib import Parallel, delayed

from .dynamics import (
    ConstantBoundary,
    LinearModel,
    StateLayout,
    SweModel,
    VectorLayout,
    bathymetry,
    bump_state,
    linear_initial_condition,
)
from .config import FILTER_SCHEMA, FilterSpec
from .errors import DimensionError, LsmcmcError, RunError
from .gaussian import (
    EnsembleKalmanFilter,
    KalmanFilter,
    LocalEnsembleKalmanFilter,
    LocalizationConfig,
)
from .grid import GridSpec, default_gamma, make_partition
from .hasher import hash_array, write_checksums
from .noise import DiagonalCovariance, FourierSineCovariance
from .observations import (
    DrifterSet,
    HEIGHT_FIELDS,
    drifter_observations,
    forecast,
    load_batches,
    load_drifter_csv,
    synthesize_observations,
)
from .smcmc import ChainConfig, LSMCMCFilter, SMCMCFilter, multi_run_mean
from .utils import Stopwatch, makedirs, spawn_generators

log = logging.getLogger(__name__)

# State coordinate traced in plotdata_coord.csv
TRACE_COORDINATE = 50
HISTOGRAM_BINS = 50

Problem = namedtuple("Problem",
                     "layout model cov_q z0 times batches truth reference "
                     "drifters")
ReplicaResult = namedtuple("ReplicaResult",
                           "replica means step_ms acceptance d_k checksums "
                           "wall_s")
StepDiagnostics = namedtuple("StepDiagnostics",
                             "k acceptance_rate d_k wall_time_ms checksum")
RunResult = namedtuple("RunResult",
                       "means step_ms reference summary diagnostics timing "
                       "out")
ConvergenceResult = namedtuple("ConvergenceResult", "table slope")


def error_metric(filter_means, reference_means, threshold):
    """Percentage of entries whose absolute error is below threshold."""
    filter_means = np.asarray(filter_means, dtype=float)
    reference_means = np.asarray(reference_means, dtype=float)
    if filter_means.shape != reference_means.shape:
        raise DimensionError("Means of shape %s against a reference of "
                             "shape %s" % (filter_means.shape,
                                           reference_means.shape))
    if not threshold > 0:
        raise ValueError("Threshold must be positive, got %r"
                         % (threshold, ))
    if filter_means.size == 0:
        return 100.0
    below = np.abs(filter_means - reference_means) < threshold
    return 100.0 * np.count_nonzero(below) / below.size


def fit_loglog_slope(ns, errors):
    """Least-squares slope of log(errors) against log(ns)."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ns.size < 2 or ns.shape != errors.shape:
        raise ValueError("Need at least two (N, error) pairs")
    if np.any(ns <= 0) or np.any(errors <= 0):
        raise ValueError("Sizes and errors must be positive")
    return float(np.polyfit(np.log(ns), np.log(errors), 1)[0])


def problem_generator(cfg):
    return spawn_generators(cfg.seed, 1)[0]


def replica_generators(cfg):
    """One generator per replica; the same list for every filter."""
    if cfg.seeds:
        return [np.random.default_rng(s) for s in cfg.seeds[:cfg.M]]
    return spawn_generators(cfg.seed, cfg.M + 1)[1:]


def _source(cfg):
    return 'full' if cfg.observations == 'full' else cfg.swath


def _linear_problem(cfg, rng):
    spec = cfg.linear
    if spec.dim:
        layout = VectorLayout(spec.dim)
    else:
        layout = StateLayout(GridSpec(spec.nx, spec.ny), 1)
    model = LinearModel(spec.a_scale, spec.sigma_z)
    cov_q = DiagonalCovariance(spec.sigma_z ** 2, layout.dim)
    z0 = linear_initial_condition(layout.dim, rng)
    times = np.arange(cfg.T + 1, dtype=float)
    truth = [z0]
    for _ in range(cfg.T):
        truth.append(model.forward(truth[-1]) + cov_q.sample(rng))
    truth = np.array(truth)
    if cfg.observation_file:
        batches = load_batches(cfg.observation_file, cfg.sigma_y)
        truth = None
    else:
        batches = synthesize_observations(truth, _source(cfg), cfg.sigma_y,
                                          rng, layout)
    problem = Problem(layout, model, cov_q, z0, times,
                      _by_step(batches, cfg.T), truth, None, None)
    return problem._replace(reference=kalman_reference(problem))


def kalman_reference(problem):
    """Exact filter means, the reference of the linear model."""
    kf = KalmanFilter(problem.model, problem.cov_q, problem.layout)
    kf.initialize(problem.z0)
    return np.array([kf.assimilate(batch) for batch in problem.batches])


def _swe_model(cfg):
    spec = cfg.swe
    grid = GridSpec(spec.nx, spec.ny, spec.dx, spec.dy)
    H = bathymetry(grid, spec.depth, spec.seamount_height)
    model = SweModel(grid, H, f0=spec.f0, beta=spec.beta,
                     tau=spec.interval, L=spec.substeps)
    z0 = bump_state(model, spec.bump_amplitude)
    model.boundary = ConstantBoundary(model.layout.split(z0))
    cov_q = FourierSineCovariance(grid, spec.noise_modes, spec.noise_sigma,
                                  field_count=model.field_count)
    return model, cov_q, z0


def _drifter_start(grid, count):
    side = int(np.ceil(np.sqrt(count)))
    xmin, xmax, ymin, ymax = grid.extent
    xs = xmin + (xmax - xmin) * (np.arange(side) + 1) / (side + 1)
    ys = ymin + (ymax - ymin) * (np.arange(side) + 1) / (side + 1)
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])[:count]


def prior_mean(model, cov_q, z0, times, runs, rng):
    """Average of free forward runs with state noise, at times[1:]."""
    states = np.repeat(z0[np.newaxis, :], runs, axis=0)
    means = []
    for k in range(1, len(times)):
        states = model.propagate(states, times[k - 1], times[k])
        states = states + cov_q.sample(rng, runs)
        means.append(states.mean(axis=0))
    return np.array(means)


def _swe_problem(cfg, rng):
    model, cov_q, z0 = _swe_model(cfg)
    layout = model.layout
    times = cfg.swe.interval * np.arange(cfg.T + 1)
    drifters = None
    truth = None
    if cfg.observations == 'drifters' and cfg.observation_file:
        frame = load_drifter_csv(cfg.observation_file)
        observed = drifter_observations(frame, times, layout.grid,
                                        cfg.sigma_y)
        drifters = DrifterSet.start(observed.initial_positions)
        batches = observed.batches
    elif cfg.observation_file:
        batches = load_batches(cfg.observation_file, cfg.sigma_y,
                               HEIGHT_FIELDS)
    elif cfg.observations == 'drifters':
        drifters = DrifterSet.start(_drifter_start(layout.grid,
                                                   cfg.drifters.count))
        truth, drifter_path = _truth_run(model, cov_q, z0, times, rng,
                                         drifters)
        batches = synthesize_observations(truth, drifters, cfg.sigma_y, rng,
                                          layout, drifter_path=drifter_path)
    else:
        truth, _ = _truth_run(model, cov_q, z0, times, rng)
        batches = synthesize_observations(truth, _source(cfg), cfg.sigma_y,
                                          rng, layout)
    if cfg.observations != 'drifters' and truth is not None:
        reference = truth[1:]
    else:
        reference = prior_mean(model, cov_q, z0, times, cfg.reference_runs,
                               rng)
    return Problem(layout, model, cov_q, z0, times, _by_step(batches, cfg.T),
                   truth, reference, drifters)


def _truth_run(model, cov_q, z0, times, rng, drifters=None):
    truth = [z0]
    path = [None if drifters is None else drifters.mean_positions]
    for k in range(1, len(times)):
        propagated, drifters = forecast(model, truth[-1], times[k - 1],
                                        times[k], drifters)
        truth.append(propagated[0] + cov_q.sample(rng))
        path.append(None if drifters is None else drifters.mean_positions)
    return np.array(truth), path


def _by_step(batches, T):
    """Batches for k = 1 .. T, None where a step has no observations."""
    found = dict((batch.k, batch) for batch in batches)
    return [found.get(k) for k in range(1, T + 1)]


def build_problem(cfg):
    """
    Model, noise, truth, observations and reference of an experiment.

    The reference is the exact Kalman filter for the linear model, the
    truth run for shallow water observed along swaths, and the mean of
    free forward runs when drifters are observed.
    """
    rng = problem_generator(cfg)
    with Stopwatch() as watch:
        if cfg.model == 'linear':
            problem = _linear_problem(cfg, rng)
        else:
            problem = _swe_problem(cfg, rng)
    log.info("Built %s problem with %s observations: d=%d, T=%d (%.1f s)",
             cfg.model, cfg.observations, problem.layout.dim, cfg.T,
             watch.elapsed)
    return problem


def make_filter(spec, problem, rng):
    """A filter object for the given :class:`FilterSpec`."""
    layout = problem.layout
    args = (problem.model, problem.cov_q, layout)
    if spec.name == 'kf':
        return KalmanFilter(*args)
    if spec.name == 'enkf':
        return EnsembleKalmanFilter(*args, N=spec.N, rng=rng,
                                    method=spec.method,
                                    drifters=problem.drifters)
    if spec.name == 'lenkf':
        loc = LocalizationConfig(make_partition(layout.grid, spec.gamma),
                                 spec.r, spec.w0)
        return LocalEnsembleKalmanFilter(*args, N=spec.N, rng=rng, loc=loc,
                                         method=spec.method,
                                         drifters=problem.drifters)
    cfg = ChainConfig(spec.N, spec.N_burn, spec.q, spec.proposal_scale,
                      boundary_rule=spec.boundary_rule,
                      scale_by_dimension=spec.scale_by_dimension)
    if spec.name == 'smcmc':
        return SMCMCFilter(*args, cfg=cfg, rng=rng,
                           drifters=problem.drifters)
    if spec.name == 'lsmcmc':
        return LSMCMCFilter(*args, cfg=cfg, rng=rng,
                            partition=make_partition(layout.grid, spec.gamma),
                            drifters=problem.drifters)
    raise ValueError("Unknown filter %r" % (spec.name, ))


def run_replica(problem, spec, rng, replica):
    """
    One filter over all observation times.

    Failures are re-raised as :class:`RunError` carrying the step, the
    replica and the means completed so far.
    """
    T = len(problem.batches)
    means = np.empty((T, problem.layout.dim))
    step_ms = np.empty(T)
    acceptance = np.full(T, np.nan)
    d_k = np.zeros(T, dtype=np.intp)
    checksums = []
    filt = make_filter(spec, problem, rng)
    with Stopwatch() as total:
        filt.initialize(problem.z0)
        for n, batch in enumerate(problem.batches):
            k = n + 1
            try:
                with Stopwatch() as watch:
                    means[n] = filt.assimilate(batch, problem.times[n],
                                               problem.times[k])
            except (LsmcmcError, ArithmeticError, ValueError) as e:
                raise RunError("%s replica %d failed at step %d: %s"
                               % (spec.name, replica, k, e),
                               step=k, replica=replica, partial=means[:n])
            step_ms[n] = watch.milliseconds
            acceptance[n] = filt.diagnostics['acceptance_rate']
            d_k[n] = filt.diagnostics['d_k']
            checksums.append(hash_array(means[n]))
            log.debug("%s replica %d step %d: d_k=%d acceptance=%.3f "
                      "%.1f ms", spec.name, replica, k, d_k[n],
                      acceptance[n], step_ms[n])
    return ReplicaResult(replica, means, step_ms, acceptance, d_k,
                         checksums, total.elapsed)


def _state_columns(dim):
    return ['z%d' % i for i in range(dim)]


def write_means(means, path):
    means = np.atleast_2d(means)
    frame = pandas.DataFrame(means, columns=_state_columns(means.shape[1]))
    frame.to_csv(path, index=False, float_format='%.17g')
    return path


def read_means(path):
    return pandas.read_csv(path).values.astype(float)


def run_filter(problem, spec, generators, n_jobs=1, out=None):
    """
    All replicas of one filter, in parallel; results come back ordered
    by replica.

    When a replica fails and out is given, its completed means are
    written to ``means_<filter>_replica<r>.partial.csv`` before the
    error propagates.
    """
    log.info("Running %s with %d replicas", spec.name, len(generators))
    try:
        results = Parallel(n_jobs=n_jobs)(
            delayed(run_replica)(problem, spec, rng, replica)
            for replica, rng in enumerate(generators))
    except RunError as e:
        if out is not None and e.partial is not None:
            path = os.path.join(out, 'means_%s_replica%d.partial.csv'
                                % (spec.name, e.replica))
            write_means(e.partial.reshape(-1, problem.layout.dim), path)
            log.error("Wrote %d completed steps to %s", len(e.partial), path)
        raise
    return sorted(results, key=lambda r: r.replica)


def _diagnostic_rows(name, results):
    for result in results:
        for n, checksum in enumerate(result.checksums):
            step = StepDiagnostics(n + 1, result.acceptance[n],
                                   int(result.d_k[n]), result.step_ms[n],
                                   checksum)
            row = dict(filter=name, replica=result.replica)
            row.update(step._asdict())
            yield row


def _histogram(errors, path):
    top = float(errors.max()) if errors.size else 0.0
    counts, edges = np.histogram(errors, bins=HISTOGRAM_BINS,
                                 range=(0.0, top or 1.0))
    pandas.DataFrame(dict(bin_left=edges[:-1], bin_right=edges[1:],
                          count=counts)).to_csv(path, index=False,
                                                float_format='%.17g')
    return path


def timing_report(summary):
    """
    Localized against full chain time per assimilation step, when both
    ran with equal N and N_burn; None otherwise.
    """
    rows = summary.set_index('filter')
    if 'smcmc' not in rows.index or 'lsmcmc' not in rows.index:
        return None
    local, full = rows.loc['lsmcmc'], rows.loc['smcmc']
    if (local['N'], local['N_burn']) != (full['N'], full['N_burn']):
        return None
    ratio = float(local['step_ms'] / full['step_ms'])
    if ratio >= 1:
        log.warning("Localized chain was not faster than the full chain: "
                    "%.1f ms against %.1f ms per step", local['step_ms'],
                    full['step_ms'])
    else:
        log.info("Localized to full chain time per step: %.3f", ratio)
    return ratio


def run_experiment(cfg):
    """
    Every configured filter over M replicas, with the results written to
    cfg.out:

    - means_<filter>.csv: replica-averaged filter means, one row per step
    - reference.csv: the reference means
    - diagnostics.csv: per replica and step acceptance, d_k, wall time
      and mean checksum
    - summary.csv: one row per filter with the accuracy metric
    - plotdata_coord.csv, plotdata_hist_<filter>.csv: plot-ready traces
    - checksums: digests of the means files
    - timing.csv: localized against full chain time per step, when both
      ran with equal N and N_burn
    """
    out = makedirs(cfg.out)
    with io.open(os.path.join(out, 'config.ini'), 'w',
                 encoding='utf-8') as fh:
        fh.write(cfg.to_string())
    problem = build_problem(cfg)
    reference = problem.reference
    digest_paths = [write_means(reference, os.path.join(out,
                                                        'reference.csv'))]
    traced = min(TRACE_COORDINATE, problem.layout.dim - 1)
    coord = dict(k=np.arange(1, cfg.T + 1), reference=reference[:, traced])

    means = {}
    step_ms = {}
    summary = []
    diagnostics = []
    for spec in cfg.filters:
        generators = replica_generators(cfg)
        with Stopwatch() as watch:
            results = run_filter(problem, spec, generators, cfg.threads, out)
        mean = multi_run_mean([r.means for r in results])
        means[spec.name] = mean
        step_ms[spec.name] = np.array([r.step_ms for r in results])
        digest_paths.append(write_means(
            mean, os.path.join(out, 'means_%s.csv' % spec.name)))
        errors = np.abs(mean - reference)
        _histogram(errors.ravel(), os.path.join(
            out, 'plotdata_hist_%s.csv' % spec.name))
        coord[spec.name] = mean[:, traced]
        diagnostics.extend(_diagnostic_rows(spec.name, results))
        pct = error_metric(mean, reference, cfg.threshold)
        summary.append(dict(
            filter=spec.name, gamma=spec.gamma, r=spec.r, N=spec.N,
            N_burn=spec.N_burn, M=cfg.M, wall_s=watch.elapsed,
            wall_s_per_replica=float(np.mean([r.wall_s for r in results])),
            step_ms=float(step_ms[spec.name].mean()),
            pct_below_threshold=pct))
        log.info("%s: %.2f%% of errors below %g (%.1f s)", spec.name, pct,
                 cfg.threshold, watch.elapsed)

    summary = pandas.DataFrame(summary, columns=[
        'filter', 'gamma', 'r', 'N', 'N_burn', 'M', 'wall_s',
        'wall_s_per_replica', 'step_ms', 'pct_below_threshold'])
    summary.to_csv(os.path.join(out, 'summary.csv'), index=False)
    diagnostics = pandas.DataFrame(diagnostics, columns=[
        'filter', 'replica'] + list(StepDiagnostics._fields))
    diagnostics.to_csv(os.path.join(out, 'diagnostics.csv'), index=False)
    pandas.DataFrame(coord).to_csv(os.path.join(out, 'plotdata_coord.csv'),
                                   index=False, float_format='%.17g')
    write_checksums(digest_paths, os.path.join(out, 'checksums'))
    ratio = timing_report(summary)
    if ratio is not None:
        step = summary.set_index('filter')['step_ms']
        pandas.DataFrame([dict(lsmcmc_step_ms=step['lsmcmc'],
                               smcmc_step_ms=step['smcmc'],
                               ratio=ratio)]).to_csv(
            os.path.join(out, 'timing.csv'), index=False)
    return RunResult(means, step_ms, reference, summary, diagnostics, ratio,
                     out)


def convergence_study(cfg, N_list, filter_name='smcmc'):
    """
    RMSE of the replica-averaged filter mean against the exact Kalman
    filter for every sample size in N_list, and the fitted log-log slope.
    """
    if cfg.model != 'linear':
        raise RunError("Convergence studies need the linear model")
    N_list = sorted(int(n) for n in N_list)
    if len(N_list) < 3 or N_list[-1] < 10 * N_list[0]:
        log.warning("Sample sizes %s give a weak slope estimate", N_list)
    problem = build_problem(cfg)
    try:
        base = cfg.filter_spec(filter_name)
    except KeyError:
        defaults = dict((key, default) for key, _, default in
                        FILTER_SCHEMA[filter_name])
        base = FilterSpec(filter_name, N=defaults.pop('n'),
                          N_burn=defaults.pop('n_burn'), **defaults)
        if base.gamma == 0:
            base = base._replace(gamma=default_gamma(*cfg.grid_shape))
    rows = []
    for N in N_list:
        results = run_filter(problem, base._replace(N=N),
                             replica_generators(cfg), cfg.threads)
        mean = multi_run_mean([r.means for r in results])
        rmse = float(np.sqrt(np.mean((mean - problem.reference) ** 2)))
        log.info("%s N=%d: RMSE %.3e", filter_name, N, rmse)
        rows.append(dict(N=N, rmse=rmse))
    table = pandas.DataFrame(rows, columns=['N', 'rmse'])
    slope = fit_loglog_slope(table['N'].values, table['rmse'].values)
    return ConvergenceResult(table, slope)
