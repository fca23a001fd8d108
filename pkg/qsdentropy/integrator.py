import logging
import multiprocessing
import traceback
from functools import partial

import numpy as np

from .defaults import DT, STEPS, SEED, RECORD_STRIDE, ENSEMBLE_CHUNK, RNG_ALGORITHM
from .errors import ConfigError, NonFiniteStateError

logger = logging.getLogger(__name__)

NOISE_BLOCK = 4096


class IntegratorConfig:
    def __init__(self, dt=DT, steps=STEPS, seed=SEED, record_stride=RECORD_STRIDE, keep_increments=False):
        self.dt = float(dt)
        self.steps = int(steps)
        self.seed = int(seed)
        self.record_stride = int(record_stride)
        self.keep_increments = keep_increments
        if not self.dt > 0:
            raise ConfigError("dt must be positive, got %g" % self.dt)
        if self.steps < 1:
            raise ConfigError("steps must be at least 1, got %d" % self.steps)
        if self.record_stride < 1:
            raise ConfigError("record stride must be at least 1, got %d" % self.record_stride)
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer, got %d" % self.seed)

    @property
    def n_samples(self):
        return self.steps // self.record_stride + 1

    def times(self):
        return np.arange(self.n_samples) * (self.record_stride * self.dt)

    def with_seed(self, seed):
        return IntegratorConfig(self.dt, self.steps, seed, self.record_stride, self.keep_increments)

    def __str__(self):
        return "<%s(dt=%g, steps=%d, seed=%d, stride=%d)>" % (self.__class__.__name__, self.dt, self.steps,
                                                              self.seed, self.record_stride)

    def __repr__(self):
        return str(self)


class Trajectory:
    def __init__(self, system_name, labels, times, states, seed, increments=None, ds_env=None, flagged=0):
        self.system_name = system_name
        self.labels = tuple(labels)
        self.times = times
        self.states = states
        self.seed = seed
        self.increments = increments
        self.ds_env = ds_env
        self.ds_sys = None
        self.ds_tot = None
        self.flagged = flagged
        self.ledger = None

    def __len__(self):
        return len(self.times)

    def coordinate(self, label):
        return self.states[:, self.labels.index(label)]

    def __str__(self):
        return "<%s(%s, %d samples, seed=%d)>" % (self.__class__.__name__, self.system_name, len(self), self.seed)

    def __repr__(self):
        return str(self)


class EnsembleResult:
    """Pointwise ensemble statistics over trajectories on a shared time grid."""

    def __init__(self, system_name, labels, times, n_traj):
        self.system_name = system_name
        self.labels = tuple(labels)
        self.times = times
        self.n_traj = n_traj
        self.n_failed = 0
        self.n_flagged = 0
        self.counts = None
        self.means = None
        self.variances = None
        self.ds_env_mean = None
        self.ds_env_variance = None
        self.observable_names = ()
        self.observable_means = None
        self.observable_variances = None
        self.final_states = None
        self.final_ds_env = None
        self.traces = None
        self.ds_env_traces = None

    def standard_errors(self):
        return np.sqrt(self.variances / np.maximum(self.counts, 1)[:, None])

    def observable(self, name):
        k = self.observable_names.index(name)
        return self.observable_means[:, k], self.observable_variances[:, k]

    def __str__(self):
        return "<%s(%s, n_traj=%d, failed=%d, %d samples)>" % (self.__class__.__name__, self.system_name,
                                                              self.n_traj, self.n_failed, len(self.times))

    def __repr__(self):
        return str(self)


def child_seed(seed, index):
    """Seed of trajectory index derived from the master seed, independent of scheduling."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def make_generator(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


def _advance(system, states, dW, dt, invariant_map=None):
    drift = system.drift(states)
    noise = system.noise(states)
    increment = drift * dt
    for m in range(system.noise_count):
        increment = increment + noise[..., :, m] * dW[..., m, None]
    new_states = states + increment
    if invariant_map is not None:
        new_states = invariant_map.project(new_states)
    return system.domain.project(new_states)


def step(system, state, dW, dt, invariant_map=None):
    """One Euler-Maruyama step followed by the invariant projection, if any, and the domain projection."""
    state = system.check_point(state)
    dW = np.asarray(dW, dtype=float).reshape(system.noise_count)
    new_state = _advance(system, state, dW, dt, invariant_map)
    if not np.all(np.isfinite(new_state)):
        raise NonFiniteStateError(new_state)
    return new_state


def coarsen_increments(increments, factor):
    """Sum consecutive groups of factor Wiener increments along the step axis (axis -2)."""
    increments = np.asarray(increments, dtype=float)
    factor = int(factor)
    steps = increments.shape[-2]
    if factor < 1 or steps % factor:
        raise ConfigError("Cannot coarsen %d steps by a factor of %d" % (steps, factor))
    shape = increments.shape[:-2] + (steps // factor, factor, increments.shape[-1])
    return increments.reshape(shape).sum(axis=-2)


def integrate_with_increments(system, initial, increments, dt, invariant_map=None):
    """Replay given Wiener increments of shape ([n,] steps, M); returns the states at every step.

    Paths driven by coarsened increments of the same draw share their noise with the fine
    paths, which is what step-size refinement studies compare.
    """
    initial = system.check_point(initial)
    increments = np.asarray(increments, dtype=float)
    single = increments.ndim == 2
    if single:
        increments = increments[None]
    if increments.shape[-1] != system.noise_count:
        raise ConfigError("Increments carry %d noise terms, %s has %d" % (increments.shape[-1], system.name,
                                                                          system.noise_count))
    n_paths, steps = increments.shape[0], increments.shape[1]
    paths = np.empty((n_paths, steps + 1, system.dimension))
    paths[:, 0] = initial
    states = paths[:, 0]
    for k in range(steps):
        states = _advance(system, states, increments[:, k], dt, invariant_map)
        paths[:, k + 1] = states
    if not np.all(np.isfinite(paths)):
        logger.warning("Replayed paths of %s left the finite range" % system.name)
    return paths[0] if single else paths


def draw_increments(seed, n_paths, steps, noise_count, dt):
    """Wiener increments of shape (n_paths, steps, noise_count) from one Philox stream."""
    return make_generator(seed).standard_normal((n_paths, steps, noise_count)) * np.sqrt(dt)


class _NoiseStream:
    """Per-trajectory Philox streams drawn in fixed blocks so that batching never changes a path."""

    def __init__(self, seeds, noise_count, dt, steps=NOISE_BLOCK):
        self.generators = [make_generator(seed) for seed in seeds]
        self.noise_count = noise_count
        self.scale = np.sqrt(dt)
        self.block_size = max(1, min(NOISE_BLOCK, int(steps)))
        self.position = self.block_size
        self.block = None

    def next(self):
        if self.position == self.block_size:
            self.block = np.stack([g.standard_normal((self.block_size, self.noise_count)) for g in self.generators])
            self.position = 0
        dW = self.block[:, self.position, :] * self.scale
        self.position += 1
        return dW


class _BatchRecord:
    """Running sums over surviving trajectories plus full records for the first keep trajectories."""

    def __init__(self, n_samples, n_traj, dimension, n_observables, keep, with_entropy):
        self.counts = np.zeros(n_samples)
        self.sums = np.zeros((n_samples, dimension))
        self.sumsq = np.zeros((n_samples, dimension))
        self.obs_sums = np.zeros((n_samples, n_observables))
        self.obs_sumsq = np.zeros((n_samples, n_observables))
        self.ds_sums = np.zeros(n_samples) if with_entropy else None
        self.ds_sumsq = np.zeros(n_samples) if with_entropy else None
        self.keep = min(keep, n_traj)
        self.states = np.full((self.keep, n_samples, dimension), np.nan)
        self.ds_env = np.full((self.keep, n_samples), np.nan) if with_entropy else None

    def add(self, s, states, alive, observables, ds_env):
        live = states[alive]
        self.counts[s] = live.shape[0]
        self.sums[s] = live.sum(axis=0)
        self.sumsq[s] = (live * live).sum(axis=0)
        if observables.shape[-1]:
            self.obs_sums[s] = observables[alive].sum(axis=0)
            self.obs_sumsq[s] = (observables[alive] ** 2).sum(axis=0)
        if ds_env is not None:
            self.ds_sums[s] = ds_env[alive].sum()
            self.ds_sumsq[s] = (ds_env[alive] ** 2).sum()
        if self.keep:
            self.states[:, s, :] = states[:self.keep]
            if ds_env is not None:
                self.ds_env[:, s] = ds_env[:self.keep]


def integrate_batch(system, config, initial, seeds, entropy=None, observables=(), keep=0, invariant_map=None):
    """Integrate len(seeds) trajectories together, one Philox stream per trajectory.

    entropy, when given, is a callable (states, dx, dt) -> (increment, flagged) applied at
    every step. observables is a sequence of (name, expr) evaluated at each recorded time.
    invariant_map, a ReductionMap with levels, puts every step back on its invariant surface.
    Returns a dict of running statistics, final values and the first keep full records.
    """
    initial = system.check_point(initial)
    n_traj = len(seeds)
    states = np.tile(initial, (n_traj, 1))
    alive = np.ones(n_traj, dtype=bool)
    ds_env = np.zeros(n_traj) if entropy is not None else None
    flagged = np.zeros(n_traj, dtype=int)
    failed_at = np.full(n_traj, -1)
    increments = np.empty((min(keep, n_traj), config.steps, system.noise_count)) if config.keep_increments else None

    def observe(current):
        if not observables:
            return np.zeros((n_traj, 0))
        return np.stack([system.evaluate(expr, current) for _, expr in observables], axis=-1)

    record = _BatchRecord(config.n_samples, n_traj, system.dimension, len(observables), keep, entropy is not None)
    record.add(0, states, alive, observe(states), ds_env)
    noise = _NoiseStream(seeds, system.noise_count, config.dt, config.steps)

    for k in range(1, config.steps + 1):
        dW = noise.next()
        if increments is not None:
            increments[:, k - 1, :] = dW[:increments.shape[0]]
        new_states = _advance(system, states, dW, config.dt, invariant_map)
        finite = np.all(np.isfinite(new_states), axis=-1)
        newly_failed = alive & ~finite
        if np.any(newly_failed):
            failed_at[newly_failed] = k
            for i in np.nonzero(newly_failed)[0]:
                logger.warning("Trajectory with seed %d left the finite range at step %d from %s" % (
                    seeds[i], k, str(states[i])))
            alive &= finite
            new_states = np.where(alive[:, None], new_states, states)
        if entropy is not None:
            increment, bad = entropy(states, new_states - states, config.dt)
            bad = bad & alive
            flagged += bad
            ds_env = ds_env + np.where(alive & ~bad, increment, 0.0)
        states = new_states
        if k % config.record_stride == 0:
            record.add(k // config.record_stride, states, alive, observe(states), ds_env)

    return {
        "record": record,
        "final_states": np.where(alive[:, None], states, np.nan),
        "final_ds_env": None if ds_env is None else np.where(alive, ds_env, np.nan),
        "failed_at": failed_at,
        "flagged": flagged,
        "increments": increments,
    }


def run_trajectory(system, config, initial, entropy=None, invariant_map=None):
    """Integrate a single trajectory seeded directly by config.seed."""
    batch = integrate_batch(system, config, initial, [config.seed], entropy=entropy, keep=1,
                            invariant_map=invariant_map)
    record = batch["record"]
    if batch["failed_at"][0] >= 0:
        raise NonFiniteStateError(record.states[0][-1], step=int(batch["failed_at"][0]))
    trajectory = Trajectory(system.name, system.labels, config.times(), record.states[0], config.seed,
                            increments=None if batch["increments"] is None else batch["increments"][0],
                            ds_env=None if record.ds_env is None else record.ds_env[0],
                            flagged=int(batch["flagged"][0]))
    if trajectory.flagged:
        logger.warning("%d singular steps skipped in the entropy ledger" % trajectory.flagged)
    return trajectory


def run_ensemble_chunk(system, config, initial, chunk_index, first, count, entropy_spec=None, observables=(),
                       keep=0, invariant_map=None):
    func_logger = logging.getLogger("%s-%s" % (run_ensemble_chunk.__name__, multiprocessing.current_process()))
    try:
        func_logger.info("Integrating trajectories %d to %d" % (first, first + count - 1))
        entropy = None
        if entropy_spec is not None:
            from .entropy import make_entropy_increment
            method, reduction_map = entropy_spec
            entropy = make_entropy_increment(system, method, reduction_map)
        seeds = [child_seed(config.seed, i) for i in range(first, first + count)]
        batch = integrate_batch(system, config, initial, seeds, entropy=entropy, observables=observables, keep=keep,
                                invariant_map=invariant_map)
        batch["chunk_index"] = chunk_index
        batch["count"] = count
        return batch
    except Exception:
        func_logger.error('Caught exception in worker thread')
        traceback.print_exc()
        return {"chunk_index": chunk_index, "count": count, "error": traceback.format_exc()}


def run_ensemble_chunk_callback(result, result_list):
    if result is not None:
        result_list.append(result)


def _merge(system, config, n_traj, chunks, observables, with_entropy):
    result = EnsembleResult(system.name, system.labels, config.times(), n_traj)
    n_samples = config.n_samples
    counts = np.zeros(n_samples)
    sums = np.zeros((n_samples, system.dimension))
    sumsq = np.zeros((n_samples, system.dimension))
    obs_sums = np.zeros((n_samples, len(observables)))
    obs_sumsq = np.zeros((n_samples, len(observables)))
    ds_sums = np.zeros(n_samples)
    ds_sumsq = np.zeros(n_samples)
    final_states, final_ds, traces, ds_traces = [], [], [], []

    for chunk in sorted(chunks, key=lambda c: c["chunk_index"]):
        if "error" in chunk:
            result.n_failed += chunk["count"]
            continue
        record = chunk["record"]
        counts += record.counts
        sums += record.sums
        sumsq += record.sumsq
        obs_sums += record.obs_sums
        obs_sumsq += record.obs_sumsq
        if with_entropy:
            ds_sums += record.ds_sums
            ds_sumsq += record.ds_sumsq
            final_ds.append(chunk["final_ds_env"])
            if record.keep:
                ds_traces.append(record.ds_env)
        result.n_failed += int(np.sum(chunk["failed_at"] >= 0))
        result.n_flagged += int(np.sum(chunk["flagged"]))
        final_states.append(chunk["final_states"])
        if record.keep:
            traces.append(record.states)

    safe = np.maximum(counts, 1)
    result.counts = counts
    result.means = sums / safe[:, None]
    result.variances = np.maximum(sumsq / safe[:, None] - result.means ** 2, 0.0)
    result.observable_names = tuple(name for name, _ in observables)
    result.observable_means = obs_sums / safe[:, None]
    result.observable_variances = np.maximum(obs_sumsq / safe[:, None] - result.observable_means ** 2, 0.0)
    if with_entropy:
        result.ds_env_mean = ds_sums / safe
        result.ds_env_variance = np.maximum(ds_sumsq / safe - result.ds_env_mean ** 2, 0.0)
        result.final_ds_env = np.concatenate(final_ds) if final_ds else np.zeros(0)
        result.ds_env_traces = np.concatenate(ds_traces) if ds_traces else None
    result.final_states = np.concatenate(final_states) if final_states else np.zeros((0, system.dimension))
    result.traces = np.concatenate(traces) if traces else None
    return result


def run_ensemble(system, config, initial, n_traj, worker_count=1, entropy_spec=None, observables=(), traces=0,
                 chunk_size=ENSEMBLE_CHUNK, invariant_map=None):
    """Integrate n_traj trajectories; trajectory i is seeded by child_seed(config.seed, i).

    entropy_spec is an optional (method, reduction map) pair for in-loop environmental
    entropy. invariant_map is passed on to integrate_batch. Trajectories are split into fixed
    chunks so results do not depend on worker_count.
    """
    if n_traj < 1:
        raise ConfigError("n_traj must be at least 1, got %d" % n_traj)
    system.check_point(initial)
    logger.info("Running ensemble of %d trajectories of %s with %s (%s)" % (n_traj, system.name, str(config),
                                                                         RNG_ALGORITHM))
    chunk_args = []
    for chunk_index, first in enumerate(range(0, n_traj, chunk_size)):
        count = min(chunk_size, n_traj - first)
        chunk_args.append({"system": system, "config": config, "initial": initial, "chunk_index": chunk_index,
                           "first": first, "count": count, "entropy_spec": entropy_spec,
                           "observables": observables, "keep": max(0, min(count, traces - first)),
                           "invariant_map": invariant_map})

    chunks = []
    nthreads = min(len(chunk_args), max(1, worker_count))
    if nthreads > 1:
        pool = multiprocessing.Pool(nthreads)
        for kwargs_dict in chunk_args:
            pool.apply_async(run_ensemble_chunk, kwds=kwargs_dict,
                             callback=partial(run_ensemble_chunk_callback, result_list=chunks))
        pool.close()
        pool.join()
    else:
        for kwargs_dict in chunk_args:
            run_ensemble_chunk_callback(run_ensemble_chunk(**kwargs_dict), result_list=chunks)

    result = _merge(system, config, n_traj, chunks, observables, entropy_spec is not None)
    if len(chunks) != len(chunk_args):
        logger.error("Only %d of %d chunks returned" % (len(chunks), len(chunk_args)))
        returned = set(c["chunk_index"] for c in chunks)
        result.n_failed += sum(a["count"] for a in chunk_args if a["chunk_index"] not in returned)
    if result.n_failed:
        logger.warning("%d of %d trajectories failed" % (result.n_failed, n_traj))
    return result
