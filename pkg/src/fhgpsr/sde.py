"""Ito integration of ensembles of GPSR trajectories.

The default ``exponential`` scheme applies the hopping flow exactly through
``exp(i J dt / hbar)`` and takes an Euler-Maruyama step for the interaction
drift and the noise; ``euler`` is plain Euler-Maruyama on the full drift.
Both are weak order one.

Each trajectory owns a counter-based Philox stream keyed by
``(master_seed, trajectory_index)``.  The stream layout is fixed: initial
state draws first, then per block of ``NOISE_BLOCK`` steps the Wiener
increments followed by the randomized-SVD test matrices.  Trajectories are
integrated in vectorized chunks, and the chunking never changes the numbers
drawn by any trajectory.
"""
from __future__ import annotations

import logging
import os
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import gauge as gauges
from .lattice import BellState, HubbardParams, LatticeSpec, validate_bell
from .phase_space import (analytic_increment, as_array, diffusion_block,
                          diffusion_factors, drift, interaction_drift,
                          noise_prefactor, unflatten)

log = logging.getLogger(__name__)

NOISE_BLOCK = 16
THREADS_ENV = "FHGPSR_THREADS"
SCHEMES = ("exponential", "euler")
Z_BLOCK_BYTES = 1 << 20  # per trajectory; larger test matrices are drawn step by step


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 2e-3
    t_max: float = 3.0
    snapshot_stride: int = 25
    spike_threshold: float = 1e6
    gauge: gauges.GaugeMethod = field(default_factory=gauges.Analytic)
    chunk_size: int = 256
    scheme: str = "exponential"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_max < self.dt:
            raise ValueError("t_max must be at least dt")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if not self.spike_threshold > 1:
            raise ValueError("spike_threshold must exceed 1")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def snapshot_steps(self) -> np.ndarray:
        return np.arange(0, self.n_steps + 1, self.snapshot_stride)

    @property
    def times(self) -> np.ndarray:
        return self.snapshot_steps * self.dt


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    snapshots: np.ndarray
    failure_time: float | None
    seed: object


@dataclass
class TrajectoryEnsemble:
    """Snapshots ``(n_snap, M, 2, n_s, n_s)``; entries at or after failure are NaN."""

    times: np.ndarray
    snapshots: np.ndarray
    failure_times: np.ndarray
    seeds: list
    config: IntegratorConfig

    @property
    def size(self) -> int:
        return self.snapshots.shape[1]

    @property
    def alive(self) -> np.ndarray:
        return self.times[:, None] < self.failure_times[None, :]

    @property
    def alive_count(self) -> np.ndarray:
        return self.alive.sum(axis=1)

    def record(self, k: int) -> TrajectoryRecord:
        keep = self.alive[:, k]
        ft = self.failure_times[k]
        return TrajectoryRecord(self.times[keep], self.snapshots[keep, k],
                                None if np.isinf(ft) else float(ft), self.seeds[k])

    @property
    def records(self) -> list[TrajectoryRecord]:
        return [self.record(k) for k in range(self.size)]


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def sample_wiener(k: int, dt: float, rng: np.random.Generator, size=()) -> np.ndarray:
    if k < 1 or not dt > 0:
        raise ValueError("need k >= 1 and dt > 0")
    return rng.standard_normal((*np.atleast_1d(size).astype(int).tolist(), k)
                               if size != () else k) * np.sqrt(dt)


def noise_channels(gauge: gauges.GaugeMethod, n_s: int) -> int:
    rank = getattr(gauge, "rank", None)
    return 2 * rank if rank else 4 * n_s


def _test_width(gauge, n_s):
    if not isinstance(gauge, gauges.RandomizedSvd):
        return 0
    return min((gauge.rank or 2 * n_s) + gauge.oversample, n_s * n_s)


def noise_increment(n: np.ndarray, params: HubbardParams, gauge: gauges.GaugeMethod,
                    dw: np.ndarray, z: np.ndarray | None = None) -> np.ndarray:
    """``unflatten(B(n) @ dw)`` for a batch of points under the chosen gauge."""
    if isinstance(gauge, gauges.Analytic):
        return analytic_increment(n, params, dw)
    if isinstance(gauge, gauges.FactoredSvd):
        return gauges.factored_svd_increment(n, noise_prefactor(params), dw)
    if isinstance(gauge, gauges.RandomizedSvd) and not gauge.explicit:
        f_up, f_dn = diffusion_factors(n, params)
        u, s, vh = gauges.randomized_svd_factored(f_up, f_dn, z, gauge.rank or 2 * n.shape[-1],
                                                  gauge.power_iters)
        return unflatten(gauges.noise_from_triplets(u, s, vh, dw), n.shape[-1])
    else:
        b = gauges.factorize(diffusion_block(n, params), gauge, z=z)
    return unflatten((b @ dw[..., None])[..., 0], n.shape[-1])


def hopping_propagator(lattice: LatticeSpec, params: HubbardParams, dt: float) -> np.ndarray:
    """Unitary ``exp(i J dt / hbar)`` that carries the tunneling drift exactly."""
    return scipy.linalg.expm((1j * dt / params.hbar) * lattice.tunneling)


def _propagator(cfg, lattice, params):
    return hopping_propagator(lattice, params, cfg.dt) if cfg.scheme == "exponential" else None


def _advance(n, lattice, params, gauge, dt, dw, z, prop=None):
    """One step.  With ``prop=None`` this is the plain Euler-Maruyama update;
    otherwise the interaction drift and the noise take an Euler-Maruyama step
    and the linear hopping flow ``n -> P n P^dag`` is applied exactly."""
    with np.errstate(all="ignore"):
        noise = noise_increment(n, params, gauge, dw, z)
        if prop is None:
            return n + dt * drift(n, lattice, params) + noise
        m = n + dt * interaction_drift(n, params) + noise
        return prop @ m @ prop.conj().T


def step(p, cfg: IntegratorConfig, lattice: LatticeSpec, params: HubbardParams,
         rng: np.random.Generator) -> np.ndarray:
    """One Euler-Maruyama step of a single point; non-finite output is returned as is."""
    n = as_array(p)
    n_s = n.shape[-1]
    dw = sample_wiener(noise_channels(cfg.gauge, n_s), cfg.dt, rng)
    width = _test_width(cfg.gauge, n_s)
    z = gauges.gaussian_test_matrix(rng, n_s * n_s, width) if width else None
    try:
        return _advance(n, lattice, params, cfg.gauge, cfg.dt, dw, z,
                        _propagator(cfg, lattice, params))
    except gauges.GaugeFailure:
        return np.full_like(n, np.nan)


def _stream_draw(rngs, cfg, n_s):
    """Noise source over a batch of per-trajectory generators.

    Each generator yields, per block of ``NOISE_BLOCK`` steps, the Wiener
    increments of the whole block followed by one test matrix per step.
    Small test matrices are drawn for the whole block at once and large ones
    step by step; both consume the stream identically, so the choice only
    trades Python overhead against memory.  Failed trajectories stop
    consuming their streams.
    """
    gauge = cfg.gauge
    k_ch = noise_channels(gauge, n_s)
    width = _test_width(gauge, n_s)
    fixed = isinstance(gauge, gauges.RandomizedSvd) and gauge.refresh == "trajectory"
    sqdt = np.sqrt(cfg.dt)
    m = len(rngs)
    z_fixed = None
    if width and fixed:
        z_fixed = np.stack([gauges.gaussian_test_matrix(r, n_s * n_s, width) for r in rngs])
    block = np.zeros((m, NOISE_BLOCK, k_ch))
    fresh = bool(width) and not fixed
    per_block = fresh and NOISE_BLOCK * n_s * n_s * width * 16 <= Z_BLOCK_BYTES
    if fresh:
        z_buf = np.zeros((m, NOISE_BLOCK if per_block else 1, n_s * n_s, width), dtype=complex)

    def draw(active, k):
        pos = (k - 1) % NOISE_BLOCK
        if pos == 0:
            for a in active:
                block[a] = rngs[a].standard_normal((NOISE_BLOCK, k_ch)) * sqdt
                if per_block:
                    z_buf[a] = gauges.gaussian_test_matrix(rngs[a], n_s * n_s, width,
                                                           (NOISE_BLOCK,))
        z = None
        if fresh and not per_block:
            for a in active:
                z_buf[a, 0] = gauges.gaussian_test_matrix(rngs[a], n_s * n_s, width)
            z = z_buf[active, 0]
        elif per_block:
            z = z_buf[active, pos]
        elif z_fixed is not None:
            z = z_fixed[active]
        return block[active, pos], z

    return draw


def _run_chunk(inits: np.ndarray, draw, cfg: IntegratorConfig, lattice, params,
               snapshots: np.ndarray, failure_times: np.ndarray):
    """Integrate one batch; writes into the given slices of the ensemble arrays.

    ``draw(active, k)`` returns the Wiener increments and test matrices of
    step ``k`` for the still-active rows of the batch.
    """
    m = inits.shape[0]
    gauge = cfg.gauge
    snap_steps = set(cfg.snapshot_steps.tolist())
    prop = _propagator(cfg, lattice, params)
    n = inits.copy()
    active = np.arange(m)
    bad = ~np.isfinite(n).all(axis=(1, 2, 3)) | (np.abs(n).max(axis=(1, 2, 3)) > cfg.spike_threshold)
    failure_times[bad] = 0.0
    active = active[~bad]
    n = n[~bad]
    snapshots[0, active] = n
    si = 1
    for k in range(1, cfg.n_steps + 1):
        if active.size == 0:
            break
        dw, z = draw(active, k)
        try:
            n = _advance(n, lattice, params, gauge, cfg.dt, dw, z, prop)
            ok = np.isfinite(n).all(axis=(1, 2, 3))
        except gauges.GaugeFailure:
            ok = np.zeros(active.size, dtype=bool)
            new = np.empty_like(n)
            for j in range(active.size):
                try:
                    new[j] = _advance(n[j], lattice, params, gauge, cfg.dt, dw[j],
                                      None if z is None else z[j], prop)
                    ok[j] = np.isfinite(new[j]).all()
                except gauges.GaugeFailure:
                    log.debug("gauge failure on trajectory %d at step %d", active[j], k)
            n = new
        with np.errstate(invalid="ignore"):
            ok &= np.abs(np.where(np.isfinite(n), n, 0)).max(axis=(1, 2, 3)) <= cfg.spike_threshold
        if not ok.all():
            failure_times[active[~ok]] = k * cfg.dt
            active, n = active[ok], n[ok]
        if k in snap_steps:
            snapshots[si, active] = n
            si += 1


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _integrate(inits: np.ndarray, rngs, seeds, cfg, lattice, params) -> TrajectoryEnsemble:
    m, _, n_s, _ = inits.shape
    times = cfg.times
    snapshots = np.full((times.size, m, 2, n_s, n_s), np.nan + 0j)
    failure_times = np.full(m, np.inf)
    chunks = [slice(a, min(a + cfg.chunk_size, m)) for a in range(0, m, cfg.chunk_size)]

    def run(sl):
        _run_chunk(inits[sl], _stream_draw(rngs[sl], cfg, n_s), cfg, lattice, params,
                   snapshots[:, sl], failure_times[sl])

    workers = _worker_count()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, chunks))
    else:
        for sl in chunks:
            run(sl)
    return TrajectoryEnsemble(times, snapshots, failure_times, list(seeds), cfg)


def run_trajectory(init, cfg: IntegratorConfig, lattice: LatticeSpec, params: HubbardParams,
                   seed) -> TrajectoryRecord:
    n0 = as_array(init)
    ens = _integrate(n0[None], [make_rng(seed)], [seed], cfg, lattice, params)
    return ens.record(0)


def integrate_increments(inits, dw: np.ndarray, cfg: IntegratorConfig, lattice: LatticeSpec,
                         params: HubbardParams, z: np.ndarray | None = None) -> TrajectoryEnsemble:
    """Integrate a batch driven by supplied Wiener increments.

    ``dw`` has shape ``(M, n_steps, K)``; ``z`` (randomized SVD gauge only)
    has shape ``(M, n_steps, n_s**2, width)``.  Used for convergence studies
    where several step sizes must share one Brownian path.
    """
    inits = np.asarray(inits, dtype=complex)
    m, _, n_s, _ = inits.shape
    need = (m, cfg.n_steps, noise_channels(cfg.gauge, n_s))
    if dw.shape != need:
        raise ValueError(f"increments have shape {dw.shape}, expected {need}")
    if _test_width(cfg.gauge, n_s) and z is None:
        raise ValueError("the randomized SVD gauge needs test matrices")
    times = cfg.times
    snapshots = np.full((times.size, m, 2, n_s, n_s), np.nan + 0j)
    failure_times = np.full(m, np.inf)

    def draw(active, k):
        return dw[active, k - 1], (None if z is None else z[active, k - 1])

    _run_chunk(inits, draw, cfg, lattice, params, snapshots, failure_times)
    return TrajectoryEnsemble(times, snapshots, failure_times, [None] * m, cfg)


def coarsen_increments(dw: np.ndarray, factor: int) -> np.ndarray:
    """Sum groups of ``factor`` consecutive increments along the step axis."""
    m, steps, k = dw.shape
    if steps % factor:
        raise ValueError(f"{steps} steps do not split into groups of {factor}")
    return dw.reshape(m, steps // factor, factor, k).sum(axis=2)


InitSampler = Callable[[np.random.Generator], np.ndarray]


def delta_sampler(point) -> InitSampler:
    n0 = as_array(point)
    return lambda rng: n0


def run_ensemble(init_sampler: InitSampler, M: int, cfg: IntegratorConfig,
                 lattice: LatticeSpec, params: HubbardParams,
                 master_seed: int) -> TrajectoryEnsemble:
    """``init_sampler`` is a callable of the trajectory's generator, or a fixed point."""
    if M < 1:
        raise ValueError("need at least one trajectory")
    if not callable(init_sampler):
        init_sampler = delta_sampler(init_sampler)
    seeds = [trajectory_seed(master_seed, k) for k in range(M)]
    rngs = [make_rng(s) for s in seeds]
    inits = np.stack([as_array(init_sampler(r)) for r in rngs])
    return _integrate(inits, rngs, seeds, cfg, lattice, params)


def sample_bell_initial(alpha: complex, beta: complex, noise_kind: str = "binary",
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """Stochastic two-site point whose first and second moments match the Bell state.

    The diagonal fluctuation is scaled by ``|alpha beta|`` so that
    ``E[n_11up n_11dn] = |alpha|^2`` holds for any normalized pair.
    """
    state = validate_bell(alpha, beta)
    a, b = state.alpha, state.beta
    rng = make_rng(rng) if rng is not None else np.random.default_rng()
    if noise_kind == "binary":
        w1, w2, w3 = 2.0 * rng.integers(0, 2, size=3) - 1.0
    elif noise_kind == "gaussian":
        w1, w2, w3 = rng.standard_normal(3)
    else:
        raise ValueError(f"unknown noise kind {noise_kind!r}")
    pa, pb, ab = abs(a) ** 2, abs(b) ** 2, abs(a * b)
    n_up = np.array([[pa + ab * w1, np.conj(b) * w3],
                     [np.conj(a) * w2, pb - ab * w1]])
    n_dn = np.array([[pa + ab * w1, a * w3],
                     [b * w2, pb - ab * w1]])
    return np.stack([n_up, n_dn])


def bell_sampler(state: BellState, noise_kind: str = "binary") -> InitSampler:
    return lambda rng: sample_bell_initial(state.alpha, state.beta, noise_kind, rng)


@dataclass
class FailureStats:
    practical_time: float
    failure_times: np.ndarray
    histogram: tuple[np.ndarray, np.ndarray]
    n_failed: int

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.failure_times, q))


def practical_simulation_time(e: TrajectoryEnsemble) -> float:
    """Earliest trajectory failure, or ``t_max`` when every trajectory survived."""
    ft = e.failure_times
    return float(min(ft.min(), e.config.t_max)) if ft.size else e.config.t_max


def failure_statistics(e: TrajectoryEnsemble, bins: int = 30) -> FailureStats:
    """Failure times with survivors censored at ``t_max``."""
    ft = np.minimum(e.failure_times, e.config.t_max)
    hist = np.histogram(ft, bins=bins, range=(0.0, e.config.t_max))
    return FailureStats(practical_simulation_time(e), ft, hist,
                        int(np.isfinite(e.failure_times).sum()))
