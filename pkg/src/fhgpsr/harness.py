"""Experiment orchestration, scaling benchmark and run comparison."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import platform
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import gauge as gauges
from . import observables as obs
from . import sde
from .lattice import (BellState, CustomDiagonal, HubbardParams, build_lattice,
                      spin_wave_occupation, validate_bell)
from .phase_space import diagonal_point, diffusion_block, diffusion_factors
from .reference import ed
from .reference.hf import hf_evolve

log = logging.getLogger(__name__)

METHODS = ("gpsr-analytic", "gpsr-rsvd", "gpsr-fsvd", "gpsr-svd", "gpsr-lowrank", "ed", "hf")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class NumericalFailure(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    dims: list = field(default_factory=lambda: [8])
    J: float = 1.0
    U: float = 1.0
    hbar: float = 1.0
    initial: str = "spin_wave"
    alpha: complex = 2 ** -0.5
    beta: complex = 1j * 2 ** -0.5
    bell_noise: str = "binary"
    occ_up: list | None = None
    occ_down: list | None = None
    method: str = "gpsr-rsvd"
    trajectories: int = 1000
    dt: float = 2e-3
    t_max: float = 3.0
    snapshot_stride: int = 25
    spike_threshold: float = 1e6
    master_seed: int = 0
    rank: int | None = None
    chunk_size: int = 256
    observables: list = field(default_factory=lambda: ["occupations"])
    out: str = "results"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("alpha", "beta"):
            if isinstance(data.get(key), str):
                data[key] = complex(data[key].replace(" ", ""))
        return cls(**data)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("alpha", "beta"):
            d[key] = str(complex(d[key]))
        return d

    def lattice(self):
        return build_lattice(self.dims, self.J)

    def params(self) -> HubbardParams:
        return HubbardParams(self.J, self.U, self.hbar)

    def state(self):
        lat = self.lattice()
        if self.initial == "spin_wave":
            return spin_wave_occupation(lat)
        if self.initial == "bell":
            return validate_bell(self.alpha, self.beta)
        if self.initial == "custom":
            return CustomDiagonal(tuple(self.occ_up), tuple(self.occ_down))
        raise ConfigError(f"unknown initial state {self.initial!r}")

    def gauge(self) -> gauges.GaugeMethod:
        return gauges.gauge_from_name(self.method, self.rank)

    def integrator(self) -> sde.IntegratorConfig:
        return sde.IntegratorConfig(self.dt, self.t_max, self.snapshot_stride,
                                    self.spike_threshold, self.gauge(), self.chunk_size)

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        try:
            lat = self.lattice()
            self.params()
            state = self.state()
            if self.method.startswith("gpsr"):
                self.integrator()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.trajectories < 1:
            raise ConfigError("trajectories must be >= 1")
        if isinstance(state, BellState) and lat.n_sites != 2:
            raise ConfigError(f"bell initial state needs n_s = 2, lattice has {lat.n_sites}")
        if self.method == "ed":
            if isinstance(state, CustomDiagonal) and not all(
                    o in (0, 1) for o in (*state.occ_up, *state.occ_down)):
                raise ConfigError("ed needs integer occupations")
            if not isinstance(state, BellState):
                dim = ed.FockBasis.dimension(lat.n_sites, int(round(sum(state.occ_up))),
                                             int(round(sum(state.occ_down))))
                if dim > ed.MAX_DIM:
                    raise ConfigError(f"ed basis dimension {dim} exceeds the limit {ed.MAX_DIM}")
        if self.method in ("hf", "ed") and self.snapshot_stride < 1:
            raise ConfigError("snapshot_stride must be >= 1")
        return self


def load_config(path=None, **overrides) -> ExperimentConfig:
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


_SPIN = {"up": 0, "dn": 1, "down": 1}
_OCC_RE = re.compile(r"^n_(\d+)(up|dn|down)$")
_G2_RE = re.compile(r"^g2_(\d+)(up|dn|down)_(\d+)(up|dn|down)$")


def parse_observables(names, n_sites: int) -> list[tuple]:
    """``occupations`` | ``n_<site><spin>`` | ``g2_<site><spin>_<site><spin>``, sites 1-based."""
    out = []
    for name in names:
        if name == "occupations":
            out += [("occupation", i, s) for s in (0, 1) for i in range(n_sites)]
            continue
        if m := _OCC_RE.match(name):
            out.append(("occupation", int(m[1]) - 1, _SPIN[m[2]]))
        elif m := _G2_RE.match(name):
            out.append(("g2", (int(m[1]) - 1, _SPIN[m[2]]), (int(m[3]) - 1, _SPIN[m[4]])))
        else:
            raise ConfigError(f"cannot parse observable {name!r}")
        idx = [out[-1][1]] if out[-1][0] == "occupation" else [out[-1][1][0], out[-1][2][0]]
        if any(not 0 <= i < n_sites for i in idx):
            raise ConfigError(f"observable {name!r} refers to a site outside the lattice")
    return out


def initial_sampler(cfg: ExperimentConfig):
    state = cfg.state()
    if isinstance(state, BellState):
        return sde.bell_sampler(state, cfg.bell_noise)
    return sde.delta_sampler(diagonal_point(state.occ_up, state.occ_down))


def simulate_gpsr(cfg: ExperimentConfig) -> sde.TrajectoryEnsemble:
    return sde.run_ensemble(initial_sampler(cfg), cfg.trajectories, cfg.integrator(),
                            cfg.lattice(), cfg.params(), cfg.master_seed)


def _gpsr_series(cfg, specs):
    ens = simulate_gpsr(cfg)
    series = []
    for spec in specs:
        if spec[0] == "occupation":
            series.append(obs.occupation(ens, spec[1], spec[2]))
        else:
            series.append(obs.g2(ens, spec[1], spec[2]))
    stats = sde.failure_statistics(ens)
    extra = {
        "practical_simulation_time": stats.practical_time,
        "failed_trajectories": stats.n_failed,
        "failure_histogram": {"counts": stats.histogram[0].tolist(),
                              "edges": stats.histogram[1].tolist()},
        "trajectory_seeds": f"SeedSequence({cfg.master_seed}, spawn_key=(k,)), k < {cfg.trajectories}",
    }
    return series, extra


def ed_reference(cfg: ExperimentConfig):
    """Exact ``(times, observables)`` on the snapshot grid of ``cfg``."""
    lat, par, state = cfg.lattice(), cfg.params(), cfg.state()
    basis = ed.basis_for(state, lat.n_sites)
    h = ed.build_hamiltonian(basis, lat, par)
    psi0 = ed.initial_ed_state(basis, state)
    n_steps = int(round(cfg.t_max / cfg.dt)) // cfg.snapshot_stride
    times, values = [], []
    for t, psi in ed.ed_evolve(psi0, h, cfg.dt * cfg.snapshot_stride, n_steps, 1, par.hbar):
        times.append(t)
        values.append(ed.ed_observables(psi, basis))
    return np.array(times), values


def hf_reference(cfg: ExperimentConfig):
    state = cfg.state()
    if isinstance(state, BellState):
        # mean-field starts from the Bell state's one-body density matrix
        n0 = diagonal_point([abs(state.alpha) ** 2, abs(state.beta) ** 2],
                            [abs(state.alpha) ** 2, abs(state.beta) ** 2])
    else:
        n0 = diagonal_point(state.occ_up, state.occ_down)
    return hf_evolve(n0, cfg.lattice(), cfg.params(), cfg.dt, cfg.t_max, cfg.snapshot_stride)


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one configuration; writes ``<observable>.csv`` files and ``manifest.json``."""
    cfg.validate()
    specs = parse_observables(cfg.observables, cfg.lattice().n_sites)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    extra = {}
    if cfg.method.startswith("gpsr"):
        try:
            series, extra = _gpsr_series(cfg, specs)
        except gauges.GaugeFailure as exc:
            raise NumericalFailure(str(exc)) from exc
    elif cfg.method == "ed":
        times, values = ed_reference(cfg)
        series = [obs.series_from_ed(times, values, *spec) for spec in specs]
    else:
        times, states = hf_reference(cfg)
        series = [obs.series_from_hf(times, states, *spec) for spec in specs]
    files = []
    for s in series:
        files.append(obs.write_csv(out / f"{s.name}.csv", s).name)
    manifest = {
        "config": cfg.to_dict(),
        "files": files,
        "versions": {"fhgpsr": _version(), "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "wall_time": time.perf_counter() - t0,
        **extra,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"


# -- benchmark ---------------------------------------------------------------

@dataclass
class ScalingFit:
    exponent: float
    intercept: float
    r2: float

    @property
    def flagged(self) -> bool:
        return self.r2 < 0.95


@dataclass
class BenchResult:
    sizes: list
    times: dict  # component -> mean seconds per size
    fits: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"sizes": self.sizes, "times": self.times,
                "fits": {k: dataclasses.asdict(v) | {"flagged": v.flagged}
                         for k, v in self.fits.items()}}


def fit_power_law(sizes, times) -> ScalingFit:
    """Least-squares fit of ``log t = exponent * log n + intercept``."""
    x, y = np.log(np.asarray(sizes, float)), np.log(np.asarray(times, float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(slope), float(intercept), float(r2))


def warmup_states(n_s: int, count: int, seed: int, steps: int = 50, dt: float = 2e-3):
    """Generic phase-space points from short analytic-gauge runs on a spin-wave chain."""
    lat = build_lattice([n_s])
    par = HubbardParams()
    sw = spin_wave_occupation(lat) if n_s % 2 == 0 else CustomDiagonal(
        tuple([1.0] * (n_s // 2) + [0.0] * (n_s - n_s // 2)),
        tuple([0.0] * (n_s // 2) + [1.0] * (n_s - n_s // 2)))
    cfg = sde.IntegratorConfig(dt=dt, t_max=steps * dt, snapshot_stride=steps)
    ens = sde.run_ensemble(diagonal_point(sw.occ_up, sw.occ_down), count, cfg, lat, par, seed)
    return ens.snapshots[-1][ens.alive[-1]], lat, par


def _timed(fn, reps):
    fn()  # discarded warm-up repetition
    out = []
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return float(np.mean(out))


BENCH_METHODS = ("rsvd", "svd", "lowrank")


def bench_noise_step(sizes, methods=BENCH_METHODS, reps: int = 3, seed: int = 0,
                     n_states: int = 2) -> BenchResult:
    """Time the diffusion build, each factorization and one full rSVD step per size."""
    sizes = [int(s) for s in sizes]
    if sorted(sizes) != sizes or len(set(sizes)) != len(sizes):
        raise ValueError("sizes must be strictly increasing")
    if reps < 3:
        raise ValueError("need at least 3 repetitions")
    times: dict[str, list] = {k: [] for k in ("diffusion", *methods, "step")}
    rng = np.random.default_rng(seed)
    for n_s in sizes:
        states, lat, par = warmup_states(n_s, n_states, seed)
        rank = 2 * n_s
        acc = {k: [] for k in times}
        for n in states:
            dq = diffusion_block(n, par)
            acc["diffusion"].append(_timed(lambda: diffusion_block(n, par), reps))
            if "rsvd" in methods:
                z = gauges.gaussian_test_matrix(rng, n_s * n_s, rank)
                acc["rsvd"].append(_timed(lambda: gauges.factorize_randomized(dq, rank, z=z), reps))
            if "svd" in methods:
                acc["svd"].append(_timed(lambda: gauges.factorize_classical(dq, keep=rank), reps))
            if "lowrank" in methods:
                acc["lowrank"].append(_timed(lambda: gauges.factorize_lowrank(dq, rank), reps))
            cfg = sde.IntegratorConfig(dt=2e-3, t_max=2e-3,
                                       gauge=gauges.RandomizedSvd(explicit=True))
            step_rng = sde.make_rng(seed)
            acc["step"].append(_timed(lambda: sde.step(n, cfg, lat, par, step_rng), reps))
        for k in times:
            times[k].append(float(np.mean(acc[k])))
        log.info("n_s=%d %s", n_s, {k: v[-1] for k, v in times.items()})
    res = BenchResult(sizes, times)
    if len(sizes) >= 2:
        res.fits = {k: fit_power_law(sizes, v) for k, v in times.items()}
    return res


# -- comparison ----------------------------------------------------------------

def _label(path: Path) -> str:
    man = path / "manifest.json" if path.is_dir() else path.parent / "manifest.json"
    if man.exists():
        return json.loads(man.read_text())["config"]["method"]
    return path.stem


def _load_run(path) -> tuple[str, dict]:
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    series = {}
    for f in files:
        for s in obs.read_csv(f):
            series[s.name] = s
    return _label(path), series


def compare_runs(paths, out=None, reference: str | None = None) -> list[dict]:
    """Merge runs on the first run's time grid (nearest snapshot).

    Adds ``dev_<label>`` columns: deviation from the reference run in units of
    the combined standard error (plain difference when both errors vanish).
    """
    runs = [_load_run(p) for p in paths]
    labels = [lab for lab, _ in runs]
    if len(set(labels)) != len(labels):
        labels = [f"{lab}{k}" for k, lab in enumerate(labels)]
    names = set(runs[0][1])
    for lab, ser in runs[1:]:
        if set(ser) != names:
            raise ValueError(f"run {lab!r} has observables {sorted(ser)}, expected {sorted(names)}")
    ref = labels.index(reference) if reference in labels else (
        labels.index("ed") if "ed" in labels else 0)
    rows = []
    for name in sorted(names):
        base = runs[0][1][name]
        for t in base.times:
            row = {"time": float(t), "observable_id": name}
            picked = {}
            for lab, (_, ser) in zip(labels, runs):
                s = ser[name]
                k = int(np.argmin(np.abs(s.times - t)))
                picked[lab] = (s.values[k], s.stderr[k])
                row[f"{lab}_re"] = float(s.values[k].real)
                row[f"{lab}_im"] = float(s.values[k].imag)
                row[f"{lab}_stderr"] = float(s.stderr[k])
            rv, rs = picked[labels[ref]]
            for lab in labels:
                if lab == labels[ref]:
                    continue
                v, s = picked[lab]
                scale = np.hypot(s, rs)
                diff = (v - rv).real
                row[f"dev_{lab}"] = float(diff / scale) if scale > 0 else float(diff)
            rows.append(row)
    if out is not None:
        keys = list(rows[0]) if rows else ["time", "observable_id"]
        with open(out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(rows)
    return rows
