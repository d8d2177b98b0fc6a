"""Ensemble and reference observables on a common time grid."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sde import TrajectoryEnsemble, practical_simulation_time

SPIN_LABEL = {0: "up", 1: "dn"}
CSV_HEADER = ["time", "observable_id", "mean_re", "mean_im", "stderr", "alive_count"]


@dataclass
class ObservableSeries:
    name: str
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    alive: np.ndarray
    ill_conditioned: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.ill_conditioned is None:
            self.ill_conditioned = np.zeros(self.times.shape, dtype=bool)

    def __len__(self):
        return len(self.times)

    def rows(self):
        for t, v, s, a in zip(self.times, self.values, self.stderr, self.alive):
            yield [repr(float(t)), self.name, repr(float(v.real)), repr(float(v.imag)),
                   repr(float(s)), int(a)]


def occupation_id(i: int, sigma: int) -> str:
    return f"n_{i + 1}{SPIN_LABEL[sigma]}"


def g2_id(lam, kap) -> str:
    return f"g2_{lam[0] + 1}{SPIN_LABEL[lam[1]]}_{kap[0] + 1}{SPIN_LABEL[kap[1]]}"


def _window(e: TrajectoryEnsemble):
    """Snapshot indices before the first failure; all trajectories are alive there."""
    keep = e.times < practical_simulation_time(e)
    if e.failure_times.min() > e.config.t_max:
        keep = np.ones_like(keep)
    return np.nonzero(keep)[0]


def mean_stderr(x: np.ndarray, axis: int = -1):
    m = x.shape[axis]
    mean = x.mean(axis=axis)
    if m < 2:
        return mean, np.zeros(mean.shape)
    err = np.sqrt((np.abs(x - np.expand_dims(mean, axis)) ** 2).sum(axis=axis) / (m - 1) / m)
    return mean, err


def occupation(e: TrajectoryEnsemble, i: int, sigma: int) -> ObservableSeries:
    n_s = e.snapshots.shape[-1]
    if not (0 <= i < n_s and sigma in (0, 1)):
        raise IndexError(f"site {i} spin {sigma} out of range")
    idx = _window(e)
    x = e.snapshots[idx][:, :, sigma, i, i]
    mean, err = mean_stderr(x)
    return ObservableSeries(occupation_id(i, sigma), e.times[idx], mean, err,
                            e.alive_count[idx])


def pair_numerator(n: np.ndarray, lam, kap) -> np.ndarray:
    """Wick value of ``<c^dag_lam c^dag_kap c_kap c_lam>`` in each Gaussian basis element."""
    (i, s), (j, t) = lam, kap
    num = n[..., s, i, i] * n[..., t, j, j]
    if s == t:
        num = num - n[..., s, i, j] * n[..., s, j, i]
    return num


def jackknife_blocks(x: np.ndarray, n_blocks: int) -> np.ndarray:
    """Delete-one-block means along the last axis."""
    m = x.shape[-1]
    n_blocks = max(2, min(n_blocks, m))
    edges = np.linspace(0, m, n_blocks + 1).astype(int)
    total = x.sum(axis=-1)
    sums = np.stack([x[..., a:b].sum(axis=-1) for a, b in zip(edges[:-1], edges[1:])], axis=-1)
    counts = np.diff(edges)
    return (total[..., None] - sums) / (m - counts)


def ratio_jackknife(num: np.ndarray, den1: np.ndarray, den2: np.ndarray, n_blocks: int = 100):
    """Ratio of means ``<num> / (<den1> <den2>)`` with a blocked jackknife error."""
    with np.errstate(all="ignore"):
        value = num.mean(-1) / (den1.mean(-1) * den2.mean(-1))
    if num.shape[-1] < 2:
        return value, np.zeros(value.shape)
    jn, j1, j2 = (jackknife_blocks(a, n_blocks) for a in (num, den1, den2))
    with np.errstate(all="ignore"):
        reps = jn / (j1 * j2)
    b = reps.shape[-1]
    err = np.sqrt((b - 1) / b * (np.abs(reps - reps.mean(-1, keepdims=True)) ** 2).sum(-1))
    return value, err


def g2(e: TrajectoryEnsemble, lam, kap, n_blocks: int = 100) -> ObservableSeries:
    """Normalized pair correlation ``<:n_lam n_kap:> / (<n_lam> <n_kap>)``.

    ``lam`` and ``kap`` are ``(site, spin)`` pairs.  Points whose denominator
    factors are within three standard errors of zero are set to NaN and
    flagged rather than reported.
    """
    if tuple(lam) == tuple(kap):
        raise ValueError("same-site same-spin g2 vanishes identically")
    idx = _window(e)
    n = e.snapshots[idx]
    num = pair_numerator(n, lam, kap)
    d1 = n[..., lam[1], lam[0], lam[0]]
    d2 = n[..., kap[1], kap[0], kap[0]]
    value, err = ratio_jackknife(num, d1, d2, n_blocks)
    bad = np.zeros(idx.size, dtype=bool)
    for d in (d1, d2):
        m, s = mean_stderr(d)
        bad |= np.abs(m) <= 3 * s
    value = np.where(bad, np.nan, value)
    err = np.where(bad, np.nan, err)
    return ObservableSeries(g2_id(lam, kap), e.times[idx], value, err,
                            e.alive_count[idx], bad)


def _exact_series(name, times, values):
    values = np.asarray(values, dtype=complex)
    return ObservableSeries(name, np.asarray(times, dtype=float), values,
                            np.zeros(values.shape), np.ones(values.shape, dtype=int))


def series_from_ed(times, ed_obs: list[dict], kind: str, *args) -> ObservableSeries:
    """Adapter for ``ed_observables`` output: ``kind`` is ``occupation`` or ``g2``."""
    if kind == "occupation":
        i, s = args
        return _exact_series(occupation_id(i, s), times,
                             [o["occupation"][s, i] for o in ed_obs])
    lam, kap = args
    vals = []
    for o in ed_obs:
        num = o["pairs"][lam[1], lam[0], kap[1], kap[0]]
        den = o["occupation"][lam[1], lam[0]] * o["occupation"][kap[1], kap[0]]
        vals.append(num / den if den != 0 else np.nan)
    return _exact_series(g2_id(lam, kap), times, vals)


def series_from_hf(times, states: np.ndarray, kind: str, *args) -> ObservableSeries:
    """Adapter for Hartree-Fock density matrices ``(n_t, 2, n_s, n_s)``."""
    if kind == "occupation":
        i, s = args
        return _exact_series(occupation_id(i, s), times, states[:, s, i, i])
    lam, kap = args
    num = pair_numerator(states, lam, kap)
    den = states[:, lam[1], lam[0], lam[0]] * states[:, kap[1], kap[0], kap[0]]
    with np.errstate(all="ignore"):
        vals = np.where(den != 0, num / np.where(den != 0, den, 1), np.nan)
    return _exact_series(g2_id(lam, kap), times, vals)


def write_csv(path, series: ObservableSeries | list[ObservableSeries]) -> Path:
    path = Path(path)
    if isinstance(series, ObservableSeries):
        series = [series]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for s in series:
            w.writerows(s.rows())
    return path


def read_csv(path) -> list[ObservableSeries]:
    rows: dict[str, list] = {}
    with Path(path).open(newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(r["observable_id"], []).append(r)
    out = []
    for name, rs in rows.items():
        out.append(ObservableSeries(
            name,
            np.array([float(r["time"]) for r in rs]),
            np.array([complex(float(r["mean_re"]), float(r["mean_im"])) for r in rs]),
            np.array([float(r["stderr"]) for r in rs]),
            np.array([int(r["alive_count"]) for r in rs])))
    return out
