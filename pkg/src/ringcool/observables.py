"""Trajectory and ensemble observables: trapping probabilities, densities,
time series, and the N-vs-N/2 error estimate.

The ensemble accumulator is merged in trajectory-index order from worker
partials, so worker count and scheduling never change the result.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .grid import (RingGrid, SpinorField, momentum_weights, position_density,
                   to_momentum, windowed_probability)
from .mcwf import run_trajectory
from .params import ParameterSet, derive_trap_velocity
from .potentials import assemble_potential


def trapping_probability_x(f: SpinorField, g: RingGrid, x_min: float, x_max: float) -> float:
    """Level-1 population inside the spatial trap window [x_min, x_max)."""
    return windowed_probability(position_density(f, [0]), g, x_min, x_max)


def trapping_probability_v(f: SpinorField, g: RingGrid, mass: float, v_T: float) -> float:
    """Level-1 population on momentum modes with |hbar k / m| strictly below v_T."""
    w = momentum_weights(f, [0])
    v = g.velocity_axis(mass)
    return float(w[np.abs(v) < v_T].sum())


def velocity_axis_sorted(g: RingGrid, mass: float) -> np.ndarray:
    return np.fft.fftshift(g.velocity_axis(mass))


def _dv_spacing(g: RingGrid, mass: float) -> float:
    from .constants import HBAR
    return HBAR * (2 * np.pi / g.l) / mass


def density_pair(f: SpinorField, g: RingGrid, mass: float):
    """(p(x), p(v)) over levels 1+2; p(v) is per unit velocity on the sorted axis.

    Each integrates to the combined weight of levels 1 and 2.
    """
    levels = [0, 1]
    p_x = position_density(f, levels)
    w = momentum_weights(f, levels)
    p_v = np.fft.fftshift(w) / _dv_spacing(g, mass)
    return p_x, p_v


def level_densities(f: SpinorField, g: RingGrid, mass: float):
    """Per-level position densities and per-level velocity densities (sorted axis)."""
    dv_spacing = _dv_spacing(g, mass)
    p_x = np.stack([position_density(f, [lvl]) for lvl in range(f.n_levels)])
    fk = to_momentum(f)
    q_v = np.stack([np.fft.fftshift(np.abs(fk.data[lvl]) ** 2) * g.dx / dv_spacing
                    for lvl in range(f.n_levels)])
    return p_x, q_v


@dataclass
class ObsConfig:
    sample_every: int         # steps between samples
    map_stride: int = 5       # samples per density-map row
    map_bins: int = 512       # spatial/velocity bins of the density maps


@dataclass
class TrajectoryObservables:
    times: np.ndarray
    P_Tx: np.ndarray
    P_Tv: np.ndarray
    map_times: np.ndarray
    map_x: np.ndarray
    map_v: np.ndarray
    initial_x: np.ndarray     # (n_levels, n)
    initial_v: np.ndarray
    final_x: np.ndarray
    final_v: np.ndarray
    jump_t: np.ndarray
    jump_u: np.ndarray
    survival: float = 1.0


def _bin_mean(a: np.ndarray, bins: int) -> np.ndarray:
    n = a.shape[-1]
    if n % bins:
        raise ValueError(f"{bins} bins do not divide {n} points")
    return a.reshape(*a.shape[:-1], bins, n // bins).mean(axis=-1)


class TrajectoryObserver:
    """Collects the per-trajectory observable record during run_trajectory."""

    def __init__(self, p: ParameterSet, g: RingGrid, cfg: ObsConfig, n_steps: int):
        self.p = p
        self.g = g
        self.cfg = cfg
        self.v_T = derive_trap_velocity(p)
        self.n_samples = n_steps // cfg.sample_every + 1
        self.times = np.arange(self.n_samples) * cfg.sample_every * p.dt
        self.P_Tx = np.zeros(self.n_samples)
        self.P_Tv = np.zeros(self.n_samples)
        n_map = (self.n_samples + cfg.map_stride - 1) // cfg.map_stride
        self.map_times = self.times[::cfg.map_stride]
        self.map_x = np.zeros((n_map, cfg.map_bins))
        self.map_v = np.zeros((n_map, cfg.map_bins))
        self.initial = None
        self.final = None
        self._i = 0

    def __call__(self, step, t, f: SpinorField):
        i = self._i
        self._i += 1
        self.P_Tx[i] = trapping_probability_x(f, self.g, self.p.x_min, self.p.x_max)
        self.P_Tv[i] = trapping_probability_v(f, self.g, self.p.mass, self.v_T)
        p_x, p_v = density_pair(f, self.g, self.p.mass)
        if i % self.cfg.map_stride == 0:
            j = i // self.cfg.map_stride
            self.map_x[j] = _bin_mean(p_x, self.cfg.map_bins)
            self.map_v[j] = _bin_mean(p_v, self.cfg.map_bins)
        if i == 0:
            self.initial = level_densities(f, self.g, self.p.mass)
        if i == self.n_samples - 1:
            self.final = level_densities(f, self.g, self.p.mass)

    def collect(self, record) -> TrajectoryObservables:
        jt = np.array([t for t, _ in record.jump_log])
        ju = np.array([u for _, u in record.jump_log])
        return TrajectoryObservables(
            times=self.times, P_Tx=self.P_Tx, P_Tv=self.P_Tv,
            map_times=self.map_times, map_x=self.map_x, map_v=self.map_v,
            initial_x=self.initial[0], initial_v=self.initial[1],
            final_x=self.final[0], final_v=self.final[1],
            jump_t=jt, jump_u=ju, survival=record.survival)


@dataclass
class EnsembleResult:
    times: np.ndarray
    P_Tx_mean: np.ndarray
    P_Tx_err: np.ndarray
    P_Tx_sem: np.ndarray
    P_Tv_mean: np.ndarray
    P_Tv_err: np.ndarray
    P_Tv_sem: np.ndarray
    map_times: np.ndarray
    map_x: np.ndarray
    map_v: np.ndarray
    initial_x: np.ndarray
    initial_v: np.ndarray
    final_x: np.ndarray
    final_v: np.ndarray
    jumps: list               # (traj_index, t, u) triples, index-ordered
    n_trajectories: int = 0


class EnsembleAccumulator:
    """Running sums over trajectories, plus sums over the first floor(N/2)."""

    def __init__(self, n_total: int):
        if n_total < 1:
            raise ValueError("need at least one trajectory")
        self.n_total = n_total
        self.n_half = n_total // 2
        self.count = 0
        self._sums = None
        self._half = None
        self._sq = None
        self.jumps = []

    def _zeros_like(self, obs):
        keys = ("P_Tx", "P_Tv", "map_x", "map_v",
                "initial_x", "initial_v", "final_x", "final_v")
        return {k: np.zeros_like(getattr(obs, k)) for k in keys}

    def add(self, index: int, obs: TrajectoryObservables):
        if self._sums is None:
            self._sums = self._zeros_like(obs)
            self._half = self._zeros_like(obs)
            self._sq = {k: np.zeros_like(getattr(obs, k)) for k in ("P_Tx", "P_Tv")}
            self.times = obs.times
            self.map_times = obs.map_times
        for k in self._sums:
            v = getattr(obs, k)
            self._sums[k] += v
            if index < self.n_half:
                self._half[k] += v
        for k in self._sq:
            self._sq[k] += getattr(obs, k) ** 2
        for t, u in zip(obs.jump_t, obs.jump_u):
            self.jumps.append((index, float(t), float(u)))
        self.count += 1

    def finalize(self) -> EnsembleResult:
        if self.count != self.n_total:
            raise ValueError(f"accumulated {self.count} of {self.n_total} trajectories")
        n, h = self.n_total, self.n_half
        mean = {k: v / n for k, v in self._sums.items()}
        err = {}
        for k in ("P_Tx", "P_Tv"):
            if h >= 1:
                err[k] = np.abs(mean[k] - self._half[k] / h)
            else:
                err[k] = np.full_like(mean[k], np.nan)
        sem = {k: np.sqrt(np.maximum(self._sq[k] / n - mean[k] ** 2, 0.0) / max(n - 1, 1))
               for k in self._sq}
        return EnsembleResult(
            times=self.times,
            P_Tx_mean=mean["P_Tx"], P_Tx_err=err["P_Tx"], P_Tx_sem=sem["P_Tx"],
            P_Tv_mean=mean["P_Tv"], P_Tv_err=err["P_Tv"], P_Tv_sem=sem["P_Tv"],
            map_times=self.map_times, map_x=mean["map_x"], map_v=mean["map_v"],
            initial_x=mean["initial_x"], initial_v=mean["initial_v"],
            final_x=mean["final_x"], final_v=mean["final_v"],
            jumps=sorted(self.jumps), n_trajectories=n)


def half_sample_error(acc: EnsembleAccumulator) -> dict:
    """|mean over N - mean over first floor(N/2)| for the trapping series."""
    if acc.count < 2:
        raise ValueError("error estimate needs at least 2 trajectories")
    n, h = acc.count, acc.n_half
    return {k: np.abs(acc._sums[k] / n - acc._half[k] / h) for k in ("P_Tx", "P_Tv")}


_worker_state = {}


def _worker_init(p: ParameterSet, cfg: ObsConfig):
    g = RingGrid.from_params(p)
    pot = assemble_potential(p, g)
    _worker_state.update(p=p, g=g, pot=pot, cfg=cfg,
                         n_steps=int(round(p.t_final / p.dt)))


def _worker_run(index: int):
    st = _worker_state
    return _run_one(st["p"], st["pot"], st["g"], st["cfg"], st["n_steps"], index)


def _run_one(p, pot, g, cfg, n_steps, index) -> TrajectoryObservables:
    obs = TrajectoryObserver(p, g, cfg, n_steps)
    rng = np.random.default_rng([p.rng_seed, index])
    rec = run_trajectory(p, pot, g, rng, observer=obs,
                         sample_every=cfg.sample_every, n_steps=n_steps)
    return obs.collect(rec)


def _checkpoint_path(directory, index):
    return os.path.join(directory, f"traj_{index:05d}.npz")


def save_trajectory(path: str, obs: TrajectoryObservables):
    np.savez_compressed(path, **{k: getattr(obs, k) for k in obs.__dataclass_fields__})


def load_trajectory(path: str) -> TrajectoryObservables:
    with np.load(path) as z:
        return TrajectoryObservables(**{k: z[k] for k in z.files})


def run_ensemble(p: ParameterSet, cfg: ObsConfig | None = None, workers: int = 1,
                 checkpoint_dir: str | None = None, progress=None) -> EnsembleResult:
    """Run the full quantum ensemble and fold trajectories into the accumulator.

    With a checkpoint directory, completed trajectories are stored as npz and
    reused; determinism of the per-index rng streams makes the cache exact.
    """
    if cfg is None:
        cfg = ObsConfig(sample_every=max(1, int(round(1e-3 / p.dt))))
    n = p.n_trajectories
    acc = EnsembleAccumulator(n)
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)

    pending = []
    cached = {}
    for i in range(n):
        if checkpoint_dir and os.path.exists(_checkpoint_path(checkpoint_dir, i)):
            cached[i] = _checkpoint_path(checkpoint_dir, i)
        else:
            pending.append(i)

    results = {}
    if pending:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                     initargs=(p, cfg)) as pool:
                for i, obs in zip(pending, pool.map(_worker_run, pending)):
                    results[i] = obs
                    if checkpoint_dir:
                        save_trajectory(_checkpoint_path(checkpoint_dir, i), obs)
                    if progress:
                        progress(i)
        else:
            _worker_init(p, cfg)
            for i in pending:
                obs = _worker_run(i)
                results[i] = obs
                if checkpoint_dir:
                    save_trajectory(_checkpoint_path(checkpoint_dir, i), obs)
                if progress:
                    progress(i)

    for i in range(n):
        obs = results.get(i)
        if obs is None:
            obs = load_trajectory(cached[i])
        acc.add(i, obs)
    return acc.finalize()
