"""Euler-Maruyama integration of the delayed, noisy consensus network.

Each agent follows the Ito form

    dx_i = c(t) * sum_j a_ij (x_j - x_i)(t - tau1) dt
         + c(t) * sum_j a_ij f_ji((x_j - x_i)(t - tau2)) dw_ji

Delays must be integer multiples of ``dt`` so delayed reads hit the grid
exactly. Trials are vectorised along a leading axis. Every operation on a
trial's row is elementwise and sums over neighbours run in a fixed order,
so a trial's trajectory is bit-identical however trials are batched or
split across processes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, HistoryUnderflow
from .gains import GainFunction
from .graph import Digraph, spectral_decompose
from .noise import AdditiveNoise, MultiplicativeNoise, NoiseModel, channel_id, increment_block

DIVERGENCE_NORM = 1e12
_CHUNK = 2048


def _lag_steps(tau: float, dt: float, name: str) -> int:
    if tau < 0:
        raise ConfigError(f"{name} must be nonnegative")
    k = round(tau / dt)
    if abs(k * dt - tau) > 1e-9 * max(1.0, tau):
        raise ConfigError(f"{name}={tau} is not an integer multiple of dt={dt}")
    return int(k)


@dataclass
class SimConfig:
    """One experiment: network, gain, noise, delays, grid and ensemble size.

    ``x0`` has shape ``(N,)`` or ``(N, n)``. ``history`` maps ``theta`` in
    ``[-max(tau1, tau2), 0]`` to an ``(N, n)`` state; when None the initial
    function is constant and equal to ``x0``.
    """

    graph: Digraph
    gain: GainFunction
    noise: NoiseModel
    x0: NDArray[np.float64]
    tau1: float = 0.0
    tau2: float = 0.0
    dt: float = 1e-3
    horizon: float = 1.0
    trials: int = 1
    seed: int = 0
    history: Callable[[float], NDArray[np.float64]] | None = None
    stride: int = 100

    def __post_init__(self) -> None:
        x0 = np.asarray(self.x0, dtype=float)
        if x0.ndim == 1:
            x0 = x0[:, None]
        if x0.ndim != 2 or x0.shape[0] != self.graph.n_agents:
            raise ConfigError(f"x0 must have {self.graph.n_agents} rows, got shape {x0.shape}")
        self.x0 = x0
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.horizon < self.dt:
            raise ConfigError("horizon must be at least dt")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.noise.sigma.shape != (self.graph.n_agents,) * 2:
            raise ConfigError("noise matrix does not match the graph size")
        self.lag1 = _lag_steps(self.tau1, self.dt, "tau1")
        self.lag2 = _lag_steps(self.tau2, self.dt, "tau2")
        self.steps = _lag_steps(self.horizon, self.dt, "horizon")

    @property
    def n_dim(self) -> int:
        return self.x0.shape[1]

    @property
    def depth(self) -> int:
        return max(self.lag1, self.lag2)

    def record_steps(self) -> NDArray[np.int64]:
        idx = np.arange(0, self.steps + 1, self.stride)
        if idx[-1] != self.steps:
            idx = np.append(idx, self.steps)
        return idx

    def initial(self, theta: float) -> NDArray[np.float64]:
        if self.history is None:
            return self.x0
        v = np.asarray(self.history(theta), dtype=float)
        return v.reshape(self.x0.shape)


class HistoryBuffer:
    """Ring buffer holding the last ``depth + 1`` states (current one included)."""

    def __init__(self, depth: int, shape: tuple[int, ...]):
        self.depth = depth
        self._data = np.zeros((depth + 1,) + tuple(shape))
        self._head = -1
        self._count = 0

    def push(self, state) -> None:
        self._head = (self._head + 1) % (self.depth + 1)
        self._data[self._head] = state
        self._count += 1

    def lag(self, steps: int) -> NDArray[np.float64]:
        """State ``steps`` grid points in the past (0 is the newest)."""
        if steps < 0 or steps > self.depth or steps >= self._count:
            raise HistoryUnderflow(f"lag {steps} not covered (depth {self.depth}, filled {self._count})")
        return self._data[(self._head - steps) % (self.depth + 1)]

    @property
    def current(self) -> NDArray[np.float64]:
        return self.lag(0)

    @classmethod
    def seeded(cls, cfg: SimConfig, trials: int = 1) -> "HistoryBuffer":
        """Buffer prefilled with the initial function on ``[-depth*dt, 0]``."""
        buf = cls(cfg.depth, (trials, cfg.graph.n_agents, cfg.n_dim))
        for back in range(cfg.depth, -1, -1):
            buf.push(np.broadcast_to(cfg.initial(-back * cfg.dt), buf._data.shape[1:]))
        return buf


@dataclass
class Dynamics:
    """Neighbour-slot layout of the network used by the step functions.

    Slot ``(i, d)`` is agent ``i``'s ``d``-th neighbour; unused slots point
    at ``i`` itself, so their relative state is exactly zero.
    """

    nbr: NDArray[np.int64]
    slot_sigma: NDArray[np.float64]
    slot_channel: NDArray[np.int64]
    gain: GainFunction
    noise: NoiseModel
    lag1: int
    lag2: int
    dt: float

    @classmethod
    def build(cls, graph: Digraph, gain: GainFunction, noise: NoiseModel,
              tau1: float = 0.0, tau2: float = 0.0, dt: float = 1e-3) -> "Dynamics":
        n = graph.n_agents
        lists = [graph.neighbors(i) for i in range(n)]
        width = max(1, max(len(l) for l in lists))
        nbr = np.tile(np.arange(n)[:, None], (1, width))
        sig = np.zeros((n, width))
        chan = np.full((n, width), -1, dtype=np.int64)
        for i, l in enumerate(lists):
            for d, j in enumerate(l):
                nbr[i, d] = j
                sig[i, d] = noise.sigma[i, j]
                chan[i, d] = channel_id(i, j)
        return cls(nbr, sig, chan, gain, noise,
                   _lag_steps(tau1, dt, "tau1"), _lag_steps(tau2, dt, "tau2"), dt)

    @classmethod
    def from_config(cls, cfg: SimConfig) -> "Dynamics":
        return cls.build(cfg.graph, cfg.gain, cfg.noise, cfg.tau1, cfg.tau2, cfg.dt)

    @property
    def noisy(self) -> bool:
        return not self.noise.is_zero

    def relative(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """``x_j - x_i`` per slot: ``(..., N, n) -> (..., N, D, n)``."""
        return x[..., self.nbr, :] - x[..., :, None, :]

    def slot_sum(self, v: NDArray[np.float64]) -> NDArray[np.float64]:
        """Sum over the slot axis (axis -2 of ``(..., N, D, n)``) in fixed order."""
        acc = v[..., 0, :]
        for d in range(1, v.shape[-2]):
            acc = acc + v[..., d, :]
        return acc


def step_drift(history: HistoryBuffer, t: float, dyn: Dynamics) -> NDArray[np.float64]:
    """``c(t) * sum_j a_ij (x_j - x_i)(t - tau1)``, i.e. ``-c(t) (L kron I_n) x(t - tau1)``."""
    xd = history.lag(dyn.lag1)
    return dyn.gain.value(t) * dyn.slot_sum(dyn.relative(xd))


def step_diffusion(history: HistoryBuffer, t: float, increments, dyn: Dynamics) -> NDArray[np.float64]:
    """Noise increment for one step.

    ``increments`` holds one Brownian increment per neighbour slot, shape
    ``(..., N, D)`` matching ``dyn.nbr``; padding slots are ignored.
    """
    dw = np.asarray(increments, dtype=float)
    c = dyn.gain.value(t)
    noise = dyn.noise
    if isinstance(noise, AdditiveNoise):
        w = (dyn.slot_sigma * dw)[..., None]
        shape = history.lag(0).shape
        return np.broadcast_to(c * dyn.slot_sum(w), shape).copy()
    rel = dyn.relative(history.lag(dyn.lag2))
    return c * dyn.slot_sum(_mult_terms(noise, dyn, rel, dw))


def _mult_terms(noise: MultiplicativeNoise, dyn: Dynamics, rel, dw):
    if noise.func is None:
        return rel * (dyn.slot_sigma * dw)[..., None]
    out = np.zeros_like(rel)
    for i in range(dyn.nbr.shape[0]):
        for d in range(dyn.nbr.shape[1]):
            if dyn.slot_channel[i, d] < 0:
                continue
            j = int(dyn.nbr[i, d])
            from .noise import intensity
            out[..., i, d, :] = intensity(noise, rel[..., i, d, :], (i, j)) * dw[..., i, d, None]
    return out


@dataclass
class Trajectory:
    times: NDArray[np.float64]
    states: NDArray[np.float64]
    pi: NDArray[np.float64]
    diverged: bool = False
    diverged_at: float | None = None
    trial: int = 0

    @property
    def centroid(self) -> NDArray[np.float64]:
        """``pi^T x(t)`` per recorded time, shape ``(R, n)``."""
        return np.einsum("k,rkd->rd", self.pi, self.states)

    def to_csv(self, path: str | Path) -> None:
        write_trajectory_csv(path, self.times, self.states)


@dataclass
class EnsembleRun:
    """Raw output of an ensemble: recorded states of every trial."""

    times: NDArray[np.float64]
    states: NDArray[np.float64]  # (trials, R, N, n)
    pi: NDArray[np.float64]
    diverged: NDArray[np.bool_]
    diverged_at: NDArray[np.float64]
    trial_ids: NDArray[np.int64] = field(default=None)

    def trajectory(self, k: int = 0) -> Trajectory:
        return Trajectory(
            times=self.times, states=self.states[k], pi=self.pi,
            diverged=bool(self.diverged[k]),
            diverged_at=None if not self.diverged[k] else float(self.diverged_at[k]),
            trial=int(self.trial_ids[k]),
        )


def _run_block(cfg: SimConfig, trial_ids: NDArray[np.int64]):
    """Integrate the given trials together; returns (states, diverged, diverged_at)."""
    dyn = Dynamics.from_config(cfg)
    n_tr = len(trial_ids)
    n_ag, n_dim = cfg.graph.n_agents, cfg.n_dim
    rec_steps = cfg.record_steps()
    rec_pos = {int(m): r for r, m in enumerate(rec_steps)}
    out = np.empty((n_tr, len(rec_steps), n_ag, n_dim))
    diverged = np.zeros(n_tr, dtype=bool)
    diverged_at = np.full(n_tr, np.nan)

    size = cfg.depth + 1
    ring = np.empty((size, n_tr, n_ag, n_dim))
    for back in range(cfg.depth, -1, -1):
        ring[(-back) % size] = cfg.initial(-back * cfg.dt)
    head = 0
    active = np.arange(n_tr)

    noisy = dyn.noisy
    mult = isinstance(cfg.noise, MultiplicativeNoise)
    channels = dyn.slot_channel.ravel()
    sig = dyn.slot_sigma
    lag1, lag2, dt = cfg.lag1, cfg.lag2, cfg.dt
    dw_chunk = None
    gains = None
    chunk_start = 0

    def record(r: int) -> None:
        x = ring[head]
        out[active, r] = x
        norms = np.sqrt(np.sum(x * x, axis=(1, 2)))
        bad = ~(norms <= DIVERGENCE_NORM)
        if np.any(bad):
            ids = active[bad]
            diverged[ids] = True
            diverged_at[ids] = rec_steps[r] * dt
            out[ids, r + 1:] = x[bad][:, None]
        return bad

    for m in range(cfg.steps + 1):
        r = rec_pos.get(m)
        if r is not None:
            bad = record(r)
            if np.any(bad):
                keep = ~bad
                ring = ring[:, keep]
                active = active[keep]
                if dw_chunk is not None:
                    dw_chunk = dw_chunk[:, keep]
                if active.size == 0:
                    break
        if m == cfg.steps:
            break
        k = m - chunk_start
        if gains is None or k >= len(gains):
            chunk_start, k = m, 0
            n = min(_CHUNK, cfg.steps - m)
            gains = np.asarray(cfg.gain.value(np.arange(m, m + n) * dt), dtype=float).reshape(n)
            if noisy:
                blk = increment_block(cfg.seed, trial_ids[active], channels, m, n, dt)
                dw_chunk = np.ascontiguousarray(
                    blk.reshape(active.size, n_ag, -1, n).transpose(3, 0, 1, 2)
                )
        c = gains[k]
        x = ring[head]
        xd = ring[(head - lag1) % size]
        rel = xd[:, dyn.nbr] - xd[:, :, None]
        acc = rel[:, :, 0]
        for d in range(1, rel.shape[2]):
            acc = acc + rel[:, :, d]
        x_new = x + (c * dt) * acc
        if noisy:
            dw = dw_chunk[k]
            if mult:
                rel2 = rel if lag2 == lag1 else (lambda y: y[:, dyn.nbr] - y[:, :, None])(ring[(head - lag2) % size])
                terms = _mult_terms(cfg.noise, dyn, rel2, dw)
            else:
                terms = (sig * dw)[..., None]
            nacc = terms[:, :, 0]
            for d in range(1, terms.shape[2]):
                nacc = nacc + terms[:, :, d]
            x_new = x_new + c * nacc
        head = (head + 1) % size
        ring[head] = x_new

    return out, diverged, diverged_at


def _run_block_star(args):
    return _run_block(*args)


def run_ensemble(cfg: SimConfig, workers: int = 1, trial_ids=None) -> EnsembleRun:
    """Integrate all trials; the result does not depend on ``workers``."""
    ids = np.arange(cfg.trials, dtype=np.int64) if trial_ids is None else np.asarray(trial_ids, dtype=np.int64)
    workers = max(1, min(int(workers), len(ids)))
    if workers == 1:
        states, div, div_at = _run_block(cfg, ids)
    else:
        parts = np.array_split(ids, workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block_star, [(cfg, p) for p in parts]))
        states = np.concatenate([r[0] for r in results])
        div = np.concatenate([r[1] for r in results])
        div_at = np.concatenate([r[2] for r in results])
    spec = spectral_decompose(cfg.graph)
    times = cfg.record_steps() * cfg.dt
    return EnsembleRun(times=times, states=states, pi=spec.pi, diverged=div, diverged_at=div_at, trial_ids=ids)


def simulate(cfg: SimConfig, trial: int = 0) -> Trajectory:
    """One sample path (noise substream ``trial``)."""
    return run_ensemble(cfg, trial_ids=[trial]).trajectory(0)


def simulate_ensemble(cfg: SimConfig, workers: int = 1, burn_in: float | None = None):
    """Run ``cfg.trials`` independent paths and summarise them per recorded time."""
    from .metrics import ensemble_stats

    return ensemble_stats(run_ensemble(cfg, workers=workers), burn_in=burn_in)


def _fmt(v: float) -> str:
    return format(float(v), ".12g")


def write_trajectory_csv(path: str | Path, times, states) -> None:
    """Header ``t,agent_1_1,...,agent_N_n``; one row per recorded time."""
    states = np.asarray(states)
    n_ag, n_dim = states.shape[1], states.shape[2]
    header = ["t"] + [f"agent_{i + 1}_{d + 1}" for i in range(n_ag) for d in range(n_dim)]
    lines = [",".join(header)]
    flat = states.reshape(len(times), -1)
    for t, row in zip(times, flat):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")
