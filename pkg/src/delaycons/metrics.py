"""Consensus diagnostics computed from simulated trajectories and ensembles."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateWindow, HistoryUnderflow
from .gains import GainFunction
from .graph import SpectralData
from .noise import AdditiveNoise

LOG_FLOOR = 1e-300
BURN_IN_FRACTION = 0.2


def disagreement(x, pi) -> NDArray[np.float64]:
    """``delta_i = x_i - sum_k pi_k x_k``.

    ``x`` is ``(..., N)`` or ``(..., N, n)``; the agent axis is the one
    matching ``len(pi)`` counted from the right.
    """
    x = np.asarray(x, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if x.shape[-1] == len(pi) and (x.ndim == 1 or x.shape[-2] != len(pi)):
        return disagreement(x[..., None], pi)[..., 0]
    return x - np.einsum("k,...kd->...d", pi, x)[..., None, :]


def _sum_last(a: NDArray[np.float64]) -> NDArray[np.float64]:
    # numpy reduces a contiguous last axis pairwise; keep the trial axis there
    return np.ascontiguousarray(np.moveaxis(a, 0, -1)).sum(axis=-1)


def _mean_trials(a: NDArray[np.float64]) -> NDArray[np.float64]:
    return _sum_last(a) / a.shape[0]


def _centroid_var(c: NDArray[np.float64]) -> NDArray[np.float64]:
    """Trace of the sample covariance over trials; ``c`` is ``(trials, R, n)``."""
    m = c.shape[0]
    if m < 2:
        return np.zeros(c.shape[1])
    dev = c - _mean_trials(c)[None]
    return _sum_last(np.sum(dev * dev, axis=-1)) / (m - 1)


def log_slope(times, values, start: float = 0.0) -> float:
    """Least-squares slope of ``log(max(values, floor))`` against ``t >= start``.

    Raises:
        DegenerateWindow: every value in the window is below the floor.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    mask = t >= start - 1e-12
    t, v = t[mask], v[mask]
    if t.size < 2:
        raise DegenerateWindow("fit window holds fewer than two samples")
    if not np.any(v > LOG_FLOOR):
        raise DegenerateWindow("signal underflows to zero on the whole fit window")
    y = np.log(np.maximum(v, LOG_FLOOR))
    tc = t - t.mean()
    return float(np.dot(tc, y - y.mean()) / np.dot(tc, tc))


def as_rate_estimate(traj, burn_in: float | None = None) -> float:
    """Fitted exponent of ``|delta(t)|`` on ``[burn_in, T]`` (default burn-in: first 20%)."""
    times = np.asarray(traj.times)
    if burn_in is None:
        burn_in = BURN_IN_FRACTION * times[-1]
    d = disagreement(traj.states, traj.pi)
    norms = np.sqrt(np.sum(d * d, axis=tuple(range(1, d.ndim))))
    return log_slope(times, norms, burn_in)


def ms_decay_exponent(times, ms, burn_in: float | None = None) -> float:
    """Fitted exponent ``g`` in ``E|delta(t)|^2 ~ C exp(g t)``."""
    times = np.asarray(times)
    if burn_in is None:
        burn_in = BURN_IN_FRACTION * times[-1]
    return log_slope(times, ms, burn_in)


@dataclass
class EnsembleStats:
    times: NDArray[np.float64]
    ms_disagreement: NDArray[np.float64]
    max_pairwise_ms: NDArray[np.float64]
    centroid_mean: NDArray[np.float64]
    centroid_var: NDArray[np.float64]
    as_rate: NDArray[np.float64]
    trials: int
    diverged: int = 0
    diverged_flags: NDArray[np.bool_] = field(default=None, repr=False)
    run: object = field(default=None, repr=False)

    @property
    def as_rate_quantiles(self) -> dict[str, float]:
        finite = self.as_rate[np.isfinite(self.as_rate)]
        if finite.size == 0:
            return {"q05": float("nan"), "q50": float("nan"), "q95": float("nan")}
        q = np.quantile(finite, [0.05, 0.5, 0.95])
        return {"q05": float(q[0]), "q50": float(q[1]), "q95": float(q[2])}

    def to_csv(self, path: str | Path) -> None:
        write_stats_csv(path, self)

    def rate_summary(self) -> dict:
        return {
            "trials": self.trials,
            "diverged": self.diverged,
            "degenerate": int(np.sum(np.isneginf(self.as_rate))),
            **self.as_rate_quantiles,
        }


def ensemble_stats(run, burn_in: float | None = None) -> EnsembleStats:
    """Per-time summaries of an ensemble run (states shaped ``(trials, R, N, n)``)."""
    states = run.states
    pi = run.pi
    m, _, n_ag, _ = states.shape
    d = disagreement(states, pi)
    # flatten agents so the reduction order matches a plain sum over the state vector
    ms = _mean_trials(np.ascontiguousarray(d * d).reshape(m, d.shape[1], -1).sum(axis=-1))
    pair = np.zeros(states.shape[1])
    for i in range(n_ag):
        for j in range(i + 1, n_ag):
            diff = states[:, :, i] - states[:, :, j]
            pair = np.maximum(pair, _mean_trials(np.sum(diff * diff, axis=-1)))
    cen = np.einsum("k,mrkd->mrd", pi, states)
    rates = np.empty(m)
    for k in range(m):
        try:
            rates[k] = as_rate_estimate(_View(run.times, states[k], pi), burn_in)
        except DegenerateWindow:
            rates[k] = -np.inf
    return EnsembleStats(
        times=run.times,
        ms_disagreement=ms,
        max_pairwise_ms=pair,
        centroid_mean=_mean_trials(cen),
        centroid_var=_centroid_var(cen),
        as_rate=rates,
        trials=m,
        diverged=int(np.sum(run.diverged)),
        diverged_flags=run.diverged,
        run=run,
    )


@dataclass
class _View:
    times: NDArray[np.float64]
    states: NDArray[np.float64]
    pi: NDArray[np.float64]


def martingale_variance_oracle(spec: SpectralData, noise: AdditiveNoise, c: GainFunction,
                               t: float, n_dim: int = 1) -> float:
    """``E|Mbar(t)|^2 = n * sum_ij a_ij pi_i^2 sigma_ij^2 * int_0^t c^2``.

    This is the variance of the centroid ``pi^T x(t)`` under additive noise.
    """
    if not isinstance(noise, AdditiveNoise):
        raise TypeError("the centroid variance oracle needs additive noise")
    a = (np.abs(spec.laplacian) > 0) & ~np.eye(spec.n_agents, dtype=bool)
    weight = float(np.sum(a * (spec.pi[:, None] ** 2) * noise.sigma ** 2))
    return n_dim * weight * c.integral_sq(t)


# ---------------------------------------------------------------- Lyapunov


@dataclass(frozen=True)
class LyapunovSample:
    t: float
    value: float


def reduced_disagreement(delta, spec: SpectralData) -> NDArray[np.float64]:
    """Coordinates of ``delta`` along the nonzero Laplacian eigenvectors (undirected graphs)."""
    if spec.eigvecs is None:
        raise ValueError("reduced coordinates need an undirected graph")
    return np.einsum("kj,...kd->...jd", spec.eigvecs, np.asarray(delta, dtype=float))


def lyapunov_eval(window, eigs, k: float, tau1: float, h: float, t: float = 0.0) -> LyapunovSample:
    """Degenerate Lyapunov functional from samples of the reduced disagreement.

    ``window`` holds ``dbar`` on the grid ``t - tau1, ..., t`` (step ``h``),
    shape ``(M + 1, N - 1, n)`` or ``(M + 1, N - 1)``; only the last
    ``round(tau1/h) + 1`` rows are used. The value is

        int_{t-tau1}^t (theta - t + tau1) g(theta) dtheta
            + |dbar(t) - k Lambda int_{t-tau1}^t dbar|^2

    with ``g = dbar^T (k Lambda)^2 dbar``; the first term is the double
    integral over ``[-tau1, 0] x [t+s, t]`` after swapping the order.
    """
    w = np.asarray(window, dtype=float)
    if w.ndim == 2:
        w = w[..., None]
    lam = np.asarray(eigs, dtype=float).reshape(-1)
    m = int(round(tau1 / h)) if tau1 > 0 else 0
    if w.shape[0] < m + 1:
        raise HistoryUnderflow(f"window has {w.shape[0]} samples, needs {m + 1}")
    w = w[w.shape[0] - m - 1:]
    now = w[-1]
    if m == 0:
        return LyapunovSample(t, float(np.sum(now * now)))
    scaled = k * lam[None, :, None] * w
    g = np.sum(scaled * scaled, axis=(1, 2))
    weight = np.arange(m + 1) * h
    double = np.trapezoid(weight * g, dx=h)
    integral = np.trapezoid(w, dx=h, axis=0)
    resid = now - k * lam[:, None] * integral
    return LyapunovSample(t, float(double + np.sum(resid * resid)))


def lyapunov_series(run, spec: SpectralData, k: float, tau1: float, dt: float, stride: int,
                    trial: int | None = None) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Ensemble-mean V along recorded times.

    Needs a recording stride of 1 step or a window coarse enough; the
    delay window is sampled at the record spacing ``dt * stride``.
    """
    h = dt * stride
    m = int(round(tau1 / h)) if tau1 > 0 else 0
    d = reduced_disagreement(disagreement(run.states, run.pi), spec)
    sel = range(d.shape[0]) if trial is None else [trial]
    out_t = run.times[m:]
    vals = np.zeros(len(out_t))
    for q in sel:
        for r in range(m, d.shape[1]):
            vals[r - m] += lyapunov_eval(d[q, r - m:r + 1], spec.nonzero_eigs.real, k, tau1, h).value
    return out_t, vals / len(sel)


# ---------------------------------------------------------------- output


def _fmt(v: float) -> str:
    return format(float(v), ".12g")


def write_stats_csv(path: str | Path, stats: EnsembleStats) -> None:
    """Header ``t,ms_disagreement,max_pairwise_ms,centroid_mean,centroid_var``.

    For ``n > 1`` the centroid mean column holds its Euclidean norm.
    """
    cm = stats.centroid_mean
    cm = cm[:, 0] if cm.shape[1] == 1 else np.linalg.norm(cm, axis=1)
    lines = ["t,ms_disagreement,max_pairwise_ms,centroid_mean,centroid_var"]
    for row in zip(stats.times, stats.ms_disagreement, stats.max_pairwise_ms, cm, stats.centroid_var):
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def rate_record(stats: EnsembleStats, **extra) -> str:
    """One-line JSON record of the fitted almost-sure rates."""
    rec = stats.rate_summary()
    rec.update(extra)
    return json.dumps(rec, sort_keys=True, allow_nan=True)
