"""Measurement-noise models and counter-based Brownian increments.

Noise matrices use the adjacency orientation: ``sigma[i, j]`` is the
intensity on the channel through which agent ``i`` hears agent ``j``.

Every Gaussian draw is a pure function of ``(seed, trial, channel, step)``.
A Philox-4x64 block is keyed by ``(seed, trial, channel)`` and indexed by
``step // 2``; each step consumes two 64-bit words. One standard normal
comes from the two words via the cosine branch of Box-Muller. Trials
can therefore be split across workers, or chunked in time, without
changing a single bit of output.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np
from numpy.typing import NDArray

from .errors import LinearBoundViolated, ParseError

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def _as_sigma(sigma, n_agents: int | None) -> NDArray[np.float64]:
    s = np.asarray(sigma, dtype=float)
    if s.ndim == 0:
        if n_agents is None:
            raise ValueError("scalar sigma needs n_agents")
        s = np.full((n_agents, n_agents), float(s))
        np.fill_diagonal(s, 0.0)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("sigma must be a scalar or a square matrix")
    if not np.all(np.isfinite(s)) or np.any(s < 0):
        raise ValueError("sigma entries must be finite and nonnegative")
    s = s.copy()
    s.setflags(write=False)
    return s


@dataclass(frozen=True, eq=False)
class AdditiveNoise:
    """State-independent intensity ``f_ji(x) = sigma_ji * 1_n``."""

    sigma: NDArray[np.float64]

    @classmethod
    def uniform(cls, sigma: float, n_agents: int) -> "AdditiveNoise":
        return cls(_as_sigma(sigma, n_agents))

    def __post_init__(self) -> None:
        object.__setattr__(self, "sigma", _as_sigma(self.sigma, None))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.sigma)


@dataclass(frozen=True, eq=False)
class MultiplicativeNoise:
    """Intensity proportional to the delayed relative state.

    With ``func`` unset this is the linear kind ``f_ji(x) = sigma_ji * x``.
    A custom ``func(delta, i, j)`` must act on the last axis of ``delta``
    (shape ``(..., n)``) and is held to ``|f(x)| <= sigma_bar * |x|``.
    """

    sigma: NDArray[np.float64]
    sigma_bar: float | None = None
    func: Callable[[NDArray[np.float64], int, int], NDArray[np.float64]] | None = None

    @classmethod
    def linear(cls, sigma: float, n_agents: int, sigma_bar: float | None = None) -> "MultiplicativeNoise":
        return cls(_as_sigma(sigma, n_agents), sigma_bar)

    def __post_init__(self) -> None:
        sigma = _as_sigma(self.sigma, None)
        object.__setattr__(self, "sigma", sigma)
        bar = float(sigma.max()) if self.sigma_bar is None else float(self.sigma_bar)
        if not np.isfinite(bar) or bar < 0:
            raise ValueError("sigma_bar must be finite and nonnegative")
        if self.func is None and sigma.max() > bar:
            raise LinearBoundViolated(f"declared bound {bar} below max sigma {sigma.max()}")
        object.__setattr__(self, "sigma_bar", bar)

    @property
    def is_linear(self) -> bool:
        return self.func is None

    @property
    def is_zero(self) -> bool:
        return self.func is None and not np.any(self.sigma)


NoiseModel = Union[AdditiveNoise, MultiplicativeNoise]


def intensity(model: NoiseModel, delta, channel: tuple[int, int] = (0, 1)) -> NDArray[np.float64]:
    """Noise intensity ``f_ji(delta)`` on channel ``(i, j)`` (receiver, sender).

    Raises:
        LinearBoundViolated: a custom multiplicative intensity exceeds
            ``sigma_bar * |delta|``.
    """
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    i, j = channel
    s = model.sigma[i, j]
    if isinstance(model, AdditiveNoise):
        return np.full(delta.shape, s)
    if model.func is None:
        return s * delta
    out = np.asarray(model.func(delta, i, j), dtype=float)
    lhs = np.linalg.norm(out, axis=-1)
    rhs = model.sigma_bar * np.linalg.norm(delta, axis=-1) + 1e-12
    if np.any(lhs > rhs):
        raise LinearBoundViolated(
            f"|f_{j + 1}{i + 1}(x)| = {np.max(lhs):.6g} exceeds sigma_bar*|x| on channel ({i + 1},{j + 1})"
        )
    return out


def bound_ratio(model: MultiplicativeNoise, n_dim: int, samples: int = 10_000, seed: int = 0) -> float:
    """Largest ``|f(x)| / |x|`` seen over random ``x`` on all channels."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((samples, n_dim)) * rng.lognormal(0.0, 2.0, (samples, 1))
    worst = 0.0
    n = model.sigma.shape[0]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            f = model.sigma[i, j] * x if model.func is None else np.asarray(model.func(x, i, j))
            worst = max(worst, float(np.max(np.linalg.norm(f, axis=-1) / np.linalg.norm(x, axis=-1))))
    return worst


# ------------------------------------------------------------------ streams


def channel_id(i: int, j: int) -> int:
    """Stable 32-bit id of channel ``j -> i`` (independent of graph size)."""
    return (i << 16) | j


def _stream_key(seed: int, trial: int, channel: int) -> int:
    return ((seed & 0xFFFFFFFFFFFFFFFF) << 64) | ((trial & 0xFFFFFFFF) << 32) | (channel & 0xFFFFFFFF)


def _words(seed: int, trial: int, channel: int, start: int, steps: int) -> NDArray[np.uint64]:
    bitgen = np.random.Philox(key=_stream_key(seed, trial, channel), counter=start // 2)
    skip = 2 * (start % 2)
    raw = bitgen.random_raw(2 * steps + skip)
    return raw[skip:].reshape(steps, 2)


def _box_muller(words: NDArray[np.uint64]) -> NDArray[np.float64]:
    u1 = ((words[..., 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
    u2 = (words[..., 1] >> np.uint64(11)).astype(np.float64) * _INV_2_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def standard_normals(seed: int, trial: int, channel: int, start: int, steps: int) -> NDArray[np.float64]:
    """Standard normals for steps ``start .. start+steps-1`` of one stream."""
    return _box_muller(_words(seed, trial, channel, start, steps))


@dataclass(frozen=True)
class NoiseStream:
    seed: int
    trial: int
    channel: int


def brownian_increments(stream: NoiseStream, dt: float, steps: int, start: int = 0) -> NDArray[np.float64]:
    """Increments ``w(t_{m+1}) - w(t_m)`` for ``m = start .. start+steps-1``; each ``N(0, dt)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return np.sqrt(dt) * standard_normals(stream.seed, stream.trial, stream.channel, start, steps)


def increment_block(
    seed: int, trials, channels, start: int, steps: int, dt: float
) -> NDArray[np.float64]:
    """Increments for many streams at once, shape ``(len(trials), len(channels), steps)``.

    A channel id of ``-1`` marks a padding slot and yields zeros.
    """
    out = np.zeros((len(trials), len(channels), steps))
    scale = np.sqrt(dt)
    for a, trial in enumerate(trials):
        for b, ch in enumerate(channels):
            if ch < 0:
                continue
            out[a, b] = standard_normals(seed, int(trial), int(ch), start, steps)
    out *= scale
    return out


# ------------------------------------------------------------------ parsing


def load_matrix(path: str | Path) -> NDArray[np.float64]:
    path = Path(path)
    rows = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        try:
            rows.append([float(v) for v in line.split()])
        except ValueError:
            raise ParseError(f"non-numeric entry in {line!r}", lineno, 1, str(path)) from None
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ParseError("sigma matrix must be square", 1, 1, str(path))
    return np.array(rows)


def parse_noise(text: str, n_agents: int) -> NoiseModel:
    """Parse ``none``, ``additive:sigma=2``, ``mult-linear:sigma=2,bar=2``.

    ``file=<path>`` may replace ``sigma=`` to read a heterogeneous matrix.
    """
    from .gains import parse_kv

    text = text.strip()
    if text in ("none", "zero"):
        return AdditiveNoise.uniform(0.0, n_agents)
    kind, sep, body = text.partition(":")
    if not sep or kind not in ("additive", "mult-linear"):
        raise ParseError(f"unknown noise spec {text!r}", 1, 1, text)
    params = parse_kv(body, text, len(kind) + 1)
    try:
        if "file" in params:
            sigma = load_matrix(params["file"])
            if sigma.shape != (n_agents, n_agents):
                raise ParseError(f"sigma matrix is {sigma.shape}, graph has {n_agents} agents", 1, 1, params["file"])
        else:
            sigma = _as_sigma(float(params["sigma"]), n_agents)
        if kind == "additive":
            return AdditiveNoise(sigma)
        bar = float(params["bar"]) if "bar" in params else None
        return MultiplicativeNoise(sigma, bar)
    except KeyError as exc:
        raise ParseError(f"missing parameter {exc.args[0]!r}", 1, len(kind) + 2, text) from None
    except (ValueError, LinearBoundViolated) as exc:
        raise ParseError(str(exc), 1, len(kind) + 2, text) from None
