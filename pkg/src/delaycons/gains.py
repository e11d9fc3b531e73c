"""Control gain functions c(t) and the asymptotic conditions placed on them.

Conditions (all limits as t -> infinity):

=====  ===========================================================
C1     integral of c over [0, inf) diverges
C2     integral of c**2 over [0, inf) is finite
C3     c(t) -> 0
C4     int_0^t exp(-rate * int_s^t c) c(s)**2 ds -> 0
C4'    same as C4 with rate = 2 * max Re(lambda)
C5     c(t) * log(int_0^t c) -> 0
C5'    liminf of c(t) * log(int_0^t c) is 0
=====  ===========================================================
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, special

from .errors import GainDomainError, ParseError


class Verdict(str, enum.Enum):
    HOLDS = "Holds"
    FAILS = "Fails"
    INCONCLUSIVE = "Inconclusive"

    @classmethod
    def of(cls, flag: bool) -> "Verdict":
        return cls.HOLDS if flag else cls.FAILS

    def __str__(self) -> str:
        return self.value


class GainFunction:
    """Base class for nonnegative gain functions on ``t >= 0``."""

    nonincreasing: bool = True

    def __call__(self, t: ArrayLike) -> NDArray[np.float64] | float:
        return self.value(t)

    def value(self, t: ArrayLike):
        raise NotImplementedError

    def integral(self, t: ArrayLike):
        """``int_0^t c(u) du``."""
        raise NotImplementedError

    def integral_sq(self, t: ArrayLike):
        """``int_0^t c(u)**2 du``."""
        raise NotImplementedError

    def tail_sup(self, t0: float) -> float:
        """``sup_{t >= t0} c(t)``."""
        if t0 < 0:
            raise ValueError("t0 must be nonnegative")
        return float(self.value(t0))

    def spec(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(GainFunction):
    k: float

    def __post_init__(self) -> None:
        if not self.k > 0:
            raise ValueError("constant gain must be positive")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, self.k)
        return out if out.ndim else float(out)

    def integral(self, t):
        return self.k * np.asarray(t, dtype=float)

    def integral_sq(self, t):
        return self.k**2 * np.asarray(t, dtype=float)

    def spec(self) -> str:
        return f"const:k={self.k:g}"


@dataclass(frozen=True)
class PowerLaw(GainFunction):
    """``c(t) = a * (1 + t)**(-beta)``."""

    a: float
    beta: float

    def __post_init__(self) -> None:
        if not self.a > 0 or self.beta < 0:
            raise ValueError("PowerLaw needs a > 0 and beta >= 0")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = self.a * (1.0 + t) ** (-self.beta)
        return out if out.ndim else float(out)

    @staticmethod
    def _antideriv(t, p: float):
        # int_0^t (1+u)^(-p) du
        if p == 1.0:
            return np.log1p(t)
        return np.expm1((1.0 - p) * np.log1p(t)) / (1.0 - p)

    def integral(self, t):
        return self.a * self._antideriv(np.asarray(t, dtype=float), self.beta)

    def integral_sq(self, t):
        return self.a**2 * self._antideriv(np.asarray(t, dtype=float), 2.0 * self.beta)

    def spec(self) -> str:
        return f"power:a={self.a:g},beta={self.beta:g}"


def _li(x):
    return special.expi(np.log(x))


@dataclass(frozen=True)
class LogInverse(GainFunction):
    """``c(t) = 1 / log(s + t)`` with ``s > 1``."""

    s: float

    def __post_init__(self) -> None:
        if not self.s > 1:
            raise ValueError("LogInverse needs s > 1")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = 1.0 / np.log(self.s + t)
        return out if out.ndim else float(out)

    def integral(self, t):
        t = np.asarray(t, dtype=float)
        return _li(self.s + t) - _li(self.s)

    def integral_sq(self, t):
        # d/dx [li(x) - x/log x] = 1/log^2 x
        f = lambda x: _li(x) - x / np.log(x)
        t = np.asarray(t, dtype=float)
        return f(self.s + t) - f(self.s)

    def spec(self) -> str:
        return f"loginv:s={self.s:g}"


@dataclass(frozen=True, eq=False)
class Tabulated(GainFunction):
    """Piecewise-linear gain through samples; undefined beyond the grid."""

    times: NDArray[np.float64]
    values: NDArray[np.float64]
    source: str = "<table>"
    _cum: NDArray[np.float64] = field(init=False, repr=False)
    _cum_sq: NDArray[np.float64] = field(init=False, repr=False)

    nonincreasing = False

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("tabulated gain needs matching 1-D arrays of length >= 2")
        if t[0] != 0.0:
            raise ValueError("tabulated gain grid must start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("tabulated gain grid must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("tabulated gain values must be finite and nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "nonincreasing", bool(np.all(np.diff(v) <= 0)))
        h = np.diff(t)
        cum = np.concatenate(([0.0], np.cumsum(0.5 * h * (v[1:] + v[:-1]))))
        # exact integral of the square of a linear segment
        sq = h * (v[:-1] ** 2 + v[:-1] * v[1:] + v[1:] ** 2) / 3.0
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_cum_sq", np.concatenate(([0.0], np.cumsum(sq))))

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def _check(self, t) -> NDArray[np.float64]:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.end):
            raise GainDomainError(f"t outside tabulated grid [0, {self.end:g}]")
        return t

    def value(self, t):
        t = self._check(t)
        out = np.interp(t, self.times, self.values)
        return out if out.ndim else float(out)

    def _segment_integral(self, t, cum, power: int):
        t = self._check(t)
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 2)
        t0 = self.times[k]
        v0 = self.values[k]
        vt = np.interp(t, self.times, self.values)
        h = t - t0
        if power == 1:
            part = 0.5 * h * (v0 + vt)
        else:
            part = h * (v0**2 + v0 * vt + vt**2) / 3.0
        return cum[k] + part

    def integral(self, t):
        return self._segment_integral(t, self._cum, 1)

    def integral_sq(self, t):
        return self._segment_integral(t, self._cum_sq, 2)

    def tail_sup(self, t0: float) -> float:
        if t0 < 0:
            raise ValueError("t0 must be nonnegative")
        v0 = self.value(t0)
        later = self.values[self.times >= t0]
        return float(max(v0, later.max())) if later.size else float(v0)

    def spec(self) -> str:
        return f"table:{self.source}"


def load_table(path: str | Path) -> Tabulated:
    """Read a two-column ``t c`` table (whitespace or comma separated, ``#`` comments)."""
    path = Path(path)
    rows = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError("expected two columns 't c'", lineno, 1, str(path))
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ParseError(f"non-numeric entry in {line!r}", lineno, 1, str(path)) from None
    if len(rows) < 2:
        raise ParseError("table needs at least two rows", 1, 1, str(path))
    arr = np.array(rows)
    try:
        return Tabulated(arr[:, 0], arr[:, 1], source=str(path))
    except ValueError as exc:
        raise ParseError(str(exc), 1, 1, str(path)) from None


def _parse_number(text: str) -> float:
    return float(Fraction(text)) if "/" in text else float(text)


def parse_kv(body: str, source: str, offset: int = 0) -> dict[str, str]:
    """Parse ``k=v,k=v`` reporting 1-based columns relative to the full string."""
    out: dict[str, str] = {}
    pos = offset
    for item in body.split(","):
        if "=" not in item:
            raise ParseError(f"expected key=value, got {item!r}", 1, pos + 1, source)
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
        pos += len(item) + 1
    return out


def parse_gain(text: str) -> GainFunction:
    """Parse ``power:a=1,beta=1``, ``loginv:s=4``, ``const:k=0.12`` or ``table:<path>``."""
    text = text.strip()
    kind, sep, body = text.partition(":")
    if not sep:
        raise ParseError("gain spec must look like 'kind:params'", 1, 1, text)
    offset = len(kind) + 1
    if kind == "table":
        return load_table(body)
    params = parse_kv(body, text, offset)
    try:
        if kind == "power":
            return PowerLaw(_parse_number(params.get("a", "1")), _parse_number(params["beta"]))
        if kind == "loginv":
            return LogInverse(_parse_number(params["s"]))
        if kind == "const":
            return Constant(_parse_number(params["k"]))
    except KeyError as exc:
        raise ParseError(f"missing parameter {exc.args[0]!r} for {kind}", 1, offset + 1, text) from None
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(str(exc), 1, offset + 1, text) from None
    raise ParseError(f"unknown gain kind {kind!r}", 1, 1, text)


@dataclass(frozen=True)
class ConditionReport:
    c1: Verdict
    c2: Verdict
    c3: Verdict
    c5: Verdict
    c5prime: Verdict
    c4: Verdict | None = None
    c4prime: Verdict | None = None
    c5_limit: float | None = None
    tail_sup: Callable[[float], float] | None = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict[str, str | None]:
        names = ["c1", "c2", "c3", "c4", "c4prime", "c5", "c5prime"]
        return {n: (None if getattr(self, n) is None else str(getattr(self, n))) for n in names}


def _symbolic(c: GainFunction, rate: float | None, rate_prime: float | None) -> ConditionReport:
    if isinstance(c, PowerLaw):
        b = c.beta
        c1 = b <= 1
        c3 = b > 0
        c4 = 0 < b <= 1
        # beta > 1: int c converges, so c * log(int c) -> 0 as well
        c5 = b > 0
        return ConditionReport(
            c1=Verdict.of(c1), c2=Verdict.of(b > 0.5), c3=Verdict.of(c3),
            c5=Verdict.of(c5), c5prime=Verdict.of(c5),
            c4=None if rate is None else Verdict.of(c4),
            c4prime=None if rate_prime is None else Verdict.of(c4),
            c5_limit=0.0 if c5 else math.inf, tail_sup=c.tail_sup,
        )
    if isinstance(c, LogInverse):
        return ConditionReport(
            c1=Verdict.HOLDS, c2=Verdict.FAILS, c3=Verdict.HOLDS,
            c5=Verdict.FAILS, c5prime=Verdict.FAILS,
            c4=None if rate is None else Verdict.HOLDS,
            c4prime=None if rate_prime is None else Verdict.HOLDS,
            c5_limit=1.0, tail_sup=c.tail_sup,
        )
    if isinstance(c, Constant):
        return ConditionReport(
            c1=Verdict.HOLDS, c2=Verdict.FAILS, c3=Verdict.FAILS,
            c5=Verdict.FAILS, c5prime=Verdict.FAILS,
            c4=None if rate is None else Verdict.FAILS,
            c4prime=None if rate_prime is None else Verdict.FAILS,
            c5_limit=math.inf, tail_sup=c.tail_sup,
        )
    raise TypeError(f"no closed-form rules for {type(c).__name__}")


def check_conditions(
    c: GainFunction, rate: float | None = None, rate_prime: float | None = None
) -> ConditionReport:
    """Decide C1-C5' for ``c``.

    Parametric families are decided by exact rules. Tabulated gains go
    through :func:`numeric_conditions` over their grid.

    Args:
        rate: decay rate used in C4 (``min_j rho(lambda_j)``); C4 is skipped if None.
        rate_prime: rate used in C4' (``2 * max Re(lambda)``); defaults to ``rate``.
    """
    if rate_prime is None:
        rate_prime = rate
    if isinstance(c, Tabulated):
        return numeric_conditions(c, rate=rate, rate_prime=rate_prime)
    return _symbolic(c, rate, rate_prime)


# ---------------------------------------------------------------- numerics

REL_AGREE = 0.05
C4_THRESHOLD = 1e-3


def _aitken(x0: float, x1: float, x2: float) -> float:
    d1, d2 = x1 - x0, x2 - x1
    den = d2 - d1
    if d1 == 0 and d2 == 0:
        return x2
    if den == 0 or (d1 != 0 and d2 / d1 >= 1):
        return math.copysign(math.inf, d2)
    return x2 - d2 * d2 / den


def _agree(a: float, b: float, scale: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= REL_AGREE * max(abs(a), abs(b), 1e-300) or abs(a - b) <= 1e-12 * scale


def _series_verdict(vals: list[float]) -> tuple[bool | None, float]:
    """Does the integral sampled at T/8, T/4, T/2, T converge?  None if unclear."""
    d = np.diff(vals)
    if np.all(d <= 0):
        return True, vals[-1]
    if d[0] <= 0 or d[1] <= 0:
        return None, math.nan
    r1, r2 = d[1] / d[0], d[2] / d[1]
    if r1 >= 1 and r2 >= 1:
        return False, math.inf
    if r1 < 1 and r2 < 1:
        lim1 = _aitken(*vals[:3])
        lim2 = _aitken(*vals[1:])
        if _agree(lim1, lim2, abs(vals[-1])):
            return True, lim2
    return None, math.nan


def _limit_verdict(vals: list[float], scale: float) -> tuple[bool | None, float]:
    """Is the limit of the sampled sequence zero?  None if extrapolations disagree."""
    lim1 = _aitken(*vals[:3])
    lim2 = _aitken(*vals[1:])
    if math.isinf(lim2) and lim1 == lim2:
        return False, lim2
    if abs(lim1) <= REL_AGREE * scale and abs(lim2) <= REL_AGREE * scale:
        return True, 0.0
    if _agree(lim1, lim2, scale) and abs(lim2) > REL_AGREE * scale:
        return False, lim2
    return None, math.nan


def _quad(f, a: float, b: float) -> float:
    # split on a log scale so adaptive quadrature sees the structure near 0
    edges = [a] + [x for x in np.geomspace(1.0, b, 12) if a < x < b] + [b]
    return float(sum(integrate.quad(f, lo, hi, limit=200)[0] for lo, hi in zip(edges[:-1], edges[1:])))


def _c4_integral(c: GainFunction, rate: float, t: float) -> float:
    it = float(c.integral(t))
    f = lambda s: math.exp(-rate * (it - float(c.integral(s)))) * float(c.value(s)) ** 2
    if isinstance(c, Tabulated):
        mask = c.times <= t
        s = np.append(c.times[mask], t) if c.times[mask][-1] < t else c.times[mask]
        y = np.exp(-rate * (it - c.integral(s))) * c.value(s) ** 2
        return float(integrate.trapezoid(y, s))
    # the integrand is concentrated within a few 1/(rate c(t)) of t
    width = min(t, 60.0 / max(rate * float(c.value(t)), 1e-12))
    near = integrate.quad(f, t - width, t, limit=400)[0]
    far = _quad(f, 0.0, t - width) if t - width > 0 else 0.0
    return near + far


def numeric_conditions(
    c: GainFunction,
    horizon: float | None = None,
    rate: float | None = None,
    rate_prime: float | None = None,
) -> ConditionReport:
    """Decide the conditions from finite-horizon quadrature.

    Integrals are sampled at ``T/8, T/4, T/2, T``. Convergence is judged
    from the doubling increments. Limits are extrapolated by Aitken
    (Richardson-type) acceleration from two overlapping triples. When the
    two extrapolations differ by more than 5 % the verdict is Inconclusive.
    C4 uses the horizons ``T/100, T/10, T``: Holds if the integral
    decreases and ends below ``1e-3``; Fails if it does not decrease.
    """
    if horizon is None:
        horizon = c.end if isinstance(c, Tabulated) else 1e4
    ts = [horizon / 8, horizon / 4, horizon / 2, horizon]

    if isinstance(c, Tabulated):
        i1 = [float(c.integral(t)) for t in ts]
        i2 = [float(c.integral_sq(t)) for t in ts]
    else:
        i1 = [_quad(lambda u: float(c.value(u)), 0.0, t) for t in ts]
        i2 = [_quad(lambda u: float(c.value(u)) ** 2, 0.0, t) for t in ts]

    conv1, _ = _series_verdict(i1)
    conv2, _ = _series_verdict(i2)
    c1 = Verdict.INCONCLUSIVE if conv1 is None else Verdict.of(not conv1)
    c2 = Verdict.INCONCLUSIVE if conv2 is None else Verdict.of(conv2)

    vals = [float(c.value(t)) for t in ts]
    scale = max(float(c.value(0.0)), max(vals))
    z3, _ = _limit_verdict(vals, scale)
    c3 = Verdict.INCONCLUSIVE if z3 is None else Verdict.of(z3)

    g = [float(c.value(t)) * math.log(max(i, 1e-300)) for t, i in zip(ts, i1)]
    z5, lim5 = _limit_verdict(g, max(abs(x) for x in g) or 1.0)
    c5 = Verdict.INCONCLUSIVE if z5 is None else Verdict.of(z5)

    def c4_at(r: float | None) -> Verdict | None:
        if r is None:
            return None
        js = [_c4_integral(c, r, horizon * f) for f in (1e-2, 1e-1, 1.0)]
        if js[0] > js[1] > js[2] and js[2] < C4_THRESHOLD:
            return Verdict.HOLDS
        if js[2] >= js[0] * (1.0 - 1e-6):
            return Verdict.FAILS
        return Verdict.INCONCLUSIVE

    return ConditionReport(
        c1=c1, c2=c2, c3=c3, c5=c5, c5prime=c5,
        c4=c4_at(rate), c4prime=c4_at(rate_prime),
        c5_limit=lim5 if z5 is not None else None,
        tail_sup=c.tail_sup,
    )


def tail_sup(c: GainFunction, t0: float) -> float:
    return c.tail_sup(t0)
