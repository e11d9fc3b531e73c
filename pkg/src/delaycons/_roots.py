"""Bracketing root finders for monotone scalar equations."""

from __future__ import annotations

from typing import Callable


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12, max_iter: int = 400) -> float:
    """Root of ``f`` on ``[lo, hi]`` given a sign change at the ends.

    Stops once the bracket is narrower than ``tol`` or can no longer be
    split in floating point, and returns the end with the smaller residual.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ValueError(f"no sign change on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol or mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return lo if abs(flo) <= abs(fhi) else hi


def expand_bracket(f: Callable[[float], float], lo: float, start: float = 1.0, cap: float = 1e6) -> float | None:
    """Double ``start`` until ``f`` changes sign relative to ``f(lo)``; None past ``cap``."""
    sign = f(lo) > 0
    hi = max(start, lo + start)
    while hi <= cap:
        if (f(hi) > 0) != sign:
            return hi
        hi *= 2.0
    return None
