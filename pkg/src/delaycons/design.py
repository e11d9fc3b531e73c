"""Design-side thresholds: delay feasibility, admissible constant gains and decay rates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._roots import bisect
from .errors import ConfigError, GainOutOfRange, GraphNotUndirected, NoSpanningTree, NotConnected
from .gains import GainFunction, tail_sup
from .graph import SpectralData


def additive_delay_check(spec: SpectralData, c: GainFunction, t0: float, tau1: float) -> tuple[bool, float]:
    """Margin ``tau1 * cbar_{t0} * max_j |lam_j|^2 / Re(lam_j)``; feasible iff below 1.

    Raises:
        NoSpanningTree: the graph has no spanning tree.
    """
    if not spec.has_spanning_tree:
        raise NoSpanningTree("additive delay feasibility needs a spanning tree")
    lam = spec.nonzero_eigs
    worst = float(np.max(np.abs(lam) ** 2 / lam.real))
    margin = tau1 * tail_sup(c, t0) * worst if tau1 > 0 else 0.0
    return margin < 1.0, margin


def _require_undirected(spec: SpectralData) -> None:
    if not spec.is_undirected:
        raise GraphNotUndirected("multiplicative-noise design needs an undirected graph")
    if not spec.has_spanning_tree:
        raise NotConnected("multiplicative-noise design needs a connected graph")


def mult_gain_interval(spec: SpectralData, tau1: float, sigma_bar: float, n_agents: int | None = None) -> float:
    """Upper end ``k_max = 1 / (lam_N tau1 + (N-1)/N sigma_bar^2)`` of the gain interval ``(0, k_max)``.

    Returns ``inf`` when the denominator vanishes.
    """
    _require_undirected(spec)
    n = spec.n_agents if n_agents is None else n_agents
    denom = spec.lambdaN * tau1 + (n - 1) / n * sigma_bar ** 2
    return math.inf if denom == 0 else 1.0 / denom


def gamma_equation(spec: SpectralData, k: float, tau1: float, tau2: float, sigma_bar: float,
                   n_agents: int | None = None):
    """Left side of the defining equation of the decay rate, as a function of ``gamma``."""
    n = spec.n_agents if n_agents is None else n_agents
    l2, ln = spec.lambda2, spec.lambdaN
    q = (n - 1) / n * k * sigma_bar ** 2

    def f(g: float) -> float:
        return (2.0 * k * (1.0 - q * math.exp(g * tau2) - ln * k * tau1) * l2
                - 2.0 * g - 3.0 * ln * ln * k * k * tau1 * tau1 * g * math.exp(g * tau1))

    return f


def gamma_tau2(spec: SpectralData, k: float, tau1: float, tau2: float, sigma_bar: float,
               n_agents: int | None = None, tol: float = 1e-15) -> float:
    """Guaranteed mean-square decay rate for the constant gain ``k``.

    The equation's left side is positive at 0 for ``k < k_max`` and falls
    strictly; it is at most ``2 k lam_2 - 2 gamma``, so the root lies in
    ``(0, k lam_2]``.

    Raises:
        GainOutOfRange: ``k`` is not inside ``(0, k_max)``.
    """
    k_max = mult_gain_interval(spec, tau1, sigma_bar, n_agents)
    if not 0 < k < k_max:
        raise GainOutOfRange(f"k={k} outside (0, {k_max:.6g})")
    f = gamma_equation(spec, k, tau1, tau2, sigma_bar, n_agents)
    return bisect(f, 0.0, k * spec.lambda2, tol=tol)


def necessity_bound(sigma_min: float, n_agents: int, tau1: float | None = None,
                    tau2: float | None = None) -> float:
    """Necessary gain bound ``N / (sigma_min^2 (N - 1))`` under linear multiplicative noise.

    Only established for ``2 tau2 >= tau1``; passing delays that violate
    it raises ``ConfigError``.
    """
    if tau1 is not None and tau2 is not None and 2.0 * tau2 < tau1:
        raise ConfigError("the necessity bound is only established for 2*tau2 >= tau1")
    if sigma_min == 0:
        return math.inf
    return n_agents / (sigma_min ** 2 * (n_agents - 1))


@dataclass
class DesignResult:
    additive_feasible: bool | None = None
    additive_margin: float | None = None
    mult_k_max: float | None = None
    gamma_tau2: float | None = None
    necessity_k_max: float | None = None

    def rows(self) -> list[tuple[str, str]]:
        def fmt(v):
            if v is None:
                return "n/a"
            if isinstance(v, bool):
                return "yes" if v else "no"
            return f"{v:.6g}"

        return [
            ("additive delay margin", fmt(self.additive_margin)),
            ("additive feasible", fmt(self.additive_feasible)),
            ("multiplicative k_max", fmt(self.mult_k_max)),
            ("gamma_tau2", fmt(self.gamma_tau2)),
            ("necessity k bound", fmt(self.necessity_k_max)),
        ]


def design_report(spec: SpectralData, *, gain: GainFunction | None = None, t0: float = 0.0,
                  tau1: float = 0.0, tau2: float = 0.0, k: float | None = None,
                  sigma_bar: float | None = None, sigma_min: float | None = None) -> DesignResult:
    """Every threshold that applies to the given graph and parameters."""
    res = DesignResult()
    if spec.has_spanning_tree and gain is not None:
        res.additive_feasible, res.additive_margin = additive_delay_check(spec, gain, t0, tau1)
    if spec.is_undirected and spec.has_spanning_tree and sigma_bar is not None:
        res.mult_k_max = mult_gain_interval(spec, tau1, sigma_bar)
        if k is not None and 0 < k < res.mult_k_max:
            res.gamma_tau2 = gamma_tau2(spec, k, tau1, tau2, sigma_bar)
    if sigma_min is not None and 2.0 * tau2 >= tau1:
        res.necessity_k_max = necessity_bound(sigma_min, spec.n_agents)
    return res
