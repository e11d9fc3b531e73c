"""Built-in four-agent simulation scenarios."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnknownScenario
from .gains import Constant, GainFunction, PowerLaw
from .graph import Digraph, benchmark_graph
from .noise import AdditiveNoise, MultiplicativeNoise, NoiseModel
from .sdde import SimConfig

PSI = (-7.0, 4.0, 3.0, -8.0)
SIGMA = 2.0


@dataclass(frozen=True)
class Scenario:
    name: str
    caption: str
    multiplicative: bool
    gain: GainFunction
    tau1: float
    tau2: float
    horizon: float
    trials: int = 20

    def graph(self) -> Digraph:
        return benchmark_graph(multiplicative=self.multiplicative)

    def noise(self) -> NoiseModel:
        n = 4
        if self.multiplicative:
            return MultiplicativeNoise.linear(SIGMA, n, SIGMA)
        return AdditiveNoise.uniform(SIGMA, n)

    def config(self, trials: int | None = None, seed: int = 0, dt: float = 1e-3,
               horizon: float | None = None, stride: int = 100) -> SimConfig:
        return SimConfig(
            graph=self.graph(),
            gain=self.gain,
            noise=self.noise(),
            x0=np.array(PSI),
            tau1=self.tau1,
            tau2=self.tau2,
            dt=dt,
            horizon=self.horizon if horizon is None else horizon,
            trials=self.trials if trials is None else trials,
            seed=seed,
            stride=stride,
        )


SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in [
        Scenario("fig1", "additive, c=1/(1+t), tau1=0.2", False, PowerLaw(1.0, 1.0), 0.2, 0.0, 200.0),
        Scenario("fig2", "additive, c=(1+t)^(-1/3), tau1=0.2", False, PowerLaw(1.0, 1.0 / 3.0), 0.2, 0.0, 200.0),
        Scenario("fig3", "multiplicative, k=0.12, tau1=0.2, tau2=2", True, Constant(0.12), 0.2, 2.0, 100.0),
        Scenario("fig4", "multiplicative, k=0.12, tau1=0.2, tau2=0", True, Constant(0.12), 0.2, 0.0, 100.0),
        Scenario("fig5", "multiplicative, k=0.12, tau1=0.2, tau2=10", True, Constant(0.12), 0.2, 10.0, 100.0),
        Scenario("fig6", "multiplicative, k=0.12, tau1=0.2, tau2=100", True, Constant(0.12), 0.2, 100.0, 300.0),
        Scenario("fig7", "multiplicative, k=0.12, tau1=3.5, tau2=0", True, Constant(0.12), 3.5, 0.0, 50.0),
        Scenario("fig8", "multiplicative, k=0.013, tau1=3.5, tau2=0", True, Constant(0.013), 3.5, 0.0, 400.0),
    ]
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None
