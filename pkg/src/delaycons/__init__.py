"""Simulation and design checks for consensus networks with delays and measurement noise."""

from .design import additive_delay_check, gamma_tau2, mult_gain_interval, necessity_bound
from .gains import Constant, LogInverse, PowerLaw, Tabulated, Verdict, check_conditions, parse_gain, tail_sup
from .graph import Digraph, SpectralData, build_laplacian, has_spanning_tree, parse_graph, spectral_decompose
from .metrics import EnsembleStats, as_rate_estimate, disagreement, martingale_variance_oracle
from .noise import AdditiveNoise, MultiplicativeNoise, NoiseStream, brownian_increments, intensity
from .resolvent import ResolventProblem, decay_rate, solve_resolvent, verify_envelope
from .sdde import SimConfig, Trajectory, simulate, simulate_ensemble

__version__ = "0.1.0"

__all__ = [
    "AdditiveNoise", "Constant", "Digraph", "EnsembleStats", "LogInverse", "MultiplicativeNoise",
    "NoiseStream", "PowerLaw", "ResolventProblem", "SimConfig", "SpectralData", "Tabulated",
    "Trajectory", "Verdict", "additive_delay_check", "as_rate_estimate", "brownian_increments",
    "build_laplacian", "check_conditions", "decay_rate", "disagreement", "gamma_tau2",
    "has_spanning_tree", "intensity", "martingale_variance_oracle", "mult_gain_interval",
    "necessity_bound", "parse_gain", "parse_graph", "simulate", "simulate_ensemble",
    "solve_resolvent", "spectral_decompose", "tail_sup", "verify_envelope",
]
