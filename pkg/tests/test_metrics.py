from __future__ import annotations

import json
import math

import numpy as np
import pytest

from delaycons.errors import DegenerateWindow, HistoryUnderflow
from delaycons.gains import Constant, PowerLaw
from delaycons.graph import Digraph, benchmark_graph, spectral_decompose
from delaycons.metrics import (
    as_rate_estimate,
    disagreement,
    ensemble_stats,
    log_slope,
    lyapunov_eval,
    lyapunov_series,
    martingale_variance_oracle,
    rate_record,
    reduced_disagreement,
    write_stats_csv,
)
from delaycons.noise import AdditiveNoise, MultiplicativeNoise
from delaycons.scenarios import PSI, get_scenario
from delaycons.sdde import SimConfig, Trajectory, run_ensemble, simulate

BENCH = spectral_decompose(benchmark_graph())
BENCH_M = spectral_decompose(benchmark_graph(multiplicative=True))


def test_disagreement_zero_on_consensus():
    assert np.array_equal(disagreement(np.full(4, 3.5), BENCH.pi), np.zeros(4))


def test_disagreement_uniform_pi():
    assert np.allclose(disagreement([-7, 4, 3, -8], BENCH_M.pi), [-5, 6, 5, -6], atol=1e-14)


def test_disagreement_rooted_chain():
    spec = spectral_decompose(Digraph.from_edges(2, [(2, 1)]))
    assert np.allclose(spec.pi, [1.0, 0.0])
    assert np.allclose(disagreement([2.0, 7.5], spec.pi), [0.0, 5.5])


def test_disagreement_vector_states():
    x = np.arange(12.0).reshape(4, 3)
    d = disagreement(x, BENCH_M.pi)
    assert d.shape == (4, 3) and np.allclose(d.sum(axis=0), 0.0)


def test_log_slope_exact_exponential():
    t = np.linspace(0, 20, 2001)
    assert log_slope(t, np.exp(-0.5 * t)) == pytest.approx(-0.5, abs=1e-6)


def test_log_slope_constant():
    t = np.linspace(0, 5, 100)
    assert log_slope(t, np.full_like(t, 0.3)) == pytest.approx(0.0, abs=1e-12)


def test_log_slope_underflow():
    t = np.linspace(0, 5, 100)
    with pytest.raises(DegenerateWindow):
        log_slope(t, np.zeros_like(t))


def test_as_rate_synthetic_trajectory():
    t = np.linspace(0, 10, 1001)
    states = np.zeros((t.size, 4, 1))
    states[:, 0, 0] = np.exp(-0.5 * t)
    states[:, 1, 0] = -np.exp(-0.5 * t)
    assert as_rate_estimate(Trajectory(t, states, BENCH_M.pi)) == pytest.approx(-0.5, abs=1e-6)


def test_as_rate_negative_for_noise_free_multiplicative_run():
    cfg = SimConfig(benchmark_graph(multiplicative=True), Constant(0.12), AdditiveNoise.uniform(0.0, 4), PSI,
                    tau1=0.2, dt=1e-2, horizon=60.0, stride=10)
    assert as_rate_estimate(simulate(cfg)) < 0


def test_oracle_harmonic_gain():
    noise = AdditiveNoise.uniform(2.0, 4)
    weight = 4.0 * sum(BENCH.pi[i] ** 2 for i in range(4) for j in range(4) if i != j and BENCH.laplacian[i, j] != 0)
    val = martingale_variance_oracle(BENCH, noise, PowerLaw(1, 1), 50.0)
    assert val == pytest.approx(weight * 50.0 / 51.0, rel=1e-12)


def test_oracle_cube_root_gain_and_zero_noise():
    c = PowerLaw(1, 1 / 3)
    noise = AdditiveNoise.uniform(2.0, 4)
    ratio = martingale_variance_oracle(BENCH, noise, c, 50.0) / martingale_variance_oracle(BENCH, noise, c, 10.0)
    assert ratio == pytest.approx((51 ** (1 / 3) - 1) / (11 ** (1 / 3) - 1), rel=1e-12)
    assert martingale_variance_oracle(BENCH, AdditiveNoise.uniform(0.0, 4), c, 50.0) == 0.0


def test_oracle_rejects_multiplicative_noise():
    with pytest.raises(TypeError):
        martingale_variance_oracle(BENCH, MultiplicativeNoise.linear(2.0, 4), PowerLaw(1, 1), 1.0)


def test_lyapunov_zero_window():
    assert lyapunov_eval(np.zeros((21, 3)), [1, 2, 3], 0.1, 0.2, 0.01).value == 0.0


def test_lyapunov_no_delay_is_squared_norm():
    v = np.array([[0.3, -1.2, 2.0]])
    assert lyapunov_eval(v, [1, 2, 3], 0.5, 0.0, 0.01).value == pytest.approx(0.09 + 1.44 + 4.0)


def test_lyapunov_constant_window_closed_form():
    v = np.array([0.4, -1.0, 0.7])
    lam = np.array([0.5858, 2.0, 3.4142])
    k, tau, h = 0.12, 0.2, 0.001
    window = np.tile(v, (int(round(tau / h)) + 1, 1))
    expected = tau ** 2 / 2 * np.sum((k * lam * v) ** 2) + np.sum((v - k * tau * lam * v) ** 2)
    assert lyapunov_eval(window, lam, k, tau, h).value == pytest.approx(expected, rel=1e-12)


def test_lyapunov_short_window():
    with pytest.raises(HistoryUnderflow):
        lyapunov_eval(np.ones((5, 3)), [1, 2, 3], 0.1, 0.2, 0.01)


def test_lyapunov_nonnegative_on_random_windows():
    rng = np.random.default_rng(2)
    for _ in range(100):
        w = rng.normal(size=(21, 3, 2))
        assert lyapunov_eval(w, [0.6, 2, 3.4], rng.uniform(0, 0.3), 0.2, 0.01).value >= 0


def test_reduced_coordinates_preserve_disagreement_norm():
    d = disagreement(np.array([-7.0, 4, 3, -8])[:, None], BENCH_M.pi)
    r = reduced_disagreement(d, BENCH_M)
    assert r.shape == (3, 1)
    assert np.sum(r * r) == pytest.approx(np.sum(d * d), rel=1e-12)


def test_lyapunov_decays_along_stable_multiplicative_runs():
    sc = get_scenario("fig3")
    cfg = sc.config(trials=20, seed=3, dt=1e-3, horizon=40.0, stride=20)
    run = run_ensemble(cfg)
    times, v = lyapunov_series(run, BENCH_M, 0.12, sc.tau1, cfg.dt, cfg.stride)
    checkpoints = [np.searchsorted(times, t) for t in (8.0, 16.0, 24.0, 32.0, 40.0)]
    vals = v[checkpoints]
    assert np.all(vals[1:] <= vals[:-1] * 1.1)
    assert vals[-1] < vals[0]


def test_noise_free_ensemble_has_no_spread():
    cfg = SimConfig(benchmark_graph(), PowerLaw(1, 1), AdditiveNoise.uniform(0.0, 4), PSI, tau1=0.2,
                    dt=1e-2, horizon=5.0, trials=3, stride=10)
    stats = ensemble_stats(run_ensemble(cfg))
    one = ensemble_stats(run_ensemble(SimConfig(benchmark_graph(), PowerLaw(1, 1), AdditiveNoise.uniform(0.0, 4),
                                                PSI, tau1=0.2, dt=1e-2, horizon=5.0, trials=1, stride=10)))
    assert np.all(stats.run.states == stats.run.states[:1])
    np.testing.assert_allclose(stats.ms_disagreement, one.ms_disagreement, rtol=1e-15)
    assert np.all(stats.centroid_var < 1e-28)


def test_ms_at_time_zero_is_exact():
    sc = get_scenario("fig1")
    stats = ensemble_stats(run_ensemble(sc.config(trials=4, seed=0, dt=1e-2, horizon=1.0, stride=10)))
    delta = disagreement(np.array(PSI, dtype=float), BENCH.pi)
    assert stats.ms_disagreement[0] == float(np.sum(delta * delta))
    assert np.all(stats.ms_disagreement >= 0)


def test_stats_csv_and_rate_record(tmp_path):
    sc = get_scenario("fig2")
    stats = ensemble_stats(run_ensemble(sc.config(trials=3, seed=0, dt=1e-2, horizon=2.0, stride=10)))
    path = tmp_path / "stats.csv"
    write_stats_csv(path, stats)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,ms_disagreement,max_pairwise_ms,centroid_mean,centroid_var"
    assert len(lines) == len(stats.times) + 1
    rec = json.loads(rate_record(stats, scenario="fig2"))
    assert rec["scenario"] == "fig2" and rec["trials"] == 3
    assert "\n" not in rate_record(stats)
    assert math.isfinite(rec["q50"])
