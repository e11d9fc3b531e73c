"""Command-line front end: ``delaycons {check,design,resolvent,simulate,reproduce}``.

Exit codes: 0 success, 1 a hypothesis check failed, 2 bad input,
3 a trajectory diverged.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import design as dsg
from .errors import ConsensusError, Infeasible, NoSpanningTree, ParseError
from .gains import Constant, Verdict, check_conditions, parse_gain
from .graph import Digraph, load_graph, benchmark_graph, spectral_decompose
from .metrics import ensemble_stats, martingale_variance_oracle, rate_record
from .noise import AdditiveNoise, MultiplicativeNoise, parse_noise
from .resolvent import ResolventProblem, decay_rate, default_dt, verify_envelope, write_resolvent_csv
from .scenarios import PSI, SCENARIOS, get_scenario
from .sdde import SimConfig, run_ensemble, write_trajectory_csv

EXIT_OK, EXIT_HYPOTHESIS, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2, 3

THEOREMS = ("ms-weak", "ms-strong", "as-weak", "as-strong", "deterministic", "multiplicative")

DEFAULTS = {
    "tau1": 0.0, "tau2": 0.0, "t0": 0.0, "dt": 1e-3, "horizon": 10.0, "trials": 1, "seed": 0,
    "stride": 100, "workers": 1, "noise": "none", "theorem": "as-strong", "out": ".",
}
# the resolvent picks its own grid and writes nothing unless asked
NO_DEFAULT = {"resolvent": {"dt", "horizon", "out"}}


def load_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError("expected 'key = value'", lineno, 1, path)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _graph(text: str) -> Digraph:
    if text == "builtin:additive":
        return benchmark_graph(False)
    if text == "builtin:multiplicative":
        return benchmark_graph(True)
    return load_graph(text)


def _resolve(args: argparse.Namespace, known: set[str]) -> argparse.Namespace:
    """Fill unset flags from ``--config`` and then from the defaults."""
    skip = NO_DEFAULT.get(args.command, set())
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    for key, value in cfg.items():
        if key not in known:
            raise ParseError(f"unknown config key {key!r}", 1, 1, args.config)
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    for key in known:
        if getattr(args, key, None) is None and key in DEFAULTS and key not in skip:
            setattr(args, key, DEFAULTS[key])
    return args


def _float(args, name: str) -> float:
    try:
        return float(getattr(args, name))
    except (TypeError, ValueError):
        raise ParseError(f"--{name.replace('_', '-')} expects a number, got {getattr(args, name)!r}", 1, 1, "args") from None


def _int(args, name: str) -> int:
    try:
        return int(getattr(args, name))
    except (TypeError, ValueError):
        raise ParseError(f"--{name.replace('_', '-')} expects an integer, got {getattr(args, name)!r}", 1, 1, "args") from None


def _require(args, *names: str) -> None:
    for n in names:
        if getattr(args, n, None) is None:
            raise ParseError(f"--{n.replace('_', '-')} is required", 1, 1, "args")


# ---------------------------------------------------------------- check


def cmd_check(args: argparse.Namespace) -> int:
    _require(args, "graph", "gain")
    g = _graph(args.graph)
    gain = parse_gain(args.gain)
    tau1, t0 = _float(args, "tau1"), _float(args, "t0")
    spec = spectral_decompose(g)
    print(f"agents: {g.n_agents}")
    print(f"spanning tree: {'yes' if spec.has_spanning_tree else 'no'}")
    print(f"undirected: {'yes' if spec.is_undirected else 'no'}")
    print(f"balanced: {'yes' if spec.is_balanced else 'no'}")
    eig_txt = ", ".join(f"{l.real:.6g}" if abs(l.imag) < 1e-12 else f"{l:.6g}" for l in spec.nonzero_eigs)
    print(f"nonzero eigenvalues: {eig_txt}")

    rate = rate_prime = None
    if spec.has_spanning_tree:
        feasible, margin = dsg.additive_delay_check(spec, gain, t0, tau1)
        print(f"delay margin: {margin:.6g} ({'feasible' if feasible else 'infeasible'})")
        if feasible:
            rates = [decay_rate(ResolventProblem(l, gain, tau1, t0)).rho for l in spec.nonzero_eigs]
            rate = min(rates)
            rate_prime = 2.0 * float(np.max(spec.nonzero_eigs.real))
    else:
        feasible = False
        print(f"error: {NoSpanningTree.__name__}: graph has no spanning tree")

    rep = check_conditions(gain, rate=rate, rate_prime=rate_prime)
    for name, verdict in rep.as_dict().items():
        label = name.upper().replace("PRIME", "'")
        print(f"{label}: {verdict if verdict is not None else 'n/a'}")
    if rep.c5_limit is not None:
        print(f"C5 limit: {rep.c5_limit:.6g}")

    ok = _theorem_holds(args.theorem, spec, rep, feasible, gain, args)
    print(f"{args.theorem} hypotheses: {'hold' if ok else 'not satisfied'}")
    return EXIT_OK if ok else EXIT_HYPOTHESIS


def _theorem_holds(theorem: str, spec, rep, feasible: bool, gain, args) -> bool:
    H = Verdict.HOLDS
    tree = spec.has_spanning_tree
    if theorem == "ms-weak":
        c4 = rep.c4 == H if rep.c4 is not None else rep.c3 == H
        return tree and feasible and rep.c1 == H and c4
    if theorem in ("ms-strong", "as-strong"):
        return tree and feasible and rep.c1 == H and rep.c2 == H
    if theorem == "as-weak":
        return tree and rep.c1 == H and rep.c5 == H
    if theorem == "deterministic":
        return tree and feasible and rep.c1 == H
    if theorem == "multiplicative":
        if not (isinstance(gain, Constant) and spec.is_undirected and tree):
            return False
        noise = parse_noise(args.noise, spec.n_agents)
        bar = noise.sigma_bar if isinstance(noise, MultiplicativeNoise) else float(noise.sigma.max())
        k_max = dsg.mult_gain_interval(spec, _float(args, "tau1"), bar)
        print(f"k_max: {k_max:.6g}")
        return gain.k < k_max
    raise ParseError(f"unknown theorem {theorem!r}", 1, 1, "args")


# ---------------------------------------------------------------- design


def cmd_design(args: argparse.Namespace) -> int:
    _require(args, "graph")
    spec = spectral_decompose(_graph(args.graph))
    gain = parse_gain(args.gain) if args.gain else None
    sigma_bar = sigma_min = None
    if args.noise and args.noise != "none":
        noise = parse_noise(args.noise, spec.n_agents)
        sigma_bar = noise.sigma_bar if isinstance(noise, MultiplicativeNoise) else float(noise.sigma.max())
        mask = (np.abs(spec.laplacian) > 0) & ~np.eye(spec.n_agents, dtype=bool)
        sigma_min = float(noise.sigma[mask].min()) if isinstance(noise, MultiplicativeNoise) else None
    k = float(args.k) if args.k is not None else (gain.k if isinstance(gain, Constant) else None)
    res = dsg.design_report(spec, gain=gain, t0=_float(args, "t0"), tau1=_float(args, "tau1"),
                            tau2=_float(args, "tau2"), k=k, sigma_bar=sigma_bar, sigma_min=sigma_min)
    width = max(len(r[0]) for r in res.rows())
    for name, value in res.rows():
        print(f"{name:<{width}}  {value}")
    return EXIT_OK


# ---------------------------------------------------------------- resolvent


def cmd_resolvent(args: argparse.Namespace) -> int:
    _require(args, "lam", "gain")
    try:
        lam = complex(str(args.lam).replace(" ", "").replace("i", "j"))
    except ValueError:
        raise ParseError(f"--lam expects a complex number, got {args.lam!r}", 1, 1, "args") from None
    gain = parse_gain(args.gain)
    p = ResolventProblem(lam, gain, _float(args, "tau1"), _float(args, "t0"))
    try:
        rate = decay_rate(p)
    except Infeasible as exc:
        print(f"infeasible: {exc}")
        return EXIT_HYPOTHESIS
    dt = default_dt(p.tau1) if args.dt is None else _float(args, "dt")
    horizon = p.t0 + 50.0 if args.horizon is None else _float(args, "horizon")
    check = verify_envelope(p, rate, horizon, dt)
    print(f"rho1: {rate.rho1:.12g}")
    print(f"rho2: {rate.rho2:.12g}")
    print(f"rho: {rate.rho:.12g}")
    print(f"b_fit: {check.b_fit:.12g}")
    print(f"envelope holds: {'yes' if check.holds else 'no'}")
    if args.out:
        out = Path(args.out)
        if out.suffix != ".csv":
            out.mkdir(parents=True, exist_ok=True)
            out = out / "resolvent.csv"
        write_resolvent_csv(out, check)
    return EXIT_OK if check.holds else EXIT_HYPOTHESIS


# ---------------------------------------------------------------- simulate


def _parse_x0(text: str, n: int) -> np.ndarray:
    try:
        vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ParseError(f"--x0 expects comma-separated numbers, got {text!r}", 1, 1, "args") from None
    if len(vals) % n:
        raise ParseError(f"--x0 has {len(vals)} values, not a multiple of {n} agents", 1, 1, "args")
    return np.array(vals).reshape(n, -1)


def _run_and_write(cfg: SimConfig, out: Path, workers: int, extra: dict) -> int:
    run = run_ensemble(cfg, workers=workers)
    stats = ensemble_stats(run)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", run.times, run.states[0])
    stats.to_csv(out / "stats.csv")
    ms0, ms1 = stats.ms_disagreement[0], stats.ms_disagreement[-1]
    summary = {
        "final_ms_disagreement": float(ms1),
        "initial_ms_disagreement": float(ms0),
        "disagreement_decayed": bool(ms1 < ms0),
        "final_max_pairwise_ms": float(stats.max_pairwise_ms[-1]),
        "centroid_mean": [float(v) for v in stats.centroid_mean[-1]],
        "centroid_var": float(stats.centroid_var[-1]),
        "tau1": cfg.tau1, "tau2": cfg.tau2, "dt": cfg.dt, "horizon": cfg.horizon,
        "trials": cfg.trials, "seed": cfg.seed, "gain": cfg.gain.spec(),
    }
    summary.update(extra)
    if isinstance(cfg.noise, AdditiveNoise) and not cfg.noise.is_zero:
        summary["centroid_var_oracle"] = martingale_variance_oracle(
            spectral_decompose(cfg.graph), cfg.noise, cfg.gain, cfg.horizon, cfg.n_dim)
    (out / "summary.json").write_text(rate_record(stats, **summary) + "\n")
    print(f"wrote {out / 'trajectory.csv'}, {out / 'stats.csv'}, {out / 'summary.json'}")
    print(f"ms disagreement: {ms0:.6g} -> {ms1:.6g}")
    if stats.diverged:
        print(f"diverged trials: {stats.diverged}/{stats.trials}")
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    _require(args, "graph", "gain")
    g = _graph(args.graph)
    x0 = _parse_x0(args.x0, g.n_agents) if args.x0 else None
    if x0 is None:
        if g.n_agents != len(PSI):
            raise ParseError("--x0 is required unless the graph has 4 agents", 1, 1, "args")
        x0 = np.array(PSI)
    cfg = SimConfig(
        graph=g, gain=parse_gain(args.gain), noise=parse_noise(args.noise, g.n_agents), x0=x0,
        tau1=_float(args, "tau1"), tau2=_float(args, "tau2"), dt=_float(args, "dt"),
        horizon=_float(args, "horizon"), trials=_int(args, "trials"), seed=_int(args, "seed"),
        stride=_int(args, "stride"),
    )
    return _run_and_write(cfg, Path(args.out), _int(args, "workers"), {"noise": args.noise})


def cmd_reproduce(args: argparse.Namespace) -> int:
    sc = get_scenario(args.scenario)
    cfg = sc.config(
        trials=None if args.trials is None else _int(args, "trials"),
        seed=_int(args, "seed"),
        dt=_float(args, "dt"),
        horizon=None if args.horizon is None else _float(args, "horizon"),
        stride=_int(args, "stride"),
    )
    out = Path(args.out) / sc.name
    print(f"{sc.name}: {sc.caption}")
    return _run_and_write(cfg, out, _int(args, "workers"), {"scenario": sc.name})


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delaycons", description="Consensus with delays and measurement noise: checks, design and simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *names):
        p.add_argument("--config", help="key=value file; explicit flags win")
        for n in names:
            p.add_argument(f"--{n.replace('_', '-')}", dest=n, default=None)
        return set(names)

    p = sub.add_parser("check", help="gain conditions, graph flags and delay margin")
    p.set_defaults(func=cmd_check, known=common(p, "graph", "gain", "tau1", "t0", "noise"))
    p.add_argument("--theorem", choices=THEOREMS, default=None)
    p.set_defaults(known=p.get_default("known") | {"theorem"})

    p = sub.add_parser("design", help="feasibility margins, k_max, gamma_tau2, necessity bound")
    p.set_defaults(func=cmd_design, known=common(p, "graph", "gain", "tau1", "tau2", "t0", "noise", "k"))

    p = sub.add_parser("resolvent", help="solve the scalar resolvent and check its decay envelope")
    p.set_defaults(func=cmd_resolvent, known=common(p, "lam", "gain", "tau1", "t0", "dt", "horizon", "out"))

    p = sub.add_parser("simulate", help="Monte-Carlo run of the network")
    p.set_defaults(func=cmd_simulate, known=common(
        p, "graph", "gain", "noise", "tau1", "tau2", "dt", "horizon", "trials", "seed", "out", "stride",
        "x0", "workers"))

    p = sub.add_parser("reproduce", help="run a built-in scenario")
    p.add_argument("scenario", help=", ".join(SCENARIOS))
    p.set_defaults(func=cmd_reproduce, known=common(
        p, "dt", "horizon", "trials", "seed", "out", "stride", "workers"))
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _resolve(args, args.known)
        return args.func(args)
    except (ConsensusError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
