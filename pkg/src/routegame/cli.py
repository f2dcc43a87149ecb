"""Config loading, command dispatch, and report/trajectory export.

The config file is a single YAML document whose keys mirror the run config;
flags override file fields, and the fully resolved config is dumped next to
the outputs so every run is reproducible from its artifacts alone.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .dynamics import simulate, write_trajectory_csv
from .equilibrium import check_obedience
from .errors import ConfigurationError, SolverError
from .estimators import BetaSchedule, LuenbergerSpec, SmoothingSpec
from .model import (DisobedienceMatrix, GameConfig, LatencyModel, Prior, Scenario, Signal)

OUT_DIR_ENV = "ROUTEGAME_OUT"

_KNOWN_KEYS = {
    "links", "states", "degree", "coeffs", "prior", "nu", "signal", "disobedience",
    "m_max", "allow_small_m_max", "m_init", "theta_hat_init", "beta", "beta_schedule",
    "beta_min", "beta_max", "scenario", "estimator", "solver_tol", "rounds", "seed",
    "strict_increase",
}


def _parse_file(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: parse error: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: expected a mapping of config keys")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigurationError(f"{path}: unknown config keys {sorted(unknown)}")
    return raw


def _parse_scenario(value) -> Scenario:
    if isinstance(value, str):
        name = value.replace("-", "_")
        if name == "baseline":
            return Scenario.baseline()
        if name == "dynamic_nu":
            return Scenario.dynamic_nu()
        if name.startswith("discounted="):
            return Scenario.discounted(float(name.split("=", 1)[1]))
        raise ConfigurationError(f"unknown scenario {value!r}")
    if isinstance(value, dict) and list(value) == ["discounted"]:
        return Scenario.discounted(float(value["discounted"]))
    raise ConfigurationError(f"unknown scenario {value!r}")


def _parse_estimator(value, n: int) -> SmoothingSpec | LuenbergerSpec:
    if value == "smoothing" or value is None:
        return SmoothingSpec()
    if isinstance(value, str) and value.startswith("luenberger"):
        _, _, gain = value.partition("=")
        return LuenbergerSpec.from_scalar(float(gain) if gain else 0.0, n)
    if isinstance(value, dict) and list(value) == ["luenberger"]:
        gain = value["luenberger"]
        if isinstance(gain, (int, float)):
            return LuenbergerSpec.from_scalar(float(gain), n)
        return LuenbergerSpec(gain=tuple(float(g) for g in gain))
    raise ConfigurationError(f"unknown estimator {value!r}")


def _build_config(raw: dict, path: str = "<config>") -> GameConfig:
    for key in ("states", "coeffs", "prior", "nu", "signal"):
        if key not in raw:
            raise ConfigurationError(f"{path}: missing required key {key!r}")
    states = [str(s) for s in raw["states"]]
    coeffs = np.asarray(raw["coeffs"], dtype=float)
    if coeffs.ndim != 3:
        raise ConfigurationError(f"{path}: coeffs must be nested as [degree][state][link]")
    if "links" in raw and int(raw["links"]) != coeffs.shape[2]:
        raise ConfigurationError(
            f"{path}: links={raw['links']} but coeffs describe {coeffs.shape[2]} links")
    if "degree" in raw and int(raw["degree"]) != coeffs.shape[0] - 1:
        raise ConfigurationError(
            f"{path}: degree={raw['degree']} but coeffs describe degree {coeffs.shape[0] - 1}")
    latency = LatencyModel(states=tuple(states), coeffs=coeffs,
                           require_strict_increase=bool(raw.get("strict_increase", False)))

    nu = float(raw["nu"])
    pi = np.asarray(raw["signal"], dtype=float)
    if pi.shape != (latency.num_states, latency.n):
        raise ConfigurationError(
            f"{path}: signal shape {pi.shape} does not match ({latency.num_states}, {latency.n})")
    sums = pi.sum(axis=1)
    for w, total in enumerate(sums):
        if abs(total - nu) > 1e-12:
            raise ConfigurationError(
                f"{path}: signal row {states[w]} sums to {float(total)!r}, expected nu={nu!r}")
    signal = Signal(pi=pi, nu=nu)

    if "disobedience" in raw:
        disobedience = DisobedienceMatrix(np.asarray(raw["disobedience"], dtype=float))
    else:
        disobedience = DisobedienceMatrix.default(latency.n)

    if "beta_schedule" in raw:
        if "beta" in raw:
            raise ConfigurationError(f"{path}: give either beta or beta_schedule, not both")
        schedule = BetaSchedule.from_sequence(raw["beta_schedule"])
    else:
        schedule = BetaSchedule.constant(float(raw.get("beta", 0.5)))
    estimator = _parse_estimator(raw.get("estimator", "smoothing"), latency.n)
    if isinstance(estimator, SmoothingSpec):
        estimator = SmoothingSpec(schedule=schedule)

    return GameConfig(
        latency=latency,
        prior=Prior(np.asarray(raw["prior"], dtype=float)),
        signal=signal,
        disobedience=disobedience,
        m_max=float(raw["m_max"]) if "m_max" in raw else None,
        m_init=float(raw.get("m_init", 0.0)),
        theta_hat_init=float(raw.get("theta_hat_init", 0.0)),
        beta_min=float(raw.get("beta_min", 0.3)),
        beta_max=float(raw.get("beta_max", 0.7)),
        scenario=_parse_scenario(raw.get("scenario", "baseline")),
        estimator=estimator,
        solver_tol=float(raw.get("solver_tol", 1e-8)),
        rounds=int(raw.get("rounds", 5000)),
        seed=int(raw.get("seed", 0)),
        allow_small_m_max=bool(raw.get("allow_small_m_max", False)),
    )


def load_config(path) -> GameConfig:
    """Parse and fully validate a config file, applying documented defaults."""
    return _build_config(_parse_file(path), str(path))


def config_to_dict(config: GameConfig) -> dict:
    """Canonical resolved form: every field explicit, plain lists and scalars."""
    if config.scenario.kind == "discounted":
        scenario: object = {"discounted": config.scenario.discount}
    else:
        scenario = config.scenario.kind
    if isinstance(config.estimator, LuenbergerSpec):
        estimator: object = {"luenberger": list(config.estimator.gain)}
        beta_keys = {"beta": 0.5}
    else:
        estimator = "smoothing"
        schedule = config.estimator.schedule
        if schedule.values is not None:
            beta_keys = {"beta_schedule": list(schedule.values)}
        else:
            beta_keys = {"beta": schedule.value}
    return {
        "states": list(config.latency.states),
        "coeffs": config.latency.coeffs.tolist(),
        "prior": config.prior.mu0.tolist(),
        "nu": config.signal.nu,
        "signal": config.signal.pi.tolist(),
        "disobedience": config.disobedience.matrix.tolist(),
        "m_max": config.m_max,
        "allow_small_m_max": config.allow_small_m_max,
        "m_init": config.m_init,
        "theta_hat_init": config.theta_hat_init,
        **beta_keys,
        "beta_min": config.beta_min,
        "beta_max": config.beta_max,
        "scenario": scenario,
        "estimator": estimator,
        "solver_tol": config.solver_tol,
        "rounds": config.rounds,
        "seed": config.seed,
        "strict_increase": config.latency.require_strict_increase,
    }


def config_digest(config: GameConfig) -> str:
    """Platform-stable content hash of the resolved config."""
    text = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _out_dir(args) -> Path:
    env = os.environ.get(OUT_DIR_ENV)
    return Path(env) if env else Path(args.out)


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    if args.rounds is not None:
        config = replace(config, rounds=args.rounds)
    if args.scenario is not None:
        config = replace(config, scenario=_parse_scenario(args.scenario))
    if args.estimator is not None:
        estimator = _parse_estimator(args.estimator, config.latency.n)
        if isinstance(estimator, SmoothingSpec) and isinstance(config.estimator, SmoothingSpec):
            estimator = config.estimator
        config = replace(config, estimator=estimator)
    seeds = args.seed if args.seed else [config.seed]

    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved_path = out_dir / "resolved_config.yaml"
    with open(resolved_path, "w") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=False)

    runs = []
    for idx, seed in enumerate(seeds):
        run_config = replace(config, seed=seed)
        started = time.perf_counter()
        trajectory = simulate(run_config)
        csv_path = out_dir / f"run{idx:03d}_seed{seed}.csv"
        write_trajectory_csv(csv_path, trajectory, run_config,
                             with_envelope=args.emit_envelope)
        elapsed = time.perf_counter() - started
        runs.append({"seed": seed, "path": csv_path.name, "wall_clock_s": elapsed})
        print(f"seed {seed}: {csv_path} ({elapsed:.2f}s)")

    manifest = {
        "artifact_version": __version__,
        "config_digest": config_digest(config),
        "seeds": seeds,
        "resolved_config": resolved_path.name,
        "runs": runs,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"manifest: {out_dir / 'manifest.json'}")
    return 0


def cmd_check_obedience(args) -> int:
    config = load_config(args.config)
    report = check_obedience(config, tol=args.tol)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        verdict = "obedient" if report.obedient else "NOT obedient"
        print(f"signal is {verdict} (tol={report.tol:g})")
        print(f"worst obedience slack: {report.worst_obedience_slack!r}")
        print(f"worst fixed-deviation slack at the witness: {report.worst_nash_slack!r}")
        y = ", ".join(repr(float(v)) for v in report.y0.y)
        print(f"witness response y(0) = [{y}]  (vi margin {report.y0.vi_margin!r})")
    return 0 if report.obedient else 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routegame",
        description="Repeated routing game with partial route recommendations")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run seeded simulations and export trajectories")
    sim.add_argument("--config", required=True, help="path to the YAML config")
    sim.add_argument("--rounds", type=int, default=None, help="override the number of rounds")
    sim.add_argument("--seed", type=int, action="append", default=None,
                     help="seed to run (repeatable for sweeps)")
    sim.add_argument("--scenario", default=None,
                     help="baseline | discounted=LAMBDA | dynamic-nu")
    sim.add_argument("--estimator", default=None, help="smoothing | luenberger=GAIN")
    sim.add_argument("--out", default="runs",
                     help=f"output directory (env {OUT_DIR_ENV} overrides)")
    sim.add_argument("--emit-envelope", action="store_true",
                     help="append forecast-error envelope columns to the CSVs")
    sim.set_defaults(func=cmd_simulate)

    chk = sub.add_parser("check-obedience", help="test a signal's obedience condition")
    chk.add_argument("--config", required=True, help="path to the YAML config")
    chk.add_argument("--tol", type=float, default=1e-8, help="slack tolerance")
    chk.add_argument("--json", action="store_true", help="print the report as JSON")
    chk.set_defaults(func=cmd_check_obedience)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "rounds", None) is not None and args.rounds < 1:
        parser.error(f"--rounds must be >= 1, got {args.rounds}")
    try:
        return args.func(args)
    except (ConfigurationError, SolverError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
