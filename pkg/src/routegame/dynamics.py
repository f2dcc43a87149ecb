"""The repeated game loop: state sampling, regret aggregation, flows, logging.

Each round samples a network state, realizes participating flows from the
current disobedience fraction, lets the non-participating mass best-respond to
its forecast, scores the recommendations against the realized latencies, and
folds that score into the aggregate regret that drives the next round.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np

from .equilibrium import solve_bwe
from .errors import ConfigurationError, SolverError, UnidentifiableError
from .estimators import (LuenbergerState, SmoothingSpec, SmoothingState, envelope_series,
                         luenberger_forecast, luenberger_update, smoothing_update)
from .model import GameConfig, Scenario, Signal, eval_latency, forecast_flows, p_flows

logger = logging.getLogger(__name__)

_COEFF_TOL = 1e-12  # below this, flows carry no disobedience information


@dataclass
class SimulationState:
    """Mutable per-run state; round k + 1 is fully determined by round k.

    The generator object is advanced in place, so a state consumed by
    :func:`step` must not be reused.
    """

    k: int
    m: float
    theta_hat: float
    estimator_state: SmoothingState | LuenbergerState
    nu_current: float
    rng: np.random.Generator
    y_warm: np.ndarray | None = None


@dataclass(frozen=True)
class TrajectoryRecord:
    """Everything observable about one round."""

    k: int
    omega: int
    theta: float
    theta_hat: float
    x: np.ndarray
    x_hat: np.ndarray
    y: np.ndarray
    ell: np.ndarray
    u: float
    m_next: float
    e_theta: float
    flow_gap: float


def instantaneous_regret(signal: Signal, disobedience, ell: np.ndarray, omega: int) -> float:
    """Aggregate payoff difference of the recommendations against fixed deviations."""
    ell = np.asarray(ell, dtype=float)
    if not np.all(np.isfinite(ell)):
        raise ConfigurationError("latencies must be finite")
    pi_w = signal.pi[omega]
    return float(pi_w @ ell - pi_w @ (disobedience.matrix @ ell))


def regret_update(m: float, u: float, k: int, scenario: Scenario) -> float:
    """Fold round-k payoff difference into the aggregate regret."""
    if k < 1:
        raise ConfigurationError(f"round index must be >= 1, got {k}")
    if scenario.kind == "discounted":
        lam = scenario.discount
        return lam * m + (1.0 - lam) * u
    return (k * m + u) / (k + 1.0)


def theta_of_m(m: float, m_max: float) -> float:
    """Disobeying fraction implied by the aggregate regret; clamp is a safety net."""
    if m_max <= 0:
        raise ConfigurationError(f"m_max must be positive, got {m_max}")
    return min(max(m, 0.0) / m_max, 1.0)


def recover_theta(config: GameConfig, observed_total_flows: np.ndarray, omega: int,
                  y_known: np.ndarray) -> float:
    """Invert the flow map: infer the disobedience fraction from total link flows.

    Least squares on the links whose flows respond to theta; raises when no
    link does (e.g. a uniform signal with uniform rerouting).
    """
    if not config.latency.is_strictly_increasing:
        raise ConfigurationError("theta recovery requires strictly increasing latencies")
    f = np.asarray(observed_total_flows, dtype=float)
    x = f - np.asarray(y_known, dtype=float)
    pi_w = config.signal.pi[omega]
    coeff = config.disobedience.matrix.T @ pi_w - pi_w
    scale = float(np.abs(coeff).max())
    if scale <= _COEFF_TOL:
        raise UnidentifiableError(
            f"state {omega}: rerouting leaves the recommendation flows unchanged")
    return float(coeff @ (x - pi_w) / (coeff @ coeff))


def initial_state(config: GameConfig) -> SimulationState:
    if isinstance(config.estimator, SmoothingSpec):
        est: SmoothingState | LuenbergerState = SmoothingState(
            theta_hat=config.theta_hat_init, schedule=config.estimator.schedule)
    else:
        # The observer tracks the regret itself; seed it at the value whose
        # implied fraction matches the configured initial forecast.
        est = LuenbergerState(m_hat=config.theta_hat_init * config.m_max,
                              gain=config.estimator.gain, k=1)
    return SimulationState(
        k=1,
        m=config.m_init,
        theta_hat=config.theta_hat_init,
        estimator_state=est,
        nu_current=config.signal.nu,
        rng=np.random.Generator(np.random.PCG64(config.seed)),
    )


def _sample_state(rng: np.random.Generator, mu0: np.ndarray) -> int:
    """Inverse-CDF draw with the states' listed order as the cumulative order."""
    idx = int(np.searchsorted(np.cumsum(mu0), rng.random(), side="right"))
    return min(idx, mu0.size - 1)  # cumsum can round a hair below 1


def step(config: GameConfig, state: SimulationState) -> tuple[SimulationState, TrajectoryRecord]:
    """Advance the game by one round."""
    k = state.k
    omega = _sample_state(state.rng, config.prior.mu0)
    theta = theta_of_m(state.m, config.m_max)

    if state.nu_current != config.signal.nu:
        eff_signal = config.signal.with_mass(state.nu_current)
        eff_config = replace(config, signal=eff_signal)
    else:
        eff_signal = config.signal
        eff_config = config

    x = p_flows(eff_signal, config.disobedience, theta, omega)
    x_hat = forecast_flows(eff_signal, config.disobedience, state.theta_hat, omega)
    try:
        response = solve_bwe(eff_config, state.theta_hat,
                             mass=1.0 - config.signal.nu, start=state.y_warm)
    except SolverError as exc:
        raise SolverError(f"round {k}: {exc}", last_iterate=exc.last_iterate,
                          vi_margin=exc.vi_margin, iterations=exc.iterations) from exc
    y = response.y
    ell = eval_latency(config.latency, omega, x + y)
    u = instantaneous_regret(eff_signal, config.disobedience, ell, omega)
    m_next = regret_update(state.m, u, k, config.scenario)
    if abs(m_next) > config.m_max:
        logger.warning("round %d: regret %s clamped to [-%s, %s]", k, m_next,
                       config.m_max, config.m_max)
        m_next = min(max(m_next, -config.m_max), config.m_max)

    if isinstance(state.estimator_state, SmoothingState):
        est_next = smoothing_update(state.estimator_state, theta, k)
        theta_hat_next = est_next.theta_hat
    else:
        ell_pred = eval_latency(config.latency, omega, x_hat + y)
        est_next = luenberger_update(state.estimator_state, u, ell, ell_pred)
        theta_hat_next = luenberger_forecast(est_next, config.m_max)

    nu_next = theta if config.scenario.kind == "dynamic_nu" else state.nu_current

    record = TrajectoryRecord(
        k=k,
        omega=omega,
        theta=theta,
        theta_hat=state.theta_hat,
        x=x,
        x_hat=x_hat,
        y=y,
        ell=ell,
        u=u,
        m_next=m_next,
        e_theta=theta - state.theta_hat,
        flow_gap=float(np.abs(x - eff_signal.pi[omega]).max()),
    )
    next_state = SimulationState(
        k=k + 1,
        m=m_next,
        theta_hat=theta_hat_next,
        estimator_state=est_next,
        nu_current=nu_next,
        rng=state.rng,
        y_warm=y,
    )
    return next_state, record


def simulate(config: GameConfig) -> list[TrajectoryRecord]:
    """Run the configured number of rounds; bit-reproducible for a fixed seed."""
    state = initial_state(config)
    records: list[TrajectoryRecord] = []
    for _ in range(config.rounds):
        state, record = step(config, state)
        records.append(record)
    return records


def calibration_score(trajectory: list[TrajectoryRecord]) -> np.ndarray:
    """Time-averaged absolute gap between realized and forecast participating flows."""
    if not trajectory:
        raise ConfigurationError("calibration score needs a nonempty trajectory")
    return np.mean([np.abs(r.x - r.x_hat) for r in trajectory], axis=0)


def trajectory_columns(n: int, with_envelope: bool = False) -> list[str]:
    cols = ["k", "omega", "theta", "theta_hat", "e_theta", "u", "m"]
    for prefix in ("x", "xhat", "y", "ell"):
        cols += [f"{prefix}_{i + 1}" for i in range(n)]
    cols.append("flow_gap")
    if with_envelope:
        cols += ["e_lower", "e_upper"]
    return cols


def write_trajectory_csv(path, trajectory: list[TrajectoryRecord], config: GameConfig,
                         with_envelope: bool = False) -> None:
    """One row per round, floats at 17 significant digits.

    Envelope columns require the smoothing estimator; the bracket is rebuilt
    from the first round's forecast error and the configured weight schedule.
    """
    if not trajectory:
        raise ConfigurationError("cannot export an empty trajectory")
    n = config.latency.n
    lower = upper = None
    if with_envelope:
        if not isinstance(config.estimator, SmoothingSpec):
            raise ConfigurationError("envelope columns are defined for the smoothing estimator only")
        lower, upper = envelope_series(len(trajectory), trajectory[0].e_theta,
                                       config.beta_min, config.estimator.schedule)

    def fmt(v: float) -> str:
        return format(float(v), ".17g")

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(trajectory_columns(n, with_envelope))
        for idx, r in enumerate(trajectory):
            row = [str(r.k), config.latency.states[r.omega], fmt(r.theta), fmt(r.theta_hat),
                   fmt(r.e_theta), fmt(r.u), fmt(r.m_next)]
            for vec in (r.x, r.x_hat, r.y, r.ell):
                row += [fmt(v) for v in vec]
            row.append(fmt(r.flow_gap))
            if with_envelope:
                row += [fmt(lower[idx]), fmt(upper[idx])]
            writer.writerow(row)
