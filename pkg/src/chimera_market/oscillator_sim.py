"""Identical-frequency Kuramoto-Sakaguchi oscillators driven by a coupling matrix.

    d theta_i / dt = omega - (1/N) sum_j C_ij sin(theta_i - theta_j + alpha)

integrated with explicit Euler. The coupling sum is evaluated through

    sum_j C_ij sin(theta_i - theta_j + alpha)
        = sin(theta_i + alpha) (C cos theta)_i - cos(theta_i + alpha) (C sin theta)_i

so one step costs two matrix-vector products instead of N^2 sines. Several
windows can be integrated at once by stacking along a leading batch axis;
each window's result does not depend on which other windows share its batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import DataError, NumericalError
from .market_data import CouplingMatrix

TWO_PI = 2.0 * np.pi
DEFAULT_ALPHA = np.pi / 2 - 0.10


@dataclass(frozen=True)
class SimParams:
    omega: float = 0.0
    alpha: float = DEFAULT_ALPHA
    dt: float = 0.02
    transient_steps: int = 10_000
    measure_steps: int = 1_000
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise DataError(f"dt must be positive, got {self.dt}")
        if self.transient_steps < 0:
            raise DataError("transient_steps must be >= 0")
        if self.measure_steps < 2:
            raise DataError("measure_steps must be >= 2")


@dataclass(frozen=True)
class PhaseState:
    phases: np.ndarray  # unwrapped, radians
    time: float = 0.0


@dataclass(frozen=True)
class SimulationSummary:
    mean_velocity: np.ndarray
    velocity_std: np.ndarray
    final_phases: np.ndarray  # wrapped to [0, 2 pi)
    window_index: int = 0


def window_seed(master_seed: int, window_index: int) -> np.random.SeedSequence:
    """Independent, reproducible seed material for one window."""
    return np.random.SeedSequence([int(master_seed), int(window_index)])


def initial_phases(n: int, seed) -> PhaseState:
    if n < 1:
        raise DataError("need at least one oscillator")
    rng = np.random.default_rng(seed)
    return PhaseState(phases=rng.uniform(0.0, TWO_PI, size=n), time=0.0)


def _coupling_values(coupling) -> np.ndarray:
    values = coupling.values if isinstance(coupling, CouplingMatrix) else coupling
    return np.asarray(values, dtype=np.float64)


def _velocity(theta, C, omega, sin_a, cos_a):
    """Right-hand side for phases of shape (..., N) and couplings (..., N, N)."""
    s = np.sin(theta)
    c = np.cos(theta)
    proj = np.matmul(C, np.stack([c, s], axis=-1))
    sin_shift = s * cos_a + c * sin_a
    cos_shift = c * cos_a - s * sin_a
    n = theta.shape[-1]
    return omega - (sin_shift * proj[..., 0] - cos_shift * proj[..., 1]) / n


def phase_velocity(state: PhaseState, coupling, params: SimParams = SimParams()) -> np.ndarray:
    theta = np.asarray(state.phases, dtype=np.float64)
    C = _coupling_values(coupling)
    if C.shape != (theta.shape[-1], theta.shape[-1]):
        raise DataError(f"coupling shape {C.shape} does not match {theta.shape[-1]} oscillators")
    return _velocity(theta, C, params.omega, np.sin(params.alpha), np.cos(params.alpha))


def step(state: PhaseState, coupling, params: SimParams = SimParams()) -> PhaseState:
    v = phase_velocity(state, coupling, params)
    return PhaseState(phases=state.phases + params.dt * v, time=state.time + params.dt)


def _check_finite(theta, window_indices):
    bad = ~np.all(np.isfinite(theta), axis=-1)
    if np.any(bad):
        which = [int(window_indices[i]) for i in np.nonzero(bad)[0]]
        raise NumericalError(f"non-finite phase in windows {which}; dt is likely too large")


def simulate_batch(
    couplings: Sequence[CouplingMatrix],
    params: SimParams = SimParams(),
    initial: np.ndarray | None = None,
    check_every: int = 1000,
) -> list[SimulationSummary]:
    """Integrate several windows side by side.

    Each window starts from ``initial_phases(N, window_seed(params.seed,
    window_index))`` unless ``initial`` (shape (W, N)) is given. After
    ``transient_steps`` discarded steps, the instantaneous velocity is sampled
    once per step for ``measure_steps`` steps; mean and population std of
    those samples give the per-oscillator summary.
    """
    if not couplings:
        return []
    C = np.stack([_coupling_values(c) for c in couplings])
    n = C.shape[-1]
    if C.shape[1:] != (n, n):
        raise DataError("coupling matrices must be square and of equal size")
    indices = [getattr(c, "window_index", i) for i, c in enumerate(couplings)]
    if initial is None:
        theta = np.stack([initial_phases(n, window_seed(params.seed, w)).phases for w in indices])
    else:
        theta = np.array(initial, dtype=np.float64, copy=True).reshape(len(couplings), n)

    omega, dt = params.omega, params.dt
    sin_a, cos_a = np.sin(params.alpha), np.cos(params.alpha)

    # blow-ups surface as non-finite phases and are reported explicitly
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(params.transient_steps):
            theta = theta + dt * _velocity(theta, C, omega, sin_a, cos_a)
            if check_every and (k + 1) % check_every == 0:
                _check_finite(theta, indices)

        # Welford accumulation of velocity samples
        mean = np.zeros_like(theta)
        m2 = np.zeros_like(theta)
        for k in range(params.measure_steps):
            v = _velocity(theta, C, omega, sin_a, cos_a)
            delta = v - mean
            mean = mean + delta / (k + 1)
            m2 = m2 + delta * (v - mean)
            theta = theta + dt * v
        _check_finite(theta, indices)
        if not np.all(np.isfinite(mean)):
            raise NumericalError("non-finite velocity statistics; dt is likely too large")

    std = np.sqrt(np.maximum(m2 / params.measure_steps, 0.0))
    final = np.mod(theta, TWO_PI)
    final[final >= TWO_PI] = 0.0
    return [
        SimulationSummary(mean_velocity=mean[b], velocity_std=std[b], final_phases=final[b], window_index=w)
        for b, w in enumerate(indices)
    ]


def simulate(coupling, params: SimParams = SimParams(), initial: np.ndarray | None = None) -> SimulationSummary:
    if not isinstance(coupling, CouplingMatrix):
        coupling = CouplingMatrix(values=_coupling_values(coupling), window_index=0)
    init = None if initial is None else np.asarray(initial, dtype=np.float64)[None, :]
    return simulate_batch([coupling], params, initial=init)[0]


# ---------------------------------------------------------------------------
# Summary files


def write_summary(summary: SimulationSummary, tickers: Sequence[str], path) -> None:
    frame = pd.DataFrame(
        {
            "ticker": list(tickers),
            "mean_velocity": summary.mean_velocity,
            "velocity_std": summary.velocity_std,
            "final_phase": summary.final_phases,
        }
    )
    frame.to_csv(path, index=False, float_format="%.17g")


def read_summary(path, window_index: int) -> tuple[list[str], SimulationSummary]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing simulation summary: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    return list(frame["ticker"].astype(str)), SimulationSummary(
        mean_velocity=frame["mean_velocity"].to_numpy(),
        velocity_std=frame["velocity_std"].to_numpy(),
        final_phases=frame["final_phase"].to_numpy(),
        window_index=window_index,
    )
