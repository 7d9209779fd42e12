"""Leaky integrate-and-fire reference dynamics.

The continuous membrane equation

    tau_mem * dU/dt = -U + I        (R = 1, U_rest = 0)

is solved exactly for piecewise-constant input by exponential integration,
and approximated in discrete time by

    U[n] = beta * U[n-1] + (1 - beta) * I[n],   beta = exp(-dt / tau_mem)

where I[n] is the input at the *new* step. The exact solver is the oracle
that pins the discrete step's first-order convergence; the network cell in
net.py reuses the same recurrence with reset terms added.

Convention: solvers return U of length len(input) + 1 with U[0] = u0 and
U[n] = U(n * dt); input[n-1] is the current held on ((n-1)*dt, n*dt].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass
class LifConfig:
    """Membrane time constant and step size, both in seconds."""

    tau_mem: float
    dt: float

    def __post_init__(self):
        if self.tau_mem <= 0:
            raise ParameterError(f"tau_mem must be positive, got {self.tau_mem}")
        if self.dt <= 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")


@dataclass
class CellState:
    """Membrane potentials and input currents of one layer at one step."""

    U: np.ndarray
    I: np.ndarray


def beta_from_tau(tau_mem: float, dt: float) -> float:
    """Decay factor exp(-dt / tau_mem) of the discrete recurrence."""
    if tau_mem <= 0:
        raise ParameterError(f"tau_mem must be positive, got {tau_mem}")
    if dt < 0:
        raise ParameterError(f"dt must be non-negative, got {dt}")
    return float(np.exp(-dt / tau_mem))


def lif_exact_solve(input_current: np.ndarray, cfg: LifConfig, u0: float = 0.0) -> np.ndarray:
    """Closed-form membrane trajectory for piecewise-constant input.

    Each sub-interval is integrated exactly:
    U(t+h) = e^(-h/tau) U(t) + (1 - e^(-h/tau)) * i, so the only error in
    using this as a reference is the zero-order hold of the input itself.
    Run it on a fine grid to approximate a smooth current.
    """
    i = np.asarray(input_current, dtype=np.float64)
    if i.ndim != 1:
        raise ParameterError(f"input_current must be 1-D, got shape {i.shape}")
    decay = np.exp(-cfg.dt / cfg.tau_mem)
    u = np.empty(i.size + 1, dtype=np.float64)
    u[0] = u0
    for n in range(i.size):
        u[n + 1] = decay * u[n] + (1.0 - decay) * i[n]
    return u


def lif_discrete_step(state: CellState, input_current: np.ndarray, beta: float) -> CellState:
    """One step of U <- beta * U + (1 - beta) * I (resets belong to the caller)."""
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"beta must lie in [0, 1], got {beta}")
    inp = np.asarray(input_current, dtype=np.float64)
    u = beta * np.asarray(state.U, dtype=np.float64) + (1.0 - beta) * inp
    return CellState(U=u, I=inp)


def lif_discrete_solve(input_current: np.ndarray, cfg: LifConfig, u0: float = 0.0) -> np.ndarray:
    """Run the discrete recurrence over a whole input sequence.

    Same alignment as lif_exact_solve so the two can be compared index by
    index when the exact solver runs on a refinement of the same grid.
    """
    i = np.asarray(input_current, dtype=np.float64)
    if i.ndim != 1:
        raise ParameterError(f"input_current must be 1-D, got shape {i.shape}")
    beta = beta_from_tau(cfg.tau_mem, cfg.dt)
    u = np.empty(i.size + 1, dtype=np.float64)
    u[0] = u0
    state = CellState(U=np.array(u0, dtype=np.float64), I=np.array(0.0))
    for n in range(i.size):
        state = lif_discrete_step(state, i[n], beta)
        u[n + 1] = state.U
    return u
