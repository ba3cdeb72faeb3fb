"""Ground-truth stochastic quantum trajectories.

Between tunneling events the conditioned state follows the deterministic
no-jump evolution; charge-in and charge-out jumps are sampled at first
order in the fine step and project the state onto |down> / |0> exactly.
The simulated record is the hidden truth that the QPC sensor observes and
the inference modules try to recover.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.linalg import expm

from . import _kernels
from .model import (
    Basis,
    KET_DOWN,
    KET_EMPTY,
    ModelParams,
    build_hamiltonian,
)

__all__ = [
    "JumpKind",
    "JumpEvent",
    "TrajectoryRecord",
    "step_no_jump",
    "apply_jump",
    "no_jump_step_operator",
    "simulate_trajectory",
]


class JumpKind(IntEnum):
    CHARGE_IN = 0   # dot charges, state -> |down><down|
    CHARGE_OUT = 1  # dot empties, state -> |0><0|


@dataclass(frozen=True)
class JumpEvent:
    time: float
    kind: JumpKind


@dataclass(frozen=True)
class TrajectoryRecord:
    """One simulated realization of the dot dynamics.

    ``p_up`` and ``n`` are sampled on the fine grid t_i = i * dt_sim,
    i = 0 .. n_steps; ``n[i]`` is the charge occupancy holding on
    [t_i, t_{i+1}) (final entry: occupancy at the end time).
    """

    params: ModelParams
    seed: int
    duration: float
    events: tuple[JumpEvent, ...]
    p_up: np.ndarray
    n: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.p_up.shape[0]) * self.params.dt_sim

    def occupancy_per_bin(self) -> np.ndarray:
        """Fraction of each measurement bin spent occupied."""
        spb = self.params.steps_per_bin
        n_sub = self.n[:-1]
        n_bins = n_sub.shape[0] // spb
        return n_sub[: n_bins * spb].reshape(n_bins, spb).mean(axis=1)


def no_jump_step_operator(params: ModelParams, dt: float) -> np.ndarray:
    """Exact single-step no-jump operator exp(-i*H_eff*dt) on state vectors.

    H_eff = H - (i/2)(gamma_down*|0><0| + gamma_up*|up><up|); conjugating a
    pure state with this operator reproduces the no-jump master equation
    term exactly over the step.
    """
    H_eff = build_hamiltonian(params.omega).astype(complex)
    H_eff[Basis.EMPTY, Basis.EMPTY] += -0.5j * params.gamma_down
    H_eff[Basis.UP, Basis.UP] += -0.5j * params.gamma_up
    return expm(-1j * H_eff * dt)


def step_no_jump(rho: np.ndarray, params: ModelParams,
                 dt_sim: float | None = None) -> tuple[np.ndarray, dict]:
    """One deterministic no-jump step, renormalized.

    Returns the evolved state together with the first-order jump
    probabilities computed from the *input* state:
    p_in = rho_00 * gamma_down * dt and p_out = rho_upup * gamma_up * dt.
    """
    dt = params.dt_sim if dt_sim is None else dt_sim
    p_in = rho[0, 0].real * params.gamma_down * dt
    p_out = rho[2, 2].real * params.gamma_up * dt
    K = no_jump_step_operator(params, dt)
    out = K @ rho @ K.conj().T
    out = out / np.trace(out).real
    return out, {"p_in": p_in, "p_out": p_out}


def apply_jump(kind: JumpKind) -> np.ndarray:
    """Post-jump state; independent of the pre-jump state."""
    if kind == JumpKind.CHARGE_IN:
        return np.outer(KET_DOWN, KET_DOWN.conj())
    if kind == JumpKind.CHARGE_OUT:
        return np.outer(KET_EMPTY, KET_EMPTY.conj())
    raise ValueError(f"unknown jump kind {kind!r}")


def simulate_trajectory(params: ModelParams, duration: float,
                        seed: int) -> TrajectoryRecord:
    """Simulate one trajectory of the given duration, starting empty.

    One uniform draw per fine step decides between no jump and the two
    jump channels (selected proportionally to their probabilities); the
    record is bit-reproducible for a given seed.
    """
    n_steps = int(round(duration / params.dt_sim))
    if abs(n_steps * params.dt_sim - duration) > 1e-9 * max(duration, 1.0):
        raise ValueError("duration must be an integer multiple of dt_sim")
    rng = np.random.default_rng(seed)
    uniforms = rng.random(n_steps)
    K = no_jump_step_operator(params, params.dt_sim)
    p_up, n_grid, ev_time, ev_kind = _kernels.run_trajectory(
        K, params.gamma_down * params.dt_sim, params.gamma_up * params.dt_sim,
        uniforms, params.dt_sim)
    events = tuple(JumpEvent(time=float(t), kind=JumpKind(int(k)))
                   for t, k in zip(ev_time, ev_kind))
    return TrajectoryRecord(params=params, seed=seed, duration=duration,
                            events=events, p_up=p_up, n=n_grid)
