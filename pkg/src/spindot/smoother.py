"""Occupation reconstruction from the count record.

Forward pass: starting from the stationary state, alternate the exact
one-bin propagator with the count back-action, yielding the conditioned
state rho(t) and the record log-likelihood.  Backward pass: propagate the
effect matrix E(t) from the identity at the final time through the adjoint
propagator and the adjoint count updates.  Combining both via the
two-outcome (empty / occupied) retrodiction formula gives the smoothed
occupation probability, which coincides with the filter at the final bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import (
    ModelParams,
    from_reduced_batch,
    reduced_propagators,
    steady_state,
    to_reduced,
)
from .sensor import CountRecord, LikelihoodUnderflowError, bin_log_weights

__all__ = [
    "FilterTimeline",
    "SmoothedTimeline",
    "filter_forward",
    "effect_backward",
    "pqs_occupation",
    "smooth",
]


@dataclass(frozen=True)
class FilterTimeline:
    """Conditioned state after each bin update.

    ``times[k]`` is the end of bin k; ``states[k]`` is the density matrix
    given all counts up to and including that bin, ``p_occ[k]`` its charge
    occupation and ``log_lik[k]`` the per-bin log-likelihood increment.
    """

    times: np.ndarray
    states: np.ndarray
    p_occ: np.ndarray
    log_lik: np.ndarray

    @property
    def total_log_likelihood(self) -> float:
        return float(self.log_lik.sum())


@dataclass(frozen=True)
class SmoothedTimeline:
    """Retrodicted occupation per bin together with the effect timeline.

    ``effects[k]`` is the (unit-trace) effect matrix at the boundary
    starting bin k; ``effects[n]`` is the identity terminal condition.
    ``p_pqs[k]`` pairs the filter state after bin k with ``effects[k+1]``.
    """

    times: np.ndarray
    p_filter: np.ndarray
    p_pqs: np.ndarray
    effects: np.ndarray

    def assigned_state(self, threshold: float = 0.5) -> np.ndarray:
        return (self.p_pqs > threshold).astype(np.int8)


def _check_record(record: CountRecord, params: ModelParams) -> None:
    if abs(record.bin_dt - params.bin_dt) > 1e-12 * max(record.bin_dt, 1.0):
        raise ValueError(
            f"record bin_dt {record.bin_dt} does not match params {params.bin_dt}")


def _reduced_pass_inputs(record, params):
    lw0, lw1 = bin_log_weights(record.counts, params)
    fwd, adj = reduced_propagators(params, params.bin_dt)
    return lw0, lw1, fwd, adj


def filter_forward(record: CountRecord, params: ModelParams,
                   initial_state: np.ndarray | None = None) -> FilterTimeline:
    """Run the conditioned forward filter over a count record.

    The filter starts from the stationary state unless an explicit
    ``initial_state`` is supplied (used by the classical-limit tests).
    Raises LikelihoodUnderflowError when a bin's likelihood underflows,
    which signals grossly inconsistent parameters.
    """
    _check_record(record, params)
    lw0, lw1, fwd, _ = _reduced_pass_inputs(record, params)
    rho0 = steady_state(params) if initial_state is None else initial_state
    states5, loglik, status = _kernels.filter_pass(fwd, lw0, lw1, to_reduced(rho0))
    if status >= 0:
        raise LikelihoodUnderflowError(
            f"filter likelihood underflow at bin {status} "
            f"(count {record.counts[status]}); parameters grossly inconsistent?")
    states = from_reduced_batch(states5)
    p_occ = states5[:, 1] + states5[:, 2]
    return FilterTimeline(times=record.times, states=states, p_occ=p_occ,
                          log_lik=loglik)


def effect_backward(record: CountRecord, params: ModelParams) -> np.ndarray:
    """Backward effect matrices at every bin boundary.

    Entry [n] is the identity terminal condition; entry [k] accounts for
    all counts from bin k onward and is renormalized to unit trace.
    Returned as an (n_bins + 1, 3, 3) complex array.
    """
    _check_record(record, params)
    lw0, lw1, _, adj = _reduced_pass_inputs(record, params)
    effects5, status = _kernels.effect_pass(adj, lw0, lw1)
    if status >= 0:
        raise LikelihoodUnderflowError(
            f"effect propagation underflow at bin {status}")
    return from_reduced_batch(effects5)


def pqs_occupation(rho: np.ndarray, E: np.ndarray) -> float:
    """Retrodicted probability that the dot is occupied.

    Evaluates the two-outcome retrodiction formula with the coarse
    projectors on the empty and charged subspaces; with E = identity it
    reduces to the Born-rule occupation rho_dndn + rho_upup.  Invariant
    under rescaling of E by any positive factor.
    """
    occ = (rho[1, 1] * E[1, 1] + rho[2, 2] * E[2, 2]
           + rho[1, 2] * E[2, 1] + rho[2, 1] * E[1, 2]).real
    emp = (rho[0, 0] * E[0, 0]).real
    denom = occ + emp
    if denom < 1e-300:
        raise ValueError("degenerate retrodiction denominator; "
                         "inconsistent state / effect pair")
    return occ / denom


def smooth(record: CountRecord, params: ModelParams,
           initial_state: np.ndarray | None = None) -> SmoothedTimeline:
    """Full forward-backward reconstruction of the occupation timeline."""
    _check_record(record, params)
    lw0, lw1, fwd, adj = _reduced_pass_inputs(record, params)
    rho0 = steady_state(params) if initial_state is None else initial_state
    states5, _, status = _kernels.filter_pass(fwd, lw0, lw1, to_reduced(rho0))
    if status >= 0:
        raise LikelihoodUnderflowError(
            f"filter likelihood underflow at bin {status}")
    effects5, status = _kernels.effect_pass(adj, lw0, lw1)
    if status >= 0:
        raise LikelihoodUnderflowError(
            f"effect propagation underflow at bin {status}")
    p_pqs = _kernels.pqs_combine(states5, effects5)
    p_filter = states5[:, 1] + states5[:, 2]
    effects = from_reduced_batch(effects5)
    return SmoothedTimeline(times=record.times, p_filter=p_filter,
                            p_pqs=p_pqs, effects=effects)
