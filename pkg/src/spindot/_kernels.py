"""Numba-compiled inner loops.

The sequential per-step / per-bin recursions dominate the runtime of every
pipeline, so they are compiled with numba.  All kernels operate on the
reduced real state representation defined in :mod:`spindot.model` (or, for
trajectories, on pure state vectors) and are checked against the full 9x9
superoperator path by the test suite.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def run_trajectory(K, gin_dt, gout_dt, uniforms, dt_sim):
    """Single stochastic trajectory on the fine time grid.

    K is the exact no-jump step operator exp(-i*H_eff*dt) acting on pure
    states; jump probabilities use the first-order expressions
    p_in = |psi_0|^2 * gamma_down * dt and p_out = |psi_up|^2 * gamma_up * dt
    evaluated on the normalized pre-step state.  A jump replaces the state
    with |down> (charge in) or |0> (charge out) and is recorded at the end
    of the step in which it fired.

    Returns (p_up grid values, occupancy grid values, event times,
    event kinds) with kinds 0 = charge-in, 1 = charge-out.
    """
    n_steps = uniforms.shape[0]
    p_up = np.empty(n_steps + 1)
    n_grid = np.empty(n_steps + 1, np.int8)
    ev_time = np.empty(n_steps)
    ev_kind = np.empty(n_steps, np.int8)
    n_events = 0

    psi = np.zeros(3, np.complex128)
    psi[0] = 1.0  # dot starts empty
    occupied = 0

    p_up[0] = 0.0
    n_grid[0] = 0
    for i in range(n_steps):
        p0 = psi[0].real * psi[0].real + psi[0].imag * psi[0].imag
        pu = psi[2].real * psi[2].real + psi[2].imag * psi[2].imag
        p_in = p0 * gin_dt
        p_out = pu * gout_dt
        u = uniforms[i]
        if u < p_in + p_out:
            psi = np.zeros(3, np.complex128)
            if u < p_in:
                psi[1] = 1.0
                occupied = 1
                ev_kind[n_events] = 0
            else:
                psi[0] = 1.0
                occupied = 0
                ev_kind[n_events] = 1
            ev_time[n_events] = (i + 1) * dt_sim
            n_events += 1
        else:
            psi = K @ psi
            nrm = math.sqrt(psi[0].real ** 2 + psi[0].imag ** 2
                            + psi[1].real ** 2 + psi[1].imag ** 2
                            + psi[2].real ** 2 + psi[2].imag ** 2)
            psi = psi / nrm
        p_up[i + 1] = psi[2].real * psi[2].real + psi[2].imag * psi[2].imag
        n_grid[i + 1] = occupied
    return p_up, n_grid, ev_time[:n_events].copy(), ev_kind[:n_events].copy()


@njit(cache=True)
def filter_pass(prop5, lw0, lw1, v_init):
    """Forward conditioned pass over one count record.

    Per bin: propagate the reduced state by the 5x5 real map ``prop5``,
    then reweight by the count likelihoods exp(lw0[k]) / exp(lw1[k]) for
    the empty / occupied components and renormalize.

    Returns (states after update (n,5), per-bin log-likelihood increments,
    status) where status is the index of the first bin whose likelihood
    underflowed, or -1 on success.
    """
    n = lw0.shape[0]
    states = np.empty((n, 5))
    loglik = np.empty(n)
    v = v_init.copy()
    for k in range(n):
        v = prop5 @ v
        a = lw0[k]
        b = lw1[k]
        m = a if a > b else b
        w0 = math.exp(a - m)
        w1 = math.exp(b - m)
        lik = v[0] * w0 + (v[1] + v[2]) * w1
        if not (lik > 1e-300):
            return states, loglik, k
        inv = 1.0 / lik
        v[0] *= w0 * inv
        v[1] *= w1 * inv
        v[2] *= w1 * inv
        v[3] *= w1 * inv
        v[4] *= w1 * inv
        states[k] = v
        loglik[k] = math.log(lik) + m
    return states, loglik, -1


@njit(cache=True)
def effect_pass(prop5_adj, lw0, lw1):
    """Backward effect-matrix pass over one count record.

    Starting from the identity at the final time, each bin applies the
    measurement update (reweight empty/occupied components) followed by
    the adjoint propagator, then renormalizes to unit trace.

    Returns (effects (n+1,5) indexed by bin boundary, status); entry [n]
    is the identity.  Status as in :func:`filter_pass`.
    """
    n = lw0.shape[0]
    effects = np.empty((n + 1, 5))
    e = np.zeros(5)
    e[0] = e[1] = e[2] = 1.0  # identity
    effects[n] = e
    for k in range(n - 1, -1, -1):
        a = lw0[k]
        b = lw1[k]
        m = a if a > b else b
        w0 = math.exp(a - m)
        w1 = math.exp(b - m)
        upd = np.empty(5)
        upd[0] = e[0] * w0
        upd[1] = e[1] * w1
        upd[2] = e[2] * w1
        upd[3] = e[3] * w1
        upd[4] = e[4] * w1
        e = prop5_adj @ upd
        tr = e[0] + e[1] + e[2]
        if not (tr > 1e-300):
            return effects, k
        e = e / tr
        effects[k] = e
    return effects, -1


@njit(cache=True)
def pqs_combine(states, effects):
    """Two-outcome retrodicted occupation per bin.

    Pairs the post-update filter state of bin k with the effect at the
    next bin boundary; the final bin therefore reproduces the filter
    probability exactly.
    """
    n = states.shape[0]
    p = np.empty(n)
    for k in range(n):
        r = states[k]
        e = effects[k + 1]
        occ = r[1] * e[1] + r[2] * e[2] + 2.0 * (r[3] * e[3] + r[4] * e[4])
        emp = r[0] * e[0]
        p[k] = occ / (occ + emp)
    return p
