"""Parameter estimation from the count record.

Four estimators are provided: the analytic occupied-dwell-time density
and its maximum-likelihood fit, an exponential fit of the empty intervals,
a Bayesian grid likelihood for the Rabi frequency, and a rate
re-estimation scheme that generalizes Baum-Welch to the coexisting
coherent dynamics by evaluating smoothed two-time joint occupation
probabilities through the master-equation propagator.  A hybrid loop
alternates the Bayesian and re-estimation steps until all three
parameters are consistent with the data.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .model import (
    Basis,
    ModelParams,
    Propagator,
    from_reduced_batch,
    make_propagator,
    reduced_propagators,
    steady_state,
    to_reduced,
)
from .sensor import CountRecord, LikelihoodUnderflowError, bin_log_weights
from .smoother import SmoothedTimeline

__all__ = [
    "DwellHistogram",
    "LikelihoodGrid",
    "RateEstimate",
    "HybridResult",
    "FitError",
    "dwell_pdf",
    "extract_dwells",
    "extract_dwells_from_series",
    "fit_dwell_histogram",
    "fit_empty_rate",
    "bayes_omega",
    "posterior_stats",
    "transition_table",
    "bw_joint",
    "bw_reestimate",
    "reestimate_rates",
    "hybrid_estimate",
]


class FitError(ValueError):
    """Raised when an estimator cannot produce a meaningful answer."""


# ---------------------------------------------------------------------------
# Dwell-time distribution


def dwell_pdf(t, omega: float, gamma_up: float, gamma_down: float):
    """Analytic density of occupied dwell times.

    w(t) = -(2 omega^2 gamma_up / kappa^2) exp(-t gamma_down / 2)
           (cos(t kappa / 2) - 1),   kappa = sqrt(4 omega^2 - gamma_up^2).

    Valid in the underdamped regime 2*omega > max(gamma_up, gamma_down);
    self-normalized when the two tunneling rates are equal.  The electron
    enters spin-down and leaves spin-up, so the zeros at even multiples of
    2*pi/kappa reflect the Rabi precession.
    """
    if 2 * omega <= gamma_up or 2 * omega <= gamma_down:
        raise ValueError("overdamped regime (2*omega <= gamma) unsupported")
    kappa = np.sqrt(4 * omega**2 - gamma_up**2)
    t = np.asarray(t, dtype=float)
    return (-(2 * omega**2 * gamma_up / kappa**2)
            * np.exp(-t * gamma_down / 2) * (np.cos(t * kappa / 2) - 1.0))


@dataclass(frozen=True)
class DwellHistogram:
    """Interval durations extracted from a smoothed timeline.

    Both interval families exclude runs truncated by the record
    boundaries.  ``bin_edges`` / ``counts`` bin the occupied durations for
    plotting; the fits consume the raw interval lists.
    """

    occupied_durations: np.ndarray
    empty_durations: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    threshold: float


def _interior_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """(start, length) of maximal True runs not touching either boundary."""
    idx = np.flatnonzero(np.diff(np.concatenate(([0], mask.view(np.int8), [0]))))
    starts, ends = idx[0::2], idx[1::2]
    runs = []
    for s, e in zip(starts, ends):
        if s == 0 or e == mask.shape[0]:
            continue
        runs.append((int(s), int(e - s)))
    return runs


def extract_dwells_from_series(times, p, threshold: float = 0.5,
                               n_hist_bins: int = 40) -> DwellHistogram:
    """Interval durations from an occupation-probability series.

    ``times`` holds the bin end times of a uniformly binned record.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    p = np.asarray(p, dtype=float)
    if p.shape[0] == 0:
        empty = np.array([])
        return DwellHistogram(empty, empty.copy(), np.array([0.0, 1.0]),
                              np.array([0]), threshold)
    tau = float(times[0])
    mask = p > threshold
    occ = np.array([n * tau for _, n in _interior_runs(mask)])
    emp = np.array([n * tau for _, n in _interior_runs(~mask)])
    if occ.size:
        edges = np.histogram_bin_edges(occ, bins=n_hist_bins)
        counts, _ = np.histogram(occ, bins=edges)
    else:
        edges, counts = np.array([0.0, 1.0]), np.array([0])
    return DwellHistogram(occupied_durations=occ, empty_durations=emp,
                          bin_edges=edges, counts=counts, threshold=threshold)


def extract_dwells(timeline: SmoothedTimeline, threshold: float = 0.5,
                   n_hist_bins: int = 40) -> DwellHistogram:
    """Occupied and empty interval durations of a smoothed timeline."""
    return extract_dwells_from_series(timeline.times, timeline.p_pqs,
                                      threshold, n_hist_bins)


def fit_empty_rate(hist: DwellHistogram) -> float:
    """Exponential MLE of the charging rate from the empty intervals."""
    if hist.empty_durations.size < 2:
        raise FitError("too few empty intervals for a rate estimate")
    return float(1.0 / hist.empty_durations.mean())


def _dwell_negloglik(theta, t):
    a, b = theta
    if a <= 0 or b <= 0:
        return np.inf
    # density e^{-a t}(1 - cos(b t)) / N with N = 1/a - a/(a^2+b^2) > 0
    norm = 1.0 / a - a / (a * a + b * b)
    body = 1.0 - np.cos(b * t)
    ll = -a * t + np.log(np.maximum(body, 1e-300))
    return -(ll.sum() - t.shape[0] * np.log(norm))


def fit_dwell_histogram(hist: DwellHistogram) -> tuple[float, float, float]:
    """Maximum-likelihood fit of the dwell density to the raw intervals.

    The occupied-interval shape constrains the envelope rate a and the
    oscillation rate b = kappa/2; the two tunneling rates cannot be told
    apart from the shape alone, so the fit ties gamma_up = gamma_down = 2a
    (the regime in which the density is exactly normalized) and recovers
    omega = sqrt(a^2 + b^2).  When empty intervals are available their
    exponential MLE replaces the tied value as the gamma_down estimate.

    Returns ``(omega_hat, gamma_up_hat, gamma_down_hat)``.
    """
    t = hist.occupied_durations
    if t.size < 10:
        raise FitError(f"too few occupied intervals ({t.size}) to fit")
    if np.ptp(t) <= 0:
        raise FitError("degenerate intervals: no spread in durations")
    # initial guesses: oscillation from the histogram mode, envelope from
    # the mean of the tied-rate density (mean = (3a^2+b^2)/(a(a^2+b^2)))
    centers = 0.5 * (hist.bin_edges[:-1] + hist.bin_edges[1:])
    if hist.counts.sum() > 0 and centers.size:
        t_peak = float(centers[np.argmax(hist.counts)])
    else:
        t_peak = float(np.median(t))
    t_peak = max(t_peak, 1e-6)
    b0 = np.pi / t_peak
    a0 = max(1.0 / (2.0 * t.mean()), 1e-3)
    best = None
    for b_start in (0.5 * b0, b0, 2.0 * b0):
        res = minimize(_dwell_negloglik, x0=[a0, b_start], args=(t,),
                       method="Nelder-Mead",
                       options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun):
        raise FitError("dwell fit failed to converge")
    a, b = best.x
    if a <= 0 or b <= 0:
        raise FitError(f"dwell fit converged to invalid shape (a={a}, b={b})")
    omega_hat = float(np.hypot(a, b))
    gamma_tied = float(2.0 * a)
    try:
        gamma_down_hat = fit_empty_rate(hist)
    except FitError:
        gamma_down_hat = gamma_tied
    return omega_hat, gamma_tied, gamma_down_hat


# ---------------------------------------------------------------------------
# Bayesian grid likelihood for the Rabi frequency


@dataclass(frozen=True)
class LikelihoodGrid:
    """Result of the candidate-grid likelihood accumulation.

    ``snapshots[s, c]`` is the cumulative log-likelihood of candidate c
    after the bin ending at ``snapshot_times[s]``; ``posterior`` is the
    final normalized likelihood under a uniform prior.  Argmax ties break
    toward the lower candidate.
    """

    grid: np.ndarray
    log_lik: np.ndarray
    posterior: np.ndarray
    snapshot_times: np.ndarray
    snapshots: np.ndarray
    final_states: np.ndarray

    @property
    def argmax_index(self) -> int:
        return int(np.argmax(self.log_lik))

    @property
    def omega_hat(self) -> float:
        return float(self.grid[self.argmax_index])


def bayes_omega(record: CountRecord, grid, gamma_down: float, gamma_up: float,
                snapshot_stride: int | None = None) -> LikelihoodGrid:
    """Accumulate the record log-likelihood for each candidate frequency.

    Each candidate evolves its own conditioned state from its stationary
    state; the per-bin likelihood increments multiply (add in log space)
    under a uniform prior.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("candidate grid must be non-empty")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("candidate grid must be strictly increasing")
    n = record.n_bins
    if snapshot_stride is None:
        snapshot_stride = max(1, n // 400)
    snap_idx = np.arange(snapshot_stride - 1, n, snapshot_stride)
    total = np.full(grid.size, -np.inf)
    snapshots = np.full((snap_idx.size, grid.size), -np.inf)
    final_states = np.zeros((grid.size, 3, 3), dtype=complex)
    lw0 = lw1 = None
    for c, omega_c in enumerate(grid):
        params_c = ModelParams(omega=float(omega_c), gamma_down=gamma_down,
                               gamma_up=gamma_up, r0=record.r0, r1=record.r1,
                               dt_sim=record.bin_dt, bin_dt=record.bin_dt)
        if lw0 is None:
            lw0, lw1 = bin_log_weights(record.counts, params_c)
        fwd, _ = reduced_propagators(params_c, params_c.bin_dt)
        states5, loglik, status = _kernels.filter_pass(
            fwd, lw0, lw1, to_reduced(steady_state(params_c)))
        if status >= 0:
            continue  # candidate underflowed; keeps -inf likelihood
        cum = np.cumsum(loglik)
        total[c] = cum[-1]
        snapshots[:, c] = cum[snap_idx]
        final_states[c] = from_reduced_batch(states5[-1:])[0]
    if not np.any(np.isfinite(total)):
        raise LikelihoodUnderflowError("all candidates underflowed")
    shifted = total - total.max()
    posterior = np.exp(shifted)
    posterior /= posterior.sum()
    return LikelihoodGrid(grid=grid, log_lik=total, posterior=posterior,
                          snapshot_times=record.times[snap_idx],
                          snapshots=snapshots, final_states=final_states)


def posterior_stats(result: LikelihoodGrid) -> tuple[float, float]:
    """Posterior mean and standard deviation over the candidate grid."""
    mean = float(np.sum(result.posterior * result.grid))
    var = float(np.sum(result.posterior * (result.grid - mean) ** 2))
    return mean, np.sqrt(max(var, 0.0))


# ---------------------------------------------------------------------------
# Rate re-estimation through smoothed two-time joint probabilities


def transition_table(params: ModelParams, tau: float,
                     coherent: bool = True) -> np.ndarray:
    """T[i, j]: population of |j> after propagating |i><i| for tau.

    With ``coherent=False`` the commutator part of the generator is
    dropped, isolating the rate contributions (the coherent part only
    enters at second order in tau through the double projection).
    """
    prop = make_propagator(params, tau, include_hamiltonian=coherent)
    T = np.empty((3, 3))
    for i in range(3):
        proj = np.zeros((3, 3), dtype=complex)
        proj[i, i] = 1.0
        out = prop.apply(proj)
        T[i] = np.real(np.diag(out))
    return T


def bw_joint(rho_t: np.ndarray, E_next: np.ndarray, propagator: Propagator,
             i: Basis, j: Basis) -> float:
    """Two-time joint weight: project on |i>, propagate, project on |j>,
    contract with the later effect matrix.  Non-negative real."""
    proj_i = np.zeros((3, 3), dtype=complex)
    proj_i[i, i] = 1.0
    proj_j = np.zeros((3, 3), dtype=complex)
    proj_j[j, j] = 1.0
    inner = proj_i @ rho_t @ proj_i
    evolved = propagator.apply(inner)
    sandwiched = proj_j @ evolved @ proj_j
    return max(float(np.trace(sandwiched @ E_next).real), 0.0)


@dataclass(frozen=True)
class RateEstimate:
    """Re-estimated tunneling rates with the per-iteration history."""

    gamma_down: float
    gamma_up: float
    iteration: int
    history: tuple[tuple[float, float], ...]


def _bw_xi_sums(record: CountRecord, params: ModelParams,
                coherent: bool = True) -> np.ndarray:
    """Sum over the record of the normalized 3x3 joint-occupation tables.

    Pairs the filtered state after bin k with the effect at the following
    boundary taken *inclusive* of that bin's count; each per-step table is
    normalized to unit mass before accumulation, which makes the sums
    invariant under any rescaling of the stored effects.
    """
    lw0, lw1 = bin_log_weights(record.counts, params)
    fwd, adj = reduced_propagators(params, params.bin_dt)
    states5, _, status = _kernels.filter_pass(
        fwd, lw0, lw1, to_reduced(steady_state(params)))
    if status >= 0:
        raise LikelihoodUnderflowError(f"filter underflow at bin {status}")
    effects5, status = _kernels.effect_pass(adj, lw0, lw1)
    if status >= 0:
        raise LikelihoodUnderflowError(f"effect underflow at bin {status}")
    n = record.n_bins
    if n < 2:
        raise FitError("record too short for rate re-estimation")
    shift = np.maximum(lw0, lw1)
    w0 = np.exp(lw0 - shift)
    w1 = np.exp(lw1 - shift)
    # effect at boundary k+1 including the count of bin k
    eplus = np.empty((n, 3))
    eplus[:, 0] = w0 * effects5[1:, 0]
    eplus[:, 1] = w1 * effects5[1:, 1]
    eplus[:, 2] = w1 * effects5[1:, 2]
    rho_diag = states5[:-1, :3]      # state after bin k, k = 0 .. n-2
    ep_next = eplus[1:]              # effect including count of bin k+1
    T = transition_table(params, params.bin_dt, coherent=coherent)
    z = np.einsum("ki,ij,kj->k", rho_diag, T, ep_next)
    if np.any(z <= 0):
        raise FitError("vanishing joint normalization in re-estimation")
    return np.einsum("ki,ij,kj,k->ij", rho_diag, T, ep_next, 1.0 / z)


def bw_reestimate(record: CountRecord, params_guess: ModelParams,
                  coherent: bool = True) -> RateEstimate:
    """One re-estimation sweep of both tunneling rates.

    gamma_down is read from the empty->down transition weight and gamma_up
    from the up->empty weight, each normalized to the total smoothed
    population of the initial state, divided by the step duration.
    """
    S = _bw_xi_sums(record, params_guess, coherent=coherent)
    tau = params_guess.bin_dt
    denom_empty = S[Basis.EMPTY].sum()
    denom_up = S[Basis.UP].sum()
    if denom_empty <= 0 or denom_up <= 0:
        raise FitError("a basis state is never populated; cannot re-estimate")
    gd = float(S[Basis.EMPTY, Basis.DOWN] / denom_empty / tau)
    gu = float(S[Basis.UP, Basis.EMPTY] / denom_up / tau)
    return RateEstimate(gamma_down=gd, gamma_up=gu, iteration=1,
                        history=((gd, gu),))


def reestimate_rates(record: CountRecord, params_guess: ModelParams,
                     n_iterations: int = 5, rel_tol: float = 1e-3,
                     coherent: bool = True) -> RateEstimate:
    """Iterate :func:`bw_reestimate`, re-applying the inferred rates."""
    params = params_guess
    history = []
    for it in range(n_iterations):
        step = bw_reestimate(record, params, coherent=coherent)
        history.append((step.gamma_down, step.gamma_up))
        prev = (params.gamma_down, params.gamma_up)
        params = replace(params, gamma_down=step.gamma_down,
                         gamma_up=step.gamma_up)
        change = max(abs(step.gamma_down - prev[0]) / max(prev[0], 1e-12),
                     abs(step.gamma_up - prev[1]) / max(prev[1], 1e-12))
        if change < rel_tol:
            break
    gd, gu = history[-1]
    return RateEstimate(gamma_down=gd, gamma_up=gu, iteration=len(history),
                        history=tuple(history))


# ---------------------------------------------------------------------------
# Hybrid alternation


@dataclass(frozen=True)
class HybridResult:
    omega_hat: float
    gamma_down_hat: float
    gamma_up_hat: float
    history: tuple[dict, ...]
    converged: bool


def hybrid_estimate(record: CountRecord, omega_grid, rate_guess,
                    n_inner: int = 5, n_outer: int = 5,
                    rel_tol: float = 1e-3) -> HybridResult:
    """Alternate Bayesian frequency selection and rate re-estimation.

    Each outer round picks the most likely candidate frequency under the
    current rates, then runs ``n_inner`` re-estimation sweeps at that
    frequency.  Stops early once the relative change of all three
    parameters falls below ``rel_tol``; otherwise returns the last
    estimates with ``converged=False``.
    """
    gd, gu = float(rate_guess[0]), float(rate_guess[1])
    omega_hat = None
    history = []
    converged = False
    for outer in range(n_outer):
        bayes = bayes_omega(record, omega_grid, gd, gu)
        omega_new = bayes.omega_hat
        params = ModelParams(omega=omega_new, gamma_down=gd, gamma_up=gu,
                             r0=record.r0, r1=record.r1,
                             dt_sim=record.bin_dt, bin_dt=record.bin_dt)
        rates = reestimate_rates(record, params, n_iterations=n_inner,
                                 rel_tol=rel_tol)
        gd_new, gu_new = rates.gamma_down, rates.gamma_up
        history.append({"outer": outer + 1, "omega": omega_new,
                        "gamma_down": gd_new, "gamma_up": gu_new,
                        "rate_history": rates.history})
        if omega_hat is not None:
            change = max(abs(omega_new - omega_hat) / max(omega_hat, 1e-12),
                         abs(gd_new - gd) / max(gd, 1e-12),
                         abs(gu_new - gu) / max(gu, 1e-12))
            if change < rel_tol:
                omega_hat, gd, gu = omega_new, gd_new, gu_new
                converged = True
                break
        omega_hat, gd, gu = omega_new, gd_new, gu_new
    return HybridResult(omega_hat=omega_hat, gamma_down_hat=gd,
                        gamma_up_hat=gu, history=tuple(history),
                        converged=converged)
