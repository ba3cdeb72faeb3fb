"""QPC charge sensor: count-record synthesis and measurement operators.

The sensor transmits electrons at rate ``r0`` while the dot is empty and
``r1`` while it is occupied (spin-blind).  Synthesis draws one Poisson
count per measurement bin with the exposure split exactly across any
within-bin jumps.  The same two-rate structure defines the measurement
back-action used by inference: per elementary interval the click/no-click
operators, and per bin the count operator
M_m = sqrt(P(m; r0*tau)) * Pi_empty + sqrt(P(m; r1*tau)) * Pi_occupied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .model import ModelParams, PROJ_EMPTY, PROJ_OCCUPIED
from .trajectory import TrajectoryRecord

__all__ = [
    "ELEMENTARY_CHARGE",
    "CountRecord",
    "BinMeasurement",
    "LikelihoodUnderflowError",
    "synthesize_counts",
    "current_from_counts",
    "elementary_povm",
    "poisson_log_pmf",
    "bin_log_weights",
    "bin_povm",
    "completeness_truncation",
]

ELEMENTARY_CHARGE = 1.602176634e-19  # C


class LikelihoodUnderflowError(ValueError):
    """Raised when a linear-space likelihood is too small to represent."""


@dataclass(frozen=True)
class CountRecord:
    """Electron counts through the QPC, one integer per bin.

    This record is the only data the inference modules may consume.
    """

    bin_dt: float
    counts: np.ndarray
    r0: float
    r1: float
    seed: int
    duration: float

    def __post_init__(self):
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def n_bins(self) -> int:
        return int(self.counts.shape[0])

    @property
    def times(self) -> np.ndarray:
        """Bin end times."""
        return (np.arange(self.n_bins) + 1) * self.bin_dt


def synthesize_counts(traj: TrajectoryRecord, params: ModelParams,
                      seed: int) -> CountRecord:
    """Draw the Poisson count record for a simulated trajectory.

    The mean of bin k is r0 * (time empty in bin) + r1 * (time occupied),
    with occupancy resolved on the fine simulation grid so that within-bin
    jumps contribute their exact exposure.
    """
    spb = params.steps_per_bin
    n_sub = traj.n[:-1]
    n_bins = n_sub.shape[0] // spb
    if n_bins * spb != n_sub.shape[0]:
        raise ValueError("trajectory duration is not a whole number of bins")
    occupied_time = (n_sub[: n_bins * spb].reshape(n_bins, spb).sum(axis=1)
                     * params.dt_sim)
    empty_time = params.bin_dt - occupied_time
    means = params.r0 * empty_time + params.r1 * occupied_time
    rng = np.random.default_rng(seed)
    counts = rng.poisson(means).astype(np.int64)
    return CountRecord(bin_dt=params.bin_dt, counts=counts, r0=params.r0,
                       r1=params.r1, seed=seed, duration=n_bins * params.bin_dt)


def current_from_counts(m, tau: float):
    """Convert a count (or array of counts) per bin of length tau [us] to nA."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    return np.asarray(m, dtype=float) * ELEMENTARY_CHARGE / (tau * 1e-6) * 1e9


def elementary_povm(rho: np.ndarray, clicked: bool, r0_dt: float,
                    r1_dt: float) -> tuple[np.ndarray, float]:
    """Single-electron click / no-click back-action and outcome probability.

    The click probability is rho_00*r0*dt + (rho_dndn+rho_upup)*r1*dt; the
    conditioned state is M rho Mdag renormalized.  Requires r*dt < 1 so
    the no-click operator exists.
    """
    if not (0 <= r0_dt < 1 and 0 <= r1_dt < 1):
        raise ValueError("requires 0 <= r*dt < 1")
    if clicked:
        M = np.sqrt(r0_dt) * PROJ_EMPTY + np.sqrt(r1_dt) * PROJ_OCCUPIED
    else:
        M = np.sqrt(1 - r0_dt) * PROJ_EMPTY + np.sqrt(1 - r1_dt) * PROJ_OCCUPIED
    out = M @ rho @ M.conj().T
    prob = np.trace(out).real
    if prob <= 0:
        raise LikelihoodUnderflowError("outcome has zero probability")
    return out / prob, prob


def poisson_log_pmf(m, mean: float):
    """log P(m; mean), valid for means far beyond factorial overflow."""
    m = np.asarray(m, dtype=float)
    if mean == 0.0:
        return np.where(m == 0, 0.0, -np.inf)
    return m * np.log(mean) - mean - gammaln(m + 1.0)


def bin_log_weights(counts, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin log Poisson weights (empty, occupied) for a count sequence."""
    mu0 = params.r0 * params.bin_dt
    mu1 = params.r1 * params.bin_dt
    return poisson_log_pmf(counts, mu0), poisson_log_pmf(counts, mu1)


@dataclass(frozen=True)
class BinMeasurement:
    """Generalized measurement operator for an m-count bin of length tau."""

    m: int
    tau: float
    r0: float
    r1: float

    @property
    def log_weights(self) -> tuple[float, float]:
        return (float(poisson_log_pmf(self.m, self.r0 * self.tau)),
                float(poisson_log_pmf(self.m, self.r1 * self.tau)))

    def operator(self) -> np.ndarray:
        lw0, lw1 = self.log_weights
        return (np.exp(0.5 * lw0) * PROJ_EMPTY
                + np.exp(0.5 * lw1) * PROJ_OCCUPIED)


def completeness_truncation(params: ModelParams) -> int:
    """Count cutoff at which sum_m Mdag M equals the identity to 1e-12."""
    mu_max = max(params.r0, params.r1) * params.bin_dt
    return int(np.ceil(mu_max + 10.0 * np.sqrt(mu_max))) + 1


def bin_povm(rho: np.ndarray, m: int,
             params: ModelParams) -> tuple[np.ndarray, float]:
    """Back-action and likelihood of observing m counts in one bin.

    likelihood = rho_00 * P(m; r0*tau) + (rho_dndn + rho_upup) * P(m; r1*tau);
    the update scales the empty component by the first weight, the occupied
    block by the second, and the empty-occupied coherences by the geometric
    mean.  Computed with a per-bin log-space shift so extreme counts do not
    underflow; raises LikelihoodUnderflowError if the true likelihood
    cannot be represented in linear space.
    """
    if m < 0:
        raise ValueError("count must be >= 0")
    lw0 = float(poisson_log_pmf(m, params.r0 * params.bin_dt))
    lw1 = float(poisson_log_pmf(m, params.r1 * params.bin_dt))
    shift = max(lw0, lw1)
    w0 = np.exp(lw0 - shift)
    w1 = np.exp(lw1 - shift)
    M = np.sqrt(w0) * PROJ_EMPTY + np.sqrt(w1) * PROJ_OCCUPIED
    out = M @ rho @ M.conj().T
    norm = np.trace(out).real
    if norm <= 0:
        raise LikelihoodUnderflowError(f"zero likelihood for count {m}")
    log_likelihood = np.log(norm) + shift
    if log_likelihood < np.log(1e-300):
        raise LikelihoodUnderflowError(
            f"likelihood underflow for count {m}: log L = {log_likelihood:.1f}")
    return out / norm, float(np.exp(log_likelihood))
