"""Simulation and inference for a charge-sensed single-electron quantum dot.

The package simulates ground-truth tunneling trajectories of a driven
three-level dot, synthesizes the noisy QPC electron-count record, and
reconstructs occupation and physical parameters from that record alone:
forward filtering, past-state smoothing, dwell-time fits, Bayesian grid
likelihood for the Rabi frequency, and iterative rate re-estimation.
"""

from .model import (
    Basis,
    ModelParams,
    Propagator,
    build_hamiltonian,
    lindblad_rhs,
    make_propagator,
    no_jump_rhs,
    omega_from_mhz,
    paper_params,
    steady_state,
)
from .sensor import CountRecord, bin_povm, current_from_counts, elementary_povm, synthesize_counts
from .smoother import FilterTimeline, SmoothedTimeline, effect_backward, filter_forward, pqs_occupation, smooth
from .trajectory import JumpEvent, JumpKind, TrajectoryRecord, simulate_trajectory
from .estimate import (
    DwellHistogram,
    LikelihoodGrid,
    RateEstimate,
    bayes_omega,
    bw_joint,
    bw_reestimate,
    dwell_pdf,
    extract_dwells,
    fit_dwell_histogram,
    hybrid_estimate,
    reestimate_rates,
)

__version__ = "0.1.0"
