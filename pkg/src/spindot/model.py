"""Three-level model of the charge-sensed quantum dot.

State space is spanned by the empty dot |0>, and the singly charged
spin-down |down> and spin-up |up> states, in that fixed order.  A resonant
drive couples the two spin states at the Rabi frequency ``omega`` while the
dot exchanges electrons with the lead: a spin-down electron tunnels in at
rate ``gamma_down`` (only when the dot is empty) and a spin-up electron
tunnels out at rate ``gamma_up``.

Units
-----
``omega`` is an *angular* frequency in rad/us and the tunneling rates are
in 1/us, so that occupied dwell times cluster at odd multiples of
pi/omega.  Literature values quoted in "MHz" for this system are angular
and convert with factor 1 (see :func:`omega_from_mhz`).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.linalg import expm

__all__ = [
    "Basis",
    "ModelParams",
    "Propagator",
    "build_hamiltonian",
    "lindblad_rhs",
    "adjoint_rhs",
    "no_jump_rhs",
    "liouvillian",
    "make_propagator",
    "steady_state",
    "paper_params",
    "omega_from_mhz",
    "check_density_matrix",
    "project_to_psd",
    "vec",
    "unvec",
    "to_reduced",
    "from_reduced",
    "reduced_propagators",
]


class Basis(IntEnum):
    """Fixed basis ordering used by every matrix in the toolkit."""

    EMPTY = 0
    DOWN = 1
    UP = 2


def _ket(i: int) -> np.ndarray:
    v = np.zeros(3, dtype=complex)
    v[i] = 1.0
    return v


KET_EMPTY = _ket(Basis.EMPTY)
KET_DOWN = _ket(Basis.DOWN)
KET_UP = _ket(Basis.UP)

#: projector on the empty-dot state
PROJ_EMPTY = np.outer(KET_EMPTY, KET_EMPTY.conj())
#: projector on the charged (either spin) subspace
PROJ_OCCUPIED = np.outer(KET_DOWN, KET_DOWN.conj()) + np.outer(KET_UP, KET_UP.conj())

#: |0><down| - annihilates the spin-down charge
C_DOWN = np.outer(KET_EMPTY, KET_DOWN.conj())
#: |0><up| - annihilates the spin-up charge
C_UP = np.outer(KET_EMPTY, KET_UP.conj())

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-9
EIGENVALUE_FLOOR = -1e-10


def omega_from_mhz(value: float) -> float:
    """Convert a Rabi frequency quoted in MHz to rad/us.

    The toolkit convention treats such quotes as angular frequencies
    already, so the conversion factor is exactly 1.  This function exists
    so the unit convention is explicit at call sites.
    """
    return float(value)


@dataclass(frozen=True)
class ModelParams:
    """Full physical configuration of the monitored dot.

    Parameters
    ----------
    omega : float
        Rabi angular frequency [rad/us].
    gamma_down : float
        Charging rate of the empty dot [1/us].
    gamma_up : float
        Discharge rate of the spin-up state [1/us].
    r0, r1 : float
        QPC electron count rates for the empty / occupied dot [counts/us].
    dt_sim : float
        Fine simulation step [us].
    bin_dt : float
        Measurement bin duration [us]; must be an integer multiple of
        ``dt_sim``.
    """

    omega: float
    gamma_down: float
    gamma_up: float
    r0: float
    r1: float
    dt_sim: float = 1e-3
    bin_dt: float = 1e-2

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        for name in ("gamma_down", "gamma_up", "r0", "r1"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.dt_sim <= 0 or self.bin_dt <= 0:
            raise ValueError("dt_sim and bin_dt must be > 0")
        ratio = self.bin_dt / self.dt_sim
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("bin_dt must be an integer multiple of dt_sim")
        if self.gamma_down * self.dt_sim >= 0.1 or self.gamma_up * self.dt_sim >= 0.1:
            raise ValueError(
                "gamma * dt_sim must stay below 0.1 for first-order jump sampling"
            )

    @property
    def steps_per_bin(self) -> int:
        return int(round(self.bin_dt / self.dt_sim))


def paper_params(**overrides) -> ModelParams:
    """Reference configuration: Omega=5 rad/us, gammas 3/us, QPC rates
    31210 and 24970 counts/us (10 ns bins hold ~312 / ~250 counts)."""
    kw = dict(omega=5.0, gamma_down=3.0, gamma_up=3.0, r0=31210.0, r1=24970.0,
              dt_sim=1e-3, bin_dt=1e-2)
    kw.update(overrides)
    return ModelParams(**kw)


def build_hamiltonian(omega: float) -> np.ndarray:
    """Resonant-drive Hamiltonian coupling the two spin states (hbar=1)."""
    if omega < 0:
        raise ValueError("omega must be >= 0")
    H = np.zeros((3, 3), dtype=complex)
    H[Basis.DOWN, Basis.UP] = omega / 2
    H[Basis.UP, Basis.DOWN] = omega / 2
    return H


def _dissipator(L: np.ndarray, X: np.ndarray) -> np.ndarray:
    LdL = L.conj().T @ L
    return L @ X @ L.conj().T - 0.5 * (LdL @ X + X @ LdL)


def lindblad_rhs(rho: np.ndarray, params: ModelParams) -> np.ndarray:
    """Right-hand side of the unconditioned master equation.

    Charging enters through the jump operator |down><0| at rate
    ``gamma_down`` and discharge through |0><up| at rate ``gamma_up``.
    The output is traceless and Hermitian for Hermitian input.
    """
    H = build_hamiltonian(params.omega)
    out = -1j * (H @ rho - rho @ H)
    out += params.gamma_down * _dissipator(C_DOWN.conj().T, rho)
    out += params.gamma_up * _dissipator(C_UP, rho)
    return out


def adjoint_rhs(E: np.ndarray, params: ModelParams) -> np.ndarray:
    """Generator of the backward (Heisenberg-picture) evolution.

    Defined by trace duality tr(E * lindblad_rhs(rho)) =
    tr(adjoint_rhs(E) * rho); it does not preserve the trace of E.
    """
    H = build_hamiltonian(params.omega)
    out = 1j * (H @ E - E @ H)
    for L, g in ((C_DOWN.conj().T, params.gamma_down), (C_UP, params.gamma_up)):
        LdL = L.conj().T @ L
        out += g * (L.conj().T @ E @ L - 0.5 * (LdL @ E + E @ LdL))
    return out


def no_jump_rhs(rho: np.ndarray, params: ModelParams) -> np.ndarray:
    """Deterministic between-jump part of the conditioned evolution.

    Equals the full master equation minus the two jump feed terms; the
    trace decays as -gamma_down*rho_00 - gamma_up*rho_upup.
    """
    H = build_hamiltonian(params.omega)
    out = -1j * (H @ rho - rho @ H)
    cd_cdd = C_DOWN @ C_DOWN.conj().T        # = |0><0|
    cud_cu = C_UP.conj().T @ C_UP            # = |up><up|
    out -= 0.5 * params.gamma_down * (cd_cdd @ rho + rho @ cd_cdd)
    out -= 0.5 * params.gamma_up * (cud_cu @ rho + rho @ cud_cu)
    return out


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stack a 3x3 matrix into a length-9 vector."""
    return rho.flatten(order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    return v.reshape(3, 3, order="F")


def liouvillian(params: ModelParams, include_hamiltonian: bool = True) -> np.ndarray:
    """9x9 matrix representation (column-stacking) of the master equation.

    With ``include_hamiltonian=False`` the coherent commutator is dropped,
    leaving only the rate terms; used to quantify the weight of coherent
    transfer in downstream estimators.
    """
    p = params
    if not include_hamiltonian:
        p = ModelParams(0.0, params.gamma_down, params.gamma_up,
                        params.r0, params.r1, params.dt_sim, params.bin_dt)
    L = np.zeros((9, 9), dtype=complex)
    for k in range(9):
        basis = np.zeros((3, 3), dtype=complex)
        basis[k % 3, k // 3] = 1.0
        L[:, k] = vec(lindblad_rhs(basis, p))
    return L


@dataclass(frozen=True)
class Propagator:
    """Exact fixed-step propagator exp(L*tau) and its adjoint exp(Ldag*tau).

    Both are stored as 9x9 matrices acting on column-stacked states; the
    adjoint implements the backward evolution of effect matrices over one
    step of duration ``tau``.
    """

    params: ModelParams
    tau: float
    forward: np.ndarray
    adjoint: np.ndarray

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.forward @ vec(rho))

    def apply_adjoint(self, E: np.ndarray) -> np.ndarray:
        return unvec(self.adjoint @ vec(E))


@functools.lru_cache(maxsize=256)
def _make_propagator_cached(params: ModelParams, tau: float,
                            include_hamiltonian: bool) -> Propagator:
    L = liouvillian(params, include_hamiltonian=include_hamiltonian)
    forward = expm(L * tau)
    # exp(Ldag tau) = (exp(L tau))^dag
    return Propagator(params=params, tau=tau, forward=forward,
                      adjoint=forward.conj().T)


def make_propagator(params: ModelParams, tau: float,
                    include_hamiltonian: bool = True) -> Propagator:
    """Build (and cache) the propagator pair for one step of length tau."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    return _make_propagator_cached(params, float(tau), include_hamiltonian)


def steady_state(params: ModelParams) -> np.ndarray:
    """Unique trace-one stationary state of the master equation.

    Raises ``ValueError`` when the stationary state is degenerate (e.g.
    all rates and the drive are zero).
    """
    L = liouvillian(params)
    vals, vecs = np.linalg.eig(L)
    idx = np.where(np.abs(vals) < 1e-9)[0]
    if len(idx) != 1:
        raise ValueError(
            f"stationary state is not unique ({len(idx)} null directions)"
        )
    rho = unvec(vecs[:, idx[0]])
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    return project_to_psd(rho)


def check_density_matrix(rho: np.ndarray, *, normalized: bool = True) -> None:
    """Validate Hermiticity, trace and positivity; raises ValueError."""
    if rho.shape != (3, 3):
        raise ValueError("density matrix must be 3x3")
    if np.abs(rho - rho.conj().T).max() > HERMITICITY_TOL:
        raise ValueError("density matrix is not Hermitian")
    if normalized and abs(np.trace(rho).real - 1.0) > TRACE_TOL:
        raise ValueError(f"trace deviates from one: {np.trace(rho).real}")
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < EIGENVALUE_FLOOR:
        raise ValueError(f"negative eigenvalue {evals.min()}")


def project_to_psd(rho: np.ndarray) -> np.ndarray:
    """Repair tiny negative eigenvalues caused by floating-point drift.

    Eigenvalues in [-1e-10, 0) are clipped to zero and the state is
    renormalized; anything below the floor is a genuine error and raises.
    """
    evals, evecs = np.linalg.eigh(rho)
    if evals.min() >= 0.0:
        return rho
    if evals.min() < EIGENVALUE_FLOOR:
        raise ValueError(f"eigenvalue {evals.min()} below repair floor")
    evals = np.clip(evals, 0.0, None)
    repaired = (evecs * evals) @ evecs.conj().T
    tr = np.trace(repaired).real
    if tr > 0:
        repaired = repaired / tr
    return repaired


# ---------------------------------------------------------------------------
# Reduced real representation
#
# Under both the master equation and the charge-sensitive measurement
# back-action, coherences between the empty state and the charged states are
# never created.  Every state reachable by the toolkit therefore lives in the
# five-real-dimensional space
#     (rho_00, rho_dndn, rho_upup, Re rho_dnup, Im rho_dnup),
# and the hot inference loops run in this representation.

def to_reduced(rho: np.ndarray) -> np.ndarray:
    return np.array([rho[0, 0].real, rho[1, 1].real, rho[2, 2].real,
                     rho[1, 2].real, rho[1, 2].imag])


def from_reduced(v: np.ndarray) -> np.ndarray:
    rho = np.zeros((3, 3), dtype=complex)
    rho[0, 0], rho[1, 1], rho[2, 2] = v[0], v[1], v[2]
    rho[1, 2] = v[3] + 1j * v[4]
    rho[2, 1] = v[3] - 1j * v[4]
    return rho


def from_reduced_batch(v: np.ndarray) -> np.ndarray:
    """Vectorized :func:`from_reduced` for an (n, 5) array."""
    out = np.zeros((v.shape[0], 3, 3), dtype=complex)
    out[:, 0, 0] = v[:, 0]
    out[:, 1, 1] = v[:, 1]
    out[:, 2, 2] = v[:, 2]
    out[:, 1, 2] = v[:, 3] + 1j * v[:, 4]
    out[:, 2, 1] = v[:, 3] - 1j * v[:, 4]
    return out


_RED_CARRIERS = None


def _reduced_carriers():
    global _RED_CARRIERS
    if _RED_CARRIERS is None:
        bx = np.zeros((3, 3), complex)
        bx[1, 2] = bx[2, 1] = 1.0
        by = np.zeros((3, 3), complex)
        by[1, 2] = 1j
        by[2, 1] = -1j
        _RED_CARRIERS = [np.diag([1, 0, 0]).astype(complex),
                         np.diag([0, 1, 0]).astype(complex),
                         np.diag([0, 0, 1]).astype(complex), bx, by]
    return _RED_CARRIERS


@functools.lru_cache(maxsize=256)
def reduced_propagators(params: ModelParams, tau: float) -> tuple:
    """(forward, adjoint) 5x5 real propagators on the invariant subspace."""
    Rf = np.zeros((5, 5))
    Ra = np.zeros((5, 5))
    for k, B in enumerate(_reduced_carriers()):
        Rf[:, k] = to_reduced(lindblad_rhs(B, params))
        Ra[:, k] = to_reduced(adjoint_rhs(B, params))
    return expm(Rf * tau), expm(Ra * tau)
