"""Latent quantum state and one-step evolution kernels.

The generative model keeps a D-dimensional complex latent state (a pure
state vector or a density matrix) that is conditioned on the observed
signal one sample at a time.  With a diagonal Hamiltonian ``H = diag(omega)``
the coupling operator in the rotating frame is obtained entrywise,

    R(t)[a, b] = R[a, b] * exp(i * (omega[a] - omega[b]) * t),

and one observation step applies the affine operator

    M = 1 - (sigma^2 / 2) * R(t)^H R(t) * dt + R(t) * u

to the state (``u`` is the signal increment consumed by the step), followed
by renormalization.  Pure states evolve as ``psi -> M psi``; density
matrices as ``rho -> M rho M^H``.  The model's per-step prediction is the
real expectation ``<R(t) + R(t)^H>`` taken *before* the observation is
consumed.

All functions are pure: they never mutate their inputs and are safe to
call concurrently.  States carry an optional leading batch axis so that
many independent trajectories can be advanced with one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ZeroNormError

#: Below this squared-norm / trace the trajectory is considered collapsed.
NORM_FLOOR = 1e-300


class Coupling(str, Enum):
    """How the observed signal drives the latent state.

    DIRECT:     the signal value is the measured current, step increment u = x * dt.
    DERIVATIVE: the signal derivative is the current, step increment u = dx.
    """

    DIRECT = "direct"
    DERIVATIVE = "derivative"


class StateKind(str, Enum):
    PURE = "pure"
    DENSITY = "density"


def _as_complex_matrix(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ModelParameters:
    """Learnable parameters plus the hyperparameters that shape the kernels.

    Attributes:
        bond_dim: latent dimension D (model capacity).
        omega: (D,) real eigenvalues of the diagonal Hamiltonian, rad/s.
        R: (D, D) complex coupling operator.
        A: real output amplitude (used by the derivative-coupling loss/sampler).
        sigma: strength of the R^H R damping term, > 0.
        dt: model time step in seconds, > 0.
        psi0: (D,) complex initial pure state, stored unnormalized.
        W: optional (r, D) complex factor of the initial density matrix
            rho0 = W^H W / tr(W^H W); r is the density rank.
        zero_r_diagonal: force diag(R) = 0 (keeps only oscillatory couplings).
        coupling: DIRECT or DERIVATIVE signal drive.
    """

    bond_dim: int
    omega: np.ndarray
    R: np.ndarray
    A: float
    sigma: float
    dt: float
    psi0: np.ndarray
    W: np.ndarray | None = None
    zero_r_diagonal: bool = False
    coupling: Coupling = Coupling.DIRECT

    def __post_init__(self):
        d = int(self.bond_dim)
        if d < 1:
            raise ValueError("bond_dim must be >= 1")
        if not (self.dt > 0):
            raise ValueError("dt must be > 0")
        if not (self.sigma > 0):
            raise ValueError("sigma must be > 0")
        omega = np.array(self.omega, dtype=np.float64).reshape(d)
        R = _as_complex_matrix(self.R, "R")
        if R.shape != (d, d):
            raise ValueError(f"R must be ({d}, {d}), got {R.shape}")
        if self.zero_r_diagonal:
            R = R.copy()
            np.fill_diagonal(R, 0.0)
        psi0 = np.array(self.psi0, dtype=np.complex128).reshape(d)
        if np.sum(np.abs(psi0) ** 2) <= NORM_FLOOR:
            raise ValueError("psi0 must have nonzero norm")
        W = self.W
        if W is not None:
            W = _as_complex_matrix(W, "W")
            if W.shape[1] != d or not (1 <= W.shape[0] <= d):
                raise ValueError(f"W must be (r, {d}) with 1 <= r <= {d}, got {W.shape}")
            W.flags.writeable = False
        for arr in (omega, R, psi0):
            arr.flags.writeable = False
        object.__setattr__(self, "bond_dim", d)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "A", float(self.A))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "psi0", psi0)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "coupling", Coupling(self.coupling))

    @property
    def density_rank(self) -> int | None:
        return None if self.W is None else self.W.shape[0]

    def with_updates(self, **kwargs) -> "ModelParameters":
        """Return a copy with the given fields replaced (revalidates)."""
        return replace(self, **kwargs)

    def initial_state(self, kind: StateKind = StateKind.PURE, batch: int | None = None) -> "LatentState":
        """Normalized starting state; ``batch`` tiles it along a leading axis.

        Density mode uses W when present, otherwise the rank-1 projector
        onto the normalized psi0.
        """
        kind = StateKind(kind)
        if kind is StateKind.PURE:
            psi = self.psi0 / np.sqrt(np.sum(np.abs(self.psi0) ** 2))
            arr = psi if batch is None else np.tile(psi, (batch, 1))
        else:
            if self.W is not None:
                rho = init_density(self.W)
            else:
                psi = self.psi0 / np.sqrt(np.sum(np.abs(self.psi0) ** 2))
                rho = np.outer(psi, psi.conj())
            arr = rho if batch is None else np.tile(rho, (batch, 1, 1))
        log_norm = 0.0 if batch is None else np.zeros(batch)
        return LatentState(kind=kind, array=arr, log_norm=log_norm)


@dataclass
class LatentState:
    """A pure state (..., D) or density matrix (..., D, D) plus norm bookkeeping.

    ``log_norm`` accumulates the logarithm of every normalization factor
    discarded by :func:`evolve_pure` / :func:`evolve_density`; it is purely
    diagnostic (the path log-likelihood of the consumed record up to a
    data-only constant).
    """

    kind: StateKind
    array: np.ndarray
    log_norm: np.ndarray | float = 0.0

    @property
    def bond_dim(self) -> int:
        return self.array.shape[-1]

    @property
    def is_batched(self) -> bool:
        expected = 1 if self.kind is StateKind.PURE else 2
        return self.array.ndim > expected

    def norm_squared(self) -> np.ndarray | float:
        """<psi|psi> for pure states, tr(rho) for density matrices."""
        if self.kind is StateKind.PURE:
            return np.sum(np.abs(self.array) ** 2, axis=-1)
        return np.real(np.trace(self.array, axis1=-2, axis2=-1))

    def normalized(self, floor: float = NORM_FLOOR) -> "LatentState":
        """Unit-norm / unit-trace copy, accumulating the discarded factor."""
        n2 = self.norm_squared()
        if np.any(np.asarray(n2) <= floor):
            raise ZeroNormError("state norm underflowed during normalization")
        if self.kind is StateKind.PURE:
            scale = np.sqrt(n2)
            arr = self.array / (scale[..., None] if self.is_batched else scale)
            return LatentState(self.kind, arr, self.log_norm + np.log(scale))
        arr = self.array / (n2[..., None, None] if self.is_batched else n2)
        return LatentState(self.kind, arr, self.log_norm + np.log(n2))


def rotate_coupling(params: ModelParameters, t: float) -> np.ndarray:
    """Coupling operator in the rotating frame at time ``t``.

    Entrywise ``R[a, b] * exp(i (omega[a] - omega[b]) t)``; a unitary
    similarity, so the singular values of R are preserved.
    """
    if t == 0.0:
        return params.R
    phase = np.exp(1j * (params.omega[:, None] - params.omega[None, :]) * t)
    return params.R * phase


def expectation(state: LatentState, M: np.ndarray, floor: float = NORM_FLOOR) -> np.ndarray | float:
    """Real expectation <M + M^H> in ``state`` (normalization included).

    Works for unnormalized states: divides by <psi|psi> or tr(rho).

    Raises:
        ZeroNormError: the state norm/trace is below ``floor``.
    """
    n2 = state.norm_squared()
    if np.any(np.asarray(n2) <= floor):
        raise ZeroNormError("state norm underflowed in expectation")
    if state.kind is StateKind.PURE:
        psi = state.array
        val = 2.0 * np.real(np.einsum("...i,ij,...j->...", psi.conj(), M, psi))
    else:
        # tr[(M + M^H) rho] = 2 Re tr[M rho] for Hermitian rho
        val = 2.0 * np.real(np.einsum("ij,...ji->...", M, state.array))
    out = val / n2
    return out if state.is_batched else float(out)


def _step_operator_parts(params: ModelParameters, t: float) -> tuple[np.ndarray, np.ndarray]:
    """(R_t, K = R_t^H R_t) used by the one-step evolution."""
    Rt = rotate_coupling(params, t)
    return Rt, Rt.conj().T @ Rt


def evolve_pure(
    state: LatentState,
    params: ModelParameters,
    increment: float | np.ndarray,
    t: float,
    floor: float = NORM_FLOOR,
) -> LatentState:
    """One observation step of the pure-state recursion, renormalized.

    ``increment`` is the drive u consumed by the affine operator
    ``1 - (sigma^2/2) R_t^H R_t dt + R_t u``; for direct coupling the caller
    passes ``x * dt``, for derivative coupling the raw increment ``dx``.
    A batched state accepts a matching (batch,) increment vector.
    """
    Rt, K = _step_operator_parts(params, t)
    psi = state.array
    u = np.asarray(increment, dtype=np.float64)
    c = 0.5 * params.sigma**2 * params.dt
    phi = psi - c * (psi @ K.T) + u[..., None] * (psi @ Rt.T)
    raw = LatentState(StateKind.PURE, phi, state.log_norm)
    return raw.normalized(floor=floor)


def evolve_density(
    state: LatentState,
    params: ModelParameters,
    increment: float | np.ndarray,
    t: float,
    floor: float = NORM_FLOOR,
) -> LatentState:
    """One observation step of the density-matrix recursion, renormalized.

    Applies ``rho -> M rho M^H`` with the same affine M as the pure case,
    then symmetrizes (bounds floating-point Hermiticity drift) and rescales
    to unit trace.
    """
    Rt, K = _step_operator_parts(params, t)
    rho = state.array
    u = np.asarray(increment, dtype=np.float64)[..., None, None]
    c = 0.5 * params.sigma**2 * params.dt
    # M rho M^H expanded in powers of u, with B = 1 - c K (Hermitian):
    #   B rho B  +  u (R rho B + (R rho B)^H)  +  u^2 R rho R^H
    Brho = rho - c * (K @ rho)
    BrhoB = Brho - c * np.matmul(Brho, K)
    Rrho = np.matmul(Rt, rho)
    RrhoB = Rrho - c * np.matmul(Rrho, K)
    RrhoR = np.matmul(Rrho, Rt.conj().T)
    out = BrhoB + u * (RrhoB + np.conj(np.swapaxes(RrhoB, -1, -2))) + u**2 * RrhoR
    out = 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))
    raw = LatentState(StateKind.DENSITY, out, state.log_norm)
    return raw.normalized(floor=floor)


def evolve(state: LatentState, params: ModelParameters, increment, t: float, floor: float = NORM_FLOOR) -> LatentState:
    if state.kind is StateKind.PURE:
        return evolve_pure(state, params, increment, t, floor=floor)
    return evolve_density(state, params, increment, t, floor=floor)


def init_density(W: np.ndarray, floor: float = NORM_FLOOR) -> np.ndarray:
    """Density matrix ``W^H W / tr(W^H W)`` from an (r, D) factor.

    The quotient is positive semidefinite with rank <= r and unit trace.

    Raises:
        ZeroNormError: tr(W^H W) is (numerically) zero.
    """
    W = np.asarray(W, dtype=np.complex128)
    gram = W.conj().T @ W
    tr = float(np.real(np.trace(gram)))
    if tr <= floor:
        raise ZeroNormError("tr(W^H W) underflowed in init_density")
    rho = gram / tr
    return 0.5 * (rho + rho.conj().T)


def step_increment(params: ModelParameters, observation: float | np.ndarray) -> float | np.ndarray:
    """Convert one observation into the drive u consumed by the evolution."""
    if params.coupling is Coupling.DIRECT:
        return observation * params.dt
    return observation


def run_trajectory(
    params: ModelParameters,
    signal: np.ndarray,
    kind: StateKind = StateKind.PURE,
    floor: float = NORM_FLOOR,
) -> np.ndarray:
    """Pre-observation expectations <R_t + R_t^H> along one signal.

    ``signal`` is the per-step observation sequence: raw sample values for
    direct coupling, increments dx for derivative coupling.  Entry k of the
    result is computed from the state *before* observation k is consumed,
    i.e. exactly the prediction that the losses and samplers use.  Step k
    evaluates the rotating frame at t = k * dt.

    Raises:
        ZeroNormError: with the failing step index if the trajectory collapses.
    """
    obs = np.asarray(signal, dtype=np.float64)
    if obs.ndim != 1 or obs.size < 1:
        raise ValueError("signal must be a 1-D array with at least one sample")
    kind = StateKind(kind)
    increments = obs * params.dt if params.coupling is Coupling.DIRECT else obs
    c = 0.5 * params.sigma**2 * params.dt
    R = params.R
    out = np.empty(obs.size)
    # Inlined per-step math (identical to evolve_pure/evolve_density, which the
    # unit tests cross-check): reusing R_t @ state saves rebuilding R_t^H R_t.
    if kind is StateKind.PURE:
        psi = params.initial_state(StateKind.PURE).array
        for k in range(obs.size):
            phase_vec = np.exp(1j * params.omega * (k * params.dt))
            Rt = R * np.outer(phase_vec, phase_vec.conj())
            Rpsi = Rt @ psi
            out[k] = 2.0 * np.real(psi.conj() @ Rpsi)
            if k + 1 < obs.size:  # the final observation feeds no further prediction
                phi = psi - c * (Rt.conj().T @ Rpsi) + increments[k] * Rpsi
                n2 = np.real(phi.conj() @ phi)
                if n2 <= floor or not np.isfinite(n2):
                    raise ZeroNormError("trajectory collapsed", step=k)
                psi = phi / np.sqrt(n2)
    else:
        rho = params.initial_state(StateKind.DENSITY).array
        for k in range(obs.size):
            phase_vec = np.exp(1j * params.omega * (k * params.dt))
            Rt = R * np.outer(phase_vec, phase_vec.conj())
            Rrho = Rt @ rho
            out[k] = 2.0 * np.real(np.trace(Rrho))
            if k + 1 < obs.size:
                u = increments[k]
                RtH = Rt.conj().T
                Brho = rho - c * (RtH @ Rrho)
                BrhoB = Brho - c * ((Brho @ RtH) @ Rt)
                RrhoB = Rrho - c * ((Rrho @ RtH) @ Rt)
                nxt = BrhoB + u * (RrhoB + RrhoB.conj().T) + u**2 * (Rrho @ RtH)
                nxt = 0.5 * (nxt + nxt.conj().T)
                tr = np.real(np.trace(nxt))
                if tr <= floor or not np.isfinite(tr):
                    raise ZeroNormError("trajectory collapsed", step=k)
                rho = nxt / tr
    return out
