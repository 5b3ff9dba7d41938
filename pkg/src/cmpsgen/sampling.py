"""Autoregressive generation from trained parameters with temperature control.

Every sample owns an independent, counter-based random stream derived
from (master seed, sample index), so outputs are identical no matter how
samples are batched, ordered, or parallelized.  Noise for step k is drawn
before the state update that consumes it, and the expectation driving
step k is taken before the observation is absorbed -- the same
convention as the training losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core
from .core import Coupling, LatentState, ModelParameters, StateKind
from .errors import ZeroNormError
from .signals import SignalSet

_MASK64 = (1 << 64) - 1


def rng_stream(master_seed: int, stream_index: int) -> np.random.Generator:
    """Independent, reproducible random stream for one sample.

    Derivation: a Philox-4x64 counter-based generator keyed with the
    2-word key ``[master_seed mod 2^64, stream_index mod 2^64]`` and a
    zero counter.  Distinct indices give statistically independent
    streams; the same (seed, index) pair always yields the same stream.
    """
    key = np.array([int(master_seed) & _MASK64, int(stream_index) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class SampleConfig:
    """Knobs for autoregressive generation.

    ``temperature`` scales the driving noise (variance T for direct
    coupling, T * dt for the derivative/SDE form); T = 0 is fully
    deterministic.  ``coupling`` overrides the model's coupling when set.
    """

    temperature: float = 0.0
    n_steps: int = 1
    n_samples: int = 1
    seed: int = 0
    state_kind: StateKind = StateKind.PURE
    coupling: Coupling | None = None
    x0: float = 0.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        self.state_kind = StateKind(self.state_kind)
        if self.coupling is not None:
            self.coupling = Coupling(self.coupling)


def _noise_matrix(config: SampleConfig) -> np.ndarray:
    """(n_samples, n_steps) standard normals, one stream per sample."""
    z = np.empty((config.n_samples, config.n_steps))
    for i in range(config.n_samples):
        z[i] = rng_stream(config.seed, i).standard_normal(config.n_steps)
    return z


def _base_metadata(params: ModelParameters, config: SampleConfig, coupling: Coupling) -> dict:
    return {
        "kind": "model_samples",
        "coupling": coupling.value,
        "state_kind": config.state_kind.value,
        "temperature": config.temperature,
        "seed": config.seed,
        "n_steps": config.n_steps,
        "x0": config.x0,
        "bond_dim": params.bond_dim,
        "model_dt": params.dt,
    }


def sample_direct(params: ModelParameters, config: SampleConfig) -> SignalSet:
    """Generate by x[k] = <R_t + R_t^H> + sqrt(T) * z, z ~ N(0, 1).

    The state is then evolved with the increment ``x[k] * dt``.  The noise
    variance is the temperature itself; the model time step does not enter
    it at generation time.
    """
    coupling = config.coupling or params.coupling
    if coupling is not Coupling.DIRECT:
        raise ValueError("sample_direct requires direct coupling")
    n, steps = config.n_samples, config.n_steps
    params = params.with_updates(coupling=Coupling.DIRECT)
    out = np.empty((n, steps))
    if n > 0:
        scale = np.sqrt(config.temperature)
        z = _noise_matrix(config) if config.temperature > 0 else np.zeros((n, steps))
        state = params.initial_state(config.state_kind, batch=n)
        for k in range(steps):
            t = k * params.dt
            Rt = core.rotate_coupling(params, t)
            try:
                e = expectation_batch(state, Rt)
                x = e + scale * z[:, k]
                state = core.evolve(state, params, x * params.dt, t)
            except ZeroNormError as err:
                raise ZeroNormError("sampling trajectory collapsed", step=k) from err
            out[:, k] = x
    return SignalSet(out, dt=params.dt, metadata=_base_metadata(params, config, Coupling.DIRECT))


def sample_sde(params: ModelParameters, config: SampleConfig) -> SignalSet:
    """Generate by integrating dx = A <R_t + R_t^H> dt + sqrt(T) dbeta.

    ``dbeta`` are Brownian increments of variance dt; the state is evolved
    with each realized dx and the running sum (starting at ``x0``) is
    recorded.  At T = 0 the trajectory is the deterministic drift.
    """
    coupling = config.coupling or params.coupling
    if coupling is not Coupling.DERIVATIVE:
        raise ValueError("sample_sde requires derivative coupling")
    n, steps = config.n_samples, config.n_steps
    params = params.with_updates(coupling=Coupling.DERIVATIVE)
    out = np.empty((n, steps))
    if n > 0:
        scale = np.sqrt(config.temperature * params.dt)
        z = _noise_matrix(config) if config.temperature > 0 else np.zeros((n, steps))
        state = params.initial_state(config.state_kind, batch=n)
        x = np.full(n, config.x0)
        for k in range(steps):
            t = k * params.dt
            Rt = core.rotate_coupling(params, t)
            try:
                e = expectation_batch(state, Rt)
                dx = params.A * e * params.dt + scale * z[:, k]
                state = core.evolve(state, params, dx, t)
            except ZeroNormError as err:
                raise ZeroNormError("sampling trajectory collapsed", step=k) from err
            x = x + dx
            out[:, k] = x
    return SignalSet(out, dt=params.dt, metadata=_base_metadata(params, config, Coupling.DERIVATIVE))


def sample(params: ModelParameters, config: SampleConfig) -> SignalSet:
    """Dispatch on the effective coupling."""
    coupling = config.coupling or params.coupling
    if coupling is Coupling.DIRECT:
        return sample_direct(params, config)
    return sample_sde(params, config)


def expectation_batch(state: LatentState, M: np.ndarray) -> np.ndarray:
    """<M + M^H> for a batched state, as a (batch,) array."""
    val = core.expectation(state, M)
    return np.atleast_1d(np.asarray(val))
