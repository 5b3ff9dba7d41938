"""Exact synthetic-process generators and their closed-form statistics.

Three families, each with machinery to verify generated samples against
analytic ground truth:

* damped sines with Gamma-distributed onset delays;
* stationary Gaussian processes with a Matern-1/2 x cosine spectral
  mixture kernel, simulated through the *exact* discretization of the
  equivalent linear state-space SDE (the discrete law coincides with the
  continuous one at the grid times, for any step size);
* filtered Poisson processes: decaying sinusoidal pulses at Poisson
  arrival times with random +/-A amplitudes, together with quadrature
  evaluation of the exact third-order two-time correlators that witness
  the broken time-reversal symmetry.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import QuadratureError
from .sampling import rng_stream
from .signals import SignalSet

# ---------------------------------------------------------------------------
# damped sines


@dataclass
class DampedSineSpec:
    """Damped sines with a random onset delay and a random frequency.

    ``delay_convention`` fixes how Gamma(alpha, beta) is read: "rate"
    (mean alpha/beta) or "scale" (mean alpha*beta).  The choice is
    recorded in the dataset metadata.
    """

    frequencies_hz: tuple[float, ...]
    sample_rate_hz: float
    length: int
    delay_alpha: float = 2.0
    delay_beta: float = 0.39
    delay_convention: str = "rate"
    decay_time_s: float = 0.008
    amplitude: float = 1.0

    def __post_init__(self):
        self.frequencies_hz = tuple(float(f) for f in np.atleast_1d(self.frequencies_hz))
        if not self.frequencies_hz:
            raise ValueError("at least one frequency is required")
        nyquist = self.sample_rate_hz / 2.0
        for f in self.frequencies_hz:
            if not (0 < f < nyquist):
                raise ValueError(f"frequency {f} Hz violates the Nyquist bound {nyquist} Hz")
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if min(self.delay_alpha, self.delay_beta, self.decay_time_s) <= 0:
            raise ValueError("delay_alpha, delay_beta and decay_time_s must be > 0")
        if self.delay_convention not in ("rate", "scale"):
            raise ValueError("delay_convention must be 'rate' or 'scale'")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate_hz

    def delay_scale(self) -> float:
        return 1.0 / self.delay_beta if self.delay_convention == "rate" else self.delay_beta

    def delay_mean(self) -> float:
        return self.delay_alpha * self.delay_scale()


def render_damped_sine(spec: DampedSineSpec, delay: float, freq_hz: float) -> np.ndarray:
    """One signal: silence before ``delay``, decaying sine of ``freq_hz`` after."""
    t = np.arange(spec.length) * spec.dt
    s = t - delay
    out = np.zeros(spec.length)
    live = s >= 0
    out[live] = spec.amplitude * np.exp(-s[live] / spec.decay_time_s) * np.sin(2 * np.pi * freq_hz * s[live])
    return out


def gen_damped_sines(spec: DampedSineSpec, n: int, seed: int) -> SignalSet:
    """n delayed damped sines; signal i uses stream (seed, i).

    Per signal the stream draws the delay first, then the frequency index.
    Warns loudly when >90% of the drawn delays exceed the signal duration
    (the dataset would be mostly silence).
    """
    duration = spec.length * spec.dt
    data = np.zeros((n, spec.length))
    delays = np.empty(n)
    for i in range(n):
        stream = rng_stream(seed, i)
        d = stream.gamma(spec.delay_alpha, spec.delay_scale())
        f = spec.frequencies_hz[int(stream.integers(len(spec.frequencies_hz)))]
        delays[i] = d
        data[i] = render_damped_sine(spec, d, f)
    if n > 0 and np.mean(delays >= duration) > 0.9:
        warnings.warn(
            f"damped-sine delays exceed the {duration:.4g}s signal window for "
            f">90% of signals under the '{spec.delay_convention}' Gamma convention; "
            "the dataset is mostly silence",
            stacklevel=2,
        )
    meta = {
        "kind": "damped_sines",
        "seed": seed,
        "frequencies_hz": list(spec.frequencies_hz),
        "sample_rate_hz": spec.sample_rate_hz,
        "delay_alpha": spec.delay_alpha,
        "delay_beta": spec.delay_beta,
        "delay_convention": spec.delay_convention,
        "decay_time_s": spec.decay_time_s,
        "amplitude": spec.amplitude,
        "draw_order": "delay, frequency-index",
    }
    return SignalSet(data, dt=spec.dt, metadata=meta)


# ---------------------------------------------------------------------------
# Matern spectral mixture GP via exact state-space discretization


@dataclass(frozen=True)
class MsmComponent:
    """One Lorentzian pair: variance sigma^2, decay lam (1/s), frequency omega (rad/s)."""

    sigma: float
    lam: float
    omega: float


@dataclass
class MsmSpec:
    """Sum-of-components kernel C(tau) = sum_j sigma_j^2 e^(-lam_j |tau|) cos(omega_j tau)."""

    components: tuple[MsmComponent, ...]
    dt: float

    def __post_init__(self):
        comps = tuple(c if isinstance(c, MsmComponent) else MsmComponent(*c) for c in self.components)
        if not comps:
            raise ValueError("at least one component is required")
        for c in comps:
            if c.sigma <= 0 or c.lam <= 0:
                raise ValueError("sigma and lam must be > 0")
            if c.omega < 0:
                raise ValueError("omega must be >= 0")
        if not (self.dt > 0):
            raise ValueError("dt must be > 0")
        self.components = comps

    @property
    def state_dim(self) -> int:
        return 2 * len(self.components)


def msm_covariance(spec: MsmSpec, tau) -> np.ndarray | float:
    """Analytic kernel at lag(s) tau; even in tau (|tau| in the exponential)."""
    tau_arr = np.asarray(tau, dtype=np.float64)
    out = np.zeros_like(tau_arr)
    for c in spec.components:
        out = out + c.sigma**2 * np.exp(-c.lam * np.abs(tau_arr)) * np.cos(c.omega * tau_arr)
    return out if out.ndim else float(out)


@dataclass
class StateSpaceModel:
    """Linear time-invariant SDE dg = F g dt + L dbeta, x = H g.

    Block-diagonal with one 2x2 block [[-lam, -omega], [omega, -lam]] per
    kernel component; the Brownian diffusion Q = 2 lam sigma^2 I per block
    makes the stationary marginal variance of each block sigma^2 I.
    ``components`` are kept so the discretization can use closed forms.
    """

    components: tuple[MsmComponent, ...]
    F: np.ndarray = field(init=False)
    L: np.ndarray = field(init=False)
    Q: np.ndarray = field(init=False)
    H: np.ndarray = field(init=False)

    def __post_init__(self):
        comps = tuple(self.components)
        dim = 2 * len(comps)
        F = np.zeros((dim, dim))
        Q = np.zeros((dim, dim))
        H = np.zeros(dim)
        for j, c in enumerate(comps):
            k = 2 * j
            F[k : k + 2, k : k + 2] = [[-c.lam, -c.omega], [c.omega, -c.lam]]
            Q[k : k + 2, k : k + 2] = 2.0 * c.lam * c.sigma**2 * np.eye(2)
            H[k] = 1.0
        self.components = comps
        self.F = F
        self.L = np.eye(dim)
        self.Q = Q
        self.H = H

    @property
    def state_dim(self) -> int:
        return 2 * len(self.components)

    def stationary_std(self) -> np.ndarray:
        """Per-coordinate stationary standard deviations (sigma_j, sigma_j, ...)."""
        return np.repeat([c.sigma for c in self.components], 2)


def ssm_from_msm(spec: MsmSpec) -> StateSpaceModel:
    return StateSpaceModel(spec.components)


def discretize(ssm: StateSpaceModel, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step transition Ad and noise covariance Sd for step dt.

    Per block: Ad = e^(-lam dt) * Rot(omega dt) and
    Sd = sigma^2 (1 - e^(-2 lam dt)) I2, which reproduce the continuous
    law at the grid times exactly (lam = 0 degenerates to a pure rotation
    with no injected noise).
    """
    dim = ssm.state_dim
    Ad = np.zeros((dim, dim))
    Sd = np.zeros((dim, dim))
    for j, c in enumerate(ssm.components):
        k = 2 * j
        decay = np.exp(-c.lam * dt)
        th = c.omega * dt
        Ad[k : k + 2, k : k + 2] = decay * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        Sd[k : k + 2, k : k + 2] = c.sigma**2 * (1.0 - np.exp(-2.0 * c.lam * dt)) * np.eye(2)
    return Ad, Sd


def gen_gp(
    spec: MsmSpec | StateSpaceModel,
    n: int,
    length: int,
    seed: int,
    init: str = "stationary",
    dt: float | None = None,
) -> SignalSet:
    """n GP samples from the exact discrete recursion g[k+1] = Ad g[k] + q[k].

    ``init`` is "stationary" (g0 ~ N(0, blockdiag(sigma_j^2 I2)), samples
    stationary from the first point) or "zero" (g0 = 0, reproducing the
    early-time transient).  Signal i uses stream (seed, i), drawing g0
    first and then the (length-1, state_dim) noise block.  Passing a
    StateSpaceModel directly requires ``dt`` and skips MsmSpec validation
    (admitting degenerate components such as lam = 0).
    """
    if init not in ("stationary", "zero"):
        raise ValueError("init must be 'stationary' or 'zero'")
    if isinstance(spec, StateSpaceModel):
        if dt is None:
            raise ValueError("dt is required when passing a StateSpaceModel")
        ssm, step = spec, float(dt)
    else:
        ssm, step = ssm_from_msm(spec), spec.dt
    Ad, Sd = discretize(ssm, step)
    noise_std = np.sqrt(np.diag(Sd))
    g0_std = ssm.stationary_std()
    dim = ssm.state_dim
    g = np.zeros((n, dim))
    noise = np.zeros((n, max(length - 1, 0), dim))
    for i in range(n):
        stream = rng_stream(seed, i)
        z0 = stream.standard_normal(dim)
        if init == "stationary":
            g[i] = g0_std * z0
        if length > 1:
            noise[i] = stream.standard_normal((length - 1, dim))
    data = np.empty((n, length))
    data[:, 0] = g @ ssm.H
    AdT = Ad.T
    for k in range(1, length):
        g = g @ AdT + noise_std * noise[:, k - 1]
        data[:, k] = g @ ssm.H
    meta = {
        "kind": "gp_msm",
        "seed": seed,
        "init": init,
        "components": [[c.sigma, c.lam, c.omega] for c in ssm.components],
        "draw_order": "g0, noise-block",
    }
    return SignalSet(data, dt=step, metadata=meta)


# ---------------------------------------------------------------------------
# filtered Poisson process


@dataclass
class FppSpec:
    """Superposition of pulses phi(t) = e^(-t/tau) sin(omega t) (t >= 0).

    Arrivals form a Poisson stream of the given intensity; each pulse gets
    amplitude +amplitude or -amplitude with equal probability.  The signal
    is sampled on the dt grid and the first ``burn_in`` samples (the
    non-stationary head) are discarded.
    """

    intensity: float
    amplitude: float
    tau: float
    omega: float
    dt: float
    length: int
    burn_in: int = 0

    def __post_init__(self):
        if self.intensity < 0:
            raise ValueError("intensity must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if not (self.dt > 0):
            raise ValueError("dt must be > 0")
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if not (0 <= self.burn_in < self.length):
            raise ValueError("burn_in must satisfy 0 <= burn_in < length")

    @property
    def kept_length(self) -> int:
        return self.length - self.burn_in


def pulse(spec: FppSpec, s) -> np.ndarray | float:
    """The causal pulse shape phi(s)."""
    s_arr = np.asarray(s, dtype=np.float64)
    out = np.where(s_arr >= 0, np.exp(-np.clip(s_arr, 0, None) / spec.tau) * np.sin(spec.omega * s_arr), 0.0)
    return out if out.ndim else float(out)


def _poisson_arrivals(stream: np.random.Generator, rate: float, duration: float) -> np.ndarray:
    """Arrival times in (0, duration) from exponential gaps at ``rate``."""
    if rate == 0:
        return np.empty(0)
    mean_count = rate * duration
    block = max(8, int(mean_count + 10.0 * np.sqrt(mean_count) + 10))
    gaps = stream.exponential(1.0 / rate, size=block)
    total = gaps.sum()
    while total < duration:  # astronomically rare with the block margin
        extra = stream.exponential(1.0 / rate, size=block)
        gaps = np.concatenate([gaps, extra])
        total = gaps.sum()
    times = np.cumsum(gaps)
    return times[times < duration]


def render_pulses(spec: FppSpec, arrival_times: np.ndarray, amplitudes: np.ndarray) -> np.ndarray:
    """Evaluate sum_k A_k phi(t - t_k) exactly on the full dt grid.

    Arrivals stay in continuous time; each pulse is propagated to grid
    points through the closed-form complex recursion
    z[j] = z[j-1] * e^((-1/tau + i omega) dt) + injected terms, X = Im z.
    """
    times = np.asarray(arrival_times, dtype=np.float64)
    amps = np.asarray(amplitudes, dtype=np.float64)
    grid_w = np.zeros(spec.length, dtype=np.complex128)
    if times.size:
        j = np.floor(times / spec.dt).astype(np.int64) + 1
        keep = j < spec.length
        j, times, amps = j[keep], times[keep], amps[keep]
        w = amps * np.exp((-1.0 / spec.tau + 1j * spec.omega) * (j * spec.dt - times))
        np.add.at(grid_w, j, w)
    decay = np.exp((-1.0 / spec.tau + 1j * spec.omega) * spec.dt)
    z = np.zeros(spec.length, dtype=np.complex128)
    acc = 0.0 + 0.0j
    for idx in range(spec.length):
        acc = acc * decay + grid_w[idx]
        z[idx] = acc
    return z.imag


def gen_fpp(spec: FppSpec, n: int, seed: int, stream_offset: int = 0) -> SignalSet:
    """n filtered-Poisson samples with the burn-in head removed.

    Signal i uses stream (seed, stream_offset + i): arrival gaps first,
    then the +/- signs.  ``stream_offset`` lets large runs be generated in
    chunks while staying sample-for-sample identical to one big call.
    Internally the grid recursion is vectorized over blocks of signals.
    """
    duration = spec.length * spec.dt
    kept = spec.kept_length
    data = np.empty((n, kept))
    decay = np.exp((-1.0 / spec.tau + 1j * spec.omega) * spec.dt)
    block = max(1, min(n, int(2.0e8 / (16 * spec.length + 1))))
    for start in range(0, n, block):
        size = min(block, n - start)
        grid_w = np.zeros((size, spec.length), dtype=np.complex128)
        for i in range(size):
            stream = rng_stream(seed, stream_offset + start + i)
            times = _poisson_arrivals(stream, spec.intensity, duration)
            signs = spec.amplitude * (2.0 * (stream.random(times.size) < 0.5) - 1.0)
            if times.size:
                j = np.floor(times / spec.dt).astype(np.int64) + 1
                keep = j < spec.length
                jj, tt, aa = j[keep], times[keep], signs[keep]
                w = aa * np.exp((-1.0 / spec.tau + 1j * spec.omega) * (jj * spec.dt - tt))
                np.add.at(grid_w[i], jj, w)
        z = np.zeros(size, dtype=np.complex128)
        for idx in range(spec.length):
            z = z * decay + grid_w[:, idx]
            if idx >= spec.burn_in:
                data[start : start + size, idx - spec.burn_in] = z.imag
    meta = {
        "kind": "fpp",
        "seed": seed,
        "stream_offset": stream_offset,
        "intensity": spec.intensity,
        "amplitude": spec.amplitude,
        "tau": spec.tau,
        "omega": spec.omega,
        "raw_length": spec.length,
        "burn_in": spec.burn_in,
        "draw_order": "gaps, signs",
    }
    return SignalSet(data, dt=spec.dt, metadata=meta)


#: Lower integration limits are truncated this many pulse decay times back.
FPP_TAIL_CUT = 20.0
#: Absolute tolerance demanded of each adaptive quadrature.
FPP_QUAD_TOL = 1e-8


def _quad(f, a: float, b: float, tol: float) -> float:
    with warnings.catch_warnings():
        # a blown subdivision budget surfaces as QuadratureError below
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, epsabs=tol, epsrel=0.0, limit=400)
    if err > tol:
        raise QuadratureError(f"quadrature error estimate {err:.3e} exceeds tolerance {tol:.3e}")
    return val


def fpp_exact_correlators(
    spec: FppSpec,
    t1: float,
    t2: float,
    quad_tol: float = FPP_QUAD_TOL,
) -> tuple[float, float]:
    """Stationary (E[X^3(t1) X(t2)], E[X(t1) X^3(t2)]) for t2 >= t1.

    Combines the overlap integrals
    I_{n,m} = integral phi^n(s) phi^m(s + t2 - t1) ds with the Poisson
    cumulant expansion (amplitudes +/-A contribute A^4 to every term):

        E[X^3(t1) X(t2)] = lam A^4 I31 + 3 lam^2 A^4 I11 * I20
        E[X(t1) X^3(t2)] = lam A^4 I13 + 3 lam^2 A^4 I11 * (I02_head + I02_mid)

    The infinite history is truncated FPP_TAIL_CUT pulse lifetimes back;
    at t1 = t2 the two values coincide by symmetry.

    Raises:
        QuadratureError: an integral's error estimate exceeded ``quad_tol``.
    """
    if t2 < t1:
        raise ValueError("requires t2 >= t1")
    lag = t2 - t1
    cut = FPP_TAIL_CUT * spec.tau
    phi = lambda s: np.exp(-s / spec.tau) * np.sin(spec.omega * s)  # noqa: E731 (s >= 0 on all ranges below)
    i20 = _quad(lambda s: phi(s) ** 2, 0.0, cut, quad_tol)
    i11 = _quad(lambda s: phi(s) * phi(s + lag), 0.0, cut, quad_tol)
    i31 = _quad(lambda s: phi(s) ** 3 * phi(s + lag), 0.0, cut, quad_tol)
    i13 = _quad(lambda s: phi(s) * phi(s + lag) ** 3, 0.0, cut, quad_tol)
    i02_head = _quad(lambda s: phi(s) ** 2, lag, lag + cut, quad_tol)
    i02_mid = _quad(lambda s: phi(s) ** 2, 0.0, lag, quad_tol) if lag > 0 else 0.0
    lam = spec.intensity
    a4 = spec.amplitude**4
    c31 = lam * a4 * i31 + 3.0 * lam**2 * a4 * i11 * i20
    c13 = lam * a4 * i13 + 3.0 * lam**2 * a4 * i11 * (i02_head + i02_mid)
    return c31, c13


def fpp_correlator_curve(
    spec: FppSpec,
    t1: float,
    lags: np.ndarray,
    quad_tol: float = FPP_QUAD_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized fpp_exact_correlators over ``lags`` (t2 = t1 + lag)."""
    c31 = np.empty(len(lags))
    c13 = np.empty(len(lags))
    for i, lag in enumerate(lags):
        c31[i], c13[i] = fpp_exact_correlators(spec, t1, t1 + float(lag), quad_tol=quad_tol)
    return c31, c13
