"""Likelihood losses, exact gradients through the trajectory, and training.

Two independent implementations of every loss exist on purpose: a plain
numpy path built on :func:`cmpsgen.core.run_trajectory` (the reference
used by tests and finite-difference checks) and the differentiable path
in :mod:`cmpsgen._jaxloss` that supplies reverse-mode gradients for the
optimizer.  Gradients of complex parameters are reported as independent
partials with respect to the real and imaginary parts.

Training is deterministic end to end: the minibatch drawn at step k is a
pure function of (seed, k), the optimizer is plain Adam in float64, and a
checkpoint stores everything needed to continue a run bit-identically.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path

import numpy as np

from . import core, _jaxloss
from .core import Coupling, ModelParameters, StateKind
from .errors import ConfigError, NonFiniteError
from .sampling import rng_stream
from .signals import SignalSet

CHECKPOINT_SCHEMA_VERSION = 1


class LossKind(str, Enum):
    DIRECT_SQUARED = "direct_squared"
    SDE_SQUARED = "sde_squared"
    GIRSANOV = "girsanov"


# ---------------------------------------------------------------------------
# regularizers


def nyquist_omega_var(sample_rate_hz: float) -> float:
    """Prior variance for omega from the Nyquist heuristic sigma_f = s/4."""
    return (np.pi * sample_rate_hz / 2.0) ** 2


def reg_H(omega: np.ndarray, omega_var: float) -> float:
    """Gaussian prior penalty sum(omega^2) / (2 sigma_omega^2)."""
    return float(np.sum(np.asarray(omega) ** 2) / (2.0 * omega_var))


def reg_R(R: np.ndarray, r_var: float) -> float:
    """Gaussian prior penalty sum(|R_ij|^2) / (2 sigma_R^2)."""
    return float(np.sum(np.abs(np.asarray(R)) ** 2) / (2.0 * r_var))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class LossConfig:
    """Which likelihood to optimize and what is learnable.

    ``reg_omega_var`` / ``reg_r_var`` are the prior variances (penalty off
    when None); providing ``sample_rate_hz`` alone turns on the omega
    penalty with the Nyquist-derived default.  ``density_rank`` switches
    training to density-matrix evolution with a rank-r initial factor.
    """

    kind: LossKind = LossKind.SDE_SQUARED
    reg_omega_var: float | None = None
    reg_r_var: float | None = None
    sample_rate_hz: float | None = None
    learn_a: bool = True
    learn_psi0: bool = True
    density_rank: int | None = None

    def __post_init__(self):
        self.kind = LossKind(self.kind)
        for name in ("reg_omega_var", "reg_r_var"):
            v = getattr(self, name)
            if v is not None and not (v > 0):
                raise ConfigError(f"{name} must be > 0 when present", key=name)
        if self.density_rank is not None and self.density_rank < 1:
            raise ConfigError("density_rank must be >= 1", key="density_rank")

    @property
    def state_kind(self) -> StateKind:
        return StateKind.DENSITY if self.density_rank is not None else StateKind.PURE

    def effective_omega_var(self) -> float | None:
        if self.reg_omega_var is not None:
            return self.reg_omega_var
        if self.sample_rate_hz is not None:
            return nyquist_omega_var(self.sample_rate_hz)
        return None

    def expected_coupling(self) -> Coupling:
        return Coupling.DIRECT if self.kind is LossKind.DIRECT_SQUARED else Coupling.DERIVATIVE


@dataclass
class TrainConfig:
    batch_size: int = 8
    max_steps: int = 1000
    learning_rate: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay_rate: float = 1.0  # multiplicative decay applied every lr_decay_steps
    lr_decay_steps: int = 1000
    checkpoint_interval: int = 0  # 0: only the final checkpoint
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", key="batch_size")
        if not (self.learning_rate >= 0):
            raise ConfigError("learning_rate must be >= 0", key="learning_rate")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0", key="max_steps")

    def lr_at(self, step: int) -> float:
        if self.lr_decay_rate == 1.0:
            return self.learning_rate
        return self.learning_rate * self.lr_decay_rate ** (step / max(self.lr_decay_steps, 1))


@dataclass
class InitConfig:
    """Randomized starting point; deterministic for a given seed.

    omega ~ N(0, omega_std^2); R entries are complex Gaussians with
    E|R_ij|^2 = (r_scale^2) / D; psi0 is the one-hot first basis vector.
    With ``density_rank`` an (r, D) complex Gaussian factor W is drawn
    with E tr(W^H W) = 1.
    """

    bond_dim: int
    dt: float
    sigma: float = 1.0
    coupling: Coupling = Coupling.DIRECT
    zero_r_diagonal: bool = False
    density_rank: int | None = None
    omega_std: float = 0.0
    r_scale: float = 1.0
    a_init: float = 1.0


def init_params(config: InitConfig, seed: int) -> ModelParameters:
    """Draw initial model parameters (order: omega, R, W)."""
    d = config.bond_dim
    stream = rng_stream(seed, 0)
    omega = config.omega_std * stream.standard_normal(d)
    scale = config.r_scale / math.sqrt(2.0 * d)
    R = scale * (stream.standard_normal((d, d)) + 1j * stream.standard_normal((d, d)))
    psi0 = np.zeros(d, dtype=np.complex128)
    psi0[0] = 1.0
    W = None
    if config.density_rank is not None:
        r = config.density_rank
        wscale = 1.0 / math.sqrt(2.0 * r * d)
        W = wscale * (stream.standard_normal((r, d)) + 1j * stream.standard_normal((r, d)))
    return ModelParameters(
        bond_dim=d,
        omega=omega,
        R=R,
        A=config.a_init,
        sigma=config.sigma,
        dt=config.dt,
        psi0=psi0,
        W=W,
        zero_r_diagonal=config.zero_r_diagonal,
        coupling=config.coupling,
    )


# ---------------------------------------------------------------------------
# numpy reference losses (also the finite-difference oracle path)


def loss_direct(params: ModelParameters, signal: np.ndarray, state_kind: StateKind | None = None) -> float:
    """Sum of squared one-step residuals (x_k - <R_t + R_t^H>_pre)^2."""
    if params.coupling is not Coupling.DIRECT:
        raise ValueError("loss_direct requires direct coupling")
    signal = np.asarray(signal, dtype=np.float64)
    kind = _resolve_state_kind(params, state_kind)
    es = core.run_trajectory(params, signal, kind)
    return float(np.sum((signal - es) ** 2))


def loss_sde(params: ModelParameters, signal: np.ndarray, state_kind: StateKind | None = None) -> float:
    """Sum of squared residuals (dx/dt - A <R_t + R_t^H>_pre)^2 over increments."""
    if params.coupling is not Coupling.DERIVATIVE:
        raise ValueError("loss_sde requires derivative coupling")
    signal = np.asarray(signal, dtype=np.float64)
    if signal.size < 2:
        raise ValueError("loss_sde needs at least 2 samples")
    increments = np.diff(signal)
    kind = _resolve_state_kind(params, state_kind)
    es = core.run_trajectory(params, increments, kind)
    return float(np.sum((increments / params.dt - params.A * es) ** 2))


def girsanov_loss(params: ModelParameters, signal: np.ndarray, state_kind: StateKind | None = None) -> float:
    """Discretized path log-likelihood relative to Brownian motion, negated.

    Differs from :func:`loss_sde` by a data-only constant and the factor
    dt/2, so its parameter gradients are proportional to the squared form's.
    """
    if params.coupling is not Coupling.DERIVATIVE:
        raise ValueError("girsanov_loss requires derivative coupling")
    signal = np.asarray(signal, dtype=np.float64)
    if signal.size < 2:
        raise ValueError("girsanov_loss needs at least 2 samples")
    increments = np.diff(signal)
    kind = _resolve_state_kind(params, state_kind)
    es = core.run_trajectory(params, increments, kind)
    a = params.A
    return float(-a * np.sum(es * increments) + 0.5 * a**2 * np.sum(es**2) * params.dt)


def _resolve_state_kind(params: ModelParameters, state_kind: StateKind | None) -> StateKind:
    if state_kind is not None:
        return StateKind(state_kind)
    return StateKind.DENSITY if params.W is not None else StateKind.PURE


_LOSS_FNS = {
    LossKind.DIRECT_SQUARED: loss_direct,
    LossKind.SDE_SQUARED: loss_sde,
    LossKind.GIRSANOV: girsanov_loss,
}


def total_loss_reference(
    params: ModelParameters,
    batch: np.ndarray | SignalSet,
    config: LossConfig,
) -> tuple[float, float, float]:
    """(total, data, reg) via the numpy path: mean per-signal loss + penalties."""
    data_arr = batch.data if isinstance(batch, SignalSet) else np.asarray(batch, dtype=np.float64)
    loss_fn = _LOSS_FNS[config.kind]
    data = float(np.mean([loss_fn(params, row, config.state_kind) for row in data_arr]))
    reg = 0.0
    ov = config.effective_omega_var()
    if ov is not None:
        reg += reg_H(params.omega, ov)
    if config.reg_r_var is not None:
        reg += reg_R(params.R, config.reg_r_var)
    return data + reg, data, reg


# ---------------------------------------------------------------------------
# parameter <-> flat-real-array bridge


def params_to_theta(params: ModelParameters) -> dict[str, np.ndarray]:
    theta = {
        "omega": params.omega.copy(),
        "r_re": params.R.real.copy(),
        "r_im": params.R.imag.copy(),
        "psi_re": params.psi0.real.copy(),
        "psi_im": params.psi0.imag.copy(),
        "a": np.float64(params.A),
    }
    if params.W is not None:
        theta["w_re"] = params.W.real.copy()
        theta["w_im"] = params.W.imag.copy()
    return theta


def theta_to_params(theta: dict[str, np.ndarray], template: ModelParameters) -> ModelParameters:
    W = None
    if "w_re" in theta:
        W = theta["w_re"] + 1j * theta["w_im"]
    return template.with_updates(
        omega=np.asarray(theta["omega"], dtype=np.float64),
        R=theta["r_re"] + 1j * theta["r_im"],
        psi0=theta["psi_re"] + 1j * theta["psi_im"],
        A=float(theta["a"]),
        W=W,
    )


def _static_config(params: ModelParameters, config: LossConfig) -> dict:
    use_density = config.state_kind is StateKind.DENSITY
    return {
        "state_kind": "density" if use_density else "pure",
        "coupling": params.coupling.value,
        "loss_kind": config.kind.value,
        "zero_diag": params.zero_r_diagonal,
        "use_w": use_density and params.W is not None,
    }


def _reg_coeffs(config: LossConfig) -> tuple[float, float]:
    ov = config.effective_omega_var()
    h_coeff = 0.0 if ov is None else 1.0 / (2.0 * ov)
    r_coeff = 0.0 if config.reg_r_var is None else 1.0 / (2.0 * config.reg_r_var)
    return h_coeff, r_coeff


def _mask_frozen(grads: dict[str, np.ndarray], config: LossConfig) -> dict[str, np.ndarray]:
    if not config.learn_a:
        grads["a"] = np.zeros_like(grads["a"])
    if not config.learn_psi0:
        for key in ("psi_re", "psi_im", "w_re", "w_im"):
            if key in grads:
                grads[key] = np.zeros_like(grads[key])
    return grads


def loss_and_gradient(
    params: ModelParameters,
    batch: np.ndarray | SignalSet,
    config: LossConfig,
) -> tuple[float, float, float, dict[str, np.ndarray]]:
    """(total, data, reg, grads) of the mean batch loss.

    Gradients cover every learnable coordinate (real/imaginary parts
    independently); constrained R-diagonal entries and frozen fields are
    exactly zero.

    Raises:
        NonFiniteError: a NaN/Inf appeared in the loss or a gradient entry.
    """
    data_arr = batch.data if isinstance(batch, SignalSet) else np.asarray(batch, dtype=np.float64)
    if data_arr.ndim != 2 or data_arr.shape[0] < 1:
        raise ValueError("batch must be a nonempty (n, length) array")
    if params.coupling is not config.expected_coupling():
        raise ConfigError(
            f"loss kind {config.kind.value} requires {config.expected_coupling().value} coupling",
            key="kind",
        )
    theta = params_to_theta(params)
    h_coeff, r_coeff = _reg_coeffs(config)
    total, data, reg, grads = _jaxloss.value_and_grad(
        theta, data_arr, params.sigma, params.dt, h_coeff, r_coeff, **_static_config(params, config)
    )
    grads = _mask_frozen(grads, config)
    if not np.isfinite(total):
        raise NonFiniteError("loss is not finite")
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"gradient for '{key}' is not finite")
    return total, data, reg, grads


def gradient(
    params: ModelParameters,
    batch: np.ndarray | SignalSet,
    config: LossConfig,
) -> dict[str, np.ndarray]:
    """Reverse-mode gradient of the mean batch loss; see loss_and_gradient."""
    return loss_and_gradient(params, batch, config)[3]


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    count: int = 0

    @classmethod
    def zeros_like(cls, theta: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in theta.items()},
            v={k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in theta.items()},
        )


def adam_step(
    theta: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> dict[str, np.ndarray]:
    """One Adam update, in place on ``state``, returning the new theta."""
    state.count += 1
    t = state.count
    out = {}
    for key, value in theta.items():
        g = grads[key]
        state.m[key] = beta1 * state.m[key] + (1.0 - beta1) * g
        state.v[key] = beta2 * state.v[key] + (1.0 - beta2) * g * g
        mhat = state.m[key] / (1.0 - beta1**t)
        vhat = state.v[key] / (1.0 - beta2**t)
        out[key] = np.asarray(value, dtype=np.float64) - lr * mhat / (np.sqrt(vhat) + eps)
    return out


# ---------------------------------------------------------------------------
# checkpoints


def _complex_to_pairs(arr: np.ndarray) -> list:
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def _pairs_to_complex(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=np.float64)
    return arr[..., 0] + 1j * arr[..., 1]


def save_checkpoint(
    path: str | Path,
    params: ModelParameters,
    step: int,
    opt_state: AdamState | None = None,
    master_seed: int | None = None,
    extra: dict | None = None,
) -> Path:
    """Write a JSON checkpoint (schema v1) atomically."""
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "step": int(step),
        "model": {
            "bond_dim": params.bond_dim,
            "dt": params.dt,
            "sigma": params.sigma,
            "coupling": params.coupling.value,
            "zero_r_diagonal": params.zero_r_diagonal,
            "A": params.A,
            "omega": params.omega.tolist(),
            "R": _complex_to_pairs(params.R),
            "psi0": _complex_to_pairs(params.psi0),
            "W": None if params.W is None else _complex_to_pairs(params.W),
        },
        "rng": {
            "scheme": "philox-counter-by-step",
            "master_seed": master_seed,
            "next_step": int(step),
        },
        "optimizer": None,
    }
    if opt_state is not None:
        payload["optimizer"] = {
            "name": "adam",
            "count": opt_state.count,
            "m": {k: np.asarray(v).tolist() for k, v in opt_state.m.items()},
            "v": {k: np.asarray(v).tolist() for k, v in opt_state.v.items()},
        }
    if extra:
        payload["extra"] = extra
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=1) + "\n")
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | Path) -> tuple[ModelParameters, int, AdamState | None, dict]:
    """Read a checkpoint back into (params, step, optimizer state, raw payload)."""
    payload = json.loads(Path(path).read_text())
    if payload.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ConfigError(f"unsupported checkpoint schema {payload.get('schema_version')}")
    m = payload["model"]
    params = ModelParameters(
        bond_dim=m["bond_dim"],
        omega=np.asarray(m["omega"], dtype=np.float64),
        R=_pairs_to_complex(m["R"]),
        A=m["A"],
        sigma=m["sigma"],
        dt=m["dt"],
        psi0=_pairs_to_complex(m["psi0"]),
        W=None if m.get("W") is None else _pairs_to_complex(m["W"]),
        zero_r_diagonal=m["zero_r_diagonal"],
        coupling=Coupling(m["coupling"]),
    )
    opt_state = None
    if payload.get("optimizer"):
        opt = payload["optimizer"]
        opt_state = AdamState(
            m={k: np.asarray(v, dtype=np.float64) for k, v in opt["m"].items()},
            v={k: np.asarray(v, dtype=np.float64) for k, v in opt["v"].items()},
            count=opt["count"],
        )
    return params, int(payload["step"]), opt_state, payload


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    params: ModelParameters
    curve: np.ndarray  # columns: step, data_loss, reg_loss, total_loss
    final_step: int
    checkpoint_paths: list[Path] = field(default_factory=list)


def write_loss_csv(curve: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("step,data_loss,reg_loss,total\n")
        for row in curve:
            fh.write(f"{int(row[0])},{row[1]!r},{row[2]!r},{row[3]!r}\n")
    return path


def batch_indices(seed: int, step: int, n: int, batch_size: int) -> np.ndarray:
    """Deterministic minibatch for a given step (stateless in the step index)."""
    return rng_stream(seed, step).integers(0, n, size=batch_size)


def train(
    train_config: TrainConfig,
    loss_config: LossConfig,
    params0: ModelParameters,
    dataset: SignalSet | np.ndarray,
    start_step: int = 0,
    opt_state: AdamState | None = None,
) -> TrainResult:
    """Minimize the configured loss over the dataset with Adam.

    Runs steps ``start_step .. max_steps-1`` (pass ``start_step`` plus the
    stored optimizer state to resume a checkpointed run; the continuation
    is identical to the uninterrupted one).  The loss recorded for a step
    is evaluated on that step's minibatch before the parameter update.

    Raises:
        NonFiniteError: training aborted on a non-finite loss/gradient,
            carrying the failing step index.
    """
    data = dataset.data if isinstance(dataset, SignalSet) else np.asarray(dataset, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError("dataset must be a nonempty (n, length) array")
    n = data.shape[0]
    theta = params_to_theta(params0)
    if opt_state is None:
        opt_state = AdamState.zeros_like(theta)
    curve = []
    checkpoints: list[Path] = []
    params = params0
    ckpt_dir = Path(train_config.checkpoint_dir) if train_config.checkpoint_dir else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    for step in range(start_step, train_config.max_steps):
        idx = batch_indices(train_config.seed, step, n, train_config.batch_size)
        batch = data[idx]
        params = theta_to_params(theta, params0)
        try:
            total, dloss, rloss, grads = loss_and_gradient(params, batch, loss_config)
        except NonFiniteError as err:
            raise NonFiniteError(f"training aborted: {err}", step=step) from err
        curve.append((step, dloss, rloss, total))
        theta = adam_step(
            theta,
            grads,
            opt_state,
            lr=train_config.lr_at(step),
            beta1=train_config.beta1,
            beta2=train_config.beta2,
            eps=train_config.eps,
        )
        if params0.zero_r_diagonal:
            np.fill_diagonal(theta["r_re"], 0.0)
            np.fill_diagonal(theta["r_im"], 0.0)
        if (
            ckpt_dir is not None
            and train_config.checkpoint_interval > 0
            and (step + 1) % train_config.checkpoint_interval == 0
        ):
            p = save_checkpoint(
                ckpt_dir / f"checkpoint_{step + 1:06d}.json",
                theta_to_params(theta, params0),
                step + 1,
                opt_state,
                master_seed=train_config.seed,
            )
            checkpoints.append(p)
    final_params = theta_to_params(theta, params0)
    final_step = max(train_config.max_steps, start_step)
    if ckpt_dir is not None:
        p = save_checkpoint(
            ckpt_dir / "checkpoint_final.json",
            final_params,
            final_step,
            opt_state,
            master_seed=train_config.seed,
        )
        checkpoints.append(p)
    curve_arr = np.array(curve, dtype=np.float64).reshape(len(curve), 4)
    return TrainResult(params=final_params, curve=curve_arr, final_step=final_step, checkpoint_paths=checkpoints)
