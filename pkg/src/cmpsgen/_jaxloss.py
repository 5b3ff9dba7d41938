"""Differentiable replica of the trajectory losses (reverse-mode gradients).

This mirrors the numpy recursion in :mod:`cmpsgen.core` step for step so
the two paths agree to floating-point accuracy; tests cross-check them,
and the finite-difference gradient oracle runs against the numpy path.
Complex parameters are carried as separate real/imaginary arrays, so the
returned gradients are independent partials with respect to the real and
imaginary parts.

Everything here is package-internal; :mod:`cmpsgen.training` is the
public surface.
"""

from __future__ import annotations

from functools import lru_cache

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp
import numpy as np
from jax import lax

#: Pytree of real arrays handed to jax; see training.params_to_theta.
THETA_KEYS = ("omega", "r_re", "r_im", "psi_re", "psi_im", "w_re", "w_im", "a")


def _effective_coupling_matrix(theta, zero_diag: bool):
    R = theta["r_re"] + 1j * theta["r_im"]
    if zero_diag:
        R = R * (1.0 - jnp.eye(R.shape[0]))
    return R


def _initial_pure(theta):
    psi = theta["psi_re"] + 1j * theta["psi_im"]
    return psi / jnp.sqrt(jnp.real(jnp.vdot(psi, psi)))


def _initial_density(theta, use_w: bool):
    if use_w:
        w = theta["w_re"] + 1j * theta["w_im"]
        gram = w.conj().T @ w
        rho = gram / jnp.real(jnp.trace(gram))
    else:
        psi = _initial_pure(theta)
        rho = jnp.outer(psi, psi.conj())
    return 0.5 * (rho + rho.conj().T)


def _expectations_pure(theta, increments, sigma, dt, zero_diag: bool):
    """Pre-observation <R_t + R_t^H> along one increment sequence."""
    R = _effective_coupling_matrix(theta, zero_diag)
    omega = theta["omega"]
    dw = omega[:, None] - omega[None, :]
    c = 0.5 * sigma**2 * dt
    psi0 = _initial_pure(theta)
    ks = jnp.arange(increments.shape[0])

    def step(psi, inp):
        k, u = inp
        Rt = R * jnp.exp(1j * dw * (k * dt))
        e = 2.0 * jnp.real(jnp.vdot(psi, Rt @ psi))
        K = Rt.conj().T @ Rt
        phi = psi - c * (K @ psi) + u * (Rt @ psi)
        norm = jnp.sqrt(jnp.real(jnp.vdot(phi, phi)))
        return phi / norm, e

    _, es = lax.scan(step, psi0, (ks, increments))
    return es


def _expectations_density(theta, increments, sigma, dt, zero_diag: bool, use_w: bool):
    R = _effective_coupling_matrix(theta, zero_diag)
    omega = theta["omega"]
    dw = omega[:, None] - omega[None, :]
    c = 0.5 * sigma**2 * dt
    rho0 = _initial_density(theta, use_w)
    ks = jnp.arange(increments.shape[0])

    def step(rho, inp):
        k, u = inp
        Rt = R * jnp.exp(1j * dw * (k * dt))
        e = 2.0 * jnp.real(jnp.einsum("ij,ji->", Rt, rho))
        K = Rt.conj().T @ Rt
        Brho = rho - c * (K @ rho)
        BrhoB = Brho - c * (Brho @ K)
        Rrho = Rt @ rho
        RrhoB = Rrho - c * (Rrho @ K)
        RrhoR = Rrho @ Rt.conj().T
        out = BrhoB + u * (RrhoB + RrhoB.conj().T) + u**2 * RrhoR
        out = 0.5 * (out + out.conj().T)
        tr = jnp.real(jnp.trace(out))
        return out / tr, e

    _, es = lax.scan(step, rho0, (ks, increments))
    return es


def _signal_loss(theta, signal, sigma, dt, static):
    """Data loss of one raw signal row under the static configuration."""
    state_kind, coupling, loss_kind, zero_diag, use_w = static
    if coupling == "direct":
        increments = signal * dt
        targets = signal
    else:
        increments = signal[1:] - signal[:-1]
        targets = increments / dt
    if state_kind == "pure":
        es = _expectations_pure(theta, increments, sigma, dt, zero_diag)
    else:
        es = _expectations_density(theta, increments, sigma, dt, zero_diag, use_w)
    a = theta["a"]
    if loss_kind == "direct_squared":
        return jnp.sum((targets - es) ** 2)
    if loss_kind == "sde_squared":
        return jnp.sum((targets - a * es) ** 2)
    # girsanov: -A sum e dx + A^2/2 sum e^2 dt, with dx the raw increments
    return -a * jnp.sum(es * increments) + 0.5 * a**2 * jnp.sum(es**2) * dt


def _total_loss(theta, batch, sigma, dt, h_coeff, r_coeff, static):
    """Mean per-signal data loss plus regularizers; returns (total, (data, reg))."""
    per_signal = jax.vmap(lambda s: _signal_loss(theta, s, sigma, dt, static))(batch)
    data = jnp.mean(per_signal)
    zero_diag = static[3]
    r_eff = _effective_coupling_matrix(theta, zero_diag)
    reg = h_coeff * jnp.sum(theta["omega"] ** 2) + r_coeff * jnp.sum(jnp.abs(r_eff) ** 2)
    return data + reg, (data, reg)


@lru_cache(maxsize=64)
def _compiled_value_and_grad(static):
    fn = jax.value_and_grad(_total_loss, argnums=0, has_aux=True)
    return jax.jit(fn, static_argnames=("static",))


def value_and_grad(
    theta: dict[str, np.ndarray],
    batch: np.ndarray,
    sigma: float,
    dt: float,
    h_coeff: float,
    r_coeff: float,
    state_kind: str,
    coupling: str,
    loss_kind: str,
    zero_diag: bool,
    use_w: bool,
) -> tuple[float, float, float, dict[str, np.ndarray]]:
    """(total, data, reg, grads) for a (n, length) batch of raw signals.

    Gradients are plain numpy arrays keyed like ``theta``; entries for the
    masked R diagonal (and for psi/W when the other representation is in
    use) come out exactly zero because the forward pass never reads them.
    """
    static = (state_kind, coupling, loss_kind, bool(zero_diag), bool(use_w))
    fn = _compiled_value_and_grad(static)
    theta_j = {k: jnp.asarray(v) for k, v in theta.items()}
    (total, (data, reg)), grads = fn(theta_j, jnp.asarray(batch), sigma, dt, h_coeff, r_coeff, static=static)
    grads_np = {k: np.asarray(v) for k, v in grads.items()}
    return float(total), float(data), float(reg), grads_np
