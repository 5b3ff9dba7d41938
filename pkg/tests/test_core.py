"""Core latent-state kernels against hand-derived and brute-force oracles."""

import numpy as np
import pytest

from cmpsgen import core
from cmpsgen.core import Coupling, LatentState, ModelParameters, StateKind
from cmpsgen.errors import ZeroNormError

from conftest import random_params


def make_params(**kwargs) -> ModelParameters:
    defaults = dict(
        bond_dim=2,
        omega=[0.0, 0.0],
        R=[[0.1, 0.2], [0.3, 0.4]],
        A=1.0,
        sigma=1.0,
        dt=0.01,
        psi0=[1.0, 0.0],
    )
    defaults.update(kwargs)
    return ModelParameters(**defaults)


class TestModelParameters:
    def test_validation(self):
        with pytest.raises(ValueError):
            make_params(bond_dim=0, omega=[], R=np.zeros((0, 0)), psi0=[])
        with pytest.raises(ValueError):
            make_params(dt=0.0)
        with pytest.raises(ValueError):
            make_params(sigma=-1.0)
        with pytest.raises(ValueError):
            make_params(psi0=[0.0, 0.0])
        with pytest.raises(ValueError):
            make_params(W=np.zeros((3, 2)))  # rank > D

    def test_zero_diagonal_enforced_at_construction(self):
        p = make_params(R=[[1.0, 2.0], [3.0, 4.0]], zero_r_diagonal=True)
        assert np.all(np.diag(p.R) == 0)
        assert p.R[0, 1] == 2.0

    def test_arrays_are_immutable(self):
        p = make_params()
        with pytest.raises(ValueError):
            p.R[0, 0] = 9.0


class TestRotateCoupling:
    def test_zero_omega_is_identity(self, rng):
        p = random_params(rng, omega_scale=0.0)
        assert np.array_equal(core.rotate_coupling(p, 3.7), p.R)

    def test_t_zero_is_identity(self, rng):
        p = random_params(rng)
        assert np.array_equal(core.rotate_coupling(p, 0.0), p.R)

    def test_two_level_phase_example(self):
        # omega = (0, pi), R = [[0,1],[1,0]], t = 1:
        # R(t)[0,1] = e^{i(0-pi)} = -1 and R(t)[1,0] = e^{i(pi-0)} = -1.
        p = make_params(omega=[0.0, np.pi], R=[[0.0, 1.0], [1.0, 0.0]])
        expected = np.array([[0.0, -1.0], [-1.0, 0.0]], dtype=complex)
        assert np.allclose(core.rotate_coupling(p, 1.0), expected, atol=1e-12)

    @pytest.mark.parametrize("trial", range(5))
    def test_singular_values_preserved(self, trial):
        rng = np.random.default_rng(100 + trial)
        p = random_params(rng, bond_dim=5)
        t = float(rng.uniform(-10, 10))
        sv0 = np.linalg.svd(p.R, compute_uv=False)
        sv1 = np.linalg.svd(core.rotate_coupling(p, t), compute_uv=False)
        assert np.allclose(sv0, sv1, atol=1e-10)


class TestExpectation:
    def test_identity_on_normalized_pure(self, rng):
        p = random_params(rng, bond_dim=3)
        state = p.initial_state(StateKind.PURE)
        assert core.expectation(state, np.eye(3)) == pytest.approx(2.0, abs=1e-12)

    def test_zero_matrix(self, rng):
        p = random_params(rng, bond_dim=3)
        state = p.initial_state(StateKind.PURE)
        assert core.expectation(state, np.zeros((3, 3))) == 0.0

    def test_maximally_mixed_diagonal(self):
        # rho = I/D, M = diag(a): <M + M^H> = 2 tr(M)/D, checked against a
        # direct trace evaluation.
        d = 5
        a = np.array([0.3, -1.2, 2.5, 0.0, 4.0])
        rho = np.eye(d, dtype=complex) / d
        state = LatentState(StateKind.DENSITY, rho)
        got = core.expectation(state, np.diag(a).astype(complex))
        oracle = np.real(np.trace((np.diag(a) + np.diag(a).conj().T) @ rho) / np.trace(rho))
        assert got == pytest.approx(oracle, abs=1e-12)
        assert got == pytest.approx(2.0 * a.sum() / d, abs=1e-12)

    def test_unnormalized_matches_normalized(self, rng):
        p = random_params(rng, bond_dim=4)
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        M = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        raw = LatentState(StateKind.PURE, 7.3 * psi)
        unit = LatentState(StateKind.PURE, psi / np.linalg.norm(psi))
        assert core.expectation(raw, M) == pytest.approx(core.expectation(unit, M), abs=1e-12)

    def test_imaginary_part_vanishes_in_naive_oracle(self, rng):
        p = random_params(rng, bond_dim=4)
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        M = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        naive = psi.conj() @ ((M + M.conj().T) @ psi) / (psi.conj() @ psi)
        assert abs(naive.imag) < 1e-12
        state = LatentState(StateKind.PURE, psi)
        assert core.expectation(state, M) == pytest.approx(naive.real, abs=1e-12)

    def test_zero_norm_raises(self):
        state = LatentState(StateKind.PURE, np.zeros(3, dtype=complex))
        with pytest.raises(ZeroNormError):
            core.expectation(state, np.eye(3))


class TestEvolvePure:
    def test_r_zero_is_identity(self, rng):
        p = random_params(rng, bond_dim=3, r_scale=0.0)
        state = p.initial_state(StateKind.PURE)
        out = core.evolve_pure(state, p, 0.7, t=0.3)
        assert np.allclose(out.array, state.array, atol=1e-14)
        assert out.log_norm == pytest.approx(0.0, abs=1e-14)

    def test_output_normalized(self, rng):
        p = random_params(rng, bond_dim=6)
        state = p.initial_state(StateKind.PURE)
        for k in range(50):
            state = core.evolve_pure(state, p, float(rng.normal()) * 0.1, t=k * p.dt)
            assert state.norm_squared() == pytest.approx(1.0, abs=1e-12)

    def test_scalar_closed_form(self):
        # D=1: the operator is the scalar 1 - sigma^2 r^2 dt/2 + r dx.
        r, sigma, dt, dx = 0.8, 1.3, 0.05, -0.4
        p = make_params(bond_dim=1, omega=[0.0], R=[[r]], sigma=sigma, dt=dt, psi0=[1.0])
        factor = 1.0 - 0.5 * sigma**2 * r**2 * dt + r * dx
        out = core.evolve_pure(p.initial_state(), p, dx, t=0.0)
        assert out.array[0] == pytest.approx(np.sign(factor), abs=1e-15)
        assert out.log_norm == pytest.approx(np.log(abs(factor)), abs=1e-14)


class TestEvolveDensity:
    def test_r_zero_is_identity(self, rng):
        p = random_params(rng, bond_dim=3, r_scale=0.0, density_rank=2)
        state = p.initial_state(StateKind.DENSITY)
        out = core.evolve_density(state, p, 0.9, t=0.1)
        assert np.allclose(out.array, state.array, atol=1e-14)

    def test_trace_one_hermitian_psd(self, rng):
        p = random_params(rng, bond_dim=5, density_rank=3)
        state = p.initial_state(StateKind.DENSITY)
        for k in range(50):
            state = core.evolve_density(state, p, float(rng.normal()) * 0.1, t=k * p.dt)
            rho = state.array
            assert np.real(np.trace(rho)) == pytest.approx(1.0, abs=1e-12)
            assert np.max(np.abs(rho - rho.conj().T)) < 1e-12
            assert np.linalg.eigvalsh(rho).min() > -1e-10

    def test_rank_one_matches_pure_512_steps(self):
        # Density evolution of |psi><psi| must equal the outer product of the
        # pure evolution at every step; the pure path is the oracle.
        rng = np.random.default_rng(7)
        p = random_params(rng, bond_dim=16, dt=0.02)
        pure = p.initial_state(StateKind.PURE)
        dens = LatentState(StateKind.DENSITY, np.outer(pure.array, pure.array.conj()))
        for k in range(512):
            u = float(rng.normal()) * 0.05
            t = k * p.dt
            pure = core.evolve_pure(pure, p, u, t)
            dens = core.evolve_density(dens, p, u, t)
            outer = np.outer(pure.array, pure.array.conj())
            assert np.max(np.abs(dens.array - outer)) < 1e-12


class TestInitDensity:
    def test_rank_one_projector(self):
        W = np.zeros((1, 4), dtype=complex)
        W[0, 0] = 1.0
        rho = core.init_density(W)
        expected = np.zeros((4, 4))
        expected[0, 0] = 1.0
        assert np.allclose(rho, expected, atol=1e-15)

    def test_identity_factor_gives_maximally_mixed(self):
        rho = core.init_density(np.eye(3, dtype=complex))
        assert np.allclose(rho, np.eye(3) / 3, atol=1e-15)

    def test_random_factor_is_valid_density(self, rng):
        W = rng.normal(size=(2, 5)) + 1j * rng.normal(size=(2, 5))
        rho = core.init_density(W)
        eigs = np.linalg.eigvalsh(rho)
        assert eigs.min() > -1e-12
        assert eigs.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.matrix_rank(rho, tol=1e-10) <= 2

    def test_zero_factor_raises(self):
        with pytest.raises(ZeroNormError):
            core.init_density(np.zeros((2, 3), dtype=complex))


def naive_trajectory(params: ModelParameters, obs: np.ndarray, kind: StateKind) -> np.ndarray:
    """Brute-force reimplementation: explicit M matrices, explicit division,
    no per-step normalization (rescaled only to dodge overflow)."""
    d = params.bond_dim
    out = np.empty(len(obs))
    if kind is StateKind.PURE:
        psi = np.array(params.psi0, dtype=complex)
        for k, x in enumerate(obs):
            t = k * params.dt
            Rt = params.R * np.exp(1j * np.subtract.outer(params.omega, params.omega) * t)
            out[k] = np.real(psi.conj() @ ((Rt + Rt.conj().T) @ psi) / (psi.conj() @ psi))
            u = x * params.dt if params.coupling is Coupling.DIRECT else x
            M = np.eye(d) - 0.5 * params.sigma**2 * (Rt.conj().T @ Rt) * params.dt + Rt * u
            psi = M @ psi
            psi = psi / np.max(np.abs(psi))  # overflow guard only
    else:
        if params.W is not None:
            rho = params.W.conj().T @ params.W
        else:
            rho = np.outer(params.psi0, params.psi0.conj())
        for k, x in enumerate(obs):
            t = k * params.dt
            Rt = params.R * np.exp(1j * np.subtract.outer(params.omega, params.omega) * t)
            out[k] = np.real(np.trace((Rt + Rt.conj().T) @ rho) / np.trace(rho))
            u = x * params.dt if params.coupling is Coupling.DIRECT else x
            M = np.eye(d) - 0.5 * params.sigma**2 * (Rt.conj().T @ Rt) * params.dt + Rt * u
            rho = M @ rho @ M.conj().T
            rho = rho / np.max(np.abs(rho))
    return out


class TestRunTrajectory:
    def test_r_zero_gives_zero_expectations(self, rng):
        p = random_params(rng, bond_dim=3, r_scale=0.0)
        out = core.run_trajectory(p, rng.normal(size=16))
        assert np.all(out == 0.0)

    def test_single_sample_uses_initial_state_only(self, rng):
        p = random_params(rng, bond_dim=3)
        state = p.initial_state(StateKind.PURE)
        expected = core.expectation(state, p.R)  # t = 0 rotation is identity
        out = core.run_trajectory(p, np.array([1.23]))
        assert out[0] == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("kind", [StateKind.PURE, StateKind.DENSITY])
    @pytest.mark.parametrize("coupling", [Coupling.DIRECT, Coupling.DERIVATIVE])
    def test_matches_naive_loop(self, kind, coupling):
        rng = np.random.default_rng(11)
        rank = 2 if kind is StateKind.DENSITY else None
        p = random_params(rng, bond_dim=2, coupling=coupling, density_rank=rank)
        obs = rng.normal(size=8) * 0.5
        got = core.run_trajectory(p, obs, kind)
        want = naive_trajectory(p, obs, kind)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_unnormalized_vs_normalized_equivalence(self):
        # Expectations from the raw product of affine operators (explicit
        # division) match the per-step-normalized recursion over 512 steps.
        rng = np.random.default_rng(23)
        p = random_params(rng, bond_dim=4, r_scale=0.3, dt=0.02)
        obs = rng.normal(size=512) * 0.2
        got = core.run_trajectory(p, obs, StateKind.PURE)
        want = naive_trajectory(p, obs, StateKind.PURE)
        assert np.max(np.abs(got - want)) < 1e-10

    def test_zero_norm_reports_step_index(self):
        # A state orthogonal to everything R can reach collapses once the
        # evolution hits it with a -1 factor tuned to annihilate it.
        p = make_params(bond_dim=1, omega=[0.0], R=[[1.0]], sigma=1.0, dt=1.0, psi0=[1.0])
        # factor = 1 - 0.5 + u = 0 for u = -0.5 (direct coupling: u = x dt)
        with pytest.raises(ZeroNormError) as err:
            core.run_trajectory(p, np.array([-0.5, 1.0]))
        assert err.value.step == 0

    def test_normalization_invariant_long_trajectory(self, rng):
        p = random_params(rng, bond_dim=8, dt=0.01)
        state = p.initial_state(StateKind.PURE)
        for k in range(512):
            state = core.evolve_pure(state, p, float(rng.normal()) * 0.1, t=k * p.dt)
            assert abs(state.norm_squared() - 1.0) < 1e-12
