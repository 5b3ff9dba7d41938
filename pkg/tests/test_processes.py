"""Synthetic-process generators against closed forms and Monte Carlo."""

import numpy as np
import pytest

from cmpsgen import processes, stats
from cmpsgen.errors import QuadratureError
from cmpsgen.processes import (
    DampedSineSpec,
    FppSpec,
    MsmComponent,
    MsmSpec,
    StateSpaceModel,
    discretize,
    fpp_correlator_curve,
    fpp_exact_correlators,
    gen_damped_sines,
    gen_fpp,
    gen_gp,
    msm_covariance,
    render_damped_sine,
    render_pulses,
    ssm_from_msm,
)


def sine_spec(**kwargs) -> DampedSineSpec:
    defaults = dict(frequencies_hz=(261.6,), sample_rate_hz=16000.0, length=512)
    defaults.update(kwargs)
    return DampedSineSpec(**defaults)


class TestDampedSines:
    def test_zero_delay_starts_at_zero(self):
        x = render_damped_sine(sine_spec(), delay=0.0, freq_hz=261.6)
        assert x[0] == 0.0
        assert np.any(x != 0)

    def test_fft_peak_at_requested_frequency(self):
        # 512 samples at 16 kHz: bins are 31.25 Hz wide, 261.6 Hz -> bin 8.4.
        spec = sine_spec(decay_time_s=1.0)  # light damping keeps the peak sharp
        x = render_damped_sine(spec, delay=0.0, freq_hz=261.6)
        mag = np.abs(np.fft.rfft(x))
        peak = int(np.argmax(mag[1:])) + 1
        expected = 261.6 * 512 / 16000.0
        assert abs(peak - expected) <= 1.0

    @pytest.mark.parametrize("convention,mean", [("rate", 2.0 / 0.39), ("scale", 2.0 * 0.39)])
    def test_delay_mean_follows_convention(self, convention, mean):
        spec = sine_spec(delay_convention=convention, length=8)
        n = 10_000
        delays = np.array(
            [processes.rng_stream(5, i).gamma(spec.delay_alpha, spec.delay_scale()) for i in range(n)]
        )
        se = delays.std(ddof=1) / np.sqrt(n)
        assert abs(delays.mean() - mean) < 3 * se

    def test_mostly_silent_dataset_warns(self):
        # With the (alpha=2, beta=0.39) delays, almost every draw exceeds a
        # 0.032 s window under either Gamma convention.
        with pytest.warns(UserWarning, match="silence"):
            gen_damped_sines(sine_spec(), n=50, seed=0)

    def test_generated_signals_reproducible_and_delayed(self):
        spec = sine_spec(delay_beta=400.0, length=128)  # mean delay 5 ms
        a = gen_damped_sines(spec, n=8, seed=9)
        b = gen_damped_sines(spec, n=8, seed=9)
        assert np.array_equal(a.data, b.data)
        assert a.metadata["delay_convention"] == "rate"
        assert a.dt == spec.dt

    def test_nyquist_validation(self):
        with pytest.raises(ValueError, match="Nyquist"):
            sine_spec(frequencies_hz=(9000.0,))


class TestMsmCovariance:
    def test_single_component_at_zero(self):
        spec = MsmSpec(components=(MsmComponent(2.0, 50.0, 300.0),), dt=0.001)
        assert msm_covariance(spec, 0.0) == pytest.approx(4.0, abs=1e-15)

    def test_three_components_sum(self):
        comps = tuple(MsmComponent(2.0, 50.0, w) for w in (300.0, 500.0, 700.0))
        spec = MsmSpec(components=comps, dt=0.001)
        assert msm_covariance(spec, 0.0) == pytest.approx(12.0, abs=1e-15)

    def test_single_component_value(self):
        spec = MsmSpec(components=(MsmComponent(2.0, 50.0, 300.0),), dt=0.001)
        expected = 4.0 * np.exp(-0.5) * np.cos(3.0)
        assert msm_covariance(spec, 0.01) == pytest.approx(expected, rel=1e-14)

    def test_even_in_tau(self):
        spec = MsmSpec(components=(MsmComponent(1.5, 20.0, 100.0),), dt=0.001)
        taus = np.linspace(0, 0.1, 11)
        assert np.allclose(msm_covariance(spec, taus), msm_covariance(spec, -taus), atol=1e-15)


class TestStateSpace:
    def test_block_structure(self):
        spec = MsmSpec(components=(MsmComponent(2.0, 50.0, 300.0), MsmComponent(1.0, 10.0, 20.0)), dt=0.001)
        ssm = ssm_from_msm(spec)
        assert ssm.F.shape == (4, 4)
        assert np.allclose(ssm.F[:2, :2], [[-50.0, -300.0], [300.0, -50.0]])
        assert np.allclose(ssm.Q[:2, :2], 2 * 50.0 * 4.0 * np.eye(2))
        assert ssm.H.tolist() == [1.0, 0.0, 1.0, 0.0]
        assert np.allclose(ssm.L, np.eye(4))

    def test_zero_damping_gives_pure_rotation_no_noise(self):
        ssm = StateSpaceModel((MsmComponent(2.0, 0.0, 5.0),))
        ad, sd = discretize(ssm, 0.1)
        th = 0.5
        assert np.allclose(ad, [[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]], atol=1e-15)
        assert np.all(sd == 0.0)

    def test_small_step_approaches_identity(self):
        spec = MsmSpec(components=(MsmComponent(2.0, 50.0, 300.0),), dt=0.001)
        ad, _ = discretize(ssm_from_msm(spec), 1e-9)
        assert np.linalg.norm(ad - np.eye(2)) < 1e-6

    def test_closed_form_example(self):
        spec = MsmSpec(components=(MsmComponent(2.0, 50.0, 300.0),), dt=0.001)
        ad, sd = discretize(ssm_from_msm(spec), 0.001)
        rot = np.array([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]])
        assert np.allclose(ad, np.exp(-0.05) * rot, rtol=1e-14)
        assert np.allclose(sd, 4.0 * (1.0 - np.exp(-0.1)) * np.eye(2), rtol=1e-14)


class TestGenGp:
    def test_no_noise_zero_init_gives_zero_signals(self):
        ssm = StateSpaceModel((MsmComponent(2.0, 0.0, 5.0),))  # Sd = 0
        out = gen_gp(ssm, n=4, length=32, seed=1, init="zero", dt=0.01)
        assert np.all(out.data == 0.0)

    def test_reproducible_per_signal_streams(self):
        spec = MsmSpec(components=(MsmComponent(2.0, 50.0, 300.0),), dt=0.001)
        a = gen_gp(spec, n=6, length=40, seed=3)
        b = gen_gp(spec, n=3, length=40, seed=3)
        assert np.array_equal(a.data[:3], b.data)  # prefix identical: streams per signal

    def test_stationary_lag0_variance(self):
        spec = MsmSpec(components=(MsmComponent(2.0, 50.0, 300.0),), dt=0.001)
        out = gen_gp(spec, n=10_000, length=3, seed=12)
        v = out.data[:, 0] ** 2
        se = v.std(ddof=1) / np.sqrt(len(v))
        assert abs(v.mean() - 4.0) < 3 * se

    def test_covariance_matches_kernel_at_coarse_step(self):
        # Exact discretization: the law matches the kernel even at dt = 0.01.
        spec = MsmSpec(components=(MsmComponent(2.0, 50.0, 300.0),), dt=0.01)
        out = gen_gp(spec, n=10_000, length=24, seed=4)
        emp, se = stats.covariance_lags(out.data, t1=0, max_lag=20)
        analytic = msm_covariance(spec, np.arange(21) * spec.dt)
        z = np.abs(emp - analytic) / se
        assert np.mean(z <= 3.0) >= 0.95

    def test_stationarity_across_start_times(self):
        spec = MsmSpec(components=(MsmComponent(2.0, 50.0, 300.0),), dt=0.001)
        out = gen_gp(spec, n=8000, length=48, seed=8)
        cov, se = stats.empirical_covariance(out.data)
        slices, dev = stats.stationarity_profile(cov, [0, 16, 32], 15)
        se_scale = np.median(se)
        assert dev.max() < 6 * se_scale  # all slices agree within MC noise


class TestGenFpp:
    def spec(self, **kwargs) -> FppSpec:
        defaults = dict(intensity=4.0, amplitude=1.0, tau=0.2, omega=20.0, dt=0.01, length=500, burn_in=100)
        defaults.update(kwargs)
        return FppSpec(**defaults)

    def test_zero_intensity_gives_zero_signals(self):
        out = gen_fpp(self.spec(intensity=0.0), n=5, seed=2)
        assert np.all(out.data == 0.0)
        assert out.length == 400

    def test_single_pulse_matches_shape_exactly(self):
        spec = self.spec(burn_in=0, length=300)
        x = render_pulses(spec, np.array([0.0]), np.array([1.0]))
        t = np.arange(300) * spec.dt
        expected = np.exp(-t / spec.tau) * np.sin(spec.omega * t)
        assert np.max(np.abs(x - expected)) < 1e-12

    def test_pulse_mid_interval_exact(self):
        spec = self.spec(burn_in=0, length=64)
        t0 = 0.0137  # not on the grid
        x = render_pulses(spec, np.array([t0]), np.array([-1.0]))
        t = np.arange(64) * spec.dt
        expected = np.where(t >= t0, -np.exp(-np.clip(t - t0, 0, None) / spec.tau) * np.sin(spec.omega * (t - t0)), 0.0)
        assert np.max(np.abs(x - expected)) < 1e-12

    def test_chunked_generation_matches_single_call(self):
        spec = self.spec(length=120, burn_in=20)
        whole = gen_fpp(spec, n=6, seed=77)
        parts = np.vstack(
            [gen_fpp(spec, n=3, seed=77, stream_offset=0).data, gen_fpp(spec, n=3, seed=77, stream_offset=3).data]
        )
        assert np.array_equal(whole.data, parts)

    def test_mean_is_zero_by_symmetry(self):
        out = gen_fpp(self.spec(length=200, burn_in=100), n=4000, seed=5)
        col = out.data[:, 50]
        se = col.std(ddof=1) / np.sqrt(len(col))
        assert abs(col.mean()) < 3 * se


class TestFppCorrelators:
    def spec(self, **kwargs) -> FppSpec:
        defaults = dict(intensity=4.0, amplitude=1.0, tau=0.2, omega=20.0, dt=0.01, length=500, burn_in=100)
        defaults.update(kwargs)
        return FppSpec(**defaults)

    def test_equal_times_coincide(self):
        c31, c13 = fpp_exact_correlators(self.spec(), 3.0, 3.0)
        assert c31 == pytest.approx(c13, rel=1e-10)

    def test_vanishing_pulse_width(self):
        c31, c13 = fpp_exact_correlators(self.spec(tau=1e-4), 1.0, 1.2)
        assert abs(c31) < 1e-6
        assert abs(c13) < 1e-6

    def test_asymmetry_for_positive_lag(self):
        c31, c13 = fpp_exact_correlators(self.spec(), 1.0, 1.15)
        assert abs(c31 - c13) > 10 * processes.FPP_QUAD_TOL

    def test_t2_before_t1_rejected(self):
        with pytest.raises(ValueError):
            fpp_exact_correlators(self.spec(), 2.0, 1.0)

    def test_quadrature_failure_raises(self):
        bad = self.spec(omega=1e9)  # ~3e9 oscillations per pulse lifetime
        with pytest.raises(QuadratureError):
            fpp_exact_correlators(bad, 0.0, 0.1)

    def test_monte_carlo_agreement_small(self):
        # Moderate-N version of the full acceptance check: 12 lags, 40k samples.
        spec = self.spec()
        data = gen_fpp(spec, n=40_000, seed=31).data
        m31, se31, m13, se13 = stats.empirical_third_order(data, t1=0, max_lag=11)
        lags = np.arange(12) * spec.dt
        c31, c13 = fpp_correlator_curve(spec, spec.burn_in * spec.dt, lags)
        z31 = np.abs(m31 - c31) / se31
        z13 = np.abs(m13 - c13) / se13
        assert np.mean(z31 <= 3.0) >= 0.9
        assert np.mean(z13 <= 3.0) >= 0.9
